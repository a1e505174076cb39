"""Reusable experiment drivers behind the command-line tools."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .channel import VirtualChannel
from .constellation import Inputs, enumerate_joint, from_name
from .errors import IntegratorBudgetTooSmall
from .infotheory import evaluate
from .integrate import Integrator

__all__ = ["Table2Row", "table2_row", "mi_sweep", "TABLE2_SAMPLE_FLOOR"]

TABLE2_SAMPLE_FLOOR = 100_000


@dataclass(frozen=True)
class Table2Row:
    setup: str
    signaling: str
    mi_without: float  # bits, identity channel
    mi_with: float  # bits, all-unity channel
    std_without: float
    std_with: float

    @property
    def loss(self) -> float:
        return self.mi_without - self.mi_with


def table2_row(n: int, signaling: str, snr_db: float = 25.0, integ: Integrator = None,
               enforce_floor: bool = True) -> Table2Row:
    """MI with and without interference for ``n`` users and ``n`` receivers.

    Interference means every gain equals one; without it the channel is the
    identity.  Each user sends ``signaling`` with unit amplitude (P = I).
    """
    integ = integ or Integrator()
    if enforce_floor and n >= 4 and signaling == "qpsk" and integ.kind != "quadrature":
        if integ.samples < TABLE2_SAMPLE_FLOOR:
            raise IntegratorBudgetTooSmall(
                f"{n}x{n} QPSK needs at least {TABLE2_SAMPLE_FLOOR} samples, got {integ.samples}"
            )
    alpha = enumerate_joint([from_name(signaling)] * n)
    out = []
    for H in (np.eye(n), np.ones((n, n))):
        mi, _ = evaluate(VirtualChannel.from_db(H, snr_db), np.eye(n), alpha, integ, want_mmse=False)
        out.append(mi)
    return Table2Row(f"{n}x{n}", signaling.upper(), out[0].bits, out[1].bits,
                     out[0].std_error_bits, out[1].std_error_bits)


def mi_sweep(H, P, inputs: Inputs, snr_db_grid, integ: Integrator = None) -> list:
    """One dict per snr point with MI (bits) and the MMSE matrix entries."""
    rows = []
    P = np.asarray(P, dtype=complex)
    for snr_db in snr_db_grid:
        mi, rep = evaluate(VirtualChannel.from_db(H, snr_db), P, inputs, integ)
        E = rep.E
        row = {"snr_db": float(snr_db), "mi_bits": mi.bits, "std_error": mi.std_error_bits}
        for i in range(E.shape[0]):
            row[f"e{i + 1}{i + 1}"] = float(E[i, i].real)
        if E.shape[0] >= 2:
            row["e12_abs"] = float(abs(E[0, 1]))
            row["e21_abs"] = float(abs(E[1, 0]))
        row["sum_e"] = rep.sum_mmse
        rows.append(row)
    return rows
