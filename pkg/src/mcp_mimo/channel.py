"""Virtual network-MIMO channel of a two-BS cluster.

The received vector is ``y = sqrt(snr) H P x + n`` with ``n ~ CN(0, I)``.
``H[i, j]`` is the gain from user ``j`` to receiver ``i``; the snr factor is
always folded into the effective channel ``G = sqrt(snr) H P``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch

__all__ = [
    "VirtualChannel",
    "PowerAllocation",
    "effective",
    "sample_output",
    "complex_noise",
    "db_to_linear",
    "linear_to_db",
]


def db_to_linear(snr_db):
    return 10.0 ** (np.asarray(snr_db, dtype=float) / 10.0)


def linear_to_db(snr):
    return 10.0 * np.log10(snr)


@dataclass(frozen=True, eq=False)
class VirtualChannel:
    H: np.ndarray
    snr: float = 1.0

    def __post_init__(self):
        H = np.atleast_2d(np.asarray(self.H, dtype=complex))
        if H.size == 0:
            raise DimensionMismatch("channel matrix is empty")
        if not np.all(np.isfinite(H)):
            raise ValueError("channel entries must be finite")
        if self.snr < 0 or not np.isfinite(self.snr):
            raise ValueError("snr must be finite and nonnegative")
        H.setflags(write=False)
        object.__setattr__(self, "H", H)
        object.__setattr__(self, "snr", float(self.snr))

    @classmethod
    def from_db(cls, H, snr_db: float) -> "VirtualChannel":
        return cls(H, float(db_to_linear(snr_db)))

    @property
    def n_rx(self) -> int:
        return self.H.shape[0]

    @property
    def n_tx(self) -> int:
        return self.H.shape[1]

    def vec(self) -> np.ndarray:
        """Row-major [h11, h12, h21, h22, ...]."""
        return self.H.ravel()

    def with_snr(self, snr: float) -> "VirtualChannel":
        return VirtualChannel(self.H, snr)

    def rows(self, idx) -> "VirtualChannel":
        """Channel seen by a subset of receivers."""
        return VirtualChannel(self.H[np.atleast_1d(idx), :], self.snr)


@dataclass(frozen=True, eq=False)
class PowerAllocation:
    """Per-user powers with caps; ``amplitudes`` is diag(sqrt(P))."""

    powers: np.ndarray
    caps: np.ndarray = field(default=None)

    def __post_init__(self):
        p = np.asarray(self.powers, dtype=float).ravel()
        caps = p.copy() if self.caps is None else np.asarray(self.caps, dtype=float).ravel()
        if caps.shape != p.shape:
            raise DimensionMismatch("powers and caps differ in length")
        if np.any(p < 0) or np.any(p > caps * (1 + 1e-12) + 1e-15):
            raise ValueError("powers must satisfy 0 <= P <= Q")
        object.__setattr__(self, "powers", p)
        object.__setattr__(self, "caps", caps)

    @property
    def amplitudes(self) -> np.ndarray:
        return np.diag(np.sqrt(self.powers))


def effective(vc: VirtualChannel, P) -> np.ndarray:
    """G = sqrt(snr) H P."""
    P = np.atleast_2d(np.asarray(P, dtype=complex))
    if P.shape[0] != vc.n_tx:
        raise DimensionMismatch(f"H is {vc.H.shape} but P is {P.shape}")
    return np.sqrt(vc.snr) * (vc.H @ P)


def complex_noise(rng: np.random.Generator, shape) -> np.ndarray:
    """CN(0, 1) samples: variance 1/2 per real component."""
    re = rng.standard_normal(shape)
    im = rng.standard_normal(shape)
    return (re + 1j * im) / np.sqrt(2.0)


def sample_output(G, x, rng: np.random.Generator) -> np.ndarray:
    """Draw y = G x + n for one input vector (or a batch along the last axis)."""
    G = np.atleast_2d(np.asarray(G, dtype=complex))
    x = np.asarray(x, dtype=complex)
    if x.shape[0] != G.shape[1]:
        raise DimensionMismatch(f"G has {G.shape[1]} columns but x has length {x.shape[0]}")
    mean = G @ x
    return mean + complex_noise(rng, mean.shape)
