"""Self-checks run by ``mcp check``.

Each check measures a numerical identity and compares it to a tolerance.
``gradient_factor`` can be overridden to confirm that the gradient check
actually catches a wrong convention.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .channel import VirtualChannel
from .constellation import BPSK, QPSK, Constellation, GaussianInputs, enumerate_joint
from .infotheory import (
    GRADIENT_CONVENTION_FACTOR,
    bpsk_siso_mi,
    bpsk_siso_mmse,
    evaluate,
    lowsnr_mmse_expansion,
    mi_gradient,
    mmse_trace,
)
from .integrate import Integrator

__all__ = ["CheckResult", "run_checks"]


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    measured: float
    tolerance: float

    def line(self) -> str:
        flag = "PASS" if self.passed else "FAIL"
        return f"{flag} {self.name}: measured {self.measured:.3e}, tolerance {self.tolerance:.1e}"


def _result(name, measured, tol) -> CheckResult:
    return CheckResult(name, bool(measured <= tol), float(measured), float(tol))


def _random_channel(rng, n=2):
    return (rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))) / math.sqrt(2)


def check_immse(integ: Integrator, seed: int = 0) -> CheckResult:
    """Central difference of I(snr) against Tr{HP E (HP)^H}."""
    rng = np.random.default_rng(seed)
    alpha = enumerate_joint([BPSK, BPSK])
    worst = 0.0
    for _ in range(3):
        H = _random_channel(rng)
        for snr in (0.5, 1.0, 2.0):
            h = 1e-4 * snr
            up = evaluate(VirtualChannel(H, snr + h), np.eye(2), alpha, integ, False)[0].nats
            dn = evaluate(VirtualChannel(H, snr - h), np.eye(2), alpha, integ, False)[0].nats
            _, rep = evaluate(VirtualChannel(H, snr), np.eye(2), alpha, integ)
            worst = max(worst, abs((up - dn) / (2 * h) - mmse_trace(VirtualChannel(H, snr), np.eye(2), rep)))
    return _result("I-MMSE derivative in snr", worst, 2e-3)


def check_gradient(integ: Integrator, factor: float = GRADIENT_CONVENTION_FACTOR, seed: int = 1):
    """Directional derivative of I(P) against factor * Re tr(grad^H dP)."""
    rng = np.random.default_rng(seed)
    alpha = enumerate_joint([BPSK, BPSK])
    worst = 0.0
    for _ in range(3):
        vc = VirtualChannel(_random_channel(rng), 1.0)
        P = _random_channel(rng)
        dP = _random_channel(rng)
        h = 1e-5
        up = evaluate(vc, P + h * dP, alpha, integ, False)[0].nats
        dn = evaluate(vc, P - h * dP, alpha, integ, False)[0].nats
        _, rep = evaluate(vc, P, alpha, integ)
        pred = factor * np.real(np.vdot(mi_gradient(vc, P, rep), dP))
        worst = max(worst, abs((up - dn) / (2 * h) - pred))
    return _result(f"MI gradient with factor {factor:g}", worst, 1e-3)


def check_lowsnr_order() -> CheckResult:
    """Expansion error ratio between snr 1e-2 and 1e-3 should be about 100."""
    vc = VirtualChannel(np.array([[1.0, 0.5], [0.2, 0.8]]), 1.0)
    qpsk = Constellation.qpsk(normalize_energy=True)
    alpha = enumerate_joint([qpsk, qpsk])
    # the integrand is nearly polynomial at these snr values
    integ = Integrator.quadrature(10)
    exp = lowsnr_mmse_expansion(vc, np.eye(2))
    errs = []
    for snr in (1e-2, 1e-3):
        _, rep = evaluate(vc.with_snr(snr), np.eye(2), alpha, integ)
        errs.append(np.linalg.norm(rep.E - exp.matrix(snr)))
    ratio = errs[0] / errs[1]
    return _result("low-snr expansion error is O(snr^2)", abs(math.log(ratio / 100.0)), math.log(3.0))


def check_siso_closed_forms() -> CheckResult:
    integ = Integrator.quadrature(128)
    alpha = enumerate_joint([BPSK])
    worst = 0.0
    for snr in (0.1, 1.0, 10.0):
        mi, rep = evaluate(VirtualChannel(np.ones((1, 1)), snr), np.eye(1), alpha, integ)
        worst = max(worst, abs(mi.nats - bpsk_siso_mi(snr)), abs(rep.sum_mmse - bpsk_siso_mmse(snr)))
    return _result("BPSK closed forms vs quadrature", worst, 1e-6)


def check_gaussian_closed_form() -> CheckResult:
    """I-MMSE for Gaussian inputs, where both sides are exact."""
    vc = VirtualChannel(np.array([[1.0, 0.3j], [0.4, 1.2]]), 2.0)
    h = 1e-5
    up = evaluate(vc.with_snr(2.0 + h), np.eye(2), GaussianInputs(2))[0].nats
    dn = evaluate(vc.with_snr(2.0 - h), np.eye(2), GaussianInputs(2))[0].nats
    _, rep = evaluate(vc, np.eye(2), GaussianInputs(2))
    return _result("Gaussian I-MMSE", abs((up - dn) / (2 * h) - mmse_trace(vc, np.eye(2), rep)), 1e-6)


def check_zero_snr() -> CheckResult:
    """At snr 0 the MI vanishes and E is the prior covariance."""
    vc = VirtualChannel(np.array([[1.0, 0.5], [0.5, 1.0]]), 0.0)
    worst = 0.0
    for c in (BPSK, QPSK):
        alpha = enumerate_joint([c, c])
        mi, rep = evaluate(vc, np.eye(2), alpha, Integrator.quadrature(16))
        worst = max(worst, abs(mi.nats), np.max(np.abs(rep.E - alpha.second_moment())))
    mi, rep = evaluate(vc, np.eye(2), GaussianInputs(2))
    worst = max(worst, abs(mi.nats), np.max(np.abs(rep.E - np.eye(2))))
    return _result("snr = 0 identities", worst, 1e-12)


def run_checks(gradient_factor: float = None, seed: int = 0) -> list:
    integ = Integrator.quadrature(24)
    factor = GRADIENT_CONVENTION_FACTOR if gradient_factor is None else gradient_factor
    return [
        check_zero_snr(),
        check_siso_closed_forms(),
        check_gaussian_closed_form(),
        check_immse(integ, seed),
        check_gradient(integ, factor, seed + 1),
        check_lowsnr_order(),
    ]
