"""Uplink power allocation for the cooperating cluster.

Powers live on the diagonal of ``P = diag(sqrt(P_1), ..., sqrt(P_n))`` and
the iterations act on those amplitudes.  The KKT conditions are written in
the same coordinates::

    lambda_i * sqrt(P_i) = Re[snr * H^H H P E]_ii
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .channel import VirtualChannel
from .constellation import GaussianInputs, Inputs
from .errors import DimensionMismatch, NoConvergence, ZeroPowerCase
from .infotheory import MmseReport, evaluate, mi_gradient
from .integrate import Integrator

__all__ = [
    "PowerSolveParams",
    "PowerSolution",
    "solve_power_gaussian",
    "kkt_residual",
    "fit_multipliers",
    "algorithm1_solve",
    "MercuryForm",
    "mercury_waterfilling_form",
]

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class PowerSolveParams:
    """Step schedule and stopping rule for :func:`algorithm1_solve`.

    ``update="projected"`` moves the amplitudes along the normalized ascent
    direction ``dI/da`` by ``alpha_k`` times the largest cap amplitude, clips
    to the box, and halves the step whenever the objective would drop.
    ``update="printed"`` applies ``alpha_k * a + alpha_k * lam * g`` literally
    (``g`` the gradient diagonal) before clipping; with a diminishing step it
    contracts towards zero, so it is only useful with ``step_rule="constant"``.
    """

    step: float = 0.5
    step_rule: str = "diminishing"
    max_iters: int = 500
    tol: float = 1e-6
    integrator: Integrator = field(default_factory=Integrator)
    update: str = "projected"
    lam: float = 1.0
    init: str = "multi"

    def __post_init__(self):
        if self.step <= 0:
            raise ValueError("step must be positive")
        if self.tol <= 0 or self.max_iters < 1:
            raise ValueError("need tol > 0 and max_iters >= 1")
        if self.step_rule not in ("constant", "diminishing"):
            raise ValueError(f"unknown step rule '{self.step_rule}'")
        if self.update not in ("projected", "printed"):
            raise ValueError(f"unknown update '{self.update}'")
        if self.init not in ("multi", "half", "caps", "zero"):
            raise ValueError(f"unknown init '{self.init}'")

    def alpha(self, k: int) -> float:
        return self.step / k if self.step_rule == "diminishing" else self.step


@dataclass(frozen=True, eq=False)
class PowerSolution:
    powers: np.ndarray
    multipliers: np.ndarray
    iterations: int
    residual: float
    active_caps: np.ndarray
    mi_nats: float = float("nan")
    converged: bool = True
    history: tuple = ()

    def to_dict(self) -> dict:
        return {
            "powers": [float(p) for p in self.powers],
            "multipliers": [float(m) for m in self.multipliers],
            "iterations": int(self.iterations),
            "residual": float(self.residual),
            "active_caps": [bool(a) for a in self.active_caps],
            "mi_bits": float(self.mi_nats / math.log(2.0)),
            "converged": bool(self.converged),
        }


def _amplitudes(P) -> np.ndarray:
    P = np.asarray(P)
    if P.ndim == 2:
        return np.real(np.diag(P)).astype(float)
    return np.sqrt(np.asarray(P, dtype=float))


def _gradient_diag(vc: VirtualChannel, a: np.ndarray, E) -> np.ndarray:
    return np.real(np.diag(mi_gradient(vc, np.diag(a), E)))


def kkt_residual(vc: VirtualChannel, P, E, lam) -> np.ndarray:
    """lambda_i sqrt(P_i) - Re[snr H^H H P E]_ii for each user.

    ``P`` is either the diagonal amplitude matrix or the vector of powers.
    """
    a = _amplitudes(P)
    lam = np.asarray(lam, dtype=float)
    if a.shape[0] != vc.n_tx or lam.shape != a.shape:
        raise DimensionMismatch("P, lambda and H disagree in size")
    return lam * a - _gradient_diag(vc, a, E)


def fit_multipliers(vc: VirtualChannel, P, E, caps) -> np.ndarray:
    """Least-squares multipliers honouring complementary slackness.

    Users at their cap get ``max(0, g_i / a_i)``; users strictly inside the
    box get zero, leaving the stationarity gap in the residual.
    """
    a = _amplitudes(P)
    amp_caps = np.sqrt(np.asarray(caps, dtype=float))
    g = _gradient_diag(vc, a, E)
    lam = np.zeros_like(a)
    at_cap = (a > 0) & (a >= amp_caps * (1 - 1e-12))
    lam[at_cap] = np.maximum(g[at_cap] / a[at_cap], 0.0)
    return lam


def _kkt_gap(vc, a, E, caps) -> tuple:
    lam = fit_multipliers(vc, a**2, E, caps)
    res = kkt_residual(vc, a**2, E, lam)
    g = _gradient_diag(vc, a, E)
    # a zero-power user only violates KKT if raising its power would help
    zero = a <= 0
    res[zero] = np.maximum(g[zero], 0.0)
    return lam, float(np.max(np.abs(res))) if res.size else 0.0


def solve_power_gaussian(vc: VirtualChannel, caps) -> PowerSolution:
    """Every user transmits at its cap; the log-det objective increases in each power."""
    caps = np.asarray(caps, dtype=float)
    if caps.shape[0] != vc.n_tx:
        raise DimensionMismatch("one cap per user required")
    if np.any(caps < 0):
        raise ValueError("caps must be nonnegative")
    a = np.sqrt(caps)
    mi, report = evaluate(vc, np.diag(a), GaussianInputs(vc.n_tx))
    lam, res = _kkt_gap(vc, a, report, caps)
    return PowerSolution(
        powers=caps.copy(),
        multipliers=lam,
        iterations=0,
        residual=res,
        active_caps=np.ones(caps.shape, dtype=bool),
        mi_nats=mi.nats,
    )


def _starts(init: str, amp_caps: np.ndarray) -> list:
    if init == "caps":
        return [amp_caps.copy()]
    if init == "zero":
        return [np.zeros_like(amp_caps)]
    half = amp_caps / np.sqrt(2.0)
    if init == "half":
        return [half]
    # symmetric channels put a saddle on the diagonal; break the tie per user
    starts = [half]
    for i in range(amp_caps.size):
        a = amp_caps.copy()
        a[i] *= 0.5
        starts.append(a)
    return starts


def _ascend(vc, amp_caps, inputs, params, a):
    mi, report = evaluate(vc, np.diag(a), inputs, params.integrator)
    history = [(0, a**2, mi.nats)]
    scale = float(amp_caps.max()) if amp_caps.size else 0.0
    shrink = 1.0
    converged = False
    k = 0
    for k in range(1, params.max_iters + 1):
        g = _gradient_diag(vc, a, report)
        alpha = params.alpha(k)
        if params.update == "printed":
            a_next = np.clip(alpha * a + alpha * params.lam * g, 0.0, amp_caps)
        else:
            # ascent along dI/da = 2g, normalized so the step length is set
            # by the schedule rather than by the gradient magnitude
            free = ~(((a <= 0) & (g < 0)) | ((a >= amp_caps) & (g > 0)))
            gmax = float(np.max(np.abs(g[free]))) if np.any(free) else 0.0
            if gmax == 0.0 or scale == 0.0:
                converged = True
                break
            a_next = np.clip(a + shrink * alpha * scale * g / gmax, 0.0, amp_caps)
        if not (np.all(a_next >= 0) and np.all(a_next <= amp_caps)):
            raise AssertionError("iterate left the feasible box")
        step = float(np.linalg.norm(a_next**2 - a**2))
        mi_next, report_next = evaluate(vc, np.diag(a_next), inputs, params.integrator)
        if params.update == "projected" and mi_next.nats < mi.nats - 3.0 * mi_next.std_error:
            shrink *= 0.5
            if shrink * alpha * scale <= params.tol:
                converged = True
                break
            continue
        a, mi, report = a_next, mi_next, report_next
        history.append((k, a**2, mi.nats))
        if step <= params.tol:
            converged = True
            break
    return converged, k, a, mi, report, history


def algorithm1_solve(
    vc: VirtualChannel, caps, inputs: Inputs, params: PowerSolveParams = None
) -> PowerSolution:
    """Iterate the MMSE-gradient power update inside the box [0, Q].

    With ``init="multi"`` the ascent runs from several starting points and
    the best converged end point wins.  Raises :class:`NoConvergence`
    carrying the best iterate when no run converges within the budget.
    """
    params = params or PowerSolveParams()
    caps = np.asarray(caps, dtype=float)
    if caps.shape[0] != vc.n_tx:
        raise DimensionMismatch("one cap per user required")
    if np.any(caps < 0):
        raise ValueError("caps must be nonnegative")
    amp_caps = np.sqrt(caps)

    runs = [_ascend(vc, amp_caps, inputs, params, a0) for a0 in _starts(params.init, amp_caps)]
    pool = [r for r in runs if r[0]] or runs
    # ties keep the earliest start, so the result is order-deterministic
    converged, k, a, mi, report, history = max(pool, key=lambda r: r[3].nats)
    lam, res = _kkt_gap(vc, a, report, caps)
    sol = PowerSolution(
        powers=a**2,
        multipliers=lam,
        iterations=sum(r[1] for r in runs),
        residual=res,
        active_caps=a >= amp_caps * (1 - 1e-12),
        mi_nats=mi.nats,
        converged=converged,
        history=tuple(history),
    )
    if not converged:
        log.warning("algorithm1_solve stopped after %d iterations", sol.iterations)
        raise NoConvergence(f"no convergence after {sol.iterations} iterations", best=sol)
    return sol


@dataclass(frozen=True, eq=False)
class MercuryForm:
    """Right-hand side of the Case-3 fixed point, per user, in amplitude form.

    At a stationary point ``sqrt(P_i) = mmse_terms[i] + cov_terms[i]``.
    """

    mmse_terms: np.ndarray
    cov_terms: np.ndarray
    multipliers: np.ndarray

    @property
    def amplitudes(self) -> np.ndarray:
        return self.mmse_terms + self.cov_terms


def mercury_waterfilling_form(vc: VirtualChannel, P, E, lam=None) -> MercuryForm:
    """Split the KKT right-hand side into own-MMSE and cross-covariance parts.

    The own term of user ``i`` is ``snr (H^H H)_ii sqrt(P_i) E_ii / lambda_i``;
    the cross term collects ``snr (H^H H)_ik sqrt(P_k) E_ki / lambda_i`` over
    ``k != i``.  Without ``lam`` the multipliers are taken from the
    stationarity equation itself.
    """
    a = _amplitudes(P)
    if np.any(a <= 0):
        raise ZeroPowerCase("a user has zero power; the TDM cases apply instead")
    Emat = E.E if isinstance(E, MmseReport) else np.asarray(E, dtype=complex)
    C = vc.snr * (vc.H.conj().T @ vc.H)
    W = C * (a[None, :] * Emat.T)  # W[i, k] = C_ik a_k E_ki
    own = np.real(np.diag(W))
    cross = np.real(W.sum(axis=1)) - own
    if lam is None:
        lam = (own + cross) / a
    lam = np.asarray(lam, dtype=float)
    return MercuryForm(own / lam, cross / lam, lam)
