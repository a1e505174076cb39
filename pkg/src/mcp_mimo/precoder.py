"""Downlink linear precoding for the cooperating cluster.

Precoders are square matrices ``P`` under a total-power (trace) budget.  The
stationary points of the mutual information satisfy the fixed point
``P ~ H^H H P E`` and factor as ``P = U D R^H`` with ``U`` the channel's
right singular vectors.  At high snr the mutual information is governed by
the minimum distance of the received lattice, which is maximized directly.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment, minimize

from .channel import VirtualChannel
from .constellation import GaussianInputs, Inputs, JointAlphabet
from .errors import DimensionMismatch, NoConvergence, NoImprovement, ZeroDmin, ZeroUpdate
from .infotheory import MmseReport, evaluate, lowsnr_mi_expansion, mi_gradient
from .integrate import Integrator

__all__ = [
    "PrecoderMatrix",
    "PrecoderDecomposition",
    "HighSnrParams",
    "PrecoderSolveParams",
    "fixed_point_step",
    "decompose",
    "d_min",
    "highsnr_bound",
    "optimize_precoder_highsnr",
    "lowsnr_optimal_precoder",
    "lowsnr_slope",
    "algorithm2_solve",
    "printed_transmit_weights",
    "project_trace",
]

log = logging.getLogger(__name__)

TRACE_TOL = 1e-9
# constant of the high-snr lower bound
_BOUND_C = 4.37 + 2.0 * math.sqrt(math.pi)


@dataclass(frozen=True, eq=False)
class PrecoderMatrix:
    """Square precoder with its trace budget."""

    P: np.ndarray
    trace_budget: float = 1.0

    def __post_init__(self):
        P = np.atleast_2d(np.asarray(self.P, dtype=complex))
        if P.shape[0] != P.shape[1]:
            raise DimensionMismatch(f"precoder must be square, got {P.shape}")
        if self.trace_budget <= 0:
            raise ValueError("trace budget must be positive")
        if _power(P) > self.trace_budget + TRACE_TOL:
            raise ValueError(f"Tr(PP^H) = {_power(P):.12g} exceeds budget {self.trace_budget}")
        P.setflags(write=False)
        object.__setattr__(self, "P", P)
        object.__setattr__(self, "trace_budget", float(self.trace_budget))

    @property
    def power(self) -> float:
        return _power(self.P)

    @property
    def is_diagonal(self) -> bool:
        off = self.P - np.diag(np.diag(self.P))
        return bool(np.max(np.abs(off)) <= 1e-9 * max(1.0, np.max(np.abs(self.P))))

    def to_dict(self) -> dict:
        """Row-major complex entries as [re, im] pairs."""
        return {
            "rows": self.P.shape[0],
            "cols": self.P.shape[1],
            "trace_budget": self.trace_budget,
            "entries": [[float(v.real), float(v.imag)] for v in self.P.ravel()],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "PrecoderMatrix":
        vals = np.array([complex(re, im) for re, im in data["entries"]])
        return cls(vals.reshape(data["rows"], data["cols"]), data.get("trace_budget", 1.0))


def _power(P) -> float:
    return float(np.real(np.vdot(P, P)))


def project_trace(P, budget: float = 1.0) -> np.ndarray:
    """Rescale ``P`` onto the sphere Tr(PP^H) = budget."""
    P = np.asarray(P, dtype=complex)
    nrm = math.sqrt(_power(P))
    if nrm == 0.0:
        raise ZeroUpdate("cannot rescale a zero precoder onto the trace sphere")
    return P * (math.sqrt(budget) / nrm)


def _as_matrix(P) -> np.ndarray:
    if isinstance(P, PrecoderMatrix):
        return P.P
    return np.atleast_2d(np.asarray(P, dtype=complex))


def _budget_of(P, default: float = 1.0) -> float:
    return P.trace_budget if isinstance(P, PrecoderMatrix) else default


def _E(E) -> np.ndarray:
    return E.E if isinstance(E, MmseReport) else np.asarray(E, dtype=complex)


# ---------------------------------------------------------------------------
# fixed-point structure


def fixed_point_step(vc: VirtualChannel, P, E, budget: float = None) -> PrecoderMatrix:
    """One application of ``P <- H^H H P E / nu`` rescaled to the trace budget."""
    Pm = _as_matrix(P)
    budget = _budget_of(P) if budget is None else budget
    if Pm.shape[0] != vc.n_tx:
        raise DimensionMismatch(f"P {Pm.shape} does not fit H {vc.H.shape}")
    Q = vc.H.conj().T @ vc.H @ Pm @ _E(E)
    if not np.any(np.abs(Q) > 0):
        raise ZeroUpdate("H^H H P E vanishes")
    return PrecoderMatrix(project_trace(Q, budget), budget)


@dataclass(frozen=True, eq=False)
class PrecoderDecomposition:
    """``P = U diag(D) R^H`` with ``U`` tied to the channel and ``R`` to the MMSE.

    ``perm[k]`` is the MMSE eigenvector matched to column ``k`` of ``R``;
    the mismatch norms measure how far ``U`` and ``R`` are from the channel
    right singular vectors and the permuted MMSE eigenvectors, up to the
    phase of each column.
    """

    U: np.ndarray
    D: np.ndarray
    R: np.ndarray
    perm: tuple
    u_mismatch: float
    r_mismatch: float

    def reconstruct(self) -> np.ndarray:
        return self.U @ np.diag(self.D) @ self.R.conj().T


def _channel_right_vectors(vc: VirtualChannel) -> np.ndarray:
    _, _, vh = np.linalg.svd(vc.H)
    V = vh.conj().T
    n = vc.n_tx
    if V.shape[1] < n:  # wide H: complete the basis
        q, _ = np.linalg.qr(np.concatenate([V, np.eye(n)], axis=1))
        V = q[:, :n]
    return V


def _phase_mismatch(A: np.ndarray, B: np.ndarray) -> float:
    """|| |A^H B| - I ||_F for unitary A, B (insensitive to column phases)."""
    return float(np.linalg.norm(np.abs(A.conj().T @ B) - np.eye(A.shape[1])))


def _match_columns(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Permutation ``perm`` maximizing sum_k |<A_k, B_perm[k]>|^2; ties go to the lower index."""
    overlap = np.abs(A.conj().T @ B) ** 2
    rows, cols = linear_sum_assignment(-np.round(overlap, 12))
    return cols[np.argsort(rows)]


def decompose(P, vc: VirtualChannel, E) -> PrecoderDecomposition:
    """Factor ``P = U D R^H`` with ``U`` aligned to the channel's right singular vectors.

    When ``V_H^H P`` has orthogonal nonzero rows the factorization is exact
    with ``U = V_H``.  Otherwise the singular value decomposition of ``P`` is
    used, with its left vectors ordered to best match ``V_H``.  In both cases
    the eigenvectors of ``E`` are matched to the columns of ``R``.
    """
    Pm = _as_matrix(P)
    n = Pm.shape[0]
    if Pm.shape[0] != vc.n_tx:
        raise DimensionMismatch(f"P {Pm.shape} does not fit H {vc.H.shape}")
    V = _channel_right_vectors(vc)
    B = V.conj().T @ Pm
    gram = B @ B.conj().T
    rows = np.sqrt(np.maximum(np.real(np.diag(gram)), 0.0))
    scale = max(float(np.max(rows)), 1e-300)
    off = gram - np.diag(np.diag(gram))
    if np.all(rows > 1e-9 * scale) and np.max(np.abs(off)) <= 1e-9 * scale**2:
        U = V
        D = rows
        R = (B / rows[:, None]).conj().T
    else:
        u, s, vh = np.linalg.svd(Pm)
        order = _match_columns(V, u)
        U, D, R = u[:, order], s[order], vh.conj().T[:, order]
    _, UE = np.linalg.eigh(_E(E))
    perm = _match_columns(R, UE)
    return PrecoderDecomposition(
        U=U,
        D=D,
        R=R,
        perm=tuple(int(p) for p in perm),
        u_mismatch=_phase_mismatch(U, V),
        r_mismatch=_phase_mismatch(R, UE[:, perm]) if n else 0.0,
    )


# ---------------------------------------------------------------------------
# minimum distance and the high-snr regime


def _differences(alphabet: JointAlphabet) -> np.ndarray:
    """Distinct nonzero difference vectors x_i - x_j, one of each +/- pair."""
    v = alphabet.vectors
    diff = (v[:, None, :] - v[None, :, :]).reshape(-1, v.shape[1])
    keep = np.any(np.abs(diff) > 0, axis=1)
    diff = diff[keep]
    # canonical sign: first nonzero entry in the right half-plane
    first = diff[np.arange(diff.shape[0]), np.argmax(np.abs(diff) > 0, axis=1)]
    flip = (first.real < 0) | ((first.real == 0) & (first.imag < 0))
    diff[flip] *= -1
    return np.unique(np.round(diff, 12), axis=0)


def _distances2(HP: np.ndarray, diffs: np.ndarray) -> np.ndarray:
    return np.sum(np.abs(diffs @ HP.T) ** 2, axis=1)


def d_min(vc: VirtualChannel, P, alphabet: JointAlphabet) -> float:
    """min over distinct symbol pairs of ||H P (x_i - x_j)||, without the snr factor."""
    if not isinstance(alphabet, JointAlphabet):
        raise TypeError("d_min needs a finite joint alphabet")
    if alphabet.M < 2:
        raise ValueError("need at least two joint symbols")
    HP = vc.H @ _as_matrix(P)
    return float(math.sqrt(np.min(_distances2(HP, _differences(alphabet)))))


def highsnr_bound(vc: VirtualChannel, P, alphabet: JointAlphabet, snr: float = None) -> float:
    """High-snr lower bound on the mutual information, in nats.

    ``log M - exp(-d^2 snr / 4) / (M d snr) * (sqrt(pi) - (4.37 + 2 sqrt(pi)) / (d^2 snr))``
    """
    snr = vc.snr if snr is None else float(snr)
    if snr <= 0:
        raise ValueError("the high-snr bound needs snr > 0")
    d = d_min(vc, P, alphabet)
    if d <= 0:
        raise ZeroDmin("two joint symbols map to the same received point")
    M = alphabet.M
    x = d * d * snr
    return math.log(M) - math.exp(-x / 4.0) / (M * d * snr) * (math.sqrt(math.pi) - _BOUND_C / x)


@dataclass(frozen=True)
class HighSnrParams:
    """Settings for :func:`optimize_precoder_highsnr`.

    ``beta = 0`` ascends along the exact subgradient of the active minimum
    pairs; ``beta > 0`` uses the soft-min ``-log(sum exp(-beta d^2)) / beta``.
    """

    snr: float = 10.0
    restarts: int = 8
    step: float = 0.2
    max_iters: int = 400
    tol: float = 1e-10
    beta: float = 0.0
    seed: int = 0
    trace_budget: float = 1.0
    field: str = "real"

    def __post_init__(self):
        if self.restarts < 1:
            raise ValueError("restarts must be at least 1")
        if self.step <= 0 or self.max_iters < 1 or self.tol <= 0:
            raise ValueError("step, max_iters and tol must be positive")
        if self.beta < 0:
            raise ValueError("beta must be nonnegative")
        if self.trace_budget <= 0:
            raise ValueError("trace budget must be positive")
        if self.field not in ("real", "complex"):
            raise ValueError(f"unknown field '{self.field}'")


@dataclass(frozen=True, eq=False)
class HighSnrResult:
    precoder: PrecoderMatrix
    d_min: float
    bound: float
    restart: int
    trace: tuple = field(default=())  # (restart, iteration, d_min, Tr PP^H)


def _dmin_ascent_direction(HtH, P, diffs, d2, beta):
    if beta > 0:
        w = np.exp(-beta * (d2 - d2.min()))
        w /= w.sum()
    else:
        active = d2 <= d2.min() + 1e-9 * max(1.0, d2.min())
        w = active / active.sum()
    # d/dP* of ||H P e||^2 is H^H H P e e^H
    outer = (diffs.T * w) @ diffs.conj()
    return HtH @ P @ outer


def _ascend_dmin(vc, diffs, P0, params, restart):
    HtH = vc.H.conj().T @ vc.H
    P = project_trace(P0, params.trace_budget)
    d2 = _distances2(vc.H @ P, diffs)
    best_P, best = P, d2.min()
    trace = [(restart, 0, math.sqrt(best), _power(P))]
    for k in range(1, params.max_iters + 1):
        g = _dmin_ascent_direction(HtH, P, diffs, d2, params.beta)
        if params.field == "real":
            g = g.real.astype(complex)
        gn = math.sqrt(_power(g))
        if gn == 0.0:
            break
        step = params.step / math.sqrt(k)
        P_next = project_trace(P + step * math.sqrt(params.trace_budget) * g / gn, params.trace_budget)
        if np.linalg.norm(P_next - P) <= params.tol:
            P = P_next
            break
        P = P_next
        d2 = _distances2(vc.H @ P, diffs)
        trace.append((restart, k, math.sqrt(d2.min()), _power(P)))
        if d2.min() > best:
            best_P, best = P, d2.min()
    return best_P, math.sqrt(best), trace


def _polish_dmin(vc, diffs, P, params):
    """Epigraph refinement: max t s.t. ||H P e_k||^2 >= t, Tr(PP^H) = budget.

    Subgradient steps stall near a max-min optimum where several pairs are
    active at once; a sequential quadratic program resolves that kink.
    """
    n = P.shape[0]
    cplx = params.field == "complex"
    HtH = vc.H.conj().T @ vc.H

    def unpack(theta):
        re = theta[: n * n].reshape(n, n)
        im = theta[n * n : 2 * n * n].reshape(n, n) if cplx else 0.0
        return re + 1j * im

    def pack(M):
        parts = [M.real.ravel()] + ([M.imag.ravel()] if cplx else [])
        return np.concatenate(parts)

    def d2(theta):
        return _distances2(vc.H @ unpack(theta[:-1]), diffs) - theta[-1]

    def d2_jac(theta):
        Pm = unpack(theta[:-1])
        HtHP = HtH @ Pm
        rows = [pack(2.0 * HtHP @ np.outer(e, e.conj())) for e in diffs]
        return np.hstack([np.array(rows), -np.ones((len(rows), 1))])

    def power(theta):
        return np.array([np.sum(theta[:-1] ** 2) - params.trace_budget])

    def power_jac(theta):
        return np.concatenate([2.0 * theta[:-1], [0.0]])[None, :]

    t0 = float(_distances2(vc.H @ P, diffs).min())
    res = minimize(
        lambda th: -th[-1],
        np.concatenate([pack(P), [t0]]),
        jac=lambda th: np.concatenate([np.zeros(th.size - 1), [-1.0]]),
        constraints=[
            {"type": "ineq", "fun": d2, "jac": d2_jac},
            {"type": "eq", "fun": power, "jac": power_jac},
        ],
        method="SLSQP",
        options={"maxiter": 200, "ftol": 1e-14},
    )
    Q = project_trace(unpack(res.x[:-1]), params.trace_budget)
    if params.field == "real":
        Q = Q.real.astype(complex)
    q2 = float(_distances2(vc.H @ Q, diffs).min())
    return (Q, q2) if q2 > t0 else (P, t0)


def _initial_precoders(vc: VirtualChannel, params: HighSnrParams):
    n = vc.n_tx
    rng = np.random.default_rng(params.seed)
    V = _channel_right_vectors(vc)
    starts = [V / math.sqrt(n)]
    for _ in range(params.restarts - 1):
        X = rng.standard_normal((n, n))
        if params.field == "complex":
            X = X + 1j * rng.standard_normal((n, n))
        starts.append(X)
    return starts


def optimize_precoder_highsnr(vc: VirtualChannel, alphabet: JointAlphabet, params: HighSnrParams = None):
    """Maximize the high-snr bound over precoders with Tr(PP^H) = budget.

    At fixed snr and large ``d_min^2 snr`` the bound is increasing in
    ``d_min``, so each restart runs projected subgradient ascent on the
    minimum distance and finishes with an SQP polish of the max-min
    problem.  The first start is ``V_H / sqrt(n)``; the rest are
    random with seeds derived from ``params.seed``.

    Returns ``(HighSnrResult, trace)``.  Raises :class:`NoImprovement`
    (carrying the best result) if no restart improves on its start.
    """
    params = params or HighSnrParams()
    if not isinstance(alphabet, JointAlphabet):
        raise TypeError("the high-snr optimizer needs a finite alphabet")
    diffs = _differences(alphabet)
    trace = []
    best = None
    improved = False
    for r, P0 in enumerate(_initial_precoders(vc, params)):
        start = math.sqrt(_distances2(vc.H @ project_trace(P0, params.trace_budget), diffs).min())
        P, dm, tr = _ascend_dmin(vc, diffs, P0, params, r)
        P, d2 = _polish_dmin(vc, diffs, P, params)
        dm = math.sqrt(d2)
        trace.extend(tr)
        trace.append((r, tr[-1][1] + 1, dm, _power(P)))
        improved |= dm > start + 1e-12
        if best is None or dm > best[1] + 1e-12:
            best = (P, dm, r)
    P, dm, r = best
    pm = PrecoderMatrix(P, params.trace_budget)
    bound = highsnr_bound(vc, pm, alphabet, params.snr) if dm > 0 else float("-inf")
    result = HighSnrResult(pm, dm, bound, r, tuple(trace))
    if not improved:
        raise NoImprovement("no restart improved the minimum distance", best=result)
    return result, result.trace


# ---------------------------------------------------------------------------
# low snr


def lowsnr_slope(vc: VirtualChannel, P) -> float:
    """First-order coefficient Tr{HP (HP)^H} of the mutual information in snr."""
    return lowsnr_mi_expansion(vc, _as_matrix(P))[0]


def lowsnr_optimal_precoder(vc: VirtualChannel, snr: float = 0.0, budget: float = 1.0) -> PrecoderMatrix:
    """Put the whole trace budget on the strongest eigenmode(s) of H^H H.

    The first-order objective is linear in ``Z = P P^H``, so the optimum sits
    at an extreme point; tied principal eigenvalues share the budget equally.
    Eigenvectors are ordered by decreasing eigenvalue and phased so their
    largest entry is real positive.  ``snr`` does not affect the answer.
    """
    if snr < 0:
        raise ValueError("snr must be nonnegative")
    w, U = np.linalg.eigh(vc.H.conj().T @ vc.H)
    w, U = w[::-1], U[:, ::-1]
    for k in range(U.shape[1]):
        j = np.argmax(np.abs(U[:, k]))
        U[:, k] *= np.exp(-1j * np.angle(U[j, k]))
    top = w >= w[0] - 1e-9 * max(1.0, abs(w[0]))
    z = np.where(top, budget / top.sum(), 0.0)
    return PrecoderMatrix(U @ np.diag(np.sqrt(z)), budget)


# ---------------------------------------------------------------------------
# iterative precoder design


@dataclass(frozen=True)
class PrecoderSolveParams:
    """Step schedule for :func:`algorithm2_solve`.

    ``update="projected"`` moves along the normalized gradient with length
    ``alpha_k sqrt(budget)`` and halves the step when the objective drops;
    ``update="printed"`` applies ``alpha_k P + alpha_k lam grad`` literally.
    Every iterate is rescaled onto the trace sphere.
    """

    step: float = 0.5
    step_rule: str = "diminishing"
    max_iters: int = 300
    tol: float = 1e-6
    lam: float = 1.0
    trace_budget: float = 1.0
    integrator: Integrator = field(default_factory=Integrator)
    update: str = "projected"

    def __post_init__(self):
        if self.step <= 0 or self.tol <= 0 or self.max_iters < 1:
            raise ValueError("step, tol and max_iters must be positive")
        if self.step_rule not in ("constant", "diminishing"):
            raise ValueError(f"unknown step rule '{self.step_rule}'")
        if self.update not in ("projected", "printed"):
            raise ValueError(f"unknown update '{self.update}'")
        if self.trace_budget <= 0:
            raise ValueError("trace budget must be positive")

    def alpha(self, k: int) -> float:
        return self.step / k if self.step_rule == "diminishing" else self.step


@dataclass(frozen=True, eq=False)
class PrecoderSolution:
    precoder: PrecoderMatrix
    weights: np.ndarray
    mi_nats: float
    std_error: float
    iterations: int
    converged: bool
    history: tuple = ()

    def to_dict(self) -> dict:
        return {
            "precoder": self.precoder.to_dict(),
            "weights": [[[float(w.real), float(w.imag)] for w in row] for row in self.weights],
            "mi_bits": self.mi_nats / math.log(2.0),
            "std_error_bits": self.std_error / math.log(2.0),
            "iterations": int(self.iterations),
            "converged": bool(self.converged),
        }


def printed_transmit_weights(vc: VirtualChannel, P) -> np.ndarray:
    """Scalar weights each BS applies to each user symbol.

    Row ``b`` holds BS ``b``'s weights for ``x_1 .. x_n``; for ``P = V_H
    diag(sqrt(P_i))`` entry ``[0, 0]`` is ``(h11 v11 + h12 v21) sqrt(P_1)``.
    Stacking both transmissions gives ``H P x``.
    """
    return vc.H @ _as_matrix(P)


def initial_precoder(vc: VirtualChannel, powers=None, budget: float = 1.0) -> np.ndarray:
    """``V_H diag(sqrt(P_i))``, with an equal split of the budget by default."""
    n = vc.n_tx
    powers = np.full(n, budget / n) if powers is None else np.asarray(powers, dtype=float)
    return _channel_right_vectors(vc) @ np.diag(np.sqrt(powers))


def algorithm2_solve(vc: VirtualChannel, P_init, inputs: Inputs, params: PrecoderSolveParams = None):
    """Gradient iteration on the precoder with trace renormalization.

    ``P_init=None`` starts from :func:`initial_precoder`.  Returns a
    :class:`PrecoderSolution`; raises :class:`NoConvergence` with the best
    iterate when the budget runs out.
    """
    params = params or PrecoderSolveParams()
    budget = params.trace_budget
    P = initial_precoder(vc, budget=budget) if P_init is None else _as_matrix(P_init)
    if P.shape != (vc.n_tx, vc.n_tx):
        raise DimensionMismatch(f"P_init {P.shape} does not fit H {vc.H.shape}")
    P = project_trace(P, budget)
    real = np.isrealobj(vc.H) or np.all(vc.H.imag == 0)
    real = real and (isinstance(inputs, GaussianInputs) or inputs.is_real) and np.all(P.imag == 0)

    mi, report = evaluate(vc, P, inputs, params.integrator)
    history = [(0, mi.nats)]
    shrink = 1.0
    converged = False
    k = 0
    for k in range(1, params.max_iters + 1):
        g = mi_gradient(vc, P, report)
        if real:
            g = g.real.astype(complex)
        alpha = params.alpha(k)
        if params.update == "printed":
            P_next = project_trace(alpha * P + alpha * params.lam * g, budget)
        else:
            # drop the radial part: it is undone by the renormalization
            g = g - P * (np.real(np.vdot(P, g)) / budget)
            gn = math.sqrt(_power(g))
            if gn <= 1e-15:
                converged = True
                break
            P_next = project_trace(P + shrink * alpha * math.sqrt(budget) * g / gn, budget)
        step = float(np.linalg.norm(P_next - P))
        mi_next, report_next = evaluate(vc, P_next, inputs, params.integrator)
        if params.update == "projected" and mi_next.nats < mi.nats - 3.0 * mi_next.std_error:
            shrink *= 0.5
            if shrink * alpha <= params.tol:
                converged = True
                break
            continue
        P, mi, report = P_next, mi_next, report_next
        history.append((k, mi.nats))
        if step <= params.tol:
            converged = True
            break
    pm = PrecoderMatrix(P, budget)
    sol = PrecoderSolution(
        precoder=pm,
        weights=printed_transmit_weights(vc, pm),
        mi_nats=mi.nats,
        std_error=mi.std_error,
        iterations=k,
        converged=converged,
        history=tuple(history),
    )
    if not converged:
        log.warning("algorithm2_solve stopped after %d iterations", k)
        raise NoConvergence(f"no convergence after {k} iterations", best=sol)
    return sol
