"""Mutual information, MMSE matrices and their relations.

All quantities are in nats internally; :attr:`MiEstimate.bits` converts.
The effective channel is ``G = sqrt(snr) H P`` throughout.

Gradient convention
-------------------
:func:`mi_gradient` returns ``snr * H^H H P E``.  For a perturbation ``dP``
of the precoder the first-order change of the mutual information is
``2 * Re(trace(grad^H dP))``; every finite-difference check uses that
factor of two.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate
from scipy.special import logsumexp

from .channel import VirtualChannel, effective
from .constellation import GaussianInputs, Inputs, JointAlphabet, enumerate_joint
from .errors import DimensionMismatch, GaussianNotEnumerable, NonFiniteDeterminant, SingularMatrix
from .integrate import Integrator, integrate_posterior

__all__ = [
    "MiEstimate",
    "MmseReport",
    "mi_gaussian",
    "mi_discrete",
    "mutual_information",
    "mmse_matrix",
    "evaluate",
    "conditional_mean",
    "mi_gradient",
    "lmmse_estimate",
    "bpsk_siso_mmse",
    "bpsk_siso_mi",
    "qpsk_siso_mi",
    "mmse_trace",
    "LowSnrMmse",
    "lowsnr_mmse_expansion",
    "lowsnr_mi_expansion",
    "RateRegion",
    "rate_region_bounds",
    "GRADIENT_CONVENTION_FACTOR",
]

LN2 = math.log(2.0)
GRADIENT_CONVENTION_FACTOR = 2.0
DEFAULT_INTEGRATOR = Integrator()


@dataclass(frozen=True)
class MiEstimate:
    nats: float
    std_error: float = 0.0
    method: str = "closed_form"
    samples_or_nodes: int = 0

    @property
    def bits(self) -> float:
        return self.nats / LN2

    @property
    def std_error_bits(self) -> float:
        return self.std_error / LN2


@dataclass(frozen=True, eq=False)
class MmseReport:
    """MMSE matrix ``E = E[(x - x_hat)(x - x_hat)^H]`` and its provenance."""

    E: np.ndarray
    method: str
    samples_or_nodes: int = 0
    std_error: np.ndarray = None

    def __post_init__(self):
        E = np.asarray(self.E, dtype=complex)
        E = 0.5 * (E + E.conj().T)
        object.__setattr__(self, "E", E)
        if self.std_error is None:
            object.__setattr__(self, "std_error", np.zeros(E.shape))

    @property
    def per_user_mmse(self) -> np.ndarray:
        return np.real(np.diag(self.E))

    @property
    def cross_cov(self) -> np.ndarray:
        """Off-diagonal entries in row-major order (E12, E21 for two users)."""
        mask = ~np.eye(self.E.shape[0], dtype=bool)
        return self.E[mask]

    @property
    def sum_mmse(self) -> float:
        return float(np.real(np.trace(self.E)))


def _gaussian_E(G: np.ndarray) -> np.ndarray:
    n = G.shape[1]
    return np.linalg.inv(np.eye(n) + G.conj().T @ G)


def mi_gaussian(vc: VirtualChannel, P) -> MiEstimate:
    """ln det(I + G G^H) for unit-power circular Gaussian inputs."""
    G = effective(vc, P)
    sign, logdet = np.linalg.slogdet(np.eye(G.shape[0]) + G @ G.conj().T)
    if not np.isfinite(logdet) or sign.real <= 0:
        raise NonFiniteDeterminant("det(I + G G^H) is not a finite positive number")
    return MiEstimate(float(logdet))


def evaluate(vc: VirtualChannel, P, inputs: Inputs, integ: Integrator = None, want_mmse=True):
    """Mutual information and MMSE report from a single integration pass."""
    G = effective(vc, P)
    if isinstance(inputs, GaussianInputs):
        if inputs.users != G.shape[1]:
            raise DimensionMismatch("input count does not match P")
        mi = mi_gaussian(vc, P)
        report = MmseReport(_gaussian_E(G), "closed_form_gaussian") if want_mmse else None
        return mi, report
    if inputs.users != G.shape[1]:
        raise DimensionMismatch(f"{inputs.users} users but P has {G.shape[1]} columns")
    integ = integ or DEFAULT_INTEGRATOR
    stats = integrate_posterior(G, inputs, integ, want_mmse=want_mmse)
    mi = MiEstimate(stats.mi, stats.mi_std, stats.method, stats.count)
    report = None
    if want_mmse:
        report = MmseReport(stats.E, stats.method, stats.count, stats.E_std)
    return mi, report


def mi_discrete(vc: VirtualChannel, P, alphabet: JointAlphabet, integ: Integrator = None):
    if not isinstance(alphabet, JointAlphabet):
        raise GaussianNotEnumerable("mi_discrete needs a finite alphabet; use mi_gaussian")
    return evaluate(vc, P, alphabet, integ, want_mmse=False)[0]


def mutual_information(vc: VirtualChannel, P, inputs: Inputs, integ: Integrator = None):
    return evaluate(vc, P, inputs, integ, want_mmse=False)[0]


def mmse_matrix(vc: VirtualChannel, P, inputs: Inputs, integ: Integrator = None) -> MmseReport:
    return evaluate(vc, P, inputs, integ, want_mmse=True)[1]


def conditional_mean(y, G, alphabet: JointAlphabet) -> np.ndarray:
    """Posterior mean E[x | y] under the Gaussian likelihood exp(-||y - G x||^2)."""
    G = np.atleast_2d(np.asarray(G, dtype=complex))
    y = np.asarray(y, dtype=complex)
    X = alphabet.vectors
    resid = y[None, :] - X @ G.T
    with np.errstate(divide="ignore"):
        ex = np.log(alphabet.priors) - np.sum(np.abs(resid) ** 2, axis=1)
    w = np.exp(ex - logsumexp(ex))
    return w @ X


def mi_gradient(vc: VirtualChannel, P, mmse: MmseReport) -> np.ndarray:
    """snr * H^H H P E (see the module docstring for the real-derivative factor)."""
    P = np.atleast_2d(np.asarray(P, dtype=complex))
    E = mmse.E if isinstance(mmse, MmseReport) else np.asarray(mmse, dtype=complex)
    if P.shape[0] != vc.n_tx or P.shape[1] != E.shape[0]:
        raise DimensionMismatch(f"P {P.shape} incompatible with H {vc.H.shape} / E {E.shape}")
    H = vc.H
    return vc.snr * (H.conj().T @ H @ P @ E)


def lmmse_estimate(y, vc: VirtualChannel, P) -> np.ndarray:
    """Wiener filter G^H (I + G G^H)^{-1} y."""
    G = effective(vc, P)
    A = np.eye(G.shape[0]) + G @ G.conj().T
    try:
        return G.conj().T @ np.linalg.solve(A, np.asarray(y, dtype=complex))
    except np.linalg.LinAlgError as exc:
        raise SingularMatrix(str(exc)) from exc


def _logcosh(x):
    ax = np.abs(x)
    return ax + np.log1p(np.exp(-2.0 * ax)) - LN2


def _siso_expectation(f, snr: float) -> float:
    """E[f(2 sqrt(snr) zeta)] for zeta ~ N(sqrt(snr), 1/2), by adaptive quadrature."""
    mu = math.sqrt(snr)
    half = 12.0 / math.sqrt(2.0)  # twelve standard deviations either side

    def integrand(z):
        return f(2.0 * mu * z) * math.exp(-((z - mu) ** 2)) / math.sqrt(math.pi)

    # the sign change of the argument at z = 0 is where the integrand bends
    pts = [0.0] if -half < 0.0 < 2 * mu + half else None
    val, _ = integrate.quad(integrand, mu - half, mu + half, points=pts,
                            epsabs=1e-13, epsrel=1e-13, limit=200)
    return val


def bpsk_siso_mmse(snr: float) -> float:
    """1 - E[tanh(2 sqrt(snr) zeta)] with zeta ~ N(sqrt(snr), 1/2)."""
    if snr < 0:
        raise ValueError("snr must be nonnegative")
    if snr == 0:
        return 1.0
    val = 1.0 - _siso_expectation(math.tanh, snr)
    return min(max(val, 0.0), 1.0)


def bpsk_siso_mi(snr: float) -> float:
    """BPSK mutual information in nats over y = sqrt(snr) x + CN(0, 1).

    Equal to ``2 snr - E[log cosh(2 sqrt(snr) zeta)]``; its derivative in
    snr is :func:`bpsk_siso_mmse`.
    """
    if snr < 0:
        raise ValueError("snr must be nonnegative")
    if snr == 0:
        return 0.0
    val = 2.0 * snr - _siso_expectation(lambda t: float(_logcosh(t)), snr)
    return min(max(val, 0.0), LN2)


def qpsk_siso_mi(snr: float) -> float:
    """QPSK {±1±j}: two independent BPSK components at the same snr."""
    return 2.0 * bpsk_siso_mi(snr)


def mmse_trace(vc: VirtualChannel, P, mmse: MmseReport) -> float:
    """Tr{HP E (HP)^H}, the snr-free total MMSE in the direction of the channel."""
    HP = vc.H @ np.atleast_2d(np.asarray(P, dtype=complex))
    E = mmse.E if isinstance(mmse, MmseReport) else np.asarray(mmse)
    return float(np.real(np.trace(HP @ E @ HP.conj().T)))


@dataclass(frozen=True, eq=False)
class LowSnrMmse:
    """E ~ zeroth + first * snr; MMSE(snr) ~ c0 - c1 * snr.

    Valid for unit-energy proper (circular) inputs such as Gaussian or
    normalized QPSK.
    """

    zeroth: np.ndarray
    first: np.ndarray
    c0: float
    c1: float

    def matrix(self, snr: float) -> np.ndarray:
        return self.zeroth + snr * self.first

    def scalar(self, snr: float) -> float:
        return self.c0 - self.c1 * snr


def lowsnr_mmse_expansion(vc: VirtualChannel, P) -> LowSnrMmse:
    HP = vc.H @ np.atleast_2d(np.asarray(P, dtype=complex))
    A = HP @ HP.conj().T
    n = HP.shape[1]
    return LowSnrMmse(
        zeroth=np.eye(n, dtype=complex),
        first=-(HP.conj().T @ HP),
        c0=float(np.real(np.trace(A))),
        c1=float(np.real(np.trace(A @ A))),
    )


def lowsnr_mi_expansion(vc: VirtualChannel, P):
    """(c1, c2) with I(snr) ~ c1 snr - c2 snr^2 / 2 (nats)."""
    exp = lowsnr_mmse_expansion(vc, P)
    return exp.c0, exp.c1


@dataclass(frozen=True)
class RateRegion:
    """Rate-bound mutual informations in nats."""

    per_user: tuple
    per_receiver_sum: tuple
    joint: float
    std_error: float = 0.0

    @property
    def sum_min_bound(self) -> float:
        return min(self.per_receiver_sum)

    @property
    def R1_bound(self) -> float:
        return self.per_user[0]

    @property
    def R2_bound(self) -> float:
        return self.per_user[1]

    def chain_holds(self, slack: float = 0.0) -> bool:
        return self.sum_min_bound <= self.joint + slack


def _single_user(vc: VirtualChannel, P, inputs, user, receivers, integ):
    P = np.atleast_2d(np.asarray(P, dtype=complex))
    sub = VirtualChannel(vc.H[np.ix_(receivers, range(vc.n_tx))], vc.snr)
    col = P[:, [user]]
    if isinstance(inputs, GaussianInputs):
        return mi_gaussian(sub, col)
    alpha = enumerate_joint([inputs.constellations[user]])
    return mi_discrete(sub, col, alpha, integ)


def rate_region_bounds(vc: VirtualChannel, P, inputs: Inputs, integ: Integrator = None):
    """I(x_i; y_i | x_others), I(x; y_k) per receiver, and the joint I(x; y).

    Knowing the other users' symbols removes their contribution, so the
    conditional bound is the single-user MI of column ``i`` at receiver ``i``.
    """
    P = np.atleast_2d(np.asarray(P, dtype=complex))
    n_users = P.shape[1]
    if vc.n_rx < n_users:
        raise DimensionMismatch("need one receiver per user for the per-user bounds")
    per_user, per_rx = [], []
    var = 0.0
    for u in range(n_users):
        est = _single_user(vc, P, inputs, u, [u], integ)
        per_user.append(est.nats)
        var += est.std_error**2
    for k in range(vc.n_rx):
        est = mutual_information(vc.rows([k]), P, inputs, integ)
        per_rx.append(est.nats)
        var += est.std_error**2
    joint = mutual_information(vc, P, inputs, integ)
    var += joint.std_error**2
    return RateRegion(tuple(per_user), tuple(per_rx), joint.nats, math.sqrt(var))
