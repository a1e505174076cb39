"""Expectations over the output of a finite-input Gaussian channel.

For ``y = G x_i + n`` the posterior over the alphabet depends on the noise
only through the real inner products ``Re(d_ij^H n)`` with the difference
vectors ``d_ij = G (x_i - x_j)``.  The noise is therefore projected onto an
orthonormal basis of their real span (dimension ``r <= 2 n_rx``), and the
expectation is taken over ``z ~ N(0, I_r / 2)`` either by tensor
Gauss-Hermite quadrature or by stratified Monte Carlo.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .constellation import JointAlphabet
from .errors import IntegratorBudgetTooSmall, QuadratureInfeasible

__all__ = ["Integrator", "NoiseProjection", "PosteriorStats", "integrate_posterior"]

MIN_NODES = 8
MIN_SAMPLES = 1000


@dataclass(frozen=True)
class Integrator:
    """How to take expectations over the noise.

    ``kind`` is ``"quadrature"``, ``"montecarlo"`` or ``"auto"``; auto uses
    quadrature whenever the projected noise has at most
    ``max_quadrature_dim`` real dimensions and the tensor grid costs at most
    ``max_quadrature_work`` likelihood evaluations (nodes^r * M^2).
    """

    kind: str = "auto"
    nodes: int = 32
    samples: int = 200_000
    seed: int = 0
    max_quadrature_dim: int = 4
    max_quadrature_work: float = 4e7
    block_size: int = 16384

    def __post_init__(self):
        if self.kind not in ("auto", "quadrature", "montecarlo"):
            raise ValueError(f"unknown integrator kind '{self.kind}'")
        if self.kind in ("auto", "quadrature") and self.nodes < MIN_NODES:
            raise IntegratorBudgetTooSmall(f"need at least {MIN_NODES} nodes, got {self.nodes}")
        if self.kind in ("auto", "montecarlo") and self.samples < MIN_SAMPLES:
            raise IntegratorBudgetTooSmall(
                f"need at least {MIN_SAMPLES} samples, got {self.samples}"
            )

    @classmethod
    def quadrature(cls, nodes: int = 32, **kw) -> "Integrator":
        return cls(kind="quadrature", nodes=nodes, **kw)

    @classmethod
    def montecarlo(cls, samples: int = 200_000, seed: int = 0, **kw) -> "Integrator":
        return cls(kind="montecarlo", samples=samples, seed=seed, **kw)


class NoiseProjection:
    """Difference geometry of ``G`` applied to a joint alphabet."""

    def __init__(self, G: np.ndarray, alphabet: JointAlphabet, rank_tol: float = 1e-10):
        keep = alphabet.priors > 0
        self.vectors = alphabet.vectors[keep]
        self.priors = alphabet.priors[keep]
        self.log_priors = np.log(self.priors)
        M = self.vectors.shape[0]
        images = self.vectors @ np.asarray(G).T  # (M, n_rx): G x_k
        diff = images[:, None, :] - images[None, :, :]  # d_ij = G(x_i - x_j)
        real = np.concatenate([diff.real, diff.imag], axis=-1)
        flat = real.reshape(M * M, -1)
        self.dist2 = np.sum(flat**2, axis=1).reshape(M, M)
        if flat.size and np.any(flat):
            _, s, vt = np.linalg.svd(flat, full_matrices=False)
            r = int(np.sum(s > rank_tol * s[0]))
            basis = vt[:r].T
        else:
            basis = np.zeros((flat.shape[1], 0))
        self.rank = basis.shape[1]
        self.proj = (flat @ basis).reshape(M, M, self.rank)

    @property
    def M(self) -> int:
        return self.vectors.shape[0]

    def exponents(self, i: int, z: np.ndarray) -> np.ndarray:
        """log p_j - ||G(x_i - x_j) + n||^2 + ||n||^2 for a batch of projected noise."""
        ex = self.log_priors[None, :] - self.dist2[i][None, :]
        if self.rank:
            ex = ex - 2.0 * (z @ self.proj[i].T)
        return ex


@dataclass
class PosteriorStats:
    """Raw outputs of one integration pass (nats, unsymmetrized E)."""

    mi: float
    mi_std: float
    E: np.ndarray
    E_std: np.ndarray
    method: str
    count: int
    rank: int


def _hermite_grid(nodes: int, dim: int, start: int, stop: int):
    xi, w = np.polynomial.hermite.hermgauss(nodes)
    w = w / math.sqrt(math.pi)
    idx = np.array(np.unravel_index(np.arange(start, stop), (nodes,) * dim)).T
    return xi[idx], np.prod(w[idx], axis=1)


def _block_terms(proj: NoiseProjection, i: int, z: np.ndarray, want_mmse: bool):
    ex = proj.exponents(i, z)
    # log(1 + sum_{j != i} p_j/p_i exp(.)) without cancellation when the sum is tiny
    others = ex - proj.log_priors[i]
    others[:, i] = -np.inf
    shift = np.maximum(others.max(axis=1), 0.0)
    terms = np.exp(others - shift[:, None])
    total = terms.sum(axis=1)
    lse = shift + np.log1p(np.exp(-shift) - 1.0 + total)
    if not want_mmse:
        return lse, None
    terms[:, i] = np.exp(-shift)
    post = terms / (terms.sum(axis=1, keepdims=True))
    err = proj.vectors[i][None, :] - post @ proj.vectors
    outer = err[:, :, None] * err[:, None, :].conj()
    return lse, outer


def _select_kind(integ: Integrator, rank: int, M: int) -> str:
    if integ.kind == "auto":
        work = float(integ.nodes) ** rank * M * M
        small = rank <= integ.max_quadrature_dim and work <= integ.max_quadrature_work
        return "quadrature" if small else "montecarlo"
    if integ.kind == "quadrature" and rank > integ.max_quadrature_dim:
        raise QuadratureInfeasible(
            f"projected noise has {rank} real dimensions; quadrature limited to "
            f"{integ.max_quadrature_dim}"
        )
    return integ.kind


def integrate_posterior(
    G: np.ndarray, alphabet: JointAlphabet, integ: Integrator, want_mmse: bool = True
) -> PosteriorStats:
    """Mutual information and MMSE matrix for ``y = G x + n``."""
    proj = NoiseProjection(G, alphabet)
    n_users = proj.vectors.shape[1]
    entropy = float(-np.sum(proj.priors * proj.log_priors))
    kind = _select_kind(integ, proj.rank, proj.M)

    if proj.rank == 0:
        # Output independent of input: posterior equals the prior.
        mean = proj.priors @ proj.vectors
        err = proj.vectors - mean
        E = np.einsum("k,ki,kj->ij", proj.priors, err, err.conj())
        return PosteriorStats(0.0, 0.0, E, np.zeros_like(E.real), kind, 1, 0)

    mi_acc = 0.0
    mi_var = 0.0
    E = np.zeros((n_users, n_users), dtype=complex)
    E_var = np.zeros((n_users, n_users))

    if kind == "quadrature":
        total = integ.nodes**proj.rank
        for i in range(proj.M):
            acc = 0.0
            accE = np.zeros_like(E)
            for start in range(0, total, integ.block_size):
                stop = min(start + integ.block_size, total)
                z, w = _hermite_grid(integ.nodes, proj.rank, start, stop)
                lse, outer = _block_terms(proj, i, z, want_mmse)
                acc += w @ lse
                if want_mmse:
                    accE += np.einsum("k,kab->ab", w, outer)
            mi_acc += proj.priors[i] * acc
            E += proj.priors[i] * accE
        return PosteriorStats(entropy - mi_acc, 0.0, E, E_var, kind, total, proj.rank)

    count = 0
    for i in range(proj.M):
        n_i = max(2, math.ceil(integ.samples * proj.priors[i]))
        s1 = s2 = 0.0
        m1 = np.zeros_like(E)
        m2 = np.zeros_like(E_var)
        for b, start in enumerate(range(0, n_i, integ.block_size)):
            k = min(integ.block_size, n_i - start)
            ss = np.random.SeedSequence(entropy=integ.seed, spawn_key=(i, b))
            z = np.random.default_rng(ss).standard_normal((k, proj.rank)) / math.sqrt(2.0)
            lse, outer = _block_terms(proj, i, z, want_mmse)
            s1 += lse.sum()
            s2 += np.dot(lse, lse)
            if want_mmse:
                m1 += outer.sum(axis=0)
                m2 += np.sum(np.abs(outer) ** 2, axis=0)
        mean = s1 / n_i
        var = max(s2 / n_i - mean**2, 0.0) * n_i / (n_i - 1)
        mi_acc += proj.priors[i] * mean
        mi_var += proj.priors[i] ** 2 * var / n_i
        if want_mmse:
            meanE = m1 / n_i
            varE = np.maximum(m2 / n_i - np.abs(meanE) ** 2, 0.0) * n_i / (n_i - 1)
            E += proj.priors[i] * meanE
            E_var += proj.priors[i] ** 2 * varE / n_i
        count += n_i
    return PosteriorStats(
        entropy - mi_acc, math.sqrt(mi_var), E, np.sqrt(E_var), kind, count, proj.rank
    )
