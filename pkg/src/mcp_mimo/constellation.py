"""Input alphabets and joint-symbol enumeration.

Finite constellations are stored as tuples of complex points with priors.
The Gaussian marker carries no points; it selects closed-form paths in the
integrators and cannot be enumerated.
"""

from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from .errors import GaussianNotEnumerable

__all__ = [
    "Kind",
    "Constellation",
    "JointAlphabet",
    "GaussianInputs",
    "enumerate_joint",
    "joint_inputs",
    "ordered_pairs",
    "pair_count",
    "BPSK",
    "QPSK",
    "GAUSSIAN",
]


class Kind(str, enum.Enum):
    GAUSSIAN = "gaussian"
    BPSK = "bpsk"
    QPSK = "qpsk"
    CUSTOM = "custom"


@dataclass(frozen=True)
class Constellation:
    kind: Kind
    points: tuple = ()
    priors: tuple = ()

    def __post_init__(self):
        if self.kind is Kind.GAUSSIAN:
            if self.points:
                raise ValueError("the Gaussian marker carries no points")
            return
        if not self.points:
            raise ValueError("finite constellation needs at least one point")
        if len(self.priors) != len(self.points):
            raise ValueError("priors and points differ in length")
        pri = np.asarray(self.priors, dtype=float)
        if np.any(pri < 0) or abs(pri.sum() - 1.0) > 1e-12:
            raise ValueError("priors must be nonnegative and sum to 1")

    @classmethod
    def bpsk(cls) -> "Constellation":
        return cls(Kind.BPSK, (1 + 0j, -1 + 0j), (0.5, 0.5))

    @classmethod
    def qpsk(cls, normalize_energy: bool = False) -> "Constellation":
        pts = (1 + 1j, 1 - 1j, -1 - 1j, -1 + 1j)
        if normalize_energy:
            pts = tuple(p / np.sqrt(2) for p in pts)
        return cls(Kind.QPSK, pts, (0.25,) * 4)

    @classmethod
    def gaussian(cls) -> "Constellation":
        return cls(Kind.GAUSSIAN)

    @classmethod
    def custom(cls, points, priors=None, normalize_energy: bool = False) -> "Constellation":
        pts = np.asarray(points, dtype=complex).ravel()
        if priors is None:
            pri = np.full(pts.size, 1.0 / pts.size)
        else:
            pri = np.asarray(priors, dtype=float).ravel()
            pri = pri / pri.sum()
        if normalize_energy:
            pts = pts / np.sqrt(np.sum(pri * np.abs(pts) ** 2))
        return cls(Kind.CUSTOM, tuple(complex(p) for p in pts), tuple(float(p) for p in pri))

    @property
    def is_finite(self) -> bool:
        return self.kind is not Kind.GAUSSIAN

    @property
    def cardinality(self) -> int:
        return len(self.points)

    @property
    def per_symbol_energy(self) -> float:
        if not self.is_finite:
            return 1.0
        pts = np.asarray(self.points)
        return float(np.sum(np.asarray(self.priors) * np.abs(pts) ** 2))

    @property
    def mean(self) -> complex:
        if not self.is_finite:
            return 0j
        return complex(np.sum(np.asarray(self.priors) * np.asarray(self.points)))

    @property
    def is_real(self) -> bool:
        return self.is_finite and all(p.imag == 0 for p in self.points)


BPSK = Constellation.bpsk()
QPSK = Constellation.qpsk()
GAUSSIAN = Constellation.gaussian()


@dataclass(frozen=True, eq=False)
class JointAlphabet:
    """All M joint input vectors with their product priors.

    ``vectors[k]`` enumerates users lexicographically: user 0 is the most
    significant digit, point index the digit value.
    """

    constellations: tuple
    vectors: np.ndarray
    priors: np.ndarray

    @property
    def users(self) -> int:
        return len(self.constellations)

    @property
    def M(self) -> int:
        return self.vectors.shape[0]

    @property
    def is_real(self) -> bool:
        return bool(np.all(self.vectors.imag == 0))

    def second_moment(self) -> np.ndarray:
        """E[x x^H] under the joint prior."""
        v = self.vectors
        return np.einsum("k,ki,kj->ij", self.priors, v, v.conj())

    def entropy(self) -> float:
        """Entropy of the joint prior in nats."""
        p = self.priors[self.priors > 0]
        return float(-np.sum(p * np.log(p)))


@dataclass(frozen=True)
class GaussianInputs:
    """Independent unit-energy circular Gaussian inputs for ``users`` users."""

    users: int

    @property
    def is_real(self) -> bool:
        return False


Inputs = Union[JointAlphabet, GaussianInputs]


def enumerate_joint(per_user: Sequence[Constellation]) -> JointAlphabet:
    if not per_user:
        raise ValueError("need at least one user")
    for c in per_user:
        if not c.is_finite:
            raise GaussianNotEnumerable("Gaussian inputs have no finite joint alphabet")
    idx = list(itertools.product(*(range(c.cardinality) for c in per_user)))
    vectors = np.array(
        [[per_user[u].points[i] for u, i in enumerate(row)] for row in idx], dtype=complex
    )
    priors = np.array(
        [np.prod([per_user[u].priors[i] for u, i in enumerate(row)]) for row in idx]
    )
    return JointAlphabet(tuple(per_user), vectors, priors)


def joint_inputs(per_user: Sequence[Constellation]) -> Inputs:
    """Joint alphabet for finite users, or the Gaussian marker if all are Gaussian."""
    kinds = {c.is_finite for c in per_user}
    if kinds == {False}:
        return GaussianInputs(len(per_user))
    if len(kinds) > 1:
        raise ValueError("mixing Gaussian and finite users is not supported")
    return enumerate_joint(per_user)


def ordered_pairs(alphabet: JointAlphabet, include_identical: bool = False):
    """Ordered pairs (x_i, x_j), row-major in (i, j); i == j kept only on request."""
    v = alphabet.vectors
    return [
        (v[i], v[j])
        for i in range(alphabet.M)
        for j in range(alphabet.M)
        if include_identical or i != j
    ]


def pair_count(alphabet: JointAlphabet, include_identical: bool = False) -> int:
    M = alphabet.M
    return M * M if include_identical else M * (M - 1)


def from_name(name: str, normalize_energy: bool = False) -> Constellation:
    key = name.strip().lower()
    if key == "bpsk":
        return Constellation.bpsk()
    if key == "qpsk":
        return Constellation.qpsk(normalize_energy=normalize_energy)
    if key == "gaussian":
        return Constellation.gaussian()
    raise ValueError(f"unknown constellation '{name}'")
