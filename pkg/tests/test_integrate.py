import math

import numpy as np
import pytest
from scipy import integrate as sint

from mcp_mimo import BPSK, QPSK, Integrator, enumerate_joint
from mcp_mimo.errors import IntegratorBudgetTooSmall, QuadratureInfeasible
from mcp_mimo.integrate import NoiseProjection, integrate_posterior

from conftest import random_channel


def bpsk_siso_mi_oracle(snr):
    """I = h(y) - h(y|x) by direct 1-D integration of the real output density."""
    a = math.sqrt(snr)
    s2 = 0.5

    def pdf(y):
        g = lambda m: math.exp(-((y - m) ** 2) / (2 * s2)) / math.sqrt(2 * math.pi * s2)
        return 0.5 * (g(a) + g(-a))

    hy = sint.quad(lambda y: -pdf(y) * math.log(pdf(y)) if pdf(y) > 0 else 0.0, -a - 12, a + 12,
                   limit=200)[0]
    return hy - 0.5 * math.log(2 * math.pi * math.e * s2)


@pytest.mark.parametrize("snr", [0.1, 1.0, 4.0])
def test_quadrature_matches_direct_integration(snr):
    alpha = enumerate_joint([BPSK])
    stats = integrate_posterior(np.array([[math.sqrt(snr)]]), alpha, Integrator.quadrature(128))
    assert stats.rank == 1
    assert stats.mi == pytest.approx(bpsk_siso_mi_oracle(snr), abs=1e-7)


def test_montecarlo_agrees_with_quadrature(bpsk2):
    G = np.array([[1.0, 0.6], [0.3, 0.9]])
    q = integrate_posterior(G, bpsk2, Integrator.quadrature(48))
    m = integrate_posterior(G, bpsk2, Integrator.montecarlo(100_000, seed=3))
    assert m.method == "montecarlo"
    assert abs(m.mi - q.mi) < 4 * m.mi_std
    assert np.all(np.abs(m.E - q.E) < 4 * m.E_std + 1e-12)


def test_montecarlo_is_seed_deterministic(bpsk2):
    G = random_channel(np.random.default_rng(2))
    a = integrate_posterior(G, bpsk2, Integrator.montecarlo(5000, seed=9))
    b = integrate_posterior(G, bpsk2, Integrator.montecarlo(5000, seed=9))
    c = integrate_posterior(G, bpsk2, Integrator.montecarlo(5000, seed=10))
    assert a.mi == b.mi
    np.testing.assert_array_equal(a.E, b.E)
    assert a.mi != c.mi


def test_projection_rank_of_all_ones_channel(bpsk2):
    proj = NoiseProjection(np.ones((2, 2)), bpsk2)
    assert proj.rank == 1  # every difference is a multiple of (1, 1), real


def test_zero_channel_returns_prior(bpsk2):
    stats = integrate_posterior(np.zeros((2, 2)), bpsk2, Integrator())
    assert stats.rank == 0
    assert stats.mi == 0.0
    np.testing.assert_allclose(stats.E, np.eye(2))


def test_bpsk_rank_never_exceeds_user_count():
    alpha = enumerate_joint([BPSK] * 3)
    G = random_channel(np.random.default_rng(0), 3)
    assert NoiseProjection(G, alpha).rank == 3


def test_auto_switches_to_montecarlo_for_high_rank():
    alpha = enumerate_joint([QPSK] * 3)
    G = random_channel(np.random.default_rng(0), 3)
    stats = integrate_posterior(G, alpha, Integrator(samples=2000, seed=1))
    assert stats.rank == 6
    assert stats.method == "montecarlo"


def test_budget_floors():
    with pytest.raises(IntegratorBudgetTooSmall):
        Integrator.quadrature(4)
    with pytest.raises(IntegratorBudgetTooSmall):
        Integrator.montecarlo(10)
    with pytest.raises(ValueError):
        Integrator(kind="simpson")


def test_explicit_quadrature_refuses_high_rank():
    alpha = enumerate_joint([QPSK] * 3)
    G = random_channel(np.random.default_rng(0), 3)
    with pytest.raises(QuadratureInfeasible):
        integrate_posterior(G, alpha, Integrator.quadrature(8))
