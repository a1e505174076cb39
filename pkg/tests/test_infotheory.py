import math

import numpy as np
import pytest
from scipy.special import erfc

from mcp_mimo import (
    BPSK,
    GAUSSIAN,
    GaussianInputs,
    Integrator,
    VirtualChannel,
    enumerate_joint,
    evaluate,
    mi_discrete,
    mi_gaussian,
    mi_gradient,
    mmse_matrix,
    mmse_trace,
)
from mcp_mimo.errors import DimensionMismatch, GaussianNotEnumerable
from mcp_mimo.infotheory import (
    MmseReport,
    bpsk_siso_mi,
    bpsk_siso_mmse,
    conditional_mean,
    lmmse_estimate,
    lowsnr_mi_expansion,
    lowsnr_mmse_expansion,
    qpsk_siso_mi,
    rate_region_bounds,
)

from conftest import random_channel


def test_gaussian_closed_form_identity():
    vc = VirtualChannel(np.eye(2), 3.0)
    assert mi_gaussian(vc, np.eye(2)).nats == pytest.approx(2 * math.log(4.0))
    _, rep = evaluate(vc, np.eye(2), GaussianInputs(2))
    np.testing.assert_allclose(rep.E, np.eye(2) / 4.0)


def test_gaussian_immse_is_exact():
    vc = VirtualChannel(random_channel(np.random.default_rng(4)), 1.5)
    P = np.diag([0.8, 1.1])
    h = 1e-6
    d = (mi_gaussian(vc.with_snr(1.5 + h), P).nats - mi_gaussian(vc.with_snr(1.5 - h), P).nats) / (2 * h)
    assert d == pytest.approx(mmse_trace(vc, P, mmse_matrix(vc, P, GaussianInputs(2))), rel=1e-7)


def test_mi_discrete_rejects_gaussian():
    with pytest.raises(GaussianNotEnumerable):
        mi_discrete(VirtualChannel(np.eye(2)), np.eye(2), GaussianInputs(2))


def test_dimension_checks(bpsk2):
    with pytest.raises(DimensionMismatch):
        evaluate(VirtualChannel(np.eye(3)), np.eye(3), bpsk2)


def test_no_interference_decouples(bpsk2):
    vc = VirtualChannel(np.eye(2), 2.0)
    mi, rep = evaluate(vc, np.eye(2), bpsk2, Integrator.quadrature(128))
    assert mi.nats == pytest.approx(2 * bpsk_siso_mi(2.0), abs=1e-7)
    assert rep.per_user_mmse == pytest.approx([bpsk_siso_mmse(2.0)] * 2, abs=1e-6)
    assert np.max(np.abs(rep.cross_cov)) < 1e-12


def test_siso_closed_form_limits():
    assert bpsk_siso_mi(0.0) == pytest.approx(0.0, abs=1e-12)
    assert bpsk_siso_mmse(0.0) == pytest.approx(1.0, abs=1e-12)
    assert bpsk_siso_mi(1e3) == pytest.approx(math.log(2), abs=1e-9)
    assert qpsk_siso_mi(1e3) == pytest.approx(2 * math.log(2), abs=1e-9)


def test_siso_mmse_exceeds_error_probability_bound():
    for snr in np.linspace(0.05, 10, 15):
        assert bpsk_siso_mmse(snr) >= 0.5 * erfc(math.sqrt(snr))


def test_conditional_mean_brute_force(bpsk2):
    G = np.array([[1.0, 0.5], [0.2, 1.3]])
    y = np.array([0.3 - 0.1j, -0.7 + 0.2j])
    w = np.array([math.exp(-np.sum(np.abs(y - G @ x) ** 2)) for x in bpsk2.vectors]) * bpsk2.priors
    expect = (w / w.sum()) @ bpsk2.vectors
    np.testing.assert_allclose(conditional_mean(y, G, bpsk2), expect, atol=1e-14)


def test_conditional_mean_is_stable_far_out(bpsk2):
    G = 50 * np.eye(2)
    est = conditional_mean(np.array([50.0, -50.0]), G, bpsk2)
    np.testing.assert_allclose(est, [1, -1])


def test_lmmse_matches_wiener_formula():
    rng = np.random.default_rng(5)
    H = random_channel(rng)
    vc = VirtualChannel(H, 2.0)
    y = random_channel(rng)[:, 0]
    G = math.sqrt(2.0) * H
    expect = np.linalg.inv(G.conj().T @ G + np.eye(2)) @ G.conj().T @ y
    np.testing.assert_allclose(lmmse_estimate(y, vc, np.eye(2)), expect, atol=1e-12)


def test_gradient_matches_finite_difference(bpsk2):
    rng = np.random.default_rng(7)
    vc = VirtualChannel(np.array([[1.0, 0.4], [0.2, 0.9]]), 1.3)
    integ = Integrator.quadrature(48)
    P = np.array([[0.9, 0.1], [-0.2, 0.7]])
    dP = rng.standard_normal((2, 2))
    h = 1e-5
    up = mi_discrete(vc, P + h * dP, bpsk2, integ).nats
    dn = mi_discrete(vc, P - h * dP, bpsk2, integ).nats
    g = mi_gradient(vc, P, mmse_matrix(vc, P, bpsk2, integ))
    assert (up - dn) / (2 * h) == pytest.approx(2 * np.real(np.vdot(g, dP)), abs=1e-6)


def test_mmse_report_symmetrizes():
    rep = MmseReport(np.array([[1.0, 0.2], [0.0, 0.5]]), "test")
    np.testing.assert_allclose(rep.E, rep.E.conj().T)
    assert rep.sum_mmse == pytest.approx(1.5)


def test_lowsnr_expansion_coefficients():
    vc = VirtualChannel(np.diag([math.sqrt(3), 1.0]))
    c0, c1 = lowsnr_mi_expansion(vc, np.eye(2))
    assert (c0, c1) == pytest.approx((4.0, 10.0))
    exp = lowsnr_mmse_expansion(vc, np.eye(2))
    np.testing.assert_allclose(exp.matrix(0.1), np.diag([0.7, 0.9]))


def test_lowsnr_gaussian_second_order(nqpsk2):
    vc = VirtualChannel(np.array([[1.0, 0.5], [0.2, 0.8]]), 1e-3)
    c0, c1 = lowsnr_mi_expansion(vc, np.eye(2))
    mi = mi_gaussian(vc, np.eye(2)).nats
    assert mi == pytest.approx(c0 * 1e-3 - c1 * 1e-6 / 2, abs=1e-8)


def test_rate_region_chain(bpsk2, quad):
    vc = VirtualChannel(np.array([[1.0, 0.6], [0.5, 1.0]]), 3.0)
    rr = rate_region_bounds(vc, np.eye(2), bpsk2, quad)
    assert rr.chain_holds(1e-9)
    assert rr.joint <= rr.R1_bound + rr.R2_bound + 1e-9
    assert rr.joint <= 2 * math.log(2) + 1e-12
