"""Property tests for invariants that hold for every channel and precoder."""

import math

import numpy as np
from hypothesis import given
from hypothesis import strategies as st

from mcp_mimo import (
    BPSK,
    GaussianInputs,
    Integrator,
    VirtualChannel,
    d_min,
    decompose,
    enumerate_joint,
    evaluate,
    mi_gaussian,
)
from mcp_mimo.coopsim import BackhaulLink, is_congested, modeled_load
from mcp_mimo.precoder import PrecoderMatrix, project_trace

BPSK2 = enumerate_joint([BPSK, BPSK])
QUAD = Integrator.quadrature(16)

entries = st.floats(-2.0, 2.0, allow_nan=False)
real_2x2 = st.lists(entries, min_size=4, max_size=4).map(lambda v: np.array(v).reshape(2, 2))
complex_2x2 = st.tuples(real_2x2, real_2x2).map(lambda p: p[0] + 1j * p[1])
snrs = st.floats(0.0, 10.0)


@given(real_2x2, real_2x2, snrs)
def test_mi_between_zero_and_entropy(H, P, snr):
    mi, rep = evaluate(VirtualChannel(H, snr), P, BPSK2, QUAD)
    assert -1e-9 <= mi.nats <= math.log(4) + 1e-9
    E = rep.E
    assert np.allclose(E, E.conj().T, atol=1e-10)
    # between zero and the prior covariance in the PSD order
    assert np.linalg.eigvalsh(E).min() >= -1e-9
    assert np.linalg.eigvalsh(np.eye(2) - E).min() >= -1e-9


@given(real_2x2, real_2x2, st.floats(0.1, 5.0))
def test_gaussian_dominates_bpsk(H, P, snr):
    vc = VirtualChannel(H, snr)
    mi = evaluate(vc, P, BPSK2, QUAD, want_mmse=False)[0].nats
    assert mi <= mi_gaussian(vc, P).nats + 1e-6


@given(real_2x2, real_2x2, st.floats(0.1, 5.0), st.floats(0.0, 2 * math.pi))
def test_mi_invariant_under_receive_rotation(H, P, snr, theta):
    U = np.array([[math.cos(theta), -math.sin(theta)], [math.sin(theta), math.cos(theta)]])
    # with tied singular values the grid orientation follows the basis choice,
    # so the two sides agree only to quadrature accuracy
    fine = Integrator.quadrature(48)
    a = evaluate(VirtualChannel(H, snr), P, BPSK2, fine, want_mmse=False)[0].nats
    b = evaluate(VirtualChannel(U @ H, snr), P, BPSK2, fine, want_mmse=False)[0].nats
    assert abs(a - b) < 1e-6


@given(real_2x2, real_2x2, st.floats(0.1, 4.0), st.floats(1.05, 3.0))
def test_mi_increases_with_snr(H, P, snr, factor):
    lo = evaluate(VirtualChannel(H, snr), P, BPSK2, QUAD, want_mmse=False)[0].nats
    hi = evaluate(VirtualChannel(H, snr * factor), P, BPSK2, QUAD, want_mmse=False)[0].nats
    assert hi >= lo - 1e-9


@given(complex_2x2, complex_2x2, st.floats(-3.0, 3.0))
def test_dmin_is_homogeneous(H, P, c):
    vc = VirtualChannel(H)
    assert math.isclose(d_min(vc, c * P, BPSK2), abs(c) * d_min(vc, P, BPSK2), rel_tol=1e-9, abs_tol=1e-12)


@given(complex_2x2, st.floats(0.1, 4.0))
def test_projection_meets_budget(P, budget):
    if np.linalg.norm(P) < 1e-6:
        return
    pm = PrecoderMatrix(project_trace(P, budget), budget)
    assert abs(pm.power - budget) <= 1e-9 * max(1.0, budget)


@given(complex_2x2, complex_2x2)
def test_decomposition_reconstructs(H, P):
    dec = decompose(P, VirtualChannel(H), np.eye(2))
    assert np.all(dec.D >= 0)
    assert np.allclose(dec.reconstruct(), P, atol=1e-8)


@given(st.integers(1, 4), st.integers(1, 5), st.floats(0.5, 100.0), st.floats(0.1, 2.0))
def test_congestion_rule(n_tx, block, bandwidth, threshold):
    link = BackhaulLink(bandwidth=bandwidth, threshold=threshold)
    assert is_congested(n_tx, link, block) == (modeled_load(n_tx, link, block) > threshold * bandwidth)


@given(st.floats(0.01, 10.0), st.integers(1, 3))
def test_gaussian_closed_form_identity_channel(snr, n):
    mi, rep = evaluate(VirtualChannel(np.eye(n), snr), np.eye(n), GaussianInputs(n))
    assert math.isclose(mi.nats, n * math.log1p(snr), rel_tol=1e-12)
    assert np.allclose(rep.E, np.eye(n) / (1 + snr))
