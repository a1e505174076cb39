import math

import numpy as np
import pytest

from mcp_mimo import (
    BPSK,
    GaussianInputs,
    Integrator,
    VirtualChannel,
    enumerate_joint,
    evaluate,
    lowsnr_mi_expansion,
    mi_gaussian,
)
from mcp_mimo.errors import DimensionMismatch, NoConvergence, ZeroDmin, ZeroUpdate
from mcp_mimo.precoder import (
    HighSnrParams,
    PrecoderMatrix,
    PrecoderSolveParams,
    algorithm2_solve,
    d_min,
    decompose,
    fixed_point_step,
    highsnr_bound,
    initial_precoder,
    lowsnr_optimal_precoder,
    lowsnr_slope,
    optimize_precoder_highsnr,
    printed_transmit_weights,
    project_trace,
)

from conftest import H_SKEW, P_STAR, P_TPC, P_UTPC, random_channel

QUAD = Integrator.quadrature(48)


def test_skewed_channel_distances(bpsk2):
    vc = VirtualChannel(H_SKEW)
    assert d_min(vc, P_TPC, bpsk2) == pytest.approx(math.sqrt(6), abs=1e-12)
    assert d_min(vc, P_STAR, bpsk2) == pytest.approx(math.sqrt(8), abs=1e-12)
    # the prose gives sqrt(8) for the identity precoder; direct computation gives 2
    assert d_min(vc, P_UTPC, bpsk2) == pytest.approx(2.0, abs=1e-12)
    assert d_min(VirtualChannel(np.eye(2)), np.eye(2), bpsk2) == pytest.approx(2.0)


def test_skewed_channel_matrices_spend_budget_two():
    for P in (P_STAR, P_TPC, P_UTPC):
        assert PrecoderMatrix(P, 2.0).power == pytest.approx(2.0)
    with pytest.raises(ValueError):
        PrecoderMatrix(P_STAR, 1.0)


def test_bound_limits_and_ordering(bpsk2):
    vc = VirtualChannel(H_SKEW)
    assert highsnr_bound(vc, P_STAR, bpsk2, 1e4) == pytest.approx(math.log(4), abs=1e-12)
    assert highsnr_bound(vc, P_STAR, bpsk2, 10.0) > highsnr_bound(vc, P_TPC, bpsk2, 10.0)
    with pytest.raises(ZeroDmin):
        highsnr_bound(vc, np.array([[1.0, 1.0], [0.0, 0.0]]), bpsk2, 10.0)


def test_bound_increases_with_dmin(bpsk2):
    vc = VirtualChannel(np.eye(2))
    values = [highsnr_bound(vc, c * np.eye(2), bpsk2, 10.0) for c in np.linspace(0.6, 3.0, 25)]
    steps = np.diff(values)
    assert np.all(steps >= -1e-15)
    assert np.all(steps[:5] > 0)  # strictly increasing before it saturates at ln 4


def test_fixed_point_step_properties():
    vc = VirtualChannel(np.eye(2), 1.0)
    P = np.diag([0.6, 0.8])
    _, rep = evaluate(vc, P, GaussianInputs(2))
    step = fixed_point_step(vc, PrecoderMatrix(P, 1.0), rep)
    assert step.is_diagonal
    assert step.power == pytest.approx(1.0)
    with pytest.raises(ZeroUpdate):
        fixed_point_step(VirtualChannel(np.zeros((2, 2))), P, rep)


def test_fixed_point_iteration_is_self_consistent():
    vc = VirtualChannel(np.array([[1.2, 0.3], [0.1, 0.7]]), 2.0)
    P = PrecoderMatrix(initial_precoder(vc), 1.0)
    for _ in range(300):
        _, rep = evaluate(vc, P.P, GaussianInputs(2))
        nxt = fixed_point_step(vc, P, rep)
        if np.linalg.norm(nxt.P - P.P) < 1e-12:
            break
        P = nxt
    _, rep = evaluate(vc, P.P, GaussianInputs(2))
    assert np.linalg.norm(fixed_point_step(vc, P, rep).P - P.P) / np.linalg.norm(P.P) < 1e-9


def test_decompose_diagonal_identity_channel():
    vc = VirtualChannel(np.eye(2))
    P = np.diag([0.3, 0.9])
    dec = decompose(P, vc, np.diag([0.5, 0.2]))
    np.testing.assert_allclose(np.abs(dec.U), np.eye(2), atol=1e-12)
    np.testing.assert_allclose(np.abs(dec.R), np.eye(2), atol=1e-12)
    np.testing.assert_allclose(sorted(dec.D), [0.3, 0.9])
    np.testing.assert_allclose(dec.reconstruct(), P, atol=1e-12)


def test_decompose_compare_rotation():
    dec = decompose(P_STAR, VirtualChannel(H_SKEW), np.eye(2))
    np.testing.assert_allclose(dec.D, [1.0, 1.0], atol=1e-12)
    angle = math.degrees(math.atan2(abs(dec.R[1, 0]), abs(dec.R[0, 0])))
    assert angle == pytest.approx(45.0)
    assert dec.u_mismatch < 1e-12
    np.testing.assert_allclose(dec.reconstruct(), P_STAR, atol=1e-12)


def test_decompose_reconstructs_random():
    rng = np.random.default_rng(3)
    for _ in range(100):
        vc = VirtualChannel(random_channel(rng))
        P = random_channel(rng)
        dec = decompose(P, vc, np.eye(2))
        assert np.linalg.norm(dec.U @ dec.U.conj().T - np.eye(2)) < 1e-9
        assert np.linalg.norm(dec.R @ dec.R.conj().T - np.eye(2)) < 1e-9
        assert np.all(dec.D >= 0)
        assert np.linalg.norm(dec.reconstruct() - P) < 1e-9


def test_lowsnr_precoder():
    vc = VirtualChannel(H_SKEW)
    P = lowsnr_optimal_precoder(vc, 0.01, 1.0)
    np.testing.assert_allclose(P.P, np.diag([1.0, 0.0]), atol=1e-12)
    assert lowsnr_slope(vc, P) == pytest.approx(3.0)
    assert lowsnr_slope(vc, P) == lowsnr_mi_expansion(vc, P.P)[0]
    tie = lowsnr_optimal_precoder(VirtualChannel(np.eye(2)), 0.01, 1.0)
    # tied modes share the budget equally, in whatever basis eigh returns
    np.testing.assert_allclose(tie.P @ tie.P.conj().T, np.eye(2) / 2, atol=1e-12)


def test_lowsnr_precoder_beats_random():
    rng = np.random.default_rng(8)
    vc = VirtualChannel(random_channel(rng))
    best = lowsnr_slope(vc, lowsnr_optimal_precoder(vc, 0.0, 1.0))
    for _ in range(1000):
        P = project_trace(random_channel(rng), 1.0)
        assert lowsnr_slope(vc, P) <= best + 1e-12


def test_highsnr_identity_channel(bpsk2):
    res, trace = optimize_precoder_highsnr(VirtualChannel(np.eye(2), 10.0), bpsk2,
                                           HighSnrParams(trace_budget=1.0, restarts=4))
    assert res.d_min >= math.sqrt(2) - 1e-9
    assert all(abs(t[3] - 1.0) < 1e-9 for t in trace)


def test_highsnr_params_validation():
    with pytest.raises(ValueError):
        HighSnrParams(restarts=0)
    with pytest.raises(ValueError):
        HighSnrParams(beta=-1)


def test_highsnr_soft_min_variant(bpsk2):
    vc = VirtualChannel(H_SKEW, 10.0)
    res, _ = optimize_precoder_highsnr(vc, bpsk2, HighSnrParams(trace_budget=2.0, beta=5.0, restarts=3))
    assert res.d_min >= math.sqrt(8) - 1e-3


def test_algorithm2_gaussian_waterfilling():
    H = np.diag([2.0, 1.5])
    vc = VirtualChannel(H, 1.0)
    sol = algorithm2_solve(vc, None, GaussianInputs(2), PrecoderSolveParams(tol=1e-9, max_iters=2000))
    # waterfilling over gains 4 and 2.25 with unit budget
    inv = np.array([1 / 4.0, 1 / 2.25])
    mu = (1.0 + inv.sum()) / 2
    expect = mu - inv
    assert sol.precoder.is_diagonal
    np.testing.assert_allclose(np.abs(np.diag(sol.precoder.P)) ** 2, expect, atol=1e-5)


def test_algorithm2_beats_tpc(bpsk2):
    vc = VirtualChannel.from_db(H_SKEW, 10.0)
    sol = algorithm2_solve(vc, None, bpsk2, PrecoderSolveParams(trace_budget=2.0, integrator=QUAD))
    tpc = evaluate(vc, P_TPC, bpsk2, QUAD, want_mmse=False)[0]
    assert sol.mi_nats >= tpc.nats - 3 * tpc.std_error - 1e-12
    assert abs(sol.precoder.power - 2.0) < 1e-9


def test_algorithm2_tiny_steps_keep_init(bpsk2):
    vc = VirtualChannel.from_db(np.array([[1.0, 0.4], [0.3, 0.9]]), 5.0)
    P0 = initial_precoder(vc)
    params = PrecoderSolveParams(step=1e-9, step_rule="constant", integrator=QUAD, tol=1e-6)
    sol = algorithm2_solve(vc, P0, bpsk2, params)
    assert np.linalg.norm(sol.precoder.P - P0) < 1e-8


def test_algorithm2_no_convergence(bpsk2):
    vc = VirtualChannel.from_db(np.array([[1.0, 0.4], [0.3, 0.9]]), 5.0)
    with pytest.raises(NoConvergence) as exc:
        algorithm2_solve(vc, None, bpsk2, PrecoderSolveParams(max_iters=1, integrator=QUAD))
    assert exc.value.best.precoder.power == pytest.approx(1.0)


def test_transmit_weights_superpose():
    rng = np.random.default_rng(2)
    vc = VirtualChannel(random_channel(rng))
    P = project_trace(random_channel(rng), 1.0)
    W = printed_transmit_weights(vc, P)
    x = np.array([1.0, -1.0])
    np.testing.assert_allclose(np.array([W[0] @ x, W[1] @ x]), vc.H @ P @ x, atol=1e-12)
    # printed BS1 weight for x1: (h11 v11 + h12 v21) sqrt(P1)
    V = initial_precoder(vc, powers=[1.0, 1.0])
    p1 = 0.3
    P2 = V @ np.diag(np.sqrt([p1, 0.7]))
    h = vc.H
    assert printed_transmit_weights(vc, P2)[0, 0] == pytest.approx(
        (h[0, 0] * V[0, 0] + h[0, 1] * V[1, 0]) * math.sqrt(p1))


def test_identity_channel_weights_are_diagonal():
    vc = VirtualChannel(np.eye(2))
    W = printed_transmit_weights(vc, np.diag([0.6, 0.8]))
    np.testing.assert_allclose(W, np.diag([0.6, 0.8]))


def test_precoder_json_roundtrip():
    pm = PrecoderMatrix(np.array([[0.5 + 0.1j, 0.2], [0.0, 0.6]]), 1.0)
    back = PrecoderMatrix.from_dict(pm.to_dict())
    np.testing.assert_array_equal(back.P, pm.P)
    with pytest.raises(DimensionMismatch):
        PrecoderMatrix(np.ones((2, 3)) * 0.1)
