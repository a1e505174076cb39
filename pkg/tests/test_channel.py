import numpy as np
import pytest

from mcp_mimo.channel import (
    PowerAllocation,
    VirtualChannel,
    complex_noise,
    db_to_linear,
    effective,
    linear_to_db,
    sample_output,
)
from mcp_mimo.errors import DimensionMismatch


def test_db_roundtrip():
    assert db_to_linear(10.0) == pytest.approx(10.0)
    assert linear_to_db(100.0) == pytest.approx(20.0)


def test_vec_is_row_major():
    vc = VirtualChannel(np.array([[1, 2], [3, 4]]))
    np.testing.assert_array_equal(vc.vec(), [1, 2, 3, 4])


def test_channel_is_immutable():
    vc = VirtualChannel(np.eye(2))
    with pytest.raises(ValueError):
        vc.H[0, 0] = 5


def test_effective_includes_sqrt_snr():
    vc = VirtualChannel(np.eye(2), 4.0)
    np.testing.assert_allclose(effective(vc, np.eye(2)), 2 * np.eye(2))
    with pytest.raises(DimensionMismatch):
        effective(vc, np.eye(3))


def test_power_allocation_bounds():
    pa = PowerAllocation([0.25, 1.0], [1.0, 1.0])
    np.testing.assert_allclose(pa.amplitudes, np.diag([0.5, 1.0]))
    with pytest.raises(ValueError):
        PowerAllocation([2.0, 1.0], [1.0, 1.0])


def test_noise_is_circular_unit_variance():
    z = complex_noise(np.random.default_rng(0), 200_000)
    assert np.var(z.real) == pytest.approx(0.5, rel=0.02)
    assert np.var(z.imag) == pytest.approx(0.5, rel=0.02)
    assert abs(np.mean(z * z)) < 0.01


def test_sample_output_shape_and_mean():
    rng = np.random.default_rng(1)
    G = np.array([[1.0, 2.0]])
    ys = np.array([sample_output(G, np.array([1.0, -1.0]), rng) for _ in range(20000)])
    assert ys.shape == (20000, 1)
    assert np.mean(ys).real == pytest.approx(-1.0, abs=0.02)
    with pytest.raises(DimensionMismatch):
        sample_output(G, np.ones(3), rng)
