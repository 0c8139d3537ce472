import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from shtomo.probe import SamplePoint, assemble_probe, poisson_normal_derivative, probe_matrix

points = st.builds(SamplePoint, r=st.floats(0, 0.97), theta_z=st.floats(-10, 10))


def test_center_value():
    z = SamplePoint(0.0, 1.3)
    for theta in (0.0, 1.0, 4.0):
        assert poisson_normal_derivative(z, theta) == pytest.approx(1 / (2 * np.pi), rel=1e-15)


def test_hand_values():
    z = SamplePoint(0.5, 0.0)
    assert poisson_normal_derivative(z, 0.0) == pytest.approx(3 / (2 * np.pi), rel=1e-15)
    assert poisson_normal_derivative(z, np.pi) == pytest.approx(1 / (6 * np.pi), rel=1e-15)
    assert 3 / (2 * np.pi) == pytest.approx(0.47746483, abs=5e-9)
    assert 1 / (6 * np.pi) == pytest.approx(0.05305165, abs=5e-9)


@pytest.mark.parametrize("r", [1.0, 1.5])
def test_outside_domain(r):
    with pytest.raises(ValueError, match="outside domain"):
        SamplePoint(r, 0.0)
    with pytest.raises(ValueError, match="outside domain"):
        probe_matrix([r], [0.0])


def test_origin_probe_vanishes():
    p = assemble_probe(SamplePoint(0.0, 0.0), 128)
    assert not np.any(p.centered)
    assert not np.any(p.normalized)
    assert not np.any(p.unit)
    assert not np.any(probe_matrix([0.0], [0.0], 128))


@pytest.mark.parametrize("r", [0.1, 0.5, 0.8, 0.9])
def test_discrete_flux(r):
    # the periodic trapezoid rule integrates the kernel to 1 up to O(r^N)
    N = 128
    p = assemble_probe(SamplePoint(r, 0.37), N)
    assert abs(p.raw.mean() - 1 / (2 * np.pi)) <= max(1e-12, r**N)


def test_coarse_grid_flux_error_is_r_to_the_N():
    # the quadrature error is exactly 2 r^N / (1 - r^N) / (2 pi) at theta_z = 0
    r, N = 0.6, 8
    p = assemble_probe(SamplePoint(r, 0.0), N)
    assert p.raw.mean() - 1 / (2 * np.pi) == pytest.approx(r**N / (1 - r**N) / np.pi, rel=1e-10)


@settings(max_examples=100, deadline=None)
@given(points, st.integers(4, 300))
def test_probe_fields(z, N):
    p = assemble_probe(z, N)
    assert np.all(p.raw > 0)
    assert abs(p.centered.sum()) <= 1e-14 * N * np.max(np.abs(p.raw))
    assert p.norm_raw == pytest.approx(np.linalg.norm(p.raw), rel=1e-15)
    assert np.array_equal(p.normalized, p.centered / p.norm_raw)
    assert np.allclose(probe_matrix([z.r], [z.theta_z], N, norm="raw")[0], p.normalized, atol=1e-15)
    assert np.allclose(probe_matrix([z.r], [z.theta_z], N)[0], p.unit, atol=1e-12)


@pytest.mark.parametrize("m", [1, 5, 64, 127])
def test_rotation_is_cyclic_shift(m):
    N = 128
    base = assemble_probe(SamplePoint(0.6, 0.2), N)
    rotated = assemble_probe(SamplePoint(0.6, 0.2 + 2 * np.pi * m / N), N)
    assert np.allclose(rotated.raw, np.roll(base.raw, m), rtol=1e-12, atol=0)
    assert np.allclose(rotated.normalized, np.roll(base.normalized, m), rtol=0, atol=1e-13)


def test_concentration_near_boundary():
    for r in (0.9, 0.99, 0.999):
        p = assemble_probe(SamplePoint(r, 2 * np.pi * 3 / 64), 64)
        assert p.raw.max() == pytest.approx((1 + r) / (1 - r) / (2 * np.pi), rel=1e-9)


def test_unknown_norm():
    with pytest.raises(ValueError):
        probe_matrix([0.1], [0.0], norm="l1")
