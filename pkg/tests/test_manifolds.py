import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from geowiener import (
    CutLocusError,
    DomainError,
    ConfigError,
    Flat,
    Frame,
    Sphere,
    ellipsoid,
    get_manifold,
    rk4_sphere,
)

from conftest import random_tangent

E1, E2, E3 = np.eye(3)


def test_flat_exp_log():
    m = Flat(2)
    assert np.array_equal(m.exp(np.zeros(2), np.array([1.0, 2.0])), [1.0, 2.0])
    assert np.array_equal(m.log(np.array([1.0, 1.0]), np.array([3.0, 0.0])), [2.0, -1.0])


def test_sphere_quarter_turn():
    m = Sphere(2)
    np.testing.assert_allclose(m.exp(E3, 0.5 * math.pi * E1), E1, atol=1e-15)
    v = m.log(E3, E1)
    assert math.isclose(np.linalg.norm(v), 0.5 * math.pi, rel_tol=1e-14)
    np.testing.assert_allclose(v / np.linalg.norm(v), E1, atol=1e-15)


@pytest.mark.parametrize("m", [Flat(3), Sphere(2), Sphere(3)])
def test_zero_velocity_and_self_log(m):
    x = m.base_point
    assert np.array_equal(m.exp(x, np.zeros(m.ambient_dim)), x)
    assert np.allclose(m.log(x, x), 0.0)


def test_sphere_exp_matches_rk4_geodesic(rng):
    m, oracle = Sphere(2), rk4_sphere(2)
    for _ in range(5):
        v = random_tangent(m, E3, rng, rng.uniform(0.1, 2.5))
        np.testing.assert_allclose(m.exp(E3, v), oracle.exp(E3, v), atol=1e-10)


def test_sphere_log_cut_locus():
    with pytest.raises(CutLocusError):
        Sphere(2).log(E3, -E3)


def test_non_tangent_rejected():
    with pytest.raises(DomainError):
        Sphere(2).exp(E3, E3)


@given(st.floats(0.05, 3.0), st.floats(0.0, 2 * math.pi))
def test_exp_log_roundtrip(r, phi):
    m = Sphere(2)
    v = r * (math.cos(phi) * E1 + math.sin(phi) * E2)
    np.testing.assert_allclose(m.log(E3, m.exp(E3, v)), v, atol=1e-9)


def test_transport_along_own_direction():
    m = Sphere(2)
    v = 1.1 * E1
    w = 0.7 * E1
    expected = 0.7 * (-math.sin(1.1) * E3 + math.cos(1.1) * E1)
    np.testing.assert_allclose(m.transport(E3, v, w), expected, atol=1e-15)


def test_transport_normal_to_geodesic_plane():
    m = Sphere(2)
    np.testing.assert_allclose(m.transport(E3, 0.9 * E1, E2), E2, atol=1e-15)


def test_sphere_transport_matches_rk4(rng):
    m, oracle = Sphere(2), rk4_sphere(2)
    v = random_tangent(m, E3, rng, 1.7)
    w = random_tangent(m, E3, rng)
    np.testing.assert_allclose(m.transport(E3, v, w), oracle.transport(E3, v, w), atol=1e-9)


def test_flat_transport_identity():
    m = Flat(3)
    w = np.array([1.0, -2.0, 0.5])
    assert np.array_equal(m.transport(np.zeros(3), np.ones(3), w), w)


@pytest.mark.parametrize("m", [Sphere(2), Sphere(3), rk4_sphere(2), ellipsoid([1.0, 1.5, 0.8])])
def test_step_keeps_frame_orthonormal(m, rng):
    fr = m.base_frame
    for _ in range(10):
        fr = m.step(fr, 0.3 * rng.standard_normal(m.dim))
    assert fr.orthonormality_defect() < 1e-12
    assert abs(m.project(fr.x, fr.u[:, 0]) - fr.u[:, 0]).max() < 1e-10


def test_curvature_sphere_convention(rng):
    m = Sphere(3)
    fr = m.base_frame
    a, b, c = rng.standard_normal((3, 3))
    np.testing.assert_allclose(m.curvature(fr, a, b) @ c, (b @ c) * a - (a @ c) * b, atol=1e-14)
    assert np.allclose(m.curvature(fr, a, a), 0.0)


def test_curvature_by_holonomy():
    # transport around a small geodesic square rotates by the enclosed curvature
    m = Sphere(2)
    fr = m.base_frame
    eps = 1e-3
    path = [np.array([eps, 0.0]), np.array([0.0, eps]), np.array([-eps, 0.0]), np.array([0.0, -eps])]
    for a in path:
        fr = m.step(fr, a)
    rot = fr.u.T @ m.base_frame.u
    angle = math.atan2(rot[1, 0], rot[0, 0])
    expected = m.curvature(m.base_frame, np.array([1.0, 0.0]), np.array([0.0, 1.0]))[1, 0] * eps**2
    assert abs(abs(angle) - abs(expected)) < 1e-8


@pytest.mark.parametrize("d", [2, 3, 4])
def test_sphere_ricci_and_scalar(d):
    m = Sphere(d)
    np.testing.assert_allclose(m.ricci(m.base_frame), (d - 1) * np.eye(d), atol=1e-14)
    assert m.scalar(m.base_point) == d * (d - 1)
    assert np.trace(m.ricci(m.base_frame)) == pytest.approx(m.scalar(m.base_point))


def test_flat_curvature_zero():
    m = Flat(2)
    assert not np.any(m.curvature(m.base_frame, np.ones(2), np.array([1.0, -1.0])))
    assert not np.any(m.ricci(m.base_frame))
    assert m.scalar(np.zeros(2)) == 0.0


def test_rk4_sphere_curvature_matches_closed_form(rng):
    m, oracle = Sphere(2), rk4_sphere(2)
    fr = m.step(m.base_frame, np.array([0.4, -0.3]))
    fr_rk = oracle.step(oracle.base_frame, np.array([0.4, -0.3]))
    a, b = rng.standard_normal((2, 2))
    np.testing.assert_allclose(oracle.curvature(fr_rk, a, b), m.curvature(fr, a, b), atol=1e-9)
    assert oracle.scalar(fr_rk.x) == pytest.approx(2.0, abs=1e-9)


def test_scalar_constant_on_sphere(rng):
    m = Sphere(3)
    x = rng.standard_normal(4)
    assert m.scalar(x / np.linalg.norm(x)) == 6.0


def test_ellipsoid_scalar_at_pole():
    # Gauss curvature at the pole (0, 0, c) of an ellipsoid with axes (a, b, c) is c^2 / (a^2 b^2)
    a, b, c = 1.0, 1.5, 0.8
    m = ellipsoid([a, b, c])
    assert m.scalar(m.base_point) == pytest.approx(2.0 * c**2 / (a**2 * b**2), rel=1e-12)


def test_get_manifold():
    assert isinstance(get_manifold("flat-3"), Flat)
    assert get_manifold("sphere-2").dim == 2
    assert get_manifold("sphere-rk4-2").name == "sphere-rk4-2"
    with pytest.raises(ConfigError):
        get_manifold("torus-2")


def test_frame_apply_inverse(rng):
    m = Sphere(2)
    fr = m.step(m.base_frame, np.array([0.2, 0.5]))
    a = rng.standard_normal(2)
    np.testing.assert_allclose(fr.inverse(fr.apply(a)), a, atol=1e-14)
    assert isinstance(fr, Frame)
