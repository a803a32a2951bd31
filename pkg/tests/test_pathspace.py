import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from geowiener import (
    DevelopmentRangeError,
    DomainError,
    DrivingPath,
    Flat,
    Partition,
    PartitionError,
    Sphere,
    antidevelop,
    antidevelop_vertices,
    develop,
    e_p_vertices,
    energy,
    jacobi_tangent,
    pullback_differential,
    pushforward,
    q_form,
    tangent_from_values,
)
from geowiener.pathspace import restrict_increments

E1, E2, E3 = np.eye(3)


def random_path(m, n, rng, scale=None):
    part = Partition.uniform(n)
    scale = np.sqrt(part.ds)[:, None] if scale is None else scale
    return develop(m, DrivingPath(part, rng.standard_normal((n, m.dim)) * scale))


# -- partitions ----------------------------------------------------------------------------


def test_partition_uniform():
    p = Partition.uniform(4)
    np.testing.assert_allclose(p.times, [0, 0.25, 0.5, 0.75, 1.0])
    assert p.n == 4 and p.mesh == 0.25
    assert p.segment_of(0.3) == 2 and p.segment_of(1.0) == 4


@pytest.mark.parametrize("times", [[0.0, 0.5, 0.5, 1.0], [0.1, 1.0], [0.0, 0.6], [0.0]])
def test_partition_rejects_bad_times(times):
    with pytest.raises(PartitionError):
        Partition(np.array(times))


def test_restrict_increments_sums_fine_segments(rng):
    fine, coarse = Partition.uniform(8), Partition.uniform(2)
    inc = rng.standard_normal((3, 8, 2))
    out = restrict_increments(fine, inc, coarse)
    np.testing.assert_allclose(out[:, 0], inc[:, :4].sum(axis=1))
    with pytest.raises(PartitionError):
        restrict_increments(Partition.uniform(3), inc[:, :3], coarse)


def test_driving_path_json_roundtrip(rng):
    b = DrivingPath(Partition.uniform(5), rng.standard_normal((5, 2)))
    c = DrivingPath.from_json(b.to_json())
    assert np.array_equal(b.increments, c.increments)
    np.testing.assert_allclose(DrivingPath.from_values(b.partition, b.values()).increments, b.increments, atol=1e-15)


# -- development -------------------------------------------------------------------------------


@pytest.mark.parametrize("d", [1, 2, 3])
def test_flat_develop_is_cumsum(d, rng):
    m = Flat(d)
    inc = rng.standard_normal((10, d))
    sigma = develop(m, DrivingPath(Partition.uniform(10), inc))
    np.testing.assert_allclose(sigma.vertices[1:], np.cumsum(inc, axis=0), atol=1e-14)
    np.testing.assert_allclose(antidevelop(sigma).increments, inc, atol=1e-14)


def test_sphere_single_segment_endpoint():
    sigma = develop(Sphere(2), DrivingPath(Partition.uniform(1), np.array([[0.5 * math.pi, 0.0]])))
    np.testing.assert_allclose(sigma.vertices[-1], E1, atol=1e-15)


def test_sphere_quarter_equator_antidevelops():
    m = Sphere(2)
    path = antidevelop_vertices(m, Partition.uniform(1), np.array([E3, E1]))
    np.testing.assert_allclose(path.increments, [[0.5 * math.pi, 0.0]], atol=1e-14)


def test_antidevelop_roundtrip_sphere(rng):
    sigma = random_path(Sphere(2), 16, rng)
    np.testing.assert_allclose(antidevelop(sigma).increments, sigma.increments, atol=1e-10)


def test_develop_rejects_long_increment():
    with pytest.raises(DevelopmentRangeError):
        develop(Sphere(2), DrivingPath(Partition.uniform(1), np.array([[3.5, 0.0]])))


def test_develop_dimension_mismatch():
    with pytest.raises(DomainError):
        develop(Sphere(2), DrivingPath(Partition.uniform(2), np.zeros((2, 3))))


# -- energies -------------------------------------------------------------------------------------


def test_energy_examples():
    part = Partition.uniform(2)
    assert energy(DrivingPath(part, np.zeros((2, 2)))) == 0.0
    assert energy(DrivingPath(part, np.array([[1.0, 0.0], [0.0, 1.0]]))) == pytest.approx(4.0)


def test_e_p_vertices_examples():
    one = Partition.uniform(1)
    assert e_p_vertices(Flat(2), one, np.array([[0.0, 0.0], [3.0, 4.0]])) == pytest.approx(25.0)
    assert e_p_vertices(Sphere(2), one, np.array([E3, E1])) == pytest.approx((0.5 * math.pi) ** 2)
    assert e_p_vertices(Sphere(2), Partition.uniform(3), np.tile(E3, (4, 1))) == 0.0


@given(hnp.arrays(float, (6, 2), elements=st.floats(-0.8, 0.8)))
def test_energy_preserved_by_development(inc):
    b = DrivingPath(Partition.uniform(6), inc)
    sigma = develop(Sphere(2), b)
    assert energy(sigma) == pytest.approx(energy(b), rel=1e-12, abs=1e-14)
    assert e_p_vertices(Sphere(2), b.partition, sigma.vertices) == pytest.approx(energy(b), rel=1e-9, abs=1e-12)


# -- tangents ---------------------------------------------------------------------------------


def test_tangent_from_values_inverts_jacobi_tangent(rng):
    sigma = random_path(Sphere(2), 5, rng)
    X = jacobi_tangent(sigma, rng.standard_normal((5, 2)))
    Y = tangent_from_values(sigma, X.h)
    np.testing.assert_allclose(Y.hprime, X.hprime, atol=1e-12)


def test_tangent_value_at_matches_partition_values(rng):
    sigma = random_path(Sphere(2), 4, rng)
    X = jacobi_tangent(sigma, rng.standard_normal((4, 2)))
    for i, s in enumerate(sigma.partition.times[1:], start=1):
        np.testing.assert_allclose(X.value_at(s - 1e-15), X.h[i], atol=1e-12)


def test_q_form_flat_zero_and_at_origin(rng):
    flat = random_path(Flat(2), 4, rng)
    X = jacobi_tangent(flat, rng.standard_normal((4, 2)))
    assert not np.any(q_form(flat, X, 1.0))
    sph = random_path(Sphere(2), 4, rng)
    assert not np.any(q_form(sph, jacobi_tangent(sph, np.ones((4, 2))), 0.0))


def test_q_form_is_transport_variation():
    # perturbing the vertex along X rotates the endpoint frame by q_1(X), to first order
    m = Sphere(2)
    part = Partition.uniform(1)
    inc = np.array([[0.9, 0.3]])
    sigma = develop(m, DrivingPath(part, inc))
    X = jacobi_tangent(sigma, np.array([[0.2, -0.5]]))
    t = 1e-6
    x1 = m.exp(sigma.vertices[1], t * sigma.frame(1).apply(X.h[1]))
    pert = antidevelop_vertices(m, part, np.array([E3, x1]))
    rot = sigma.frames[1].T @ (pert.frames[1] - sigma.frames[1]) / t
    np.testing.assert_allclose(rot, q_form(sigma, X, 1.0), atol=1e-4)


def test_pullback_flat_is_identity(rng):
    sigma = random_path(Flat(2), 5, rng)
    X = jacobi_tangent(sigma, rng.standard_normal((5, 2)))
    np.testing.assert_allclose(pullback_differential(sigma, X), X.h, atol=1e-14)
    zero = jacobi_tangent(sigma, np.zeros((5, 2)))
    assert not np.any(pullback_differential(sigma, zero))


def test_pullback_matches_development_finite_difference(rng):
    m = Sphere(2)
    part = Partition.uniform(4)
    inc = rng.standard_normal((4, 2)) * 0.5
    sigma = develop(m, DrivingPath(part, inc))
    eta_inc = rng.standard_normal((4, 2)) * 0.3
    X = pushforward(sigma, eta_inc)
    t = 1e-5
    moved = develop(m, DrivingPath(part, inc + t * eta_inc))
    fd = (moved.vertices - sigma.vertices) / t
    np.testing.assert_allclose(fd, X.ambient(), rtol=1e-3, atol=1e-4)
    eta_vals = np.vstack([np.zeros(2), np.cumsum(eta_inc, axis=0)])
    np.testing.assert_allclose(pullback_differential(sigma, X), eta_vals, atol=1e-9)
