import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from geowiener import DomainError, DrivingPath, Flat, Partition, Sphere, develop, psi_det, rho_p, rk4_sphere, segment_jacobi
from geowiener.jacobi import expansion_bound, expansion_remainder, psi_bound, rk4_jacobi, sinh_bound, w_p_bound, w_p_from_remainders


def test_flat_segment():
    m = Flat(3)
    seg = segment_jacobi(m, m.base_frame, np.array([0.3, -1.0, 2.0]), 0.25)
    np.testing.assert_allclose(seg.Z, 0.25 * np.eye(3))
    np.testing.assert_allclose(seg.C, np.eye(3))
    assert seg.logdet == 0.0


def test_sphere_segment_closed_form():
    m = Sphere(2)
    seg = segment_jacobi(m, m.base_frame, np.array([1.0, 0.0]), 0.25)
    assert math.exp(seg.logdet) == pytest.approx(math.sin(1.0), rel=1e-14)
    assert math.exp(seg.logdet) == pytest.approx(0.841471, abs=5e-7)


def test_sphere_segment_matches_rk4():
    m, oracle = Sphere(2), rk4_sphere(2)
    db, ds = np.array([0.8, -0.6]), 0.25
    seg = segment_jacobi(m, m.base_frame, db, ds)
    ref = rk4_jacobi(oracle, oracle.base_frame, db, ds, h=1e-4)
    np.testing.assert_allclose(ref.Z, seg.Z, atol=1e-10)
    np.testing.assert_allclose(ref.C, seg.C, atol=1e-10)


def test_segment_degenerate_at_conjugate_point():
    m = Sphere(2)
    seg = segment_jacobi(m, m.base_frame, np.array([math.pi, 0.0]), 0.1)
    assert seg.degenerate


def test_expansion_bound_on_random_segments(rng):
    m = Sphere(3)
    for _ in range(50):
        db = rng.standard_normal(3)
        db *= rng.uniform(0.0, 2.0) / np.linalg.norm(db)
        E = expansion_remainder(m, m.base_frame, db, rng.uniform(0.01, 1.0))
        assert np.linalg.norm(E, 2) <= expansion_bound(float(np.linalg.norm(db)), 1.0) + 1e-15


def test_rho_flat_is_one(rng):
    sigma = develop(Flat(2), DrivingPath(Partition.uniform(6), rng.standard_normal((6, 2))))
    rep = rho_p(sigma)
    assert rep.rho == 1.0 and rep.S_P == 0.0 and rep.R_P == 0.0 and rep.W_P == 0.0


def test_rho_sphere_product_of_sincs(rng):
    inc = rng.standard_normal((8, 2)) * 0.4
    rep = rho_p(develop(Sphere(2), DrivingPath(Partition.uniform(8), inc)))
    r = np.linalg.norm(inc, axis=1)
    assert rep.rho == pytest.approx(float(np.prod(np.sin(r) / r)), rel=1e-12)
    assert rep.S_P == pytest.approx(2.0)
    assert rep.R_P == pytest.approx(float(np.sum(r**2)))


def test_rho_rk4_matches_closed_form(rng):
    inc = rng.standard_normal((3, 2)) * 0.4
    b = DrivingPath(Partition.uniform(3), inc)
    exact = rho_p(develop(Sphere(2), b))
    approx = rho_p(develop(rk4_sphere(2), b))
    assert approx.rho == pytest.approx(exact.rho, rel=1e-9)
    assert approx.R_P == pytest.approx(exact.R_P, rel=1e-9)
    assert approx.S_P == pytest.approx(exact.S_P, rel=1e-9)


def test_w_p_two_ways_and_bound(rng):
    sigma = develop(Sphere(2), DrivingPath(Partition.uniform(10), rng.standard_normal((10, 2)) * 0.3))
    rep = rho_p(sigma)
    assert w_p_from_remainders(sigma) == pytest.approx(rep.W_P, abs=1e-12)
    assert abs(rep.W_P) <= w_p_bound(sigma)


def test_sinh_bound_holds(rng):
    # on the unit sphere Ric >= 0, so the bound is 1 and rho <= 1
    sigma = develop(Sphere(3), DrivingPath(Partition.uniform(5), rng.standard_normal((5, 3)) * 0.5))
    assert rho_p(sigma).rho <= sinh_bound(sigma) == 1.0


def test_density_report_json(rng):
    sigma = develop(Sphere(2), DrivingPath(Partition.uniform(2), rng.standard_normal((2, 2)) * 0.5))
    rep = rho_p(sigma)
    assert '"rho"' in rep.to_json() and len(rep.to_dict()["seg_logdets"]) == 2


def test_psi_examples():
    assert psi_det(np.zeros((2, 2))) == (1.0, 0.0)
    det, psi = psi_det(0.5 * np.eye(2))
    assert det == pytest.approx(0.25)
    assert psi == pytest.approx(-0.386294, abs=5e-7)
    with pytest.raises(DomainError):
        psi_det(np.eye(2))


@given(hnp.arrays(float, (3, 3), elements=st.floats(-1.0, 1.0)), st.floats(0.0, 0.5))
def test_psi_identity_and_bound(U, norm):
    s = np.linalg.norm(U, 2)
    if s == 0.0:
        return
    U = U * (norm / s)
    det, psi = psi_det(U)
    assert det == pytest.approx(math.exp(-np.trace(U) + psi), rel=1e-12)
    assert abs(psi) <= psi_bound(U) + 1e-15
