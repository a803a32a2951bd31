import math

import numpy as np
import pytest
from scipy.special import dawsn

from geowiener import (
    ConfigError,
    Flat,
    Partition,
    RngStream,
    Sphere,
    expectation_nu0,
    expectation_nu1,
    gaussian_identity_check,
    normalization_constants,
    sample_bp,
    sweep,
    tail_fraction,
    wz_rate,
)
from geowiener.montecarlo import (
    Budget,
    PathBatch,
    common_refinement,
    curvature_moment,
    gaussian_identity_exact,
    replica_counts,
    sample_increments,
    tail_exact,
)
from geowiener.errors import BudgetExceeded
from geowiener.observables import Constant, EndpointSquare, LinearEndpoint


# exact finite-partition expectations on S^2 for uniform n, with sigma = sqrt(1/n)
def mean_sinc(sigma):
    return math.sqrt(2.0) * dawsn(sigma / math.sqrt(2.0)) / sigma


def mean_cos(sigma):
    return 1.0 - sigma * math.sqrt(2.0) * dawsn(sigma / math.sqrt(2.0))


def within(est, target, k=4.0):
    return abs(est.estimate - target) <= k * est.std_error


def test_exact_oracles_frozen():
    s = math.sqrt(1.0 / 64)
    assert mean_sinc(s) ** 64 == pytest.approx(0.7166557808374985, rel=1e-12)
    assert mean_cos(s) ** 64 == pytest.approx(0.36691665472752977, rel=1e-12)
    assert mean_sinc(2 * s) ** 64 == pytest.approx(0.2643318225589654, rel=1e-12)


def test_normalization_constants():
    z0, z1 = normalization_constants(Partition.uniform(3), 2)
    assert z1 == pytest.approx((2 * math.pi) ** 3)
    assert z1 == pytest.approx(248.050, abs=5e-4)
    z0, _ = normalization_constants(Partition.uniform(2), 1)
    assert z0 == pytest.approx(math.pi / 2)
    p = Partition(np.array([0.0, 0.2, 0.7, 1.0]))
    z0, z1 = normalization_constants(p, 3)
    assert z0 / z1 == pytest.approx(float(np.prod(p.ds**3)))


def test_sample_bp_variance_and_reproducibility():
    part = Partition(np.array([0.0, 0.1, 0.4, 1.0]))
    inc = sample_increments(RngStream(7, 0).generator(), 100_000, part, 2)
    var = inc.var(axis=0)
    se = part.ds[:, None] * math.sqrt(2.0 / 100_000)
    assert np.all(np.abs(var - part.ds[:, None]) <= 3 * se)
    a = sample_bp(part, 2, RngStream(7, 1).generator())
    b = sample_bp(part, 2, RngStream(7, 1).generator())
    assert np.array_equal(a.increments, b.increments)


def test_replica_streams_independent():
    a = RngStream(1, 0).generator().standard_normal(4)
    b = RngStream(1, 1).generator().standard_normal(4)
    assert not np.allclose(a, b)
    assert replica_counts(20_000, 8192) == [8192, 8192, 3616]


def test_constant_observable_exact():
    est = expectation_nu1(Sphere(2), Partition.uniform(8), Constant(), 1000, seed=3)
    assert est.estimate == 1.0 and est.std_error == 0.0


@pytest.mark.parametrize("d", [1, 2, 3])
def test_flat_weights_trivial(d):
    m, part = Flat(d), Partition.uniform(16)
    f = EndpointSquare()
    a = expectation_nu1(m, part, f, 20_000, seed=11)
    b = expectation_nu0(m, part, f, 20_000, seed=11)
    assert a.estimate == b.estimate and a.std_error == b.std_error
    assert within(a, float(d))


def test_rho_matches_finite_n_oracle():
    n = 8
    est = expectation_nu0(Sphere(2), Partition.uniform(n), Constant(), 100_000, seed=21)
    assert within(est, mean_sinc(math.sqrt(1.0 / n)) ** n)


def test_height_matches_finite_n_oracles():
    n = 8
    s = math.sqrt(1.0 / n)
    part = Partition.uniform(n)
    f = LinearEndpoint()
    m = Sphere(2)
    assert within(expectation_nu1(m, part, f, 100_000, seed=22), mean_cos(s) ** n)
    assert within(expectation_nu0(m, part, f, 100_000, seed=22), mean_sinc(2 * s) ** n)
    assert within(expectation_nu0(m, part, f, 100_000, seed=22, alpha=0.5), math.exp(1 / 3) * mean_sinc(2 * s) ** n)


def test_alpha_weight_restores_mass():
    n = 16
    est = expectation_nu0(Sphere(2), Partition.uniform(n), Constant(), 100_000, seed=5, alpha=0.5)
    assert within(est, math.exp(1.0 / 3.0) * mean_sinc(math.sqrt(1.0 / n)) ** n)
    assert abs(est.estimate - 1.0) < 0.01


def test_sweep_common_random_numbers():
    parts = [Partition.uniform(4), Partition.uniform(8)]
    res = sweep(Sphere(2), parts, Constant(), 5000, seed=1, weight="nu0")
    alone = sweep(Sphere(2), [Partition.uniform(8)], Constant(), 5000, seed=1, weight="nu0")
    assert common_refinement(parts) == Partition.uniform(8)
    assert res[1].estimate == alone[0].estimate
    with pytest.raises(ConfigError):
        sweep(Sphere(2), parts, Constant(), 10, seed=1, weight="alpha")


def test_thread_count_does_not_change_result():
    part = Partition.uniform(8)
    a = expectation_nu0(Sphere(2), part, LinearEndpoint(), 30_000, seed=9, threads=1, block=4096)
    b = expectation_nu0(Sphere(2), part, LinearEndpoint(), 30_000, seed=9, threads=4, block=4096)
    assert a.estimate == b.estimate and a.std_error == b.std_error


def test_path_batch_fields():
    inc = sample_increments(RngStream(0, 0).generator(), 10, Partition.uniform(4), 2)
    b = PathBatch(Sphere(2), Partition.uniform(4), inc)
    r = np.linalg.norm(inc, axis=2)
    np.testing.assert_allclose(b.rho, np.prod(np.sin(r) / r, axis=1), rtol=1e-12)
    np.testing.assert_allclose(b.R_P, (r**2).sum(axis=1))
    np.testing.assert_allclose(b.alpha_weight(0.3), math.exp(2.0 / 6.0))


def test_tail_fraction_flat_exact():
    part = Partition.uniform(16)
    t = tail_fraction(Flat(2), part, 0.5, 50_000, seed=4)
    assert within(t.frac_nu1, tail_exact(part, 2, 0.5), 3.0)
    assert t.frac_weighted.estimate == t.frac_nu1.estimate


def test_tail_fraction_large_eps():
    t = tail_fraction(Sphere(2), Partition.uniform(8), 50.0, 1000, seed=4)
    assert t.frac_nu1.estimate == 0.0 and t.exact_nu1 == 0.0


def test_curvature_moment_shape():
    # on S^2, R_P - S_P = |db|^2 - 2; with eps large the moment is e^{-2p} prod (1 - 2 p ds)^{-1} exactly
    part = Partition.uniform(16)
    p = 0.5
    est = curvature_moment(Sphere(2), part, p, 10.0, 50_000, seed=8)
    exact = math.exp(-2 * p) * float(np.prod(1.0 / (1.0 - 2 * p * part.ds)))
    assert within(est, exact)


def test_gaussian_identity_examples():
    assert gaussian_identity_exact(Partition.uniform(2), 1, 1.0, 1.0) == pytest.approx(2.0)
    assert gaussian_identity_exact(Partition.uniform(5), 3, 1.0, 0.0) == 1.0
    assert gaussian_identity_exact(Partition.uniform(4096), 2, 0.5, 1.0) == pytest.approx(math.exp(0.5), rel=1e-3)
    est, exact = gaussian_identity_check(Partition.uniform(4), 2, 0.5, 1.0, 50_000, seed=2)
    assert within(est, exact, 3.0)


def test_wz_rate_flat_exact_and_sphere_slope():
    flat = wz_rate(Flat(2), [4, 8], 200, seed=1, n_ref=16)
    # development is linear on flat space; only summation-order round-off remains
    assert all(r.l2_error < 1e-14 for r in flat.rows)
    res = wz_rate(Sphere(2), [8, 16, 32], 2000, seed=1, n_ref=256)
    assert res.slope >= 0.4
    errs = [r.l2_error for r in res.rows]
    for coarse, fine in zip(errs, errs[1:]):
        assert 1.2 < coarse / fine < 1.7


def test_budget_guard():
    b = Budget(0.0)
    with pytest.raises(BudgetExceeded):
        b.check()
    Budget(None).check(1, 10**9)
