"""Monte Carlo over piecewise-geodesic paths driven by Gaussian increments.

Samples are split into fixed-size replicas.  Replica ``r`` draws from a
Philox stream keyed by ``(seed, r)``, so results never depend on how replicas
are scheduled; per-sample values are gathered in replica order and reduced
with ``math.fsum``.  Measures with a density relative to the sampled one are
realised by weighting.
"""
from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import cached_property, reduce
from typing import Callable, Sequence

import numpy as np
from scipy import stats as sps

from . import kernels
from .errors import BudgetExceeded, ConfigError, DomainError
from .jacobi import rho_p
from .manifolds import Flat, Frame, Manifold, Sphere
from .pathspace import DrivingPath, GeodesicPath, Partition, develop, restrict_increments

DEFAULT_BLOCK = 8192
_U64 = (1 << 64) - 1


# -- randomness ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RngStream:
    """Counter-based stream keyed by ``(master_seed, replica_index)``."""

    master_seed: int
    replica_index: int

    def generator(self) -> np.random.Generator:
        key = np.array([self.master_seed & _U64, self.replica_index & _U64], dtype=np.uint64)
        return np.random.Generator(np.random.Philox(key=key))


def sample_increments(rng: np.random.Generator, count: int, partition: Partition, d: int) -> np.ndarray:
    """``(count, n, d)`` independent increments with covariance ``ds_i I``."""
    return rng.standard_normal((count, partition.n, d)) * np.sqrt(partition.ds)[:, None]


def sample_bp(partition: Partition, d: int, rng: np.random.Generator) -> DrivingPath:
    """One piecewise-linear Brownian path on ``partition``."""
    return DrivingPath(partition, sample_increments(rng, 1, partition, d)[0])


class Budget:
    """Wall-clock guard: aborts when elapsed or projected runtime exceeds ``cap_s``."""

    def __init__(self, cap_s: float | None = 600.0):
        self.cap_s = cap_s
        self.start = time.perf_counter()

    @property
    def elapsed(self) -> float:
        return time.perf_counter() - self.start

    def check(self, done: float = 0.0, total: float = 0.0) -> None:
        if self.cap_s is None:
            return
        el = self.elapsed
        if el > self.cap_s:
            raise BudgetExceeded(f"elapsed {el:.1f}s exceeds the {self.cap_s:.0f}s budget")
        if done > 0 and total > done:
            projected = el * total / done
            if projected > self.cap_s:
                raise BudgetExceeded(f"projected runtime {projected:.1f}s exceeds the {self.cap_s:.0f}s budget")


def replica_counts(n_samples: int, block: int = DEFAULT_BLOCK) -> list[int]:
    if n_samples < 1:
        raise ConfigError("n_samples must be >= 1")
    full, rest = divmod(n_samples, block)
    return [block] * full + ([rest] if rest else [])


def replica_map(
    work: Callable[[np.random.Generator, int], object],
    n_samples: int,
    seed: int,
    threads: int = 1,
    block: int = DEFAULT_BLOCK,
    budget: Budget | None = None,
) -> list:
    """Run ``work(rng, count)`` for every replica; results come back in replica order."""
    counts = replica_counts(n_samples, block)

    def task(r):
        return work(RngStream(seed, r).generator(), counts[r])

    results = []
    if threads <= 1:
        for r in range(len(counts)):
            results.append(task(r))
            if budget is not None:
                budget.check(r + 1, len(counts))
        return results
    with ThreadPoolExecutor(max_workers=threads) as pool:
        for r, res in enumerate(pool.map(task, range(len(counts)))):
            results.append(res)
            if budget is not None:
                budget.check(r + 1, len(counts))
    return results


def stats(values: np.ndarray) -> tuple[float, float]:
    """Compensated mean and standard error ``sample_std / sqrt(N)``."""
    v = np.asarray(values, dtype=float).ravel()
    n = v.size
    mean = math.fsum(v) / n
    if n < 2:
        return mean, math.nan
    var = math.fsum((v - mean) ** 2) / (n - 1)
    return mean, math.sqrt(var / n)


# -- batches ---------------------------------------------------------------------------------


def batch_develop(m: Manifold, inc: np.ndarray, frame: Frame | None = None):
    """Vertices ``(N, n+1, D)`` and frames ``(N, n+1, D, d)`` of a batch of developments."""
    fr = m.base_frame if frame is None else frame
    if isinstance(m, Sphere):
        return kernels.develop_sphere(fr.x, fr.u, inc)
    if isinstance(m, Flat):
        return kernels.develop_flat(fr.x, fr.u, inc)
    N, n, _ = inc.shape
    verts = np.empty((N, n + 1, m.ambient_dim))
    frames = np.empty((N, n + 1, m.ambient_dim, m.dim))
    part = Partition.uniform(n)
    for k in range(N):
        p = develop(m, DrivingPath(part, inc[k]), fr)
        verts[k], frames[k] = p.vertices, p.frames
    return verts, frames


@dataclass(eq=False)
class PathBatch:
    """A batch of sampled paths; geometry is computed lazily."""

    manifold: Manifold
    partition: Partition
    increments: np.ndarray
    _dev: tuple | None = field(default=None, repr=False)

    @property
    def size(self) -> int:
        return self.increments.shape[0]

    def _developed(self):
        if self._dev is None:
            self._dev = batch_develop(self.manifold, self.increments)
        return self._dev

    @property
    def vertices(self) -> np.ndarray:
        return self._developed()[0]

    @property
    def frames(self) -> np.ndarray:
        return self._developed()[1]

    def _paths(self):
        for k in range(self.size):
            yield GeodesicPath(self.manifold, self.partition, self.increments[k], self.vertices[k], self.frames[k])

    @cached_property
    def _density(self):
        m = self.manifold
        inc = self.increments
        ds = self.partition.ds
        if isinstance(m, Flat):
            z = np.zeros(self.size)
            return z, np.zeros(self.size, dtype=bool), z, z
        if isinstance(m, Sphere):
            logdet, deg = kernels.sphere_segment_logdets(inc)
            R = (m.dim - 1) * np.einsum("kia,kia->k", inc, inc)
            S = np.full(self.size, m.scalar(None) * float(ds.sum()))
            return logdet.sum(axis=1), deg.any(axis=1), R, S
        reps = [rho_p(p) for p in self._paths()]
        deg = np.array([r.degenerate for r in reps])
        logr = np.array([-math.inf if r.degenerate else math.fsum(r.seg_logdets) for r in reps])
        return logr, deg, np.array([r.R_P for r in reps]), np.array([r.S_P for r in reps])

    @property
    def log_rho(self) -> np.ndarray:
        return self._density[0]

    @property
    def degenerate(self) -> np.ndarray:
        return self._density[1]

    @property
    def rho(self) -> np.ndarray:
        """Density weight; exactly 0 on degenerate samples."""
        return np.where(self.degenerate, 0.0, np.exp(self.log_rho))

    @property
    def R_P(self) -> np.ndarray:
        return self._density[2]

    @property
    def S_P(self) -> np.ndarray:
        return self._density[3]

    def scalar_at_vertices(self) -> np.ndarray:
        m = self.manifold
        if isinstance(m, (Flat, Sphere)):
            return np.full((self.size, self.partition.n + 1), m.scalar(None))
        return np.array([[m.scalar(x) for x in v] for v in self.vertices])

    def alpha_weight(self, alpha: float) -> np.ndarray:
        """``exp((1/6) sum (alpha Scal(x_{i-1}) + (1 - alpha) Scal(x_i)) ds_i)``."""
        sc = self.scalar_at_vertices()
        mix = alpha * sc[:, :-1] + (1.0 - alpha) * sc[:, 1:]
        return np.exp(mix @ self.partition.ds / 6.0)


# -- estimates -------------------------------------------------------------------------------


@dataclass(frozen=True)
class McEstimate:
    n: int
    mesh: float
    estimate: float
    std_error: float
    n_samples: int
    n_degenerate: int
    wall_time_s: float

    CSV_HEADER = ("n", "mesh", "estimate", "std_error", "n_samples", "n_degenerate", "wall_time_s")

    @property
    def mean(self) -> float:
        return self.estimate

    def row(self) -> tuple:
        return (self.n, self.mesh, self.estimate, self.std_error, self.n_samples, self.n_degenerate, self.wall_time_s)

    def z_score(self, target: float) -> float:
        return (self.estimate - target) / self.std_error


def normalization_constants(partition: Partition, d: int) -> tuple[float, float]:
    """``Z0 = prod (sqrt(2 pi) ds_i)^d`` and ``Z1 = (2 pi)^(d n / 2)``."""
    ds = partition.ds
    z0 = math.exp(d * math.fsum(np.log(math.sqrt(2.0 * math.pi) * ds)))
    z1 = (2.0 * math.pi) ** (d * partition.n / 2.0)
    return z0, z1


def common_refinement(partitions: Sequence[Partition]) -> Partition:
    ns = [p.n for p in partitions]
    if all(p == Partition.uniform(p.n) for p in partitions):
        n = reduce(math.lcm, ns)
        if n > 1 << 16:
            raise ConfigError("common refinement of the requested partitions is too fine")
        return Partition.uniform(n)
    return Partition(np.unique(np.concatenate([p.times for p in partitions])))


PathFunctional = Callable[[PathBatch], np.ndarray]


def sweep(
    m: Manifold,
    partitions: Sequence[Partition],
    f: PathFunctional,
    n_samples: int,
    seed: int,
    weight: str = "nu1",
    alpha: float | None = None,
    threads: int = 1,
    block: int = DEFAULT_BLOCK,
    budget: Budget | None = None,
) -> list[McEstimate]:
    """Estimates of ``E f`` on several partitions from common Brownian skeletons.

    ``weight`` is ``"nu1"`` (plain sampling), ``"nu0"`` (multiply by ``rho_P``) or
    ``"alpha"`` (multiply by ``rho_P`` and the endpoint-mixed curvature weight).
    """
    if weight not in ("nu1", "nu0", "alpha"):
        raise ConfigError(f"unknown weight {weight!r}")
    if weight == "alpha" and alpha is None:
        raise ConfigError("alpha weight needs a value for alpha")
    ref = common_refinement(partitions)
    d = m.dim

    def work(rng, count):
        inc_ref = sample_increments(rng, count, ref, d)
        out = []
        for p in partitions:
            t0 = time.perf_counter()
            inc = inc_ref if p == ref else restrict_increments(ref, inc_ref, p)
            batch = PathBatch(m, p, inc)
            vals = np.asarray(f(batch), dtype=float)
            ndeg = 0
            if weight != "nu1":
                vals = vals * batch.rho
                ndeg = int(batch.degenerate.sum())
                if weight == "alpha":
                    vals = vals * batch.alpha_weight(alpha)
            out.append((vals, ndeg, time.perf_counter() - t0))
        return out

    parts = replica_map(work, n_samples, seed, threads, block, budget)
    result = []
    for j, p in enumerate(partitions):
        vals = np.concatenate([r[j][0] for r in parts])
        mean, se = stats(vals)
        ndeg = sum(r[j][1] for r in parts)
        wall = math.fsum(r[j][2] for r in parts)
        result.append(McEstimate(p.n, p.mesh, mean, se, vals.size, ndeg, wall))
    return result


def expectation_nu1(m, partition, f, n_samples, seed, threads=1, block=DEFAULT_BLOCK, budget=None) -> McEstimate:
    """Mean of ``f`` over developed piecewise-linear Brownian paths."""
    return sweep(m, [partition], f, n_samples, seed, "nu1", None, threads, block, budget)[0]


def expectation_nu0(m, partition, f, n_samples, seed, alpha=None, threads=1, block=DEFAULT_BLOCK, budget=None) -> McEstimate:
    """Mean of ``f rho_P`` (optionally times the ``alpha`` curvature weight) on the same stream."""
    weight = "nu0" if alpha is None else "alpha"
    return sweep(m, [partition], f, n_samples, seed, weight, alpha, threads, block, budget)[0]


# -- tails ---------------------------------------------------------------------------------------


@dataclass(frozen=True)
class TailEstimate:
    frac_nu1: McEstimate
    frac_weighted: McEstimate
    exact_nu1: float


def tail_exact(partition: Partition, d: int, eps: float) -> float:
    """Probability that some Gaussian increment has norm ``>= eps`` (chi-square law)."""
    keep = sps.chi2.cdf(eps**2 / partition.ds, d)
    return float(-np.expm1(np.sum(np.log(keep))))


def tail_fraction(m, partition, eps, n_samples, seed, threads=1, block=DEFAULT_BLOCK, budget=None) -> TailEstimate:
    """Empirical mass outside ``{max_i |db_i| < eps}``, unweighted and ``rho_P``-weighted."""
    if eps <= 0:
        raise DomainError("eps must be positive")

    def outside(batch):
        return (np.linalg.norm(batch.increments, axis=2) >= eps).any(axis=1).astype(float)

    plain = sweep(m, [partition], outside, n_samples, seed, "nu1", None, threads, block, budget)[0]
    weighted = sweep(m, [partition], outside, n_samples, seed, "nu0", None, threads, block, budget)[0]
    return TailEstimate(plain, weighted, tail_exact(partition, m.dim, eps))


# -- curvature moment ----------------------------------------------------------------------------


def curvature_moment(m, partition, p, eps, n_samples, seed, threads=1, block=DEFAULT_BLOCK) -> McEstimate:
    """Mean of ``exp(p (R_P - S_P))`` restricted to paths with every ``|db_i| < eps``."""

    def fn(batch):
        inside = (np.linalg.norm(batch.increments, axis=2) < eps).all(axis=1)
        return np.where(inside, np.exp(p * (batch.R_P - batch.S_P)), 0.0)

    return sweep(m, [partition], fn, n_samples, seed, "nu1", None, threads, block)[0]


# -- Gaussian moment identity ----------------------------------------------------------------------


def gaussian_identity_exact(partition: Partition, d: int, p: float, C: float) -> float:
    """``prod (1 - p C ds_j)^(-d/2)``."""
    x = p * C * partition.ds
    if np.any(x >= 1.0):
        raise DomainError("p C ds_j must be < 1 for the moment to be finite")
    return math.exp(-0.5 * d * math.fsum(np.log1p(-x)))


def gaussian_identity_check(partition, d, p, C, n_samples, seed, threads=1, block=DEFAULT_BLOCK):
    """Monte Carlo ``E exp((p/2) C sum |dB_j|^2)`` next to its closed form."""
    exact = gaussian_identity_exact(partition, d, p, C)

    def work(rng, count):
        inc = sample_increments(rng, count, partition, d)
        return np.exp(0.5 * p * C * np.einsum("kia,kia->k", inc, inc))

    t0 = time.perf_counter()
    vals = np.concatenate(replica_map(work, n_samples, seed, threads, block))
    mean, se = stats(vals)
    est = McEstimate(partition.n, partition.mesh, mean, se, vals.size, 0, time.perf_counter() - t0)
    return est, exact


# -- Wong-Zakai self-refinement ------------------------------------------------------------------------


@dataclass(frozen=True)
class WzRow:
    n: int
    mesh: float
    l2_error: float
    se: float


@dataclass(frozen=True)
class WzResult:
    rows: list
    slope: float
    reference_n: int


def wz_rate(
    m: Manifold,
    n_list: Sequence[int],
    n_samples: int,
    seed: int,
    n_ref: int | None = None,
    threads: int = 1,
    block: int = 1024,
    budget: Budget | None = None,
) -> WzResult:
    """Endpoint L2 distance between developments on coarse partitions and on a fine reference.

    Every sample uses one fine Brownian skeleton; coarse increments are its sums.
    The slope of ``log error`` against ``log |P|`` is fitted by least squares.
    """
    n_list = sorted(int(n) for n in n_list)
    n_ref = n_ref or n_list[-1]
    ref = Partition.uniform(n_ref)
    coarse = [Partition.uniform(n) for n in n_list if n < n_ref]
    if len(coarse) < 2:
        raise ConfigError("need at least two partitions coarser than the reference")
    for p in coarse:
        ref.coarsening_indices(p)

    def work(rng, count):
        inc = sample_increments(rng, count, ref, m.dim)
        end_ref = batch_develop(m, inc)[0][:, -1]
        errs = []
        for p in coarse:
            end = batch_develop(m, restrict_increments(ref, inc, p))[0][:, -1]
            errs.append(np.einsum("ka,ka->k", end - end_ref, end - end_ref))
        return errs

    parts = replica_map(work, n_samples, seed, threads, block, budget)
    rows = []
    for j, p in enumerate(coarse):
        mse, se_mse = stats(np.concatenate([r[j] for r in parts]))
        rms = math.sqrt(mse)
        rows.append(WzRow(p.n, p.mesh, rms, se_mse / (2.0 * rms) if rms > 0 else 0.0))
    errors = np.array([r.l2_error for r in rows])
    if np.all(errors > 0):
        slope = float(np.polyfit(np.log([r.mesh for r in rows]), np.log(errors), 1)[0])
    else:
        slope = math.nan
    return WzResult(rows, slope, n_ref)
