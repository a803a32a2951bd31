"""Path-space metrics, the energy differential and integration-by-parts checks.

Directions ``k`` are piecewise-linear paths in R^d given by their right
derivatives ``k'(s_{i-1}+)``; the associated vector field ``X^{k_P}`` is the
Jacobi tangent whose kicks are exactly those derivatives.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import kernels
from .errors import ConfigError, DomainError
from .manifolds import Flat, Manifold, Sphere
from .montecarlo import batch_develop, replica_map, stats
from .observables import VertexFunction
from .pathspace import GeodesicPath, Partition, PathTangent, develop, jacobi_tangent, DrivingPath

FD_STEP = 1e-5
GH_ORDER = 20
MAX_QUAD_DIM = 6


@dataclass(frozen=True, eq=False)
class DirectionSpec:
    """A direction ``k`` with ``k(0) = 0`` and piecewise-constant derivative on ``partition``."""

    partition: Partition
    kprime: np.ndarray

    def __post_init__(self):
        kp = np.array(self.kprime, dtype=float)
        if kp.ndim == 1:
            kp = np.broadcast_to(kp, (self.partition.n, kp.size)).copy()
        if kp.shape[0] != self.partition.n:
            raise DomainError("need one derivative per segment")
        object.__setattr__(self, "kprime", kp)

    @classmethod
    def constant(cls, partition: Partition, direction) -> "DirectionSpec":
        return cls(partition, np.asarray(direction, dtype=float))

    @classmethod
    def from_function(cls, partition: Partition, kprime_fn: Callable[[float], np.ndarray]) -> "DirectionSpec":
        return cls(partition, np.array([kprime_fn(s) for s in partition.times[:-1]]))

    @property
    def d(self) -> int:
        return self.kprime.shape[1]

    def values(self) -> np.ndarray:
        out = np.zeros((self.partition.n + 1, self.d))
        np.cumsum(self.kprime * self.partition.ds[:, None], axis=0, out=out[1:])
        return out

    def norm_1(self) -> float:
        """``sum |k'(s_{i-1}+)| ds_i``."""
        return float(np.sum(np.linalg.norm(self.kprime, axis=1) * self.partition.ds))


def _check_same(path: GeodesicPath, k: DirectionSpec):
    if k.partition != path.partition:
        raise DomainError("direction and path live on different partitions")


def kp_transport(path: GeodesicPath, k: DirectionSpec) -> PathTangent:
    """The tangent ``X^{k_P}``: Jacobi propagation with kicks ``k'(s_{i-1}+)``."""
    _check_same(path, k)
    return jacobi_tangent(path, k.kprime)


def onb_frame(path: GeodesicPath, i: int, a: int) -> PathTangent:
    """The orthonormal frame element with kick ``e_a / sqrt(ds_i)`` on segment ``i`` (1-based) only."""
    if not (1 <= i <= path.n and 0 <= a < path.manifold.dim):
        raise DomainError("frame index out of range")
    hp = np.zeros_like(path.increments)
    hp[i - 1, a] = 1.0 / math.sqrt(path.partition.ds[i - 1])
    return jacobi_tangent(path, hp)


def g_metrics(X: PathTangent, Y: PathTangent) -> tuple[float, float]:
    """``(G1(X, Y), G0(X, Y))``: right-derivative and value pairings weighted by ``ds``."""
    if X.path is not Y.path:
        raise DomainError("tangents over different base paths")
    ds = X.path.partition.ds
    g1 = math.fsum(np.einsum("ia,ia->i", X.hprime, Y.hprime) * ds)
    g0 = math.fsum(np.einsum("ia,ia->i", X.h[1:], Y.h[1:]) * ds)
    return g1, g0


def dE(path: GeodesicPath, X: PathTangent) -> float:
    """``2 int <sigma', nabla X / ds> ds``; on each segment ``<b', h'>`` is constant, so this is ``2 sum <b'_i, dh_i>``."""
    return 2.0 * math.fsum(np.einsum("ia,ia->i", path.velocities, np.diff(X.h, axis=0)))


def divergence_nu1(path: GeodesicPath, k: DirectionSpec) -> float:
    """``-sum <k'(s_{i-1}+), db_i>``."""
    _check_same(path, k)
    return -math.fsum(np.einsum("ia,ia->i", k.kprime, path.increments))


# -- z-field -------------------------------------------------------------------------------


@dataclass(frozen=True)
class ZField:
    partition: Partition
    values: np.ndarray


def z_field(path: GeodesicPath, k: DirectionSpec) -> ZField:
    """Solve ``z' + Ric z / 2 = k'`` with ``Ric`` frozen per segment at the segment midpoint.

    With constant derivative on each segment the frozen-coefficient step is exact:
    ``z_i = e^{-R ds/2} z_{i-1} + R^{-1}(I - e^{-R ds/2}) 2 k'_i``, evaluated in the
    eigenbasis of the symmetric ``R``.
    """
    _check_same(path, k)
    m = path.manifold
    part = path.partition
    z = np.zeros((part.n + 1, m.dim))
    for i in range(1, part.n + 1):
        ds = part.ds[i - 1]
        if m.closed_form:
            ric = m.ricci(path.frame(i - 1))
        else:
            ric = m.ricci(path.frame_at(part.times[i - 1] + 0.5 * ds))
        lam, vec = np.linalg.eigh(0.5 * (ric + ric.T))
        decay = np.exp(-0.5 * lam * ds)
        gain = np.where(np.abs(lam) > 1e-14, 2.0 * (1.0 - decay) / np.where(lam == 0, 1.0, lam), ds)
        z[i] = vec @ (decay * (vec.T @ z[i - 1]) + gain * (vec.T @ k.kprime[i - 1]))
    return ZField(part, z)


def z_constant_curvature(d: int, direction, s) -> np.ndarray:
    """Closed form on the unit ``S^d`` for constant ``k' = direction``: ``(2/(d-1))(1 - e^{-(d-1)s/2}) k'``."""
    s = np.asarray(s, dtype=float)
    c = 0.5 * (d - 1)
    factor = s if c == 0 else (1.0 - np.exp(-c * s)) / c
    return np.multiply.outer(factor, np.asarray(direction, dtype=float))


# -- batched tangents --------------------------------------------------------------------------


def batch_kp(m: Manifold, partition: Partition, inc: np.ndarray, kprime: np.ndarray, frames=None) -> np.ndarray:
    """``h(s_i)`` of ``X^{k_P}`` for a batch of driving paths, shape ``(N, n+1, d)``."""
    ds = partition.ds
    if isinstance(m, Sphere):
        return kernels.kp_sphere(inc, ds, kprime)
    if isinstance(m, Flat):
        return kernels.kp_flat(inc, ds, kprime)
    out = np.empty(inc.shape[:1] + (partition.n + 1, m.dim))
    for k in range(inc.shape[0]):
        path = develop(m, DrivingPath(partition, inc[k]))
        out[k] = jacobi_tangent(path, kprime).h
    return out


def _flow(m: Manifold, verts: np.ndarray, X: np.ndarray, t: float) -> np.ndarray:
    if isinstance(m, Sphere):
        return kernels.sphere_exp(verts, t * X)
    if isinstance(m, Flat):
        return verts + t * X
    out = np.empty_like(verts)
    for idx in np.ndindex(verts.shape[:-1]):
        out[idx] = m.exp(verts[idx], t * X[idx])
    return out


def derivative_along(m: Manifold, F: VertexFunction, verts: np.ndarray, X: np.ndarray, step: float = FD_STEP) -> np.ndarray:
    """Central difference of ``F`` along the vertex flow ``x_i -> exp(x_i, t X_i)``."""
    return (F(_flow(m, verts, X, step)) - F(_flow(m, verts, X, -step))) / (2.0 * step)


# -- integration by parts --------------------------------------------------------------------


@dataclass(frozen=True)
class IbpResult:
    mode: str
    n: int
    lhs: float
    rhs: float
    residual: float
    se: float

    CSV_HEADER = ("mode", "n", "lhs", "rhs", "residual", "se")

    def row(self) -> tuple:
        return (self.mode, self.n, self.lhs, self.rhs, self.residual, self.se)


def _ibp_integrands(m, partition, F, kprime, inc, step):
    verts, frames = batch_develop(m, inc)
    h = batch_kp(m, partition, inc, kprime)
    X = np.einsum("kiaj,kij->kia", frames, h)
    lhs = derivative_along(m, F, verts, X, step)
    rhs = F(verts) * np.einsum("ia,kia->k", kprime, inc)
    return lhs, rhs


def gauss_hermite_increments(partition: Partition, d: int, order: int = GH_ORDER):
    """Tensor Gauss-Hermite nodes for independent ``N(0, ds_i I)`` increments and their weights."""
    if d * partition.n > MAX_QUAD_DIM:
        raise ConfigError(f"quadrature mode needs d*n <= {MAX_QUAD_DIM}")
    x, w = np.polynomial.hermite.hermgauss(order)
    x = x * math.sqrt(2.0)
    w = w / math.sqrt(math.pi)
    dim = d * partition.n
    nodes = np.array(list(itertools.product(x, repeat=dim)))
    weights = np.prod(np.array(list(itertools.product(w, repeat=dim))), axis=1)
    scale = np.repeat(np.sqrt(partition.ds), d)
    return (nodes * scale).reshape(-1, partition.n, d), weights


def finite_ibp_check(
    m: Manifold,
    partition: Partition,
    F: VertexFunction,
    k: DirectionSpec,
    mode: str = "quadrature",
    order: int = GH_ORDER,
    n_samples: int = 100_000,
    seed: int = 0,
    threads: int = 1,
    step: float = FD_STEP,
) -> IbpResult:
    """Both sides of ``E[X^{k_P} f] = E[f sum <k'_i, db_i>]`` under the piecewise-linear Gaussian measure."""
    kprime = k.kprime
    if mode == "quadrature":
        inc, w = gauss_hermite_increments(partition, m.dim, order)
        lhs_v, rhs_v = _ibp_integrands(m, partition, F, kprime, inc, step)
        lhs = math.fsum(w * lhs_v)
        rhs = math.fsum(w * rhs_v)
        return IbpResult(mode, partition.n, lhs, rhs, lhs - rhs, 0.0)
    if mode != "mc":
        raise ConfigError(f"unknown mode {mode!r}")

    def work(rng, count):
        inc = rng.standard_normal((count, partition.n, m.dim)) * np.sqrt(partition.ds)[:, None]
        return _ibp_integrands(m, partition, F, kprime, inc, step)

    parts = replica_map(work, n_samples, seed, threads)
    lhs_v = np.concatenate([p[0] for p in parts])
    rhs_v = np.concatenate([p[1] for p in parts])
    lhs, _ = stats(lhs_v)
    rhs, _ = stats(rhs_v)
    res, se = stats(lhs_v - rhs_v)
    return IbpResult(mode, partition.n, lhs, rhs, res, se)


def limit_ibp_check(
    m: Manifold,
    partition: Partition,
    F: VertexFunction,
    k: DirectionSpec,
    n_samples: int,
    seed: int = 0,
    threads: int = 1,
) -> IbpResult:
    """Monte Carlo comparison of ``E[sum <grad_i F, u_i z(s_i)>]`` with ``E[F sum <k'_i, db_i>]``.

    Both sides use the same sampled paths; the residual's standard error is that of the paired difference.
    """
    if not m.closed_form:
        raise ConfigError("limit IBP check needs a closed-form manifold (constant Ricci curvature)")
    base = develop(m, DrivingPath(partition, np.zeros((partition.n, m.dim))))
    z = z_field(base, k).values

    def work(rng, count):
        inc = rng.standard_normal((count, partition.n, m.dim)) * np.sqrt(partition.ds)[:, None]
        verts, frames = batch_develop(m, inc)
        # u_i z(s_i) is tangent, so the ambient gradient needs no projection
        lhs = np.einsum("kia,kiaj,ij->k", F.gradient(verts), frames, z)
        rhs = F(verts) * np.einsum("ia,kia->k", k.kprime, inc)
        return lhs, rhs

    parts = replica_map(work, n_samples, seed, threads)
    lhs_v = np.concatenate([p[0] for p in parts])
    rhs_v = np.concatenate([p[1] for p in parts])
    res, se = stats(lhs_v - rhs_v)
    return IbpResult("limit", partition.n, stats(lhs_v)[0], stats(rhs_v)[0], res, se)


def kp_z_sup_error(m: Manifold, partition: Partition, direction, n_samples: int, seed: int = 0, threads: int = 1):
    """Mean and standard error of ``sup_i |h(s_i) - z(s_i)|`` over sampled paths on ``S^d``."""
    if not isinstance(m, Sphere):
        raise ConfigError("closed-form z requires the sphere model")
    kprime = np.broadcast_to(np.asarray(direction, dtype=float), (partition.n, m.dim))
    z = z_constant_curvature(m.dim, direction, partition.times)

    def work(rng, count):
        inc = rng.standard_normal((count, partition.n, m.dim)) * np.sqrt(partition.ds)[:, None]
        h = kernels.kp_sphere(inc, partition.ds, kprime)
        return (np.linalg.norm(h - z, axis=2).max(axis=1),)

    vals = np.concatenate([p[0] for p in replica_map(work, n_samples, seed, threads)])
    return stats(vals)
