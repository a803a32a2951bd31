"""Partitions, piecewise-linear driving paths, their developments and tangent calculus.

A :class:`GeodesicPath` stores its driving increments together with the vertices
and parallel frames at partition points; intermediate times are rebuilt on
demand from the segment-local geodesic.  Tangent vectors along such a path are
:class:`PathTangent` objects: frame coordinates ``h(s_i) = u_i^{-1} X(s_i)``
plus right derivatives ``h'(s_{i-1}+)``, with ``h`` solving the Jacobi equation
on every segment.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DevelopmentRangeError, DomainError, PartitionError
from .jacobi import SegmentJacobi, segment_jacobi
from .manifolds import Frame, Manifold, gram_schmidt

QUAD_ORDER = 5


def _readonly(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Partition:
    """``0 = s_0 < s_1 < ... < s_n = 1``."""

    times: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        if t.ndim != 1 or t.size < 2:
            raise PartitionError("a partition needs at least two points")
        if t[0] != 0.0 or t[-1] != 1.0:
            raise PartitionError("partition must start at 0 and end at 1 exactly")
        if np.any(np.diff(t) <= 0):
            raise PartitionError("partition times must be strictly increasing")
        object.__setattr__(self, "times", _readonly(t))

    @classmethod
    def uniform(cls, n: int) -> "Partition":
        if n < 1:
            raise PartitionError("need n >= 1 segments")
        t = np.arange(n + 1) / n
        t[-1] = 1.0
        return cls(t)

    @property
    def n(self) -> int:
        return self.times.size - 1

    @property
    def ds(self) -> np.ndarray:
        return np.diff(self.times)

    @property
    def mesh(self) -> float:
        return float(self.ds.max())

    def segment_of(self, s: float) -> int:
        """Index ``i`` (1-based) of the segment ``[s_{i-1}, s_i]`` containing ``s``."""
        if not 0.0 <= s <= 1.0:
            raise DomainError("time outside [0, 1]")
        return int(min(max(np.searchsorted(self.times, s, side="left"), 1), self.n))

    def coarsening_indices(self, coarse: "Partition") -> np.ndarray:
        """Positions of ``coarse`` times inside this partition (it must refine ``coarse``)."""
        idx = np.searchsorted(self.times, coarse.times)
        idx = np.clip(idx, 0, self.n)
        if not np.allclose(self.times[idx], coarse.times, rtol=0, atol=1e-14):
            raise PartitionError("partition does not refine the requested coarse partition")
        return idx

    def __eq__(self, other):
        return isinstance(other, Partition) and np.array_equal(self.times, other.times)

    def __hash__(self):
        return hash(self.times.tobytes())


def restrict_increments(fine: Partition, inc: np.ndarray, coarse: Partition) -> np.ndarray:
    """Increments of the same Euclidean path over a coarser partition (leading axes preserved)."""
    idx = fine.coarsening_indices(coarse)
    csum = np.concatenate([np.zeros_like(inc[..., :1, :]), np.cumsum(inc, axis=-2)], axis=-2)
    return np.diff(csum[..., idx, :], axis=-2)


@dataclass(frozen=True, eq=False)
class DrivingPath:
    """A piecewise-linear path in R^d stored by its increments."""

    partition: Partition
    increments: np.ndarray

    def __post_init__(self):
        inc = np.asarray(self.increments, dtype=float)
        if inc.ndim != 2 or inc.shape[0] != self.partition.n:
            raise DomainError(f"increments must have shape (n={self.partition.n}, d)")
        if not np.all(np.isfinite(inc)):
            raise DomainError("increments must be finite")
        object.__setattr__(self, "increments", _readonly(inc))

    @property
    def d(self) -> int:
        return self.increments.shape[1]

    def values(self) -> np.ndarray:
        """``b(s_i)`` for ``i = 0..n``."""
        out = np.zeros((self.partition.n + 1, self.d))
        np.cumsum(self.increments, axis=0, out=out[1:])
        return out

    @classmethod
    def from_values(cls, partition: Partition, values) -> "DrivingPath":
        v = np.asarray(values, dtype=float)
        return cls(partition, np.diff(v, axis=0))

    def to_json(self) -> str:
        return json.dumps(
            {"partition": self.partition.times.tolist(), "d": self.d, "increments": self.increments.tolist()}
        )

    @classmethod
    def from_json(cls, text: str) -> "DrivingPath":
        try:
            obj = json.loads(text)
            part = Partition(obj["partition"])
            inc = np.asarray(obj["increments"], dtype=float).reshape(part.n, int(obj["d"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise DomainError(f"malformed path JSON: {exc}") from exc
        return cls(part, inc)


@dataclass(frozen=True, eq=False)
class GeodesicPath:
    """A piecewise geodesic on ``manifold`` with its parallel frames at partition points."""

    manifold: Manifold
    partition: Partition
    increments: np.ndarray
    vertices: np.ndarray
    frames: np.ndarray
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def n(self) -> int:
        return self.partition.n

    @property
    def driving(self) -> DrivingPath:
        return DrivingPath(self.partition, self.increments)

    def frame(self, i: int) -> Frame:
        return Frame(self.vertices[i], self.frames[i])

    @property
    def velocities(self) -> np.ndarray:
        """Frame-coordinate velocity ``b'`` on each segment."""
        return self.increments / self.partition.ds[:, None]

    @property
    def segments(self) -> list[SegmentJacobi]:
        if "segments" not in self._cache:
            ds = self.partition.ds
            self._cache["segments"] = [
                segment_jacobi(self.manifold, self.frame(i), self.increments[i], ds[i]) for i in range(self.n)
            ]
        return self._cache["segments"]

    def segment_at(self, i: int, tau: float) -> SegmentJacobi:
        """Jacobi matrices after time ``tau`` into segment ``i`` (1-based)."""
        ds = self.partition.ds[i - 1]
        if tau == ds:
            return self.segments[i - 1]
        return segment_jacobi(self.manifold, self.frame(i - 1), self.increments[i - 1] * (tau / ds), tau)

    def frame_at(self, s: float) -> Frame:
        i = self.partition.segment_of(s)
        tau = s - self.partition.times[i - 1]
        if tau == 0.0:
            return self.frame(i - 1)
        return self.manifold.step(self.frame(i - 1), self.increments[i - 1] * (tau / self.partition.ds[i - 1]))


def develop(m: Manifold, b: DrivingPath, frame: Frame | None = None) -> GeodesicPath:
    """Roll the Euclidean path ``b`` onto ``m`` starting from ``frame`` (default: the base frame)."""
    if b.d != m.dim:
        raise DomainError(f"driving path has d={b.d}, manifold has dim {m.dim}")
    lengths = np.linalg.norm(b.increments, axis=1)
    if np.any(lengths >= m.injectivity_radius):
        raise DevelopmentRangeError("an increment reaches the injectivity radius")
    fr = m.base_frame if frame is None else frame
    verts = [fr.x]
    frames = [fr.u]
    for a in b.increments:
        fr = m.step(fr, a)
        verts.append(fr.x)
        frames.append(fr.u)
    return GeodesicPath(m, b.partition, b.increments, np.array(verts), np.array(frames))


def antidevelop_vertices(m: Manifold, partition: Partition, vertices, frame: Frame | None = None) -> GeodesicPath:
    """Recover the driving increments (and frames) of the piecewise geodesic through ``vertices``."""
    vertices = np.asarray(vertices, dtype=float)
    if vertices.shape[0] != partition.n + 1:
        raise DomainError("need n + 1 vertices")
    fr = m.base_frame if frame is None else frame
    if not np.allclose(vertices[0], fr.x, atol=1e-12):
        raise DomainError("first vertex must be the frame's base point")
    incs = []
    frames = [fr.u]
    for i in range(partition.n):
        v = m.log(fr.x, vertices[i + 1])
        incs.append(fr.inverse(v))
        u1 = m.transport(fr.x, v, fr.u)
        fr = Frame(vertices[i + 1], gram_schmidt(u1, m.normal(vertices[i + 1])))
        frames.append(fr.u)
    return GeodesicPath(m, partition, np.array(incs), vertices.copy(), np.array(frames))


def antidevelop(sigma: GeodesicPath) -> DrivingPath:
    """Driving path of ``sigma`` computed from its vertices alone."""
    return antidevelop_vertices(sigma.manifold, sigma.partition, sigma.vertices, sigma.frame(0)).driving


def energy(p: DrivingPath | GeodesicPath) -> float:
    """``sum |db_i|^2 / ds_i``."""
    inc = p.increments
    return math.fsum(np.einsum("ia,ia->i", inc, inc) / p.partition.ds)


def e_p_vertices(m: Manifold, partition: Partition, vertices) -> float:
    """``sum d(x_{i-1}, x_i)^2 / ds_i`` over consecutive vertices."""
    vertices = np.asarray(vertices, dtype=float)
    ds = partition.ds
    return math.fsum(m.dist(vertices[i], vertices[i + 1]) ** 2 / ds[i] for i in range(partition.n))


# -- tangents ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class PathTangent:
    """Jacobi tangent along ``path``: values ``h`` at ``s_0..s_n`` and right derivatives ``hprime``."""

    path: GeodesicPath
    h: np.ndarray
    hprime: np.ndarray

    def ambient(self) -> np.ndarray:
        """``X(s_i) = u_i h(s_i)`` in ambient coordinates."""
        return np.einsum("iaj,ij->ia", self.path.frames, self.h)

    def value_at(self, s: float) -> np.ndarray:
        """``h(s)`` at an arbitrary time via the partial-segment Jacobi matrices."""
        i = self.path.partition.segment_of(s)
        tau = s - self.path.partition.times[i - 1]
        if tau == 0.0:
            return self.h[i - 1].copy()
        seg = self.path.segment_at(i, tau)
        return seg.C @ self.h[i - 1] + seg.Z @ self.hprime[i - 1]


def jacobi_tangent(path: GeodesicPath, hprime) -> PathTangent:
    """Tangent with ``h(0) = 0`` and the given right-derivative kicks, propagated segment by segment."""
    hprime = np.array(np.broadcast_to(hprime, path.increments.shape), dtype=float)
    h = np.zeros((path.n + 1, path.manifold.dim))
    for i, seg in enumerate(path.segments):
        h[i + 1] = seg.C @ h[i] + seg.Z @ hprime[i]
    return PathTangent(path, h, hprime)


def tangent_from_values(path: GeodesicPath, h) -> PathTangent:
    """Tangent through prescribed frame-coordinate values ``h(s_i)``, ``h(0) = 0``."""
    h = np.array(h, dtype=float)
    if np.any(h[0] != 0.0):
        raise DomainError("tangent must vanish at s = 0")
    hp = np.array([np.linalg.solve(seg.Z, h[i + 1] - seg.C @ h[i]) for i, seg in enumerate(path.segments)])
    return PathTangent(path, h, hp)


def _gauss(order: int):
    x, w = np.polynomial.legendre.leggauss(order)
    return 0.5 * (x + 1.0), 0.5 * w


def _curvature_at(path: GeodesicPath, i: int, tau: float, hval: np.ndarray) -> np.ndarray:
    """``Omega_{u(r)}(b', h(r))`` at time ``tau`` into segment ``i`` (1-based)."""
    m = path.manifold
    bp = path.velocities[i - 1]
    if m.closed_form:
        return m.curvature(path.frame(i - 1), bp, hval)
    fr = path.frame_at(path.partition.times[i - 1] + tau)
    return m.curvature(fr, bp, hval)


def _segment_curvature_integrals(path, i, h0, hp, order):
    """``(int Omega dr, int (s_i - r) Omega dr)`` over segment ``i`` for the tangent through ``h0, hp``."""
    ds = path.partition.ds[i - 1]
    nodes, weights = _gauss(order)
    d = path.manifold.dim
    q = np.zeros((d, d))
    qq = np.zeros((d, d))
    for t, w in zip(nodes, weights):
        tau = t * ds
        seg = path.segment_at(i, tau)
        om = _curvature_at(path, i, tau, seg.C @ h0 + seg.Z @ hp)
        q += w * ds * om
        qq += w * ds * (ds - tau) * om
    return q, qq


def q_form(path: GeodesicPath, X: PathTangent, s: float, order: int = QUAD_ORDER) -> np.ndarray:
    """``q_s(X) = int_0^s Omega_{u(r)}(b'(r), h(r)) dr`` by per-segment Gauss-Legendre quadrature."""
    part = path.partition
    d = path.manifold.dim
    q = np.zeros((d, d))
    if s <= 0.0:
        return q
    nodes, weights = _gauss(order)
    last = part.segment_of(s)
    for i in range(1, last + 1):
        a = part.times[i - 1]
        length = min(part.times[i], s) - a
        for t, w in zip(nodes, weights):
            tau = t * length
            seg = path.segment_at(i, tau)
            hval = seg.C @ X.h[i - 1] + seg.Z @ X.hprime[i - 1]
            q += w * length * _curvature_at(path, i, tau, hval)
    return q


def pullback_differential(path: GeodesicPath, X: PathTangent, order: int = QUAD_ORDER) -> np.ndarray:
    """Values at partition points of ``u^{-1} X(s) - int_0^s q_r(X) b'(r) dr``."""
    d = path.manifold.dim
    out = np.zeros((path.n + 1, d))
    q = np.zeros((d, d))
    drift = np.zeros(d)
    bps = path.velocities
    for i in range(1, path.n + 1):
        ds = path.partition.ds[i - 1]
        qi, qq = _segment_curvature_integrals(path, i, X.h[i - 1], X.hprime[i - 1], order)
        drift += (ds * q + qq) @ bps[i - 1]
        q += qi
        out[i] = X.h[i] - drift
    return out


def pushforward(path: GeodesicPath, eta, order: int = QUAD_ORDER) -> PathTangent:
    """Tangent ``X`` with pullback ``eta`` (increments of a piecewise-linear direction).

    Inverts :func:`pullback_differential` segment by segment: the kick at
    ``s_{i-1}+`` is ``eta'_i + q_{s_{i-1}}(X) b'_i``.
    """
    eta = np.asarray(eta, dtype=float)
    ds = path.partition.ds
    d = path.manifold.dim
    h = np.zeros((path.n + 1, d))
    hp = np.zeros((path.n, d))
    q = np.zeros((d, d))
    bps = path.velocities
    for i in range(1, path.n + 1):
        hp[i - 1] = eta[i - 1] / ds[i - 1] + q @ bps[i - 1]
        seg = path.segments[i - 1]
        h[i] = seg.C @ h[i - 1] + seg.Z @ hp[i - 1]
        q += _segment_curvature_integrals(path, i, h[i - 1], hp[i - 1], order)[0]
    return PathTangent(path, h, hp)
