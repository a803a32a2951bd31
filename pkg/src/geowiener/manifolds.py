"""Riemannian manifold models: flat space, the round unit sphere and an RK4 level-set backend.

Points and tangent vectors live in ambient coordinates.  A frame ``u`` is an
``(ambient_dim, dim)`` matrix whose columns are an orthonormal basis of the
tangent space, i.e. the isometry ``R^d -> T_x M``.  Curvature is reported in
frame coordinates: ``curvature(frame, a, b)`` is the ``d x d`` matrix of
``c -> u^{-1} R(ua, ub) u c`` with the convention that on the unit sphere
``Omega(a, b) c = <b, c> a - <a, c> b``.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import ConfigError, CutLocusError, DomainError

TANGENT_TOL = 1e-8
CUT_LOCUS_MARGIN = 1e-9


@dataclass(frozen=True)
class Frame:
    """A point ``x`` together with an orthonormal tangent basis ``u`` (columns)."""

    x: np.ndarray
    u: np.ndarray

    @property
    def dim(self) -> int:
        return self.u.shape[1]

    def apply(self, a: np.ndarray) -> np.ndarray:
        """The tangent vector ``u a``."""
        return self.u @ np.asarray(a, dtype=float)

    def inverse(self, w: np.ndarray) -> np.ndarray:
        """Frame coordinates ``u^{-1} w`` of a tangent vector."""
        return self.u.T @ np.asarray(w, dtype=float)

    def orthonormality_defect(self) -> float:
        return float(np.max(np.abs(self.u.T @ self.u - np.eye(self.dim))))


def gram_schmidt(u: np.ndarray, normal: np.ndarray | None = None) -> np.ndarray:
    """Modified Gram-Schmidt on the columns of ``u``, after removing a unit ``normal``."""
    q = np.array(u, dtype=float, copy=True)
    if normal is not None:
        q -= np.outer(normal, normal @ q)
    for j in range(q.shape[1]):
        for k in range(j):
            q[:, j] -= (q[:, k] @ q[:, j]) * q[:, k]
        q[:, j] /= np.linalg.norm(q[:, j])
    return q


def _rk4(rhs: Callable[[np.ndarray], np.ndarray], y: np.ndarray, t: float, steps: int) -> np.ndarray:
    h = t / steps
    for _ in range(steps):
        k1 = rhs(y)
        k2 = rhs(y + 0.5 * h * k1)
        k3 = rhs(y + 0.5 * h * k2)
        k4 = rhs(y + h * k3)
        y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return y


class Manifold:
    """Common interface.  Subclasses implement the geometric primitives."""

    name: str
    dim: int
    ambient_dim: int
    injectivity_radius: float
    curvature_bound: float
    """``Lambda``: a bound on the curvature operator norm (sectional curvatures in ``[-Lambda, Lambda]``)."""
    ricci_lower: float
    """``K >= 0`` with ``Ric >= -(d-1) K``."""
    closed_form = False

    # -- base data -----------------------------------------------------------------
    @property
    def base_point(self) -> np.ndarray:
        raise NotImplementedError

    @property
    def base_frame(self) -> Frame:
        raise NotImplementedError

    # -- geometry --------------------------------------------------------------------
    def normal(self, x: np.ndarray) -> np.ndarray | None:
        """Unit normal of an embedded hypersurface, ``None`` for flat space."""
        return None

    def project(self, x: np.ndarray, w: np.ndarray) -> np.ndarray:
        """Orthogonal projection of ambient vector(s) onto ``T_x M``."""
        n = self.normal(x)
        w = np.asarray(w, dtype=float)
        if n is None:
            return w.copy()
        return w - np.multiply.outer(n, n @ w) if w.ndim == 2 else w - (n @ w) * n

    def check_tangent(self, x: np.ndarray, v: np.ndarray) -> None:
        n = self.normal(x)
        if n is None:
            return
        v = np.asarray(v, dtype=float)
        if abs(n @ v) > TANGENT_TOL * max(1.0, float(np.linalg.norm(v))):
            raise DomainError(f"vector is not tangent at x (normal component {n @ v:.3e})")

    def exp(self, x: np.ndarray, v: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def log(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def dist(self, x: np.ndarray, y: np.ndarray) -> float:
        return float(np.linalg.norm(self.log(x, y)))

    def transport(self, x: np.ndarray, v: np.ndarray, w: np.ndarray) -> np.ndarray:
        """Parallel transport of ``w`` (a vector or columns of a matrix) along ``s -> exp(x, s v)``, ``s in [0, 1]``."""
        raise NotImplementedError

    def step(self, frame: Frame, a: np.ndarray) -> Frame:
        """Develop one straight segment: move along ``u a`` and carry the frame with it."""
        v = frame.apply(a)
        x1 = self.exp(frame.x, v)
        u1 = self.transport(frame.x, v, frame.u)
        return Frame(x1, gram_schmidt(u1, self.normal(x1)))

    def shape_operator(self, frame: Frame) -> np.ndarray:
        """Second fundamental form in frame coordinates (zero matrix for flat space)."""
        raise NotImplementedError

    def curvature(self, frame: Frame, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        s = self.shape_operator(frame)
        sa, sb = s @ np.asarray(a, float), s @ np.asarray(b, float)
        return np.outer(sa, sb) - np.outer(sb, sa)

    def jacobi_operator(self, frame: Frame, a: np.ndarray) -> np.ndarray:
        """Matrix of ``h -> Omega(a, h) a``."""
        s = self.shape_operator(frame)
        a = np.asarray(a, float)
        sa = s @ a
        return np.outer(sa, sa) - (a @ sa) * s

    def ricci(self, frame: Frame) -> np.ndarray:
        s = self.shape_operator(frame)
        return np.trace(s) * s - s @ s

    def scalar(self, x: np.ndarray) -> float:
        raise NotImplementedError

    def __repr__(self) -> str:
        return f"{type(self).__name__}({self.name!r})"


class Flat(Manifold):
    """Euclidean space R^d."""

    closed_form = True

    def __init__(self, d: int):
        if d < 1:
            raise ConfigError("dimension must be >= 1")
        self.dim = self.ambient_dim = d
        self.name = f"flat-{d}"
        self.injectivity_radius = math.inf
        self.curvature_bound = 0.0
        self.ricci_lower = 0.0

    @property
    def base_point(self):
        return np.zeros(self.dim)

    @property
    def base_frame(self):
        return Frame(np.zeros(self.dim), np.eye(self.dim))

    def exp(self, x, v):
        return np.asarray(x, float) + np.asarray(v, float)

    def log(self, x, y):
        return np.asarray(y, float) - np.asarray(x, float)

    def transport(self, x, v, w):
        return np.array(w, dtype=float, copy=True)

    def step(self, frame, a):
        return Frame(frame.x + frame.apply(a), frame.u.copy())

    def shape_operator(self, frame):
        return np.zeros((self.dim, self.dim))

    def curvature(self, frame, a, b):
        return np.zeros((self.dim, self.dim))

    def jacobi_operator(self, frame, a):
        return np.zeros((self.dim, self.dim))

    def ricci(self, frame):
        return np.zeros((self.dim, self.dim))

    def scalar(self, x):
        return 0.0


class Sphere(Manifold):
    """The unit sphere S^d in R^{d+1}; base point is the last basis vector."""

    closed_form = True

    def __init__(self, d: int):
        if d < 1:
            raise ConfigError("dimension must be >= 1")
        self.dim = d
        self.ambient_dim = d + 1
        self.name = f"sphere-{d}"
        self.injectivity_radius = math.pi
        self.curvature_bound = 1.0
        self.ricci_lower = 0.0

    @property
    def base_point(self):
        o = np.zeros(self.ambient_dim)
        o[-1] = 1.0
        return o

    @property
    def base_frame(self):
        return Frame(self.base_point, np.eye(self.ambient_dim)[:, : self.dim])

    def normal(self, x):
        return np.asarray(x, float)

    def exp(self, x, v):
        x = np.asarray(x, float)
        v = np.asarray(v, float)
        self.check_tangent(x, v)
        th = float(np.linalg.norm(v))
        if th == 0.0:
            return x.copy()
        y = math.cos(th) * x + (math.sin(th) / th) * v
        return y / np.linalg.norm(y)

    def log(self, x, y):
        x = np.asarray(x, float)
        y = np.asarray(y, float)
        c = float(x @ y)
        w = y - c * x
        sn = float(np.linalg.norm(w))
        th = math.atan2(sn, c)
        if th >= self.injectivity_radius - CUT_LOCUS_MARGIN:
            raise CutLocusError(f"points at distance {th!r} reach the cut locus")
        if sn == 0.0:
            return np.zeros_like(x)
        return (th / sn) * w

    def transport(self, x, v, w):
        x = np.asarray(x, float)
        v = np.asarray(v, float)
        w = np.asarray(w, float)
        self.check_tangent(x, v)
        th = float(np.linalg.norm(v))
        if th == 0.0:
            return w.copy()
        e = v / th
        p = e @ w
        rot = (math.cos(th) - 1.0) * e - math.sin(th) * x
        return w + (np.multiply.outer(rot, p) if w.ndim == 2 else p * rot)

    def shape_operator(self, frame):
        return np.eye(self.dim)

    def curvature(self, frame, a, b):
        a = np.asarray(a, float)
        b = np.asarray(b, float)
        return np.outer(a, b) - np.outer(b, a)

    def jacobi_operator(self, frame, a):
        a = np.asarray(a, float)
        return np.outer(a, a) - (a @ a) * np.eye(self.dim)

    def ricci(self, frame):
        return (self.dim - 1) * np.eye(self.dim)

    def scalar(self, x):
        return float(self.dim * (self.dim - 1))


class LevelSetHypersurface(Manifold):
    """Generic hypersurface ``{F = 0}`` in R^{d+1} with geometry integrated by RK4.

    Geodesics and parallel transport solve the frame-bundle ODE
    ``x' = v``, ``W' = -n <v, S W>`` with ``n`` the unit normal and ``S`` the
    shape operator ``P Hess F P / |grad F|``.  Curvature follows from the Gauss
    equation.  Used as an independent oracle for the closed-form models.
    """

    def __init__(
        self,
        name: str,
        dim: int,
        level: Callable[[np.ndarray], float],
        grad: Callable[[np.ndarray], np.ndarray],
        hess: Callable[[np.ndarray], np.ndarray],
        base_frame: Frame,
        injectivity_radius: float,
        curvature_bound: float,
        ricci_lower: float = 0.0,
        arc_step: float = 1e-3,
    ):
        self.name = name
        self.dim = dim
        self.ambient_dim = dim + 1
        self._level, self._grad, self._hess = level, grad, hess
        self._base = base_frame
        self.injectivity_radius = injectivity_radius
        self.curvature_bound = curvature_bound
        self.ricci_lower = ricci_lower
        self.arc_step = arc_step

    @property
    def base_point(self):
        return self._base.x.copy()

    @property
    def base_frame(self):
        return Frame(self._base.x.copy(), self._base.u.copy())

    def normal(self, x):
        g = self._grad(x)
        return g / np.linalg.norm(g)

    def ambient_shape(self, x: np.ndarray) -> np.ndarray:
        g = self._grad(x)
        return self._hess(x) / np.linalg.norm(g)

    def shape_operator(self, frame):
        return frame.u.T @ self.ambient_shape(frame.x) @ frame.u

    def scalar(self, x):
        p = np.eye(self.ambient_dim) - np.outer(self.normal(x), self.normal(x))
        s = p @ self.ambient_shape(x) @ p
        return float(np.trace(s) ** 2 - np.trace(s @ s))

    def transport_derivative(self, x: np.ndarray, vel: np.ndarray, w: np.ndarray) -> np.ndarray:
        """``dW/dt = -n <vel, S W>`` for tangent columns ``W`` carried along velocity ``vel``."""
        g = self._grad(x)
        ng = np.linalg.norm(g)
        return -np.outer(g / ng, (self._hess(x) @ vel) @ w) / ng

    def _retract(self, x: np.ndarray) -> np.ndarray:
        for _ in range(3):
            g = self._grad(x)
            x = x - self._level(x) * g / (g @ g)
        return x

    def _flow(self, x: np.ndarray, vel: np.ndarray, w: np.ndarray, t: float = 1.0, steps: int | None = None):
        """Integrate position, velocity and the columns of ``w`` along the geodesic."""
        D = self.ambient_dim
        k = w.shape[1]

        def rhs(y):
            vv = y[D:].reshape(D, k + 1)
            return np.concatenate([vv[:, 0], self.transport_derivative(y[:D], vv[:, 0], vv).ravel()])

        y0 = np.concatenate([x, np.column_stack([vel, w]).ravel()])
        if steps is None:
            steps = max(4, math.ceil(t * float(np.linalg.norm(vel)) / self.arc_step))
        y = _rk4(rhs, y0, t, steps)
        x1 = self._retract(y[:D])
        vv = self.project(x1, y[D:].reshape(D, k + 1))
        return x1, vv[:, 0], vv[:, 1:]

    def exp(self, x, v):
        x = np.asarray(x, float)
        v = np.asarray(v, float)
        self.check_tangent(x, v)
        return self._flow(x, v, np.zeros((self.ambient_dim, 0)))[0]

    def transport(self, x, v, w):
        x = np.asarray(x, float)
        v = np.asarray(v, float)
        w = np.asarray(w, float)
        self.check_tangent(x, v)
        cols = w[:, None] if w.ndim == 1 else w
        out = self._flow(x, v, cols)[2]
        return out[:, 0] if w.ndim == 1 else out

    def step(self, frame, a):
        v = frame.apply(a)
        x1, _, u1 = self._flow(frame.x, v, frame.u)
        return Frame(x1, gram_schmidt(u1, self.normal(x1)))

    def log(self, x, y, tol: float = 1e-13, max_iter: int = 50):
        """Shooting method: Newton iteration on frame coordinates of the initial velocity."""
        x = np.asarray(x, float)
        y = np.asarray(y, float)
        n = self.normal(x)
        basis = gram_schmidt(np.eye(self.ambient_dim)[:, np.argsort(np.abs(n))[: self.dim]], n)
        a = basis.T @ (y - x)
        fd = 1e-7
        for _ in range(max_iter):
            r = self.exp(x, basis @ a) - y
            if np.linalg.norm(r) < tol:
                break
            jac = np.empty((self.ambient_dim, self.dim))
            for j in range(self.dim):
                da = np.zeros(self.dim)
                da[j] = fd
                jac[:, j] = (self.exp(x, basis @ (a + da)) - self.exp(x, basis @ (a - da))) / (2 * fd)
            a = a - np.linalg.lstsq(jac, r, rcond=None)[0]
        v = basis @ a
        if np.linalg.norm(v) >= self.injectivity_radius - CUT_LOCUS_MARGIN:
            raise CutLocusError("shooting solution reaches the cut locus")
        return v


def rk4_sphere(d: int, arc_step: float = 1e-3) -> LevelSetHypersurface:
    """The unit sphere through the generic RK4 backend (oracle for :class:`Sphere`)."""
    D = d + 1
    base = Sphere(d).base_frame
    return LevelSetHypersurface(
        f"sphere-rk4-{d}",
        d,
        level=lambda x: float(x @ x - 1.0),
        grad=lambda x: 2.0 * x,
        hess=lambda x: 2.0 * np.eye(D),
        base_frame=base,
        injectivity_radius=math.pi,
        curvature_bound=1.0,
        arc_step=arc_step,
    )


def ellipsoid(axes, arc_step: float = 1e-3) -> LevelSetHypersurface:
    """Ellipsoid ``sum x_i^2 / a_i^2 = 1``; base point on the last axis.

    The injectivity radius is the conservative ``pi / sqrt(K_max)``.
    """
    a = np.asarray(axes, dtype=float)
    d = a.size - 1
    inv = 1.0 / a**2
    base_x = np.zeros(d + 1)
    base_x[-1] = a[-1]
    k_max = (a.max() / a.min() ** 2) ** 2
    return LevelSetHypersurface(
        "ellipsoid-" + ",".join(f"{v:g}" for v in a),
        d,
        level=lambda x: float(x @ (inv * x) - 1.0),
        grad=lambda x: 2.0 * inv * x,
        hess=lambda x: np.diag(2.0 * inv),
        base_frame=Frame(base_x, np.eye(d + 1)[:, :d]),
        injectivity_radius=math.pi / math.sqrt(k_max),
        curvature_bound=k_max,
        arc_step=arc_step,
    )


_NAME = re.compile(r"^(flat|sphere|sphere-rk4)-(\d+)$")


def get_manifold(name: str) -> Manifold:
    """Resolve ``flat-d``, ``sphere-d`` or ``sphere-rk4-d``."""
    m = _NAME.match(name.strip())
    if not m:
        raise ConfigError(f"unknown manifold {name!r}; expected flat-d, sphere-d or sphere-rk4-d")
    kind, d = m.group(1), int(m.group(2))
    if d < 1:
        raise ConfigError("manifold dimension must be >= 1")
    if kind == "flat":
        return Flat(d)
    if kind == "sphere":
        return Sphere(d)
    return rk4_sphere(d)
