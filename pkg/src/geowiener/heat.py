"""Curvature-corrected Gaussian kernels, their Euler iteration and exact heat references.

``Q_s(x, y) = (2 pi s)^(-d/2) exp(-d(x, y)^2 / (2s) + kappa s (Scal(x) + Scal(y)))``
with ``kappa = 1/12`` by default.  Operators act on node values through a dense
matrix ``K[i, j] = Q_s(x_i, x_j) w_j`` built on a product quadrature grid.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import CapabilityError, ConfigError, DomainError
from .manifolds import Flat, Manifold, Sphere

KAPPA = 1.0 / 12.0
ROW_BLOCK = 512


def _distance_block(m: Manifold, X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    diff = np.linalg.norm(X[:, None, :] - Y[None, :, :], axis=-1)
    if isinstance(m, Sphere):
        # chord -> arc; accurate at small separations, defined everywhere
        return 2.0 * np.arcsin(np.minimum(0.5 * diff, 1.0))
    if isinstance(m, Flat):
        return diff
    raise CapabilityError(f"heat kernels are implemented for flat space and spheres, not {m!r}")


def q_kernel(m: Manifold, x, y, s: float, kappa: float = KAPPA):
    """Pointwise kernel value(s); ``x`` and ``y`` may be single points or stacks of points."""
    if s <= 0:
        raise DomainError("s must be positive")
    X = np.atleast_2d(np.asarray(x, dtype=float))
    Y = np.atleast_2d(np.asarray(y, dtype=float))
    d2 = _distance_block(m, X, Y) ** 2
    sc = m.scalar(None)
    val = (2.0 * math.pi * s) ** (-0.5 * m.dim) * np.exp(-d2 / (2.0 * s) + 2.0 * kappa * s * sc)
    if np.ndim(x) == 1 and np.ndim(y) == 1:
        return float(val[0, 0])
    return val


@dataclass(eq=False)
class HeatKernelGrid:
    """Quadrature nodes and weights on ``manifold`` plus the weighted kernel for step ``s``."""

    manifold: Manifold
    nodes: np.ndarray
    weights: np.ndarray
    shape: tuple
    s: float | None = None
    kappa: float = KAPPA
    kernel: np.ndarray | None = field(default=None, repr=False)

    @property
    def size(self) -> int:
        return self.weights.size

    def assemble(self, s: float, kappa: float = KAPPA) -> "HeatKernelGrid":
        """Build ``K[i, j] = Q_s(x_i, x_j) w_j`` row block by row block."""
        if s <= 0:
            raise DomainError("s must be positive")
        M = self.size
        K = np.empty((M, M))
        for a in range(0, M, ROW_BLOCK):
            b = min(a + ROW_BLOCK, M)
            K[a:b] = q_kernel(self.manifold, self.nodes[a:b], self.nodes, s, kappa)
        K *= self.weights[None, :]
        self.kernel, self.s, self.kappa = K, s, kappa
        return self

    def integrate(self, F: np.ndarray) -> float:
        return math.fsum(self.weights * F)

    def node_table(self) -> np.ndarray:
        """Nodes and weights side by side, for export."""
        return np.column_stack([self.nodes, self.weights])


def sphere_grid(n_theta: int, n_phi: int) -> HeatKernelGrid:
    """Gauss-Legendre in ``cos(theta)`` times uniform longitude on the unit 2-sphere."""
    if n_theta < 8 or n_phi < 8:
        raise ConfigError("grid resolution must be at least 8 in each direction")
    t, wt = np.polynomial.legendre.leggauss(n_theta)
    phi = 2.0 * math.pi * np.arange(n_phi) / n_phi
    st = np.sqrt(1.0 - t**2)
    nodes = np.stack(
        [np.outer(st, np.cos(phi)).ravel(), np.outer(st, np.sin(phi)).ravel(), np.repeat(t, n_phi)], axis=1
    )
    weights = np.repeat(wt, n_phi) * (2.0 * math.pi / n_phi)
    return HeatKernelGrid(Sphere(2), nodes, weights, (n_theta, n_phi))


def flat_grid(d: int, n_per_dim: int, s_total: float, width_factor: float = 6.0) -> HeatKernelGrid:
    """Tensor Gauss-Legendre grid on the box ``[-L, L]^d`` with ``L = width_factor sqrt(s_total)``."""
    if n_per_dim < 8:
        raise ConfigError("grid resolution must be at least 8")
    if s_total is None or s_total <= 0:
        raise ConfigError("flat grids need a positive total time for the truncation box")
    half = width_factor * math.sqrt(s_total)
    x, w = np.polynomial.legendre.leggauss(n_per_dim)
    x, w = half * x, half * w
    mesh = np.meshgrid(*([x] * d), indexing="ij")
    nodes = np.stack([g.ravel() for g in mesh], axis=1)
    weights = np.prod(np.stack([g.ravel() for g in np.meshgrid(*([w] * d), indexing="ij")], axis=1), axis=1)
    return HeatKernelGrid(Flat(d), nodes, weights, (n_per_dim,) * d)


def build_grid(m: Manifold, resolution, s: float | None = None, kappa: float = KAPPA, s_total: float | None = None) -> HeatKernelGrid:
    """Grid for ``m`` with kernel assembled for step ``s`` when given.

    ``resolution`` is ``(n_theta, n_phi)`` on the sphere and nodes per axis on flat space.
    """
    if isinstance(m, Sphere):
        if m.dim != 2:
            raise CapabilityError("sphere grids are implemented for S^2")
        nt, nph = (resolution, 2 * resolution) if np.isscalar(resolution) else resolution
        grid = sphere_grid(int(nt), int(nph))
    elif isinstance(m, Flat):
        if s_total is None:
            raise ConfigError("flat grids need s_total for the truncation box")
        grid = flat_grid(m.dim, int(resolution), s_total)
    else:
        raise CapabilityError(f"no quadrature grid for {m!r}")
    if s is not None:
        grid.assemble(s, kappa)
    return grid


def q_iterate(grid: HeatKernelGrid, F: np.ndarray, n: int, s_total: float) -> np.ndarray:
    """``Q_{s/n}^n F`` on node values."""
    F = np.asarray(F, dtype=float)
    if n == 0:
        return F.copy()
    if grid.kernel is None or not math.isclose(grid.s, s_total / n, rel_tol=1e-12):
        raise ConfigError(f"grid kernel was built for step {grid.s}, need {s_total / n}")
    out = F
    for _ in range(n):
        out = grid.kernel @ out
    return out


def legendre_heat_kernel(cos_theta: np.ndarray, s: float, tol: float = 1e-14) -> np.ndarray:
    """``sum_l (2l+1)/(4 pi) exp(-l(l+1)s/2) P_l(cos theta)`` on the unit 2-sphere."""
    t = np.asarray(cos_theta, dtype=float)
    p_prev = np.ones_like(t)
    p_cur = t.copy()
    total = p_prev / (4.0 * math.pi) + 3.0 / (4.0 * math.pi) * math.exp(-s) * p_cur
    l = 1
    while True:
        l += 1
        coef = (2 * l + 1) / (4.0 * math.pi) * math.exp(-0.5 * l * (l + 1) * s)
        p_prev, p_cur = p_cur, ((2 * l - 1) * t * p_cur - (l - 1) * p_prev) / l
        total = total + coef * p_cur
        if coef < tol:
            return total
        if l > 100_000:
            raise ConfigError("Legendre series did not converge; s is too small")


def reference_heat(grid: HeatKernelGrid, F: np.ndarray, s: float) -> np.ndarray:
    """``e^{(s/2) Delta} F`` at the nodes: spectral kernel on S^2, Gaussian convolution on flat space."""
    m = grid.manifold
    F = np.asarray(F, dtype=float)
    if s == 0:
        return F.copy()
    out = np.empty(grid.size)
    for a in range(0, grid.size, ROW_BLOCK):
        b = min(a + ROW_BLOCK, grid.size)
        if isinstance(m, Sphere):
            c = np.clip(grid.nodes[a:b] @ grid.nodes.T, -1.0, 1.0)
            rows = legendre_heat_kernel(c, s)
        elif isinstance(m, Flat):
            rows = q_kernel(m, grid.nodes[a:b], grid.nodes, s, 0.0)
        else:
            raise CapabilityError(f"no reference semigroup for {m!r}")
        out[a:b] = (rows * grid.weights) @ F
    return out


@dataclass(frozen=True)
class HeatRow:
    kappa: float
    n: int
    sup_error: float
    l2_error: float
    runtime: float

    CSV_HEADER = ("kappa", "n", "sup_error", "l2_error", "runtime")

    def row(self):
        return (self.kappa, self.n, self.sup_error, self.l2_error, self.runtime)


def heat_sweep(grid: HeatKernelGrid, F: np.ndarray, s: float, n_list, kappas=(KAPPA,), exact=None, budget=None) -> list[HeatRow]:
    """Relative sup and L2 errors of ``Q_{s/n}^n F`` against the exact semigroup for each ``(kappa, n)``."""
    ref = reference_heat(grid, F, s) if exact is None else np.asarray(exact, dtype=float)
    scale_sup = float(np.max(np.abs(ref)))
    scale_l2 = math.sqrt(grid.integrate(ref**2))
    rows = []
    for kappa in kappas:
        for n in n_list:
            t0 = time.perf_counter()
            grid.assemble(s / n, kappa)
            approx = q_iterate(grid, F, n, s)
            err = approx - ref
            rows.append(
                HeatRow(
                    float(kappa),
                    int(n),
                    float(np.max(np.abs(err))) / scale_sup,
                    math.sqrt(grid.integrate(err**2)) / scale_l2,
                    time.perf_counter() - t0,
                )
            )
            if budget is not None:
                budget.check()
    grid.kernel = None
    return rows
