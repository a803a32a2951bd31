"""Per-segment Jacobi matrices, the density rho_P and its curvature decomposition.

On a segment of length ``ds`` driven by ``db`` the tangent ``h`` (in parallel
frame coordinates) obeys ``h'' = A h`` with ``A = Omega(b', .) b'`` and
``b' = db / ds``.  ``Z`` solves the system with ``Z = 0, Z' = I`` at the segment
start and ``C`` the one with ``C = I, C' = 0``; both are reported at the segment
end, so ``h(s_i) = C h(s_{i-1}) + Z h'(s_{i-1}+)``.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError
from .kernels import sinc
from .manifolds import Flat, Frame, LevelSetHypersurface, Manifold, Sphere

RK4_STEP = 1e-3


@dataclass(frozen=True)
class SegmentJacobi:
    Z: np.ndarray
    C: np.ndarray
    ds: float
    db: np.ndarray
    degenerate: bool = False
    """True once ``det Z`` has reached zero somewhere on the segment (a conjugate point)."""

    @property
    def logdet(self) -> float:
        """``log det(Z / ds)``, ``-inf`` on degenerate segments."""
        if self.degenerate:
            return -math.inf
        sign, val = np.linalg.slogdet(self.Z / self.ds)
        return val if sign > 0 else -math.inf


def sphere_jacobi(db: np.ndarray, ds: float) -> SegmentJacobi:
    """Closed form on the unit sphere: sines across the direction of travel, linear along it."""
    db = np.asarray(db, dtype=float)
    d = db.size
    r = float(np.linalg.norm(db))
    eye = np.eye(d)
    if r == 0.0:
        return SegmentJacobi(ds * eye, eye.copy(), ds, db)
    par = np.outer(db, db) / (r * r)
    perp = eye - par
    Z = ds * (par + float(sinc(r)) * perp)
    C = par + math.cos(r) * perp
    return SegmentJacobi(Z, C, ds, db, degenerate=d > 1 and r >= math.pi)


def rk4_jacobi(m: LevelSetHypersurface, frame: Frame, db: np.ndarray, ds: float, h: float = RK4_STEP) -> SegmentJacobi:
    """Integrate ``Z'' = A(s) Z`` and ``C'' = A(s) C`` jointly with the developing frame.

    ``A(s)`` is re-evaluated at every RK4 stage from the transported frame, so
    it varies along the segment on non-symmetric backends.
    """
    db = np.asarray(db, dtype=float)
    d = m.dim
    D = m.ambient_dim
    bp = db / ds
    nf = D * (d + 1)
    nz = d * d

    def unpack(y):
        x = y[:D]
        V = y[D : D + nf].reshape(D, d + 1)
        rest = y[D + nf :].reshape(4, d, d)
        return x, V, rest

    def rhs(y):
        x, V, (Z, Zp, C, Cp) = unpack(y)
        A = m.jacobi_operator(Frame(x, V[:, 1:]), bp)
        dV = m.transport_derivative(x, V[:, 0], V)
        return np.concatenate([V[:, 0], dV.ravel(), Zp.ravel(), (A @ Z).ravel(), Cp.ravel(), (A @ C).ravel()])

    u = frame.u
    y = np.concatenate(
        [frame.x, np.column_stack([u @ bp, u]).ravel(), np.zeros(nz), np.eye(d).ravel(), np.eye(d).ravel(), np.zeros(nz)]
    )
    steps = max(1, math.ceil(ds / min(ds, h)))
    dt = ds / steps
    degenerate = False
    for _ in range(steps):
        k1 = rhs(y)
        k2 = rhs(y + 0.5 * dt * k1)
        k3 = rhs(y + 0.5 * dt * k2)
        k4 = rhs(y + dt * k3)
        y = y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if np.linalg.det(unpack(y)[2][0]) <= 0.0:
            degenerate = True
    _, _, (Z, _, C, _) = unpack(y)
    return SegmentJacobi(Z.copy(), C.copy(), ds, db, degenerate)


def segment_jacobi(m: Manifold, frame: Frame, db: np.ndarray, ds: float, h: float = RK4_STEP) -> SegmentJacobi:
    """Segment matrices ``(Z, C)``: closed form on flat space and the sphere, RK4 otherwise."""
    if ds <= 0:
        raise DomainError("segment length must be positive")
    db = np.asarray(db, dtype=float)
    if isinstance(m, Flat):
        eye = np.eye(m.dim)
        return SegmentJacobi(ds * eye, eye.copy(), ds, db)
    if isinstance(m, Sphere):
        return sphere_jacobi(db, ds)
    if isinstance(m, LevelSetHypersurface):
        return rk4_jacobi(m, frame, db, ds, h)
    raise DomainError(f"no Jacobi solver for {m!r}")


def expansion_remainder(m: Manifold, frame: Frame, db: np.ndarray, ds: float) -> np.ndarray:
    """``E = Z/ds - I - Omega(db, .) db / 6``, the remainder of the small-increment expansion."""
    seg = segment_jacobi(m, frame, db, ds)
    return seg.Z / ds - np.eye(m.dim) - m.jacobi_operator(frame, db) / 6.0


def expansion_bound(r: float, lam: float) -> float:
    """Operator-norm bound on the expansion remainder for ``|db| = r`` and curvature bound ``lam``."""
    return (2.0 * lam * r**3 + 0.5 * lam**2 * r**4) * math.cosh(math.sqrt(lam) * r) / 6.0


# -- determinant identity -----------------------------------------------------------------


def psi_det(U: np.ndarray) -> tuple[float, float]:
    """``(det(I - U), Psi(U))`` with ``Psi(U) = log det(I - U) + tr U``; requires ``|U| < 1``."""
    U = np.atleast_2d(np.asarray(U, dtype=float))
    if np.linalg.norm(U, 2) >= 1.0:
        raise DomainError("psi_det requires operator norm < 1")
    det = float(np.linalg.det(np.eye(U.shape[0]) - U))
    return det, math.log(det) + float(np.trace(U))


def psi_bound(U: np.ndarray) -> float:
    """``d |U|^2 / (1 - |U|)``, the bound on ``|Psi(U)|``."""
    U = np.atleast_2d(np.asarray(U, dtype=float))
    nrm = float(np.linalg.norm(U, 2))
    return U.shape[0] * nrm**2 / (1.0 - nrm)


# -- density --------------------------------------------------------------------------


@dataclass(frozen=True)
class DensityReport:
    rho: float
    seg_logdets: np.ndarray = field(repr=False)
    S_P: float
    R_P: float
    W_P: float
    degenerate: bool

    CSV_HEADER = ("sample_id", "rho", "S_P", "R_P", "W_P", "degenerate_flag")

    def to_dict(self) -> dict:
        return {
            "rho": self.rho,
            "seg_logdets": [float(v) for v in self.seg_logdets],
            "S_P": self.S_P,
            "R_P": self.R_P,
            "W_P": self.W_P,
            "degenerate": self.degenerate,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def rho_p(path) -> DensityReport:
    """Density of the G0 volume measure relative to the G1 one, with its curvature terms.

    ``rho = prod det(Z_i / ds_i)``; ``R_P = sum <Ric db_i, db_i>`` in the frame at the
    segment start; ``S_P = sum Scal(x_{i-1}) ds_i``; ``W_P = log rho + R_P / 6``.
    """
    m = path.manifold
    segs = path.segments
    logdets = np.array([s.logdet for s in segs])
    degenerate = bool(np.any([s.degenerate for s in segs]) or np.any(np.isneginf(logdets)))
    R_P = 0.0
    S_P = 0.0
    for i, seg in enumerate(segs):
        fr = path.frame(i)
        R_P += float(seg.db @ m.ricci(fr) @ seg.db)
        S_P += m.scalar(fr.x) * seg.ds
    log_rho = -math.inf if degenerate else math.fsum(logdets)
    rho = 0.0 if degenerate else math.exp(log_rho)
    return DensityReport(rho, logdets, S_P, R_P, log_rho + R_P / 6.0, degenerate)


def w_p_from_remainders(path) -> float:
    """``W_P`` recomputed as ``sum tr E_i + Psi(-U_i)`` with ``U_i = Omega(db,.)db/6 + E_i``."""
    m = path.manifold
    total = []
    for i, seg in enumerate(path.segments):
        B = m.jacobi_operator(path.frame(i), seg.db)
        E = seg.Z / seg.ds - np.eye(m.dim) - B / 6.0
        U = B / 6.0 + E
        total.append(float(np.trace(E)) + psi_det(-U)[1])
    return math.fsum(total)


def w_p_bound(path) -> float:
    """Explicit cubic-order bound on ``|W_P|`` assembled from the remainder and ``Psi`` bounds."""
    m = path.manifold
    lam = m.curvature_bound
    d = m.dim
    total = 0.0
    for seg in path.segments:
        r = float(np.linalg.norm(seg.db))
        e = expansion_bound(r, lam)
        u = lam * r * r / 6.0 + e
        if u >= 1.0:
            return math.inf
        total += d * e + d * u * u / (1.0 - u)
    return total


def sinh_bound(path) -> float:
    """``prod (sinh(sqrt(K) r_i) / (sqrt(K) r_i))^(d-1)`` with ``Ric >= -(d-1) K``."""
    K = path.manifold.ricci_lower
    d = path.manifold.dim
    r = np.linalg.norm(path.increments, axis=1)
    if K == 0.0:
        return 1.0
    x = math.sqrt(K) * r
    return float(np.prod(np.where(x > 0, np.sinh(x) / np.where(x > 0, x, 1.0), 1.0) ** (d - 1)))
