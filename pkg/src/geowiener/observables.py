"""Functions of the vertex tuple ``(x_0, ..., x_n)`` used as Monte Carlo observables.

A :class:`VertexFunction` maps a stack of vertex arrays ``(N, n+1, D)`` to
``(N,)`` values and, when it is linear in ambient coordinates, reports its
exact ambient gradient.  Calling it on a :class:`~geowiener.montecarlo.PathBatch`
evaluates it on the batch's vertices.
"""
from __future__ import annotations

from typing import Callable

import numpy as np

from .errors import ConfigError


class VertexFunction:
    name = "vertex-function"

    def value(self, verts: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def gradient(self, verts: np.ndarray) -> np.ndarray:
        raise NotImplementedError(f"{self.name} has no analytic gradient")

    def __call__(self, arg) -> np.ndarray:
        verts = getattr(arg, "vertices", arg)
        return self.value(np.asarray(verts))

    def __repr__(self):
        return f"{type(self).__name__}({self.name!r})"


class Constant(VertexFunction):
    def __init__(self, c: float = 1.0):
        self.c = float(c)
        self.name = "one" if self.c == 1.0 else f"constant-{c:g}"

    def value(self, verts):
        return np.full(verts.shape[0], self.c)

    def gradient(self, verts):
        return np.zeros_like(verts)


class LinearEndpoint(VertexFunction):
    """``<x_n, a>``; the default ``a`` is the last ambient axis (the sphere's base point)."""

    def __init__(self, a=None, name: str = "endpoint_height"):
        self.a = None if a is None else np.asarray(a, dtype=float)
        self.name = name

    def _axis(self, D):
        if self.a is not None:
            return self.a
        a = np.zeros(D)
        a[-1] = 1.0
        return a

    def value(self, verts):
        return verts[:, -1] @ self._axis(verts.shape[-1])

    def gradient(self, verts):
        g = np.zeros_like(verts)
        g[:, -1] = self._axis(verts.shape[-1])
        return g


class LinearVertices(VertexFunction):
    """``sum_i <x_i, A_i>`` with one ambient covector per vertex."""

    def __init__(self, A, name: str = "linear_vertices"):
        self.A = np.asarray(A, dtype=float)
        self.name = name

    def value(self, verts):
        return np.einsum("kia,ia->k", verts, self.A)

    def gradient(self, verts):
        return np.broadcast_to(self.A, verts.shape).copy()


class EndpointSquare(VertexFunction):
    name = "endpoint_sq"

    def value(self, verts):
        return np.einsum("ka,ka->k", verts[:, -1], verts[:, -1])

    def gradient(self, verts):
        g = np.zeros_like(verts)
        g[:, -1] = 2.0 * verts[:, -1]
        return g


class Smooth(VertexFunction):
    """Wraps an arbitrary vectorised callable ``fn(verts) -> (N,)``."""

    def __init__(self, fn: Callable[[np.ndarray], np.ndarray], name: str = "smooth"):
        self.fn = fn
        self.name = name

    def value(self, verts):
        return np.asarray(self.fn(verts), dtype=float)


_REGISTRY = {
    "one": Constant,
    "endpoint_height": LinearEndpoint,
    "endpoint_sq": EndpointSquare,
}


def get_observable(name: str) -> VertexFunction:
    try:
        return _REGISTRY[name]()
    except KeyError:
        raise ConfigError(f"unknown observable {name!r}; choose from {sorted(_REGISTRY)}") from None
