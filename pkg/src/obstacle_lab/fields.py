"""Scalar field views: grid-backed (multilinear interpolation) and analytic.

Everything downstream (energies, sphere masses, rescalings) evaluates fields
through this interface, so solved grids and closed-form test fields share one
code path.
"""

from __future__ import annotations

import itertools

import numpy as np

from .geometry import Grid


class GridField:
    """Nodal values on a Grid, evaluated off-grid by multilinear interpolation.

    Gradients are centered differences at the nodes (one-sided on faces)
    interpolated componentwise, which keeps sphere sampling second order in h
    away from kinks of the underlying function.
    """

    def __init__(self, grid: Grid, values: np.ndarray):
        values = np.asarray(values, dtype=float)
        if values.shape != grid.shape:
            raise ValueError(f"values shape {values.shape} != grid shape {grid.shape}")
        self.grid = grid
        self.values = values
        self._grad_nodes = None

    @property
    def h(self) -> float:
        return self.grid.hmin

    def _grad_arrays(self):
        if self._grad_nodes is None:
            if self.grid.dim == 1:
                self._grad_nodes = [np.gradient(self.values, self.grid.axes[0])]
            else:
                self._grad_nodes = list(
                    np.gradient(self.values, *self.grid.axes, edge_order=1)
                )
        return self._grad_nodes

    def _interp(self, arr: np.ndarray, pts: np.ndarray) -> np.ndarray:
        g = self.grid
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        m, n = pts.shape
        idx, wts = [], []
        for a in range(n):
            t = (pts[:, a] - g.domain.lo[a]) / g.h[a]
            i = np.clip(np.floor(t).astype(np.int64), 0, g.shape[a] - 2)
            w = np.clip(t - i, 0.0, 1.0)
            idx.append(i)
            wts.append(w)
        out = np.zeros(m)
        for corner in itertools.product((0, 1), repeat=n):
            w = np.ones(m)
            ix = []
            for a, c in enumerate(corner):
                w = w * (wts[a] if c else 1.0 - wts[a])
                ix.append(idx[a] + c)
            out += w * arr[tuple(ix)]
        return out

    def value(self, pts) -> np.ndarray:
        return self._interp(self.values, pts)

    def gradient(self, pts) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        grads = self._grad_arrays()
        return np.stack([self._interp(gc, pts) for gc in grads], axis=1)


class AnalyticField:
    """Closed-form field given by callbacks.

    fn maps (m, n) points to (m,) values. grad_fn is optional; central
    differences with step fd_step fill in when it is absent.
    """

    def __init__(self, dim: int, fn, grad_fn=None, fd_step: float = 1e-6):
        self.dim = dim
        self.fn = fn
        self.grad_fn = grad_fn
        self.fd_step = fd_step
        self.h = 0.0  # no grid floor; quadrature tolerances treat it as exact

    def value(self, pts) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        return np.asarray(self.fn(pts), dtype=float)

    def gradient(self, pts) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        if self.grad_fn is not None:
            return np.asarray(self.grad_fn(pts), dtype=float)
        out = np.empty_like(pts)
        for a in range(pts.shape[1]):
            dp = np.zeros_like(pts)
            dp[:, a] = self.fd_step
            out[:, a] = (self.fn(pts + dp) - self.fn(pts - dp)) / (2 * self.fd_step)
        return out


def as_field(obj):
    """Accept an ObstacleSolution, GridField, or AnalyticField."""
    if hasattr(obj, "value") and hasattr(obj, "gradient"):
        return obj
    if hasattr(obj, "as_field"):
        return obj.as_field()
    raise TypeError(f"cannot interpret {type(obj).__name__} as a scalar field")
