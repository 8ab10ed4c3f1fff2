"""Free boundary extraction and nondegeneracy checks.

Gamma = boundary of the positivity set {u > 0} inside the domain. On a grid
the set is located by sign changes of u - threshold along grid edges, with
the crossing placed by linear interpolation, so extracted points sit within
one cell of the true interface.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from itertools import product

import numpy as np

from .errors import EmptyInterior, RadiusOutOfDomain
from .fields import as_field
from .quadrature import sphere_rule


@dataclass
class FreeBoundarySet:
    """Interface sample points with outward data.

    orientations[k] is the unit direction of increasing u at points[k],
    i.e. it points from the contact set into the positivity set.
    """

    points: np.ndarray
    orientations: np.ndarray
    threshold: float
    grid: object = None
    meta: dict = dc_field(default_factory=dict)

    def __len__(self):
        return len(self.points)

    def to_rows(self):
        rows = []
        for p, o in zip(self.points, self.orientations):
            rows.append(list(p) + list(o))
        return rows


def extract(sol, cf=None, threshold: float | None = None) -> FreeBoundarySet:
    """Locate Gamma by edgewise linear interpolation of u - threshold.

    Raises EmptyInterior when the positivity set is empty. An empty result
    (no contact set) is returned as a zero-length FreeBoundarySet.
    """
    grid = sol.grid
    values = np.asarray(sol.values, dtype=float)
    thr = sol.u_pos_threshold if threshold is None else float(threshold)
    pos = values > thr
    if not np.any(pos):
        raise EmptyInterior("positivity set is empty at this threshold")

    field = as_field(sol)
    dim = grid.domain.dim
    h = np.asarray(grid.h, dtype=float)
    axes = grid.axes

    pts = []
    dirs = []
    for d in range(dim):
        lo = [slice(None)] * dim
        hi = [slice(None)] * dim
        lo[d] = slice(0, -1)
        hi[d] = slice(1, None)
        a = values[tuple(lo)] - thr
        b = values[tuple(hi)] - thr
        cross = (a > 0) != (b > 0)
        if not np.any(cross):
            continue
        idx = np.argwhere(cross)
        a_v = a[cross]
        b_v = b[cross]
        t = a_v / (a_v - b_v)  # crossing fraction along the edge
        base = np.stack([axes[k][idx[:, k]] for k in range(dim)], axis=-1)
        base[:, d] += t * h[d]
        pts.append(base)
        # probe one spacing into the positive side for the orientation
        side = np.where(b_v > 0, 1.0, -1.0)
        probe = base.copy()
        probe[:, d] += side * h[d]
        probe = np.clip(probe, grid.domain.lo + 1e-12, grid.domain.hi - 1e-12)
        g = field.gradient(probe)
        nrm = np.linalg.norm(g, axis=1)
        fallback = np.zeros_like(g)
        fallback[:, d] = side
        ok = nrm > 1e-13
        g = np.where(ok[:, None], g / np.maximum(nrm, 1e-300)[:, None], fallback)
        dirs.append(g)

    if not pts:
        return FreeBoundarySet(
            points=np.zeros((0, dim)), orientations=np.zeros((0, dim)),
            threshold=thr, grid=grid, meta={"empty_contact": True},
        )
    points = np.concatenate(pts, axis=0)
    orients = np.concatenate(dirs, axis=0)
    order = np.lexsort(tuple(points[:, k] for k in reversed(range(dim))))
    return FreeBoundarySet(
        points=points[order], orientations=orients[order],
        threshold=thr, grid=grid,
    )


@dataclass
class GrowthReport:
    radii: np.ndarray
    min_ratio: float
    max_ratio: float
    per_point: np.ndarray  # (n_points, n_radii) sup u / r^2, NaN if skipped
    points: np.ndarray

    @property
    def theta_hat(self) -> float:
        return self.min_ratio


def quadratic_growth_check(sol, fb: FreeBoundarySet, radii,
                           max_points: int = 64,
                           n_angular: int = 720) -> GrowthReport:
    """Nondegeneracy ratios sup_{dB_r(x)} u / r^2 over Gamma samples.

    RadiusOutOfDomain if some requested radius leaves the domain at every
    sampled point; per-point out-of-domain radii are skipped as NaN.
    """
    field = as_field(sol)
    grid = sol.grid
    radii = np.asarray(radii, dtype=float)
    if len(fb) == 0:
        raise EmptyInterior("no free boundary points to check growth at")
    stride = max(1, len(fb) // max_points)
    pts = fb.points[::stride]
    dim = pts.shape[1]

    table = np.full((len(pts), len(radii)), np.nan)
    for j, r in enumerate(radii):
        omega, _ = sphere_rule(dim, r, n_angular=n_angular)
        for i, x in enumerate(pts):
            if grid.domain.distance_to_boundary(x) < r - 1e-12:
                continue
            vals = field.value(x + omega)
            table[i, j] = float(np.max(vals)) / r**2
        if np.all(np.isnan(table[:, j])):
            raise RadiusOutOfDomain(
                f"radius {r:.4g} leaves the domain at every sampled point"
            )
    finite = table[np.isfinite(table)]
    return GrowthReport(
        radii=radii, min_ratio=float(np.min(finite)),
        max_ratio=float(np.max(finite)), per_point=table, points=pts,
    )


def hausdorff_distance(a: np.ndarray, b: np.ndarray) -> float:
    """Symmetric Hausdorff distance between two point clouds."""
    a = np.atleast_2d(a)
    b = np.atleast_2d(b)
    if len(a) == 0 or len(b) == 0:
        return np.inf
    # chunked to keep the pairwise distance matrix small
    def one_sided(p, q):
        worst = 0.0
        for s in range(0, len(p), 1024):
            blk = p[s:s + 1024]
            d = np.sqrt(((blk[:, None, :] - q[None, :, :]) ** 2).sum(-1))
            worst = max(worst, float(d.min(axis=1).max()))
        return worst

    return max(one_sided(a, b), one_sided(b, a))
