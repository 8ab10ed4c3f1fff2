"""Box domains and uniform tensor grids."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import GridTooCoarse


@dataclass(frozen=True)
class Domain:
    """Axis-aligned box in dimension n (1, 2, or 3).

    extents holds one (lo, hi) pair per axis. The obstacle sits at height 0
    and the boundary data lives on the box faces.
    """

    dim: int
    extents: tuple[tuple[float, float], ...]
    tag: str = "box"

    def __post_init__(self):
        if self.dim not in (1, 2, 3):
            raise ValueError(f"dim must be 1, 2, or 3, got {self.dim}")
        if len(self.extents) != self.dim:
            raise ValueError("extents length does not match dim")
        for lo, hi in self.extents:
            if not hi > lo:
                raise ValueError(f"degenerate extent ({lo}, {hi})")

    @property
    def lo(self) -> np.ndarray:
        return np.array([e[0] for e in self.extents])

    @property
    def hi(self) -> np.ndarray:
        return np.array([e[1] for e in self.extents])

    def distance_to_boundary(self, x) -> float:
        """Distance from an interior point to the nearest box face."""
        x = np.asarray(x, dtype=float)
        return float(min(np.min(x - self.lo), np.min(self.hi - x)))

    def contains(self, pts) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        return np.all((pts >= self.lo - 1e-12) & (pts <= self.hi + 1e-12), axis=1)


def box(*extents: tuple[float, float]) -> Domain:
    """Shorthand constructor: box((-1, 1), (-1, 1))."""
    return Domain(dim=len(extents), extents=tuple(extents))


@dataclass(frozen=True)
class Grid:
    """Uniform node grid on a Domain; shape counts nodes per axis."""

    domain: Domain
    shape: tuple[int, ...]
    _axes: tuple = field(init=False, repr=False, compare=False, default=None)

    def __post_init__(self):
        if len(self.shape) != self.domain.dim:
            raise ValueError("shape length does not match domain dim")
        if any(s < 3 for s in self.shape):
            raise GridTooCoarse("need at least 3 nodes per axis")
        axes = tuple(
            np.linspace(lo, hi, s)
            for (lo, hi), s in zip(self.domain.extents, self.shape)
        )
        object.__setattr__(self, "_axes", axes)

    @property
    def dim(self) -> int:
        return self.domain.dim

    @property
    def h(self) -> np.ndarray:
        lo, hi = self.domain.lo, self.domain.hi
        return (hi - lo) / (np.array(self.shape) - 1)

    @property
    def hmin(self) -> float:
        return float(np.min(self.h))

    @property
    def axes(self) -> tuple[np.ndarray, ...]:
        return self._axes

    @property
    def n_nodes(self) -> int:
        return int(np.prod(self.shape))

    def node_points(self) -> np.ndarray:
        """All node coordinates, shape (n_nodes, dim), C order."""
        mesh = np.meshgrid(*self.axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    def boundary_mask(self) -> np.ndarray:
        """Boolean array over shape, True on box faces."""
        mask = np.zeros(self.shape, dtype=bool)
        for a in range(self.dim):
            sl = [slice(None)] * self.dim
            sl[a] = 0
            mask[tuple(sl)] = True
            sl[a] = -1
            mask[tuple(sl)] = True
        return mask

    def refine(self) -> "Grid":
        """Halve the spacing (node count 2N-1 per axis)."""
        return Grid(self.domain, tuple(2 * s - 1 for s in self.shape))


def grid_from_cells(domain: Domain, cells: int) -> Grid:
    """Grid with `cells` uniform cells along every axis."""
    if cells < 2:
        raise GridTooCoarse("need at least 2 cells per axis")
    return Grid(domain, tuple(cells + 1 for _ in range(domain.dim)))
