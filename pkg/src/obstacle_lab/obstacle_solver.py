"""Discrete obstacle problem: flux-form assembly and projected SOR.

The discrete energy is E[v] = v^T K v + 2 q^T v with K the conservative
flux-form stiffness (face-averaged coefficients) and q the trapezoid-weighted
load, so E[v] approximates int(<A grad v, grad v> + 2 f v) to second order.
Minimizing over v >= 0 with fixed boundary values is the LCP

    u >= 0,  K u + q >= 0 (interior),  u . (K u + q) = 0,

solved by projected SOR. The complementarity residual reported everywhere is
min(u, f - div_h(A grad u)) = min(u, (K u + q) / cell volume), which vanishes
at the discrete solution on both the positivity and coincidence sets.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field as dc_field
from pathlib import Path

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import GridTooCoarse, InfeasibleBoundary
from .field_model import CoefficientField
from .fields import GridField
from .geometry import Grid

DIRECT_SOLVE_LIMIT = 70_000


def _trapezoid_weights(grid: Grid) -> np.ndarray:
    """Nodal quadrature weights (product trapezoid), shape = grid.shape."""
    w = np.ones(grid.shape)
    for a in range(grid.dim):
        edge = np.ones(grid.shape[a])
        edge[0] = edge[-1] = 0.5
        shape = [1] * grid.dim
        shape[a] = grid.shape[a]
        w = w * (grid.h[a] * edge.reshape(shape))
    return w


def _centered_diff_matrix(grid: Grid, axis: int) -> sp.csr_matrix:
    """Centered difference along axis; zero rows on that axis's faces."""
    n = grid.n_nodes
    idx = np.arange(n).reshape(grid.shape)
    sl_mid = [slice(None)] * grid.dim
    sl_mid[axis] = slice(1, -1)
    rows = idx[tuple(sl_mid)].ravel()
    sl_hi = list(sl_mid)
    sl_hi[axis] = slice(2, None)
    sl_lo = list(sl_mid)
    sl_lo[axis] = slice(None, -2)
    cols_hi = idx[tuple(sl_hi)].ravel()
    cols_lo = idx[tuple(sl_lo)].ravel()
    c = 1.0 / (2.0 * grid.h[axis])
    data = np.concatenate([np.full(rows.size, c), np.full(rows.size, -c)])
    return sp.csr_matrix(
        (data, (np.concatenate([rows, rows]), np.concatenate([cols_hi, cols_lo]))),
        shape=(n, n),
    )


@dataclass
class DiscreteEnergy:
    """Quadratic form for the discretized functional on a fixed grid."""

    grid: Grid
    cf: CoefficientField
    K: sp.csr_matrix
    q: np.ndarray
    node_weights: np.ndarray
    has_cross: bool

    def value(self, v: np.ndarray) -> float:
        """E[v] = v^T K v + 2 q^T v for nodal values v (grid shape or flat)."""
        vf = np.asarray(v, dtype=float).ravel()
        return float(vf @ (self.K @ vf) + 2.0 * (self.q @ vf))


def assemble(cf: CoefficientField, grid: Grid) -> DiscreteEnergy:
    """Build the flux-form stiffness and trapezoid load for cf on grid.

    Diagonal coefficients are face averages A_dd evaluated at edge midpoints
    (x_i + x_{i+1})/2; off-diagonal entries, when present anywhere, add the
    symmetrized centered-difference cross form. Result is symmetric and
    positive semidefinite by construction.
    """
    if any(s - 2 < 3 for s in grid.shape):
        raise GridTooCoarse("assembly needs at least 3 interior nodes per axis")
    dim = grid.dim
    n = grid.n_nodes
    idx = np.arange(n).reshape(grid.shape)
    node_w = _trapezoid_weights(grid)

    rows, cols, vals = [], [], []
    probe = cf.A(grid.node_points()[:: max(1, n // 512)])
    off = probe - probe * np.eye(dim)
    has_cross = dim > 1 and float(np.max(np.abs(off))) > 1e-14

    for d in range(dim):
        # face midpoints along axis d
        axes = list(grid.axes)
        mid = 0.5 * (axes[d][1:] + axes[d][:-1])
        axes[d] = mid
        mesh = np.meshgrid(*axes, indexing="ij")
        face_pts = np.stack([m.ravel() for m in mesh], axis=1)
        a_dd = cf.A(face_pts)[:, d, d]

        # transverse trapezoid factor
        tw = np.ones([len(ax) for ax in axes])
        for e in range(dim):
            if e == d:
                continue
            edge = np.ones(grid.shape[e])
            edge[0] = edge[-1] = 0.5
            shape = [1] * dim
            shape[e] = grid.shape[e]
            tw = tw * edge.reshape(shape)
        scale = np.prod(np.delete(grid.h, d)) / grid.h[d]
        w = (a_dd.reshape(tw.shape) * tw * scale).ravel()

        sl_lo = [slice(None)] * dim
        sl_lo[d] = slice(None, -1)
        sl_hi = [slice(None)] * dim
        sl_hi[d] = slice(1, None)
        i = idx[tuple(sl_lo)].ravel()
        j = idx[tuple(sl_hi)].ravel()
        rows += [i, j, i, j]
        cols += [i, j, j, i]
        vals += [w, w, -w, -w]

    K = sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n, n),
    )

    if has_cross:
        pts = grid.node_points()
        mats = cf.A(pts)
        vol = node_w.ravel()
        diffs = [_centered_diff_matrix(grid, a) for a in range(dim)]
        for d in range(dim):
            for e in range(d + 1, dim):
                w = sp.diags(vol * mats[:, d, e])
                block = diffs[d].T @ w @ diffs[e]
                K = K + (block + block.T)
        K = K.tocsr()

    q = node_w.ravel() * cf.f(grid.node_points())
    return DiscreteEnergy(grid=grid, cf=cf, K=K, q=q, node_weights=node_w, has_cross=has_cross)


@dataclass
class ObstacleSolution:
    """Converged nodal minimizer plus solver diagnostics."""

    grid: Grid
    cf: CoefficientField
    values: np.ndarray
    tol: float
    iterations: int
    converged: bool
    energy: float
    u_pos_threshold: float
    comp_residual: float
    energy_history: np.ndarray = dc_field(default_factory=lambda: np.empty(0))
    _field: GridField | None = dc_field(default=None, repr=False, compare=False)

    def as_field(self) -> GridField:
        if self._field is None:
            self._field = GridField(self.grid, self.values)
        return self._field

    def positivity_mask(self) -> np.ndarray:
        return self.values > self.u_pos_threshold

    def coincidence_mask(self) -> np.ndarray:
        return ~self.positivity_mask()

    def save(self, outdir, provenance: dict | None = None) -> None:
        out = Path(outdir)
        out.mkdir(parents=True, exist_ok=True)
        self.values.astype(np.float64).tofile(out / "solution.bin")
        meta = {
            "shape": list(self.grid.shape),
            "extents": [list(e) for e in self.grid.domain.extents],
            "spacing": [float(h) for h in self.grid.h],
            "order": "C",
            "dtype": "float64",
            "tol": self.tol,
            "iterations": self.iterations,
            "converged": self.converged,
            "energy": self.energy,
            "u_pos_threshold": self.u_pos_threshold,
            "comp_residual": self.comp_residual,
            "provenance": provenance or {},
        }
        (out / "solution.json").write_text(json.dumps(meta, indent=2, sort_keys=True))

    @staticmethod
    def load(outdir, cf: CoefficientField) -> "ObstacleSolution":
        out = Path(outdir)
        meta = json.loads((out / "solution.json").read_text())
        from .geometry import Domain

        dom = Domain(
            dim=len(meta["shape"]), extents=tuple(tuple(e) for e in meta["extents"])
        )
        grid = Grid(dom, tuple(meta["shape"]))
        vals = np.fromfile(out / "solution.bin", dtype=np.float64).reshape(grid.shape)
        return ObstacleSolution(
            grid=grid,
            cf=cf,
            values=vals,
            tol=meta["tol"],
            iterations=meta["iterations"],
            converged=meta["converged"],
            energy=meta["energy"],
            u_pos_threshold=meta["u_pos_threshold"],
            comp_residual=meta["comp_residual"],
        )


def _unconstrained(Kii, b, x_init=None):
    if Kii.shape[0] <= DIRECT_SOLVE_LIMIT:
        return spla.spsolve(Kii.tocsc(), b)
    d = Kii.diagonal()
    M = sp.diags(1.0 / d)
    x, info = spla.cg(Kii, b, x0=x_init, rtol=1e-10, atol=0.0, maxiter=5000, M=M)
    if info != 0:
        warnings.warn(f"warm-start CG stopped with info={info}; continuing with PSOR")
    return x


def _colors(grid: Grid, interior_flat: np.ndarray, full: bool) -> list[np.ndarray]:
    """Index sets (into the interior vector) of a parity coloring."""
    coords = np.array(np.unravel_index(interior_flat, grid.shape))
    if not full:
        parity = coords.sum(axis=0) % 2
        return [np.where(parity == c)[0] for c in (0, 1)]
    keys = np.zeros(coords.shape[1], dtype=int)
    for a in range(grid.dim):
        keys = 2 * keys + coords[a] % 2
    return [np.where(keys == c)[0] for c in range(2**grid.dim)]


def auto_omega(grid: Grid) -> float:
    """Near-optimal SOR factor 2 / (1 + sin(pi / N)) for the finest axis."""
    n_cells = max(s - 1 for s in grid.shape)
    return 2.0 / (1.0 + np.sin(np.pi / n_cells))


def solve(
    de: DiscreteEnergy,
    g=None,
    tol: float = 1e-9,
    max_iter: int = 50_000,
    omega: float | str = 1.5,
    x0: np.ndarray | None = None,
    check_every: int = 10,
) -> ObstacleSolution:
    """Projected SOR for the obstacle LCP with Dirichlet data g >= 0.

    The initial iterate is the unconstrained solve clamped at 0 unless x0 is
    given. Sweeps use red-black ordering (a 2^n parity coloring when the
    stencil has cross terms). Termination: inf-norm of the scaled
    complementarity residual min(u, (K u + q)/vol) <= tol. Hitting max_iter
    returns the best iterate flagged non-converged (MaxIterExceeded warning).
    """
    grid = de.grid
    g_fn = g if g is not None else de.cf.g
    bmask = grid.boundary_mask().ravel()
    int_flat = np.where(~bmask)[0]
    bnd_flat = np.where(bmask)[0]
    pts = grid.node_points()

    g_vals = np.asarray(g_fn(pts[bnd_flat]), dtype=float)
    if g_vals.min() < -1e-13:
        raise InfeasibleBoundary(f"boundary data reaches {g_vals.min():.3e} < 0")
    g_vals = np.maximum(g_vals, 0.0)

    K = de.K
    Kii = K[int_flat][:, int_flat].tocsr()
    Kib = K[int_flat][:, bnd_flat].tocsr()
    b = -(de.q[int_flat] + Kib @ g_vals)
    diag = Kii.diagonal()
    vol = float(np.prod(grid.h))

    if x0 is not None:
        u = np.maximum(np.asarray(x0, dtype=float).ravel()[int_flat], 0.0)
    else:
        u = np.maximum(_unconstrained(Kii, b), 0.0)

    if omega == "auto":
        omega = auto_omega(grid)
    if not 0.0 < omega < 2.0:
        raise ValueError(f"omega must lie in (0, 2), got {omega}")

    colors = _colors(grid, int_flat, full=de.has_cross)

    def comp_residual(vec):
        r = (Kii @ vec - b) / vol
        return float(np.max(np.abs(np.minimum(vec, r))))

    energy_hist = []
    full = np.zeros(grid.n_nodes)
    full[bnd_flat] = g_vals

    converged = False
    sweeps = 0
    res = comp_residual(u)
    if res <= tol:
        converged = True
    while not converged and sweeps < max_iter:
        for c in colors:
            r = Kii @ u - b
            u[c] = np.maximum(0.0, u[c] - omega * r[c] / diag[c])
        sweeps += 1
        if sweeps % check_every == 0 or sweeps == max_iter:
            res = comp_residual(u)
            full[int_flat] = u
            energy_hist.append(de.value(full))
            if res <= tol:
                converged = True

    if not converged:
        warnings.warn(
            f"MaxIterExceeded: PSOR stopped at {sweeps} sweeps with residual "
            f"{res:.3e} > tol {tol:.1e}; returning best iterate"
        )

    full[int_flat] = u
    values = full.reshape(grid.shape)
    f_sup = float(np.max(de.cf.f(pts)))
    threshold = max(tol, float(np.max(grid.h)) ** 2) * f_sup
    return ObstacleSolution(
        grid=grid,
        cf=de.cf,
        values=values,
        tol=tol,
        iterations=sweeps,
        converged=converged,
        energy=de.value(values),
        u_pos_threshold=threshold,
        comp_residual=res,
        energy_history=np.array(energy_hist),
    )


@dataclass
class ResidualReport:
    pde_max: float
    pde_l2: float
    comp_max: float
    coincidence_violation: float
    n_positive: int
    n_contact: int


def pde_residual(sol: ObstacleSolution, de: DiscreteEnergy | None = None) -> ResidualReport:
    """Interior defect diagnostics for a solved field.

    On the positivity set: |f - div_h(A grad u)|. Everywhere: the scaled
    complementarity residual, and the negative part of f - div_h(A grad u) on
    the coincidence set (which must stay above -tol).
    """
    if de is None:
        de = assemble(sol.cf, sol.grid)
    grid = sol.grid
    bmask = grid.boundary_mask().ravel()
    int_flat = np.where(~bmask)[0]
    uf = sol.values.ravel()
    vol = float(np.prod(grid.h))
    r_hat = (de.K @ uf + de.q)[int_flat] / vol
    u_int = uf[int_flat]

    pos = u_int > sol.u_pos_threshold
    pde = np.abs(r_hat[pos])
    comp = np.abs(np.minimum(u_int, r_hat))
    neg_on_contact = np.minimum(r_hat[~pos], 0.0)
    return ResidualReport(
        pde_max=float(pde.max()) if pde.size else 0.0,
        pde_l2=float(np.sqrt(np.mean(pde**2))) if pde.size else 0.0,
        comp_max=float(comp.max()) if comp.size else 0.0,
        coincidence_violation=float(-neg_on_contact.min()) if neg_on_contact.size else 0.0,
        n_positive=int(pos.sum()),
        n_contact=int((~pos).sum()),
    )


def export_slice(sol: ObstacleSolution, path, axis: int = 0, index: int | None = None) -> None:
    """Write a 1D slice of the solution as CSV (coordinate, value)."""
    grid = sol.grid
    if grid.dim == 1:
        coords = grid.axes[0]
        vals = sol.values
    else:
        other = [a for a in range(grid.dim) if a != axis]
        sl = [slice(None)] * grid.dim
        for a in other:
            sl[a] = grid.shape[a] // 2 if index is None else index
        coords = grid.axes[axis]
        vals = sol.values[tuple(sl)]
    lines = ["coord,u"]
    lines += [f"{c:.17g},{v:.17g}" for c, v in zip(coords, vals)]
    Path(path).write_text("\n".join(lines) + "\n")
