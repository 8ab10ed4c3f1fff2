"""Coefficient fields A(x), forcing f, boundary data g, and affine frames.

The solver and all monotonicity quantities assume:
  (H1) A is Lipschitz;
  (H2) A(x) symmetric with eigenvalues in [1/lam, lam], lam >= 1;
  (H3) f is alpha-Holder with f >= c0 > 0, and g >= 0.
validate_field measures these on a grid against the declared metadata.

A frame at x0 is the affine change of variables L = f(x0)^(-1/2) A(x0)^(1/2)
that normalizes the problem so the transformed matrix C(y) =
A(x0)^(-1/2) A(x0 + L y) A(x0)^(-1/2) satisfies C(0) = I and the transformed
forcing has value 1 at the base point. Energies and blow-ups at x0 are always
computed through this frame.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field as dc_field
from typing import Callable, Optional

import numpy as np

from .errors import (
    EllipticityViolation,
    ForcingBelowC0,
    NonSymmetricError,
    OriginEvaluationWarning,
    SquareRootFailure,
)
from .geometry import Domain, Grid

EIG_POSITIVITY_TOL = 1e-10


@dataclass
class CoefficientField:
    """Matrix coefficient A, forcing f, boundary data g, plus declared bounds.

    A maps (m, n) points to (m, n, n) symmetric matrices; f and g map points
    to (m,) values. grad_A, when available, returns (m, n, n, n) with entry
    [p, k, i, j] = d_k a_ij(x_p); quadratures fall back to finite differences
    without it.
    """

    dim: int
    A: Callable[[np.ndarray], np.ndarray]
    f: Callable[[np.ndarray], np.ndarray]
    g: Callable[[np.ndarray], np.ndarray]
    lam: float = 1.0
    lip_a: float = 0.0
    alpha: float = 1.0
    holder_f: float = 0.0
    c0: float = 1.0
    grad_A: Optional[Callable[[np.ndarray], np.ndarray]] = None
    label: str = "custom"

    def f_sup(self, grid: Grid) -> float:
        return float(np.max(self.f(grid.node_points())))


@dataclass
class ValidationReport:
    symmetric_defect: float
    eig_min: float
    eig_max: float
    lip_a_empirical: float
    holder_f_empirical: float
    f_min: float
    ok: bool
    messages: tuple[str, ...] = ()


def _eig_range(mats: np.ndarray) -> tuple[float, float]:
    if mats.shape[-1] == 1:
        vals = mats[:, 0, 0]
        return float(vals.min()), float(vals.max())
    w = np.linalg.eigvalsh(mats)
    return float(w.min()), float(w.max())


def validate_field(cf: CoefficientField, grid: Grid, strict: bool = True) -> ValidationReport:
    """Check (H1)-(H3) for cf on the nodes of grid.

    Symmetry and the eigenvalue range are tested pointwise; the Lipschitz
    seminorm of A and the alpha-Holder seminorm of f are measured over
    stencil-adjacent node pairs (Frobenius norm for A). With strict=True the
    first violation raises (NonSymmetricError, EllipticityViolation,
    ForcingBelowC0); otherwise everything is collected into the report.
    """
    pts = grid.node_points()
    mats = cf.A(pts)
    fvals = cf.f(pts)
    msgs = []

    defect = float(np.max(np.abs(mats - np.transpose(mats, (0, 2, 1)))))
    if defect > 1e-10 * max(1.0, cf.lam):
        msgs.append(f"A not symmetric: max defect {defect:.3e}")
        if strict:
            raise NonSymmetricError(msgs[-1])

    emin, emax = _eig_range(mats)
    slack = 1e-9 * cf.lam
    if emin < 1.0 / cf.lam - slack or emax > cf.lam + slack:
        msgs.append(
            f"eigenvalues [{emin:.6g}, {emax:.6g}] leave "
            f"[{1.0 / cf.lam:.6g}, {cf.lam:.6g}]"
        )
        if strict:
            raise EllipticityViolation(msgs[-1])

    fmin = float(fvals.min())
    if fmin < cf.c0 - 1e-12:
        msgs.append(f"min f = {fmin:.6g} below declared c0 = {cf.c0:.6g}")
        if strict:
            raise ForcingBelowC0(msgs[-1])

    shape = grid.shape
    grid_mats = mats.reshape(shape + (grid.dim, grid.dim))
    grid_f = fvals.reshape(shape)
    lip_emp = 0.0
    hold_emp = 0.0
    for a in range(grid.dim):
        h = grid.h[a]
        sl_hi = [slice(None)] * grid.dim
        sl_lo = [slice(None)] * grid.dim
        sl_hi[a] = slice(1, None)
        sl_lo[a] = slice(None, -1)
        dmat = grid_mats[tuple(sl_hi)] - grid_mats[tuple(sl_lo)]
        lip_emp = max(lip_emp, float(np.max(np.sqrt(np.sum(dmat**2, axis=(-2, -1)))) / h))
        df = np.abs(grid_f[tuple(sl_hi)] - grid_f[tuple(sl_lo)])
        hold_emp = max(hold_emp, float(np.max(df) / h**cf.alpha))

    if lip_emp > cf.lip_a * (1 + 1e-6) + 1e-12:
        msgs.append(f"empirical Lip(A) = {lip_emp:.6g} exceeds declared {cf.lip_a:.6g}")
    if hold_emp > cf.holder_f * (1 + 1e-6) + 1e-12:
        msgs.append(
            f"empirical Holder(f) = {hold_emp:.6g} exceeds declared {cf.holder_f:.6g}"
        )

    return ValidationReport(
        symmetric_defect=defect,
        eig_min=emin,
        eig_max=emax,
        lip_a_empirical=lip_emp,
        holder_f_empirical=hold_emp,
        f_min=fmin,
        ok=not msgs,
        messages=tuple(msgs),
    )


def mu(cf: CoefficientField, x, base=None) -> float:
    """Normal-direction weight <A(x) nu, nu> with nu = (x - base)/|x - base|.

    Meaningful in a frame normalized so A(base) = I; at the base point itself
    the normalized value 1 is returned and OriginEvaluationWarning is emitted.
    """
    x = np.asarray(x, dtype=float)
    b = np.zeros_like(x) if base is None else np.asarray(base, dtype=float)
    d = x - b
    nrm = float(np.linalg.norm(d))
    if nrm < 1e-14:
        warnings.warn(
            "mu evaluated at the frame base point; returning 1",
            OriginEvaluationWarning,
            stacklevel=2,
        )
        return 1.0
    nu = d / nrm
    mat = cf.A(x[None, :])[0]
    return float(nu @ mat @ nu)


def _sym_sqrt(mat: np.ndarray, tol: float) -> tuple[np.ndarray, np.ndarray]:
    """(sqrt, inverse sqrt) of an SPD matrix via eigendecomposition."""
    defect = float(np.max(np.abs(mat - mat.T)))
    if defect > 1e-10:
        raise NonSymmetricError(f"matrix square root needs symmetry, defect {defect:.3e}")
    w, v = np.linalg.eigh(mat)
    if np.min(w) <= tol:
        raise SquareRootFailure(f"eigenvalue {np.min(w):.3e} at or below tol {tol:.1e}")
    s = np.sqrt(w)
    return (v * s) @ v.T, (v / s) @ v.T


@dataclass
class Frame:
    """Normalizing frame at x0: y-coordinates with x = x0 + L y."""

    x0: np.ndarray
    L: np.ndarray
    Linv: np.ndarray
    f0: float
    a_inv_sqrt: np.ndarray
    cf: CoefficientField
    norm_L: float = dc_field(init=False)
    norm_Linv: float = dc_field(init=False)

    def __post_init__(self):
        self.norm_L = float(np.linalg.norm(self.L, 2))
        self.norm_Linv = float(np.linalg.norm(self.Linv, 2))

    @property
    def dim(self) -> int:
        return self.x0.size

    def map(self, ys: np.ndarray) -> np.ndarray:
        ys = np.atleast_2d(np.asarray(ys, dtype=float))
        return self.x0 + ys @ self.L  # L symmetric

    def C(self, ys: np.ndarray) -> np.ndarray:
        mats = self.cf.A(self.map(ys))
        return np.einsum("ij,pjk,kl->pil", self.a_inv_sqrt, mats, self.a_inv_sqrt)

    def f_ratio(self, ys: np.ndarray) -> np.ndarray:
        return self.cf.f(self.map(ys)) / self.f0

    def mu(self, ys: np.ndarray) -> np.ndarray:
        """<C(y) nu, nu> along nu = y/|y|, vectorized; 1 at y = 0."""
        ys = np.atleast_2d(np.asarray(ys, dtype=float))
        nrm = np.linalg.norm(ys, axis=1)
        out = np.ones(len(ys))
        good = nrm > 1e-14
        if np.any(good):
            nu = ys[good] / nrm[good, None]
            mats = self.C(ys[good])
            out[good] = np.einsum("pi,pij,pj->p", nu, mats, nu)
        return out

    def grad_C(self, ys: np.ndarray, fd_step: float = 1e-6) -> np.ndarray:
        """(m, n, n, n) tensor d_k C_ij at each y, via grad_A or differences."""
        ys = np.atleast_2d(np.asarray(ys, dtype=float))
        n = self.dim
        if self.cf.grad_A is not None:
            ga = self.cf.grad_A(self.map(ys))  # [p, m, i, j] = d_m a_ij in x
            gC = np.einsum("mk,pmij->pkij", self.L, ga)  # d/dy_k = L_mk d/dx_m
        else:
            gC = np.empty((len(ys), n, n, n))
            for k in range(n):
                dy = np.zeros(n)
                dy[k] = fd_step
                a_hi = self.cf.A(self.map(ys + dy))
                a_lo = self.cf.A(self.map(ys - dy))
                gC[:, k] = (a_hi - a_lo) / (2 * fd_step)
        return np.einsum("ij,pkjl,lm->pkim", self.a_inv_sqrt, gC, self.a_inv_sqrt)


def make_frame(cf: CoefficientField, x0, tol: float = EIG_POSITIVITY_TOL) -> Frame:
    """Frame at x0: L = f(x0)^(-1/2) A(x0)^(1/2), square roots by eigh."""
    x0 = np.asarray(x0, dtype=float)
    a0 = cf.A(x0[None, :])[0]
    a_sqrt, a_inv_sqrt = _sym_sqrt(a0, tol)
    f0 = float(cf.f(x0[None, :])[0])
    if f0 <= tol:
        raise SquareRootFailure(f"forcing {f0:.3e} not positive at base point")
    L = a_sqrt / np.sqrt(f0)
    Linv = a_inv_sqrt * np.sqrt(f0)
    return Frame(x0=x0, L=L, Linv=Linv, f0=f0, a_inv_sqrt=a_inv_sqrt, cf=cf)


# ---------------------------------------------------------------------------
# coefficient presets


def _const_fn(value: float):
    return lambda pts: np.full(len(np.atleast_2d(pts)), float(value))


def _isotropic(scalar_fn, dim):
    eye = np.eye(dim)

    def A(pts):
        pts = np.atleast_2d(pts)
        return scalar_fn(pts)[:, None, None] * eye

    return A


def identity_matrix_part(domain: Domain, **_params) -> dict:
    return {
        "A": _isotropic(lambda pts: np.ones(len(pts)), domain.dim),
        "lam": 1.0,
        "lip_a": 0.0,
        "grad_A": lambda pts: np.zeros(
            (len(np.atleast_2d(pts)), domain.dim, domain.dim, domain.dim)
        ),
    }


def radial_lipschitz_matrix_part(domain: Domain, eps: float = 0.3) -> dict:
    """A(x) = (1 + eps |x|) I: isotropic, Lipschitz but not C^1 at 0."""
    dim = domain.dim
    rad = float(np.linalg.norm(np.maximum(np.abs(domain.lo), np.abs(domain.hi))))

    def scalar(pts):
        return 1.0 + eps * np.linalg.norm(pts, axis=1)

    def grad_A(pts):
        pts = np.atleast_2d(pts)
        nrm = np.linalg.norm(pts, axis=1)
        unit = np.zeros_like(pts)
        good = nrm > 1e-14
        unit[good] = pts[good] / nrm[good, None]
        eye = np.eye(dim)
        return eps * unit[:, :, None, None] * eye[None, None, :, :]

    return {
        "A": _isotropic(scalar, dim),
        "lam": 1.0 + eps * rad,
        "lip_a": eps * np.sqrt(dim),
        "grad_A": grad_A,
    }


def anisotropic_matrix_part(domain: Domain, theta: float = 0.0, ratio: float = 2.0) -> dict:
    """Constant A = R(theta) diag(ratio, 1, ...) R(theta)^T."""
    dim = domain.dim
    diag = np.eye(dim)
    diag[0, 0] = ratio
    if dim == 1:
        rot = np.eye(1)
    else:
        rot = np.eye(dim)
        c, s = np.cos(theta), np.sin(theta)
        rot[0, 0], rot[0, 1], rot[1, 0], rot[1, 1] = c, -s, s, c
    mat = rot @ diag @ rot.T

    def A(pts):
        pts = np.atleast_2d(pts)
        return np.broadcast_to(mat, (len(pts), dim, dim)).copy()

    return {
        "A": A,
        "lam": max(ratio, 1.0 / min(ratio, 1.0)),
        "lip_a": 0.0,
        "grad_A": lambda pts: np.zeros((len(np.atleast_2d(pts)), dim, dim, dim)),
    }


MATRIX_PRESETS = {
    "identity": identity_matrix_part,
    "radial-lipschitz": radial_lipschitz_matrix_part,
    "anisotropic": anisotropic_matrix_part,
}


def parse_preset(spec: str) -> tuple[str, dict]:
    """'radial-lipschitz:0.3' -> ('radial-lipschitz', {'eps': 0.3})."""
    if ":" not in spec:
        return spec, {}
    name, arg = spec.split(":", 1)
    key = {"radial-lipschitz": "eps", "anisotropic": "theta"}.get(name)
    if key is None:
        raise KeyError(f"preset {name!r} takes no inline parameter")
    return name, {key: float(arg)}


def make_coefficients(
    domain: Domain,
    matrix: str = "identity",
    matrix_params: dict | None = None,
    f=1.0,
    g=0.0,
    alpha: float = 1.0,
    holder_f: float = 0.0,
    c0: float = 1.0,
    label: str | None = None,
) -> CoefficientField:
    """Assemble a CoefficientField from a matrix preset plus f and g.

    matrix is a preset name (with optional ":param" suffix) or a callable
    on (m, n) point arrays; f and g may be constants or callables. Callable
    matrices can declare bounds through matrix_params keys lam, lip_a,
    grad_A; otherwise permissive defaults are recorded.
    """
    if callable(matrix):
        params = matrix_params or {}
        part = {"A": matrix, "lam": params.get("lam", 10.0),
                "lip_a": params.get("lip_a", 1.0),
                "grad_A": params.get("grad_A")}
        matrix = "custom"
    else:
        if isinstance(matrix, str) and matrix not in MATRIX_PRESETS:
            matrix, inline = parse_preset(matrix)
            matrix_params = {**inline, **(matrix_params or {})}
        part = MATRIX_PRESETS[matrix](domain, **(matrix_params or {}))
    f_fn = f if callable(f) else _const_fn(f)
    g_fn = g if callable(g) else _const_fn(g)
    return CoefficientField(
        dim=domain.dim,
        A=part["A"],
        f=f_fn,
        g=g_fn,
        lam=part["lam"],
        lip_a=part["lip_a"],
        alpha=alpha,
        holder_f=holder_f,
        c0=c0,
        grad_A=part.get("grad_A"),
        label=label or matrix,
    )
