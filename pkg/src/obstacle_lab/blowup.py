"""Blow-up extraction, point classification, and stratification.

At a contact point x0 the rescalings w_r(y) = u(x0 + r L y) / r^2 converge
to a 2-homogeneous profile: either a half-space profile (Regular point) or a
PSD quadratic polynomial with trace 1/2 (Singular point). The energy density
Phi(0+) separates the two, theta at regular points against 2 theta at
singular ones, so the classifier thresholds the extrapolated limit at
1.5 theta and cross-checks against the fitted profile kind.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from typing import Optional

import numpy as np

from .errors import (
    AmbiguousProfile,
    BallOutOfDomain,
    EmptyInterior,
    FrameOverflow,
    GridTooCoarse,
    InsufficientDecay,
    NoConvergence,
)
from .field_model import CoefficientField, Frame, make_frame
from .fields import as_field
from .functionals import (
    HomogeneousProfile,
    MonotonicityTrace,
    build_trace,
    default_radii,
    theta_constant,
)
from .quadrature import ball_rule, sphere_rule


# ---------------------------------------------------------------------------
# rescaled views


@dataclass
class RescaledField:
    """Lazy view w(y) = u(x0 + r L y) / r^2 over |y| <= max_y_radius."""

    field: object
    frame: Frame
    r: float
    max_y_radius: float = 2.0
    domain: object = None

    def __post_init__(self):
        if self.domain is not None:
            reach = self.r * self.frame.norm_L * self.max_y_radius
            dist = self.domain.distance_to_boundary(self.frame.x0)
            if reach > dist + 1e-12:
                raise FrameOverflow(
                    f"rescaling at r={self.r:.4g} reaches {reach:.4g} past the "
                    f"boundary distance {dist:.4g}"
                )

    def value(self, ys) -> np.ndarray:
        ys = np.atleast_2d(np.asarray(ys, dtype=float))
        return self.field.value(self.frame.map(self.r * ys)) / self.r**2

    def gradient(self, ys) -> np.ndarray:
        ys = np.atleast_2d(np.asarray(ys, dtype=float))
        gx = self.field.gradient(self.frame.map(self.r * ys))
        return (gx @ self.frame.L) / self.r

    def sample_grid(self, n_per_axis: int = 33):
        """Tensor sample over [-b, b]^n for diagnostics; returns (pts, values)."""
        b = self.max_y_radius
        axes = [np.linspace(-b, b, n_per_axis)] * self.frame.dim
        mesh = np.meshgrid(*axes, indexing="ij")
        pts = np.stack([m.ravel() for m in mesh], axis=-1)
        return pts, self.value(pts)


def rescale(sol, cf: CoefficientField, x0, r: float,
            max_y_radius: float = 2.0) -> RescaledField:
    """View u through the frame at x0 at scale r; FrameOverflow if B_2 exits."""
    field = as_field(sol)
    x0 = np.asarray(x0, dtype=float)
    frame = make_frame(cf, x0)
    dom = getattr(getattr(sol, "grid", None), "domain", None)
    return RescaledField(field, frame, float(r), max_y_radius=max_y_radius,
                         domain=dom)


# ---------------------------------------------------------------------------
# profile extraction


@dataclass
class BlowupFit:
    """Both candidate fits with their relative L^2(B_1) residuals."""

    kind: str
    profile: HomogeneousProfile
    residual_half_space: float
    residual_polynomial: float
    radii_used: np.ndarray
    cauchy: np.ndarray
    homogeneity_defect: float
    nu: Optional[np.ndarray] = None
    B: Optional[np.ndarray] = None

    @property
    def residual(self) -> float:
        return (self.residual_half_space if self.kind == "half-space"
                else self.residual_polynomial)


def _direction_candidates(dim: int, n: int = 720) -> np.ndarray:
    if dim == 1:
        return np.array([[1.0], [-1.0]])
    if dim == 2:
        th = np.linspace(0.0, 2 * np.pi, n, endpoint=False)
        return np.stack([np.cos(th), np.sin(th)], axis=-1)
    # Fibonacci sphere
    k = np.arange(n)
    z = 1.0 - 2.0 * (k + 0.5) / n
    rho = np.sqrt(np.maximum(0.0, 1.0 - z * z))
    phi = k * np.pi * (3.0 - np.sqrt(5.0))
    return np.stack([rho * np.cos(phi), rho * np.sin(phi), z], axis=-1)


def _fit_half_space(omega, w_sphere, sw, dim):
    """Best half-space direction by maximizing int w ((omega . nu)+)^2."""
    cand = _direction_candidates(dim)
    proj = np.maximum(omega @ cand.T, 0.0) ** 2  # (m_pts, n_cand)
    scores = (sw * w_sphere) @ proj
    nu = cand[int(np.argmax(scores))]
    if dim == 1:
        return nu
    # local refinement: shrink an angular bracket around the best candidate
    span = np.pi / len(cand) if dim == 2 else 0.08
    for _ in range(12):
        perturbed = [nu]
        for t in _tangent_basis(nu):
            perturbed.extend([_rot_toward(nu, t, span), _rot_toward(nu, t, -span)])
        cand = np.array(perturbed)
        proj = np.maximum(omega @ cand.T, 0.0) ** 2
        scores = (sw * w_sphere) @ proj
        nu = cand[int(np.argmax(scores))]
        span *= 0.6
    return nu


def _tangent_basis(nu: np.ndarray):
    n = len(nu)
    vecs = []
    for e in np.eye(n):
        t = e - np.dot(e, nu) * nu
        nt = np.linalg.norm(t)
        if nt > 1e-8:
            vecs.append(t / nt)
        if len(vecs) == n - 1:
            break
    return vecs


def _rot_toward(nu, t, angle):
    v = np.cos(angle) * nu + np.sin(angle) * t
    return v / np.linalg.norm(v)


def _fit_polynomial(bpts, w_ball, bw, dim):
    """Trace-constrained least squares for <B y, y>, PSD-clipped."""
    idx = [(i, j) for i in range(dim) for j in range(i, dim)]
    cols = []
    for i, j in idx:
        c = bpts[:, i] * bpts[:, j]
        cols.append(c if i == j else 2.0 * c)
    X = np.stack(cols, axis=-1)
    sw = np.sqrt(bw)
    Xw = X * sw[:, None]
    yw = w_ball * sw
    # KKT system for min ||Xw b - yw||^2 subject to the trace constraint
    G = Xw.T @ Xw
    rhs = Xw.T @ yw
    tvec = np.array([1.0 if i == j else 0.0 for i, j in idx])
    K = np.zeros((len(idx) + 1, len(idx) + 1))
    K[:-1, :-1] = G
    K[:-1, -1] = tvec
    K[-1, :-1] = tvec
    kr = np.append(rhs, 0.5)
    try:
        sol = np.linalg.solve(K, kr)
    except np.linalg.LinAlgError:
        sol = np.append(np.linalg.lstsq(Xw, yw, rcond=None)[0], 0.0)
    B = np.zeros((dim, dim))
    for (i, j), v in zip(idx, sol[:-1]):
        B[i, j] = B[j, i] = v
    evals, evecs = np.linalg.eigh(B)
    clipped = np.clip(evals, 0.0, None)
    B = (evecs * clipped) @ evecs.T
    tr = float(np.trace(B))
    reliable = tr > 1e-12 and abs(0.5 / tr - 1.0) <= 0.2
    if reliable:
        B = B * (0.5 / tr)
    return B, reliable


def extract_blowup(sol, cf: CoefficientField, x0, radii=None,
                   ambiguity_band: float = 0.10,
                   n_angular: int = 512) -> BlowupFit:
    """Fit the blow-up profile from the two finest reliable rescalings.

    A half-space and a polynomial candidate are fitted to the averaged
    rescaled field and compared by relative L^2(B_1) residual; if they agree
    to within the ambiguity band the point is declared AmbiguousProfile.
    """
    field = as_field(sol)
    x0 = np.asarray(x0, dtype=float)
    frame = make_frame(cf, x0)
    dom = getattr(getattr(sol, "grid", None), "domain", None)
    if radii is None:
        radii = default_radii(sol, cf, x0)
    radii = np.asarray(radii, dtype=float)
    if len(radii) < 6:
        raise GridTooCoarse(
            f"blow-up ladder has {len(radii)} rungs, needs at least 6"
        )
    dim = cf.dim

    views = [RescaledField(field, frame, r, max_y_radius=1.0, domain=dom)
             for r in radii]
    omega, sw = sphere_rule(dim, 1.0, n_angular=min(n_angular, 2048))
    samples = np.stack([v.value(omega) for v in views])
    norms = np.sqrt(np.sum(sw * samples**2, axis=1))
    scale = max(norms.max(), 1e-300)
    cauchy = np.sqrt(np.sum(sw * np.diff(samples, axis=0) ** 2, axis=1)) / scale
    if len(cauchy) >= 2 and cauchy[0] > 0.15 and cauchy[0] > 1.2 * cauchy[1]:
        raise NoConvergence(
            f"rescalings diverge toward r=0 (relative gap {cauchy[0]:.3g})"
        )

    # average of the two finest rungs
    w_sphere = 0.5 * (samples[0] + samples[1])
    thr = getattr(sol, "u_pos_threshold", 0.0)
    h = getattr(field, "h", 0.0) or 0.0
    origin = float(0.5 * (views[0].value(np.zeros((1, dim)))[0]
                          + views[1].value(np.zeros((1, dim)))[0]))
    origin_tol = 5.0 * (thr + h**2 + 1e-14) / radii[0] ** 2
    if origin > origin_tol and origin > 0.05 * scale:
        raise NoConvergence(
            f"rescaled field at the origin is {origin:.3g}, not a contact point"
        )

    # 2-homogeneity of the data itself: compare w(y) with w(y/2)*4 on dB_1
    w_half = 0.5 * (views[0].value(0.5 * omega) + views[1].value(0.5 * omega))
    sphere_scale = max(float(np.max(np.abs(w_sphere))), 1e-300)
    homog_defect = float(np.max(np.abs(4.0 * w_half - w_sphere))) / sphere_scale
    if homog_defect > 0.5:
        raise NoConvergence(
            f"rescaled field is far from 2-homogeneous (defect {homog_defect:.3g})"
        )

    bpts, bw = ball_rule(dim, 1.0, n_angular=min(n_angular, 1024), n_radial=16)
    w_ball = 0.5 * (views[0].value(bpts) + views[1].value(bpts))
    w_norm = max(float(np.sqrt(np.sum(bw * w_ball**2))), 1e-300)

    nu = _fit_half_space(omega, w_sphere, sw, dim)
    prof_a = HomogeneousProfile.half_space(nu)
    res_a = float(np.sqrt(np.sum(bw * (w_ball - prof_a.value(bpts)) ** 2))) / w_norm

    B, reliable = _fit_polynomial(bpts, w_ball, bw, dim)
    if reliable:
        prof_b = HomogeneousProfile.polynomial(B, trace_tol=1e-6)
        res_b = float(np.sqrt(np.sum(bw * (w_ball - prof_b.value(bpts)) ** 2))) / w_norm
    else:
        prof_b, res_b = None, np.inf

    if np.isfinite(res_b):
        lo, hi = min(res_a, res_b), max(res_a, res_b)
        if hi > 0 and (hi - lo) <= ambiguity_band * hi:
            raise AmbiguousProfile(
                f"half-space residual {res_a:.3g} vs polynomial {res_b:.3g} "
                f"within {ambiguity_band:.0%}"
            )
    if res_a <= res_b:
        return BlowupFit("half-space", prof_a, res_a, res_b, radii[:2],
                         cauchy, homog_defect, nu=prof_a.nu)
    return BlowupFit("polynomial", prof_b, res_a, res_b, radii[:2],
                     cauchy, homog_defect, B=prof_b.B)


def estimate_homogeneity(sol, cf: CoefficientField, x0, radii) -> float:
    """Fitted s from H(r) ~ r^(n-1+4s) along the given radii (log-log slope)."""
    from .functionals import sphere_weighted_mass

    x0 = np.asarray(x0, dtype=float)
    frame = make_frame(cf, x0)
    radii = np.asarray(radii, dtype=float)
    H = np.array([sphere_weighted_mass(sol, cf, x0, r, frame=frame) for r in radii])
    if np.any(H <= 0):
        return np.nan
    slope = np.polyfit(np.log(radii), np.log(H), 1)[0]
    return float((slope - (cf.dim - 1)) / 4.0)


# ---------------------------------------------------------------------------
# classification


@dataclass
class BlowupReport:
    x0: np.ndarray
    label: str  # "Regular" | "Singular"
    profile: HomogeneousProfile
    phi_limit: float
    theta: float
    stratum: int  # n - rank(B) for singular points, -1 for regular
    decay_rate: Optional[float]
    fit: BlowupFit
    trace: MonotonicityTrace
    richardson_order: Optional[float]


def _phi_limit(trace: MonotonicityTrace) -> tuple[float, Optional[float]]:
    """Guarded Richardson extrapolation of Phi(0+) from the finest rungs."""
    phi, radii = trace.phi, trace.radii
    a, b, c = phi[0], phi[1], phi[2]
    d1, d2 = b - a, c - b
    q = radii[1] / radii[0]
    tol = max(trace.quad_tol()[0], 1e-14)
    if abs(d1) <= tol or d1 * d2 <= 0:
        return float(a), None
    rho = d2 / d1
    if not (1.05 < rho < 20.0):
        return float(a), None
    p = np.log(rho) / np.log(q)
    return float(a - d1 / (rho - 1.0)), float(p)


def classify_point(sol, cf: CoefficientField, x0, radii=None,
                   rank_tol: float | None = None,
                   with_decay: bool = True) -> BlowupReport:
    """Label x0 Regular or Singular by thresholding Phi(0+) at 1.5 theta.

    The extrapolated density must agree with the fitted blow-up profile
    kind; a disagreement raises AmbiguousProfile rather than guessing.
    """
    x0 = np.asarray(x0, dtype=float)
    trace = build_trace(sol, cf, x0, radii=radii)
    phi0, order = _phi_limit(trace)
    theta = theta_constant(cf.dim)
    label = "Regular" if phi0 < 1.5 * theta else "Singular"

    fit = extract_blowup(sol, cf, x0, radii=trace.radii)
    profile_label = "Regular" if fit.kind == "half-space" else "Singular"
    if profile_label != label:
        raise AmbiguousProfile(
            f"energy density {phi0:.4g} says {label} but the blow-up fit "
            f"is {fit.kind} (residuals {fit.residual_half_space:.3g} / "
            f"{fit.residual_polynomial:.3g})"
        )

    stratum = -1
    if label == "Singular":
        h = getattr(as_field(sol), "h", 0.0) or 0.0
        if rank_tol is None:
            rank_tol = 10.0 * h**2 if h > 0 else 1e-8
        tr = max(float(np.trace(fit.B)), 1e-300)
        rank = int(np.sum(np.linalg.eigvalsh(fit.B) > rank_tol * tr))
        stratum = cf.dim - rank

    decay = None
    if with_decay:
        result = estimate_decay_rate(sol, cf, x0, fit.profile,
                                     radii=trace.radii, strict=False)
        decay = result.rate
    return BlowupReport(
        x0=x0, label=label, profile=fit.profile, phi_limit=phi0, theta=theta,
        stratum=stratum, decay_rate=decay, fit=fit, trace=trace,
        richardson_order=order,
    )


# ---------------------------------------------------------------------------
# decay of the deviation from the blow-up


@dataclass
class DecayResult:
    radii: np.ndarray
    deviations: np.ndarray
    rate: Optional[float]
    at_floor: bool
    ok: bool


def estimate_decay_rate(sol, cf: CoefficientField, x0,
                        profile: HomogeneousProfile, radii=None,
                        strict: bool = True) -> DecayResult:
    """Mean L^1 sphere deviation of u_{L,r} from the profile, per rung.

    Half-space profiles must decay with a positive log-log slope; polynomial
    ones only need a non-increasing sequence toward r = 0 (logarithmic
    moduli allowed). Exact matches sit at the quadrature floor and pass
    trivially. strict raises InsufficientDecay on failure instead of
    returning ok=False.
    """
    field = as_field(sol)
    x0 = np.asarray(x0, dtype=float)
    frame = make_frame(cf, x0)
    if radii is None:
        radii = default_radii(sol, cf, x0)
    radii = np.asarray(radii, dtype=float)

    omega, sw = sphere_rule(cf.dim, 1.0, n_angular=1024)
    area = float(np.sum(sw))
    vref = profile.value(omega)
    devs = np.empty(len(radii))
    for k, r in enumerate(radii):
        ur = field.value(frame.map(r * omega)) / r**2
        devs[k] = float(np.sum(sw * np.abs(ur - vref))) / area

    h = getattr(field, "h", 0.0) or 0.0
    vscale = max(float(np.max(np.abs(vref))), 1e-300)
    floor = np.maximum((h * frame.norm_Linv / radii) ** 2 * vscale, 1e-13 * vscale)
    usable = devs > floor
    if int(np.sum(usable)) < 3:
        return DecayResult(radii, devs, None, True, True)

    slope = float(np.polyfit(np.log(radii[usable]), np.log(devs[usable]), 1)[0])
    if profile.kind == "half-space":
        ok = slope >= 0.05
    else:
        ok = slope >= -0.05
    if strict and not ok:
        raise InsufficientDecay(
            f"deviation slope {slope:.3g} too small for a {profile.kind} profile"
        )
    return DecayResult(radii, devs, slope, False, ok)


# ---------------------------------------------------------------------------
# stratification


@dataclass
class PointRecord:
    x: np.ndarray
    label: str  # Regular | Singular | ambiguous | skipped
    phi_limit: float = np.nan
    stratum: int = -1
    nu: Optional[np.ndarray] = None
    B: Optional[np.ndarray] = None
    note: str = ""


@dataclass
class StratificationReport:
    records: list
    strata: dict
    regular_count: int
    singular_count: int
    ambiguous_count: int
    skipped_count: int
    regular_open_fraction: float
    normal_holder_quotient: float
    rank_tol: float
    meta: dict = dc_field(default_factory=dict)

    def summary(self) -> str:
        parts = [
            f"regular={self.regular_count}",
            f"singular={self.singular_count}",
            f"ambiguous={self.ambiguous_count}",
            f"skipped={self.skipped_count}",
        ]
        for d in sorted(self.strata):
            parts.append(f"S_{d}={self.strata[d]}")
        parts.append(f"open_frac={self.regular_open_fraction:.3f}")
        parts.append(f"normal_holder={self.normal_holder_quotient:.4g}")
        return " ".join(parts)


def _classify_one(args):
    sol, cf, x = args
    try:
        rep = classify_point(sol, cf, x, with_decay=False)
    except AmbiguousProfile as exc:
        return PointRecord(x=x, label="ambiguous", note=str(exc))
    except (BallOutOfDomain, GridTooCoarse, FrameOverflow, NoConvergence) as exc:
        return PointRecord(x=x, label="skipped", note=str(exc))
    rec = PointRecord(x=x, label=rep.label, phi_limit=rep.phi_limit,
                      stratum=rep.stratum)
    if rep.fit.kind == "half-space":
        rec.nu = rep.fit.nu
    else:
        rec.B = rep.fit.B
    return rec


def stratify(sol, cf: CoefficientField, fbs=None, stride: int = 4,
             threads: int = 1, neighbor_radius: float | None = None,
             holder_exponent: float | None = None) -> StratificationReport:
    """Classify free-boundary points and bin singular ones by stratum.

    The stratum of a singular point is d = n - rank(B) with the rank cut at
    10 h^2 relative to trace(B). Regular points contribute to the relative
    openness statistic (fraction whose near neighbors on Gamma are also
    regular) and to the Holder quotient of the frame-normalized normal field
    x -> L^-1(x) n(x).
    """
    from .free_boundary import extract as extract_fb

    field = as_field(sol)
    h = getattr(field, "h", 0.0) or 0.0
    grid = getattr(sol, "grid", None)
    if fbs is None:
        fbs = extract_fb(sol, cf)
    points = fbs.points if hasattr(fbs, "points") else np.atleast_2d(fbs)
    if len(points) == 0:
        raise EmptyInterior("stratification needs a non-empty free boundary")
    points = np.atleast_2d(np.asarray(points, dtype=float))[::max(1, stride)]
    n = cf.dim

    tasks = [(sol, cf, points[i]) for i in range(len(points))]
    if threads > 1:
        import concurrent.futures as cfut

        with cfut.ThreadPoolExecutor(max_workers=threads) as pool:
            records = list(pool.map(_classify_one, tasks))
    else:
        records = [_classify_one(t) for t in tasks]

    rank_tol = 10.0 * h**2 if h > 0 else 1e-8
    strata: dict[int, int] = {}
    for rec in records:
        if rec.label == "Singular" and rec.stratum >= 0:
            strata[rec.stratum] = strata.get(rec.stratum, 0) + 1

    reg = [r for r in records if r.label == "Regular"]
    sing = [r for r in records if r.label == "Singular"]
    amb = [r for r in records if r.label == "ambiguous"]
    skip = [r for r in records if r.label == "skipped"]

    # relative openness of the regular set within the sampled Gamma
    if neighbor_radius is None:
        neighbor_radius = 3.0 * stride * max(h, 1e-12)
    open_ok = 0
    open_tot = 0
    labeled = [r for r in records if r.label in ("Regular", "Singular")]
    pts_l = np.array([r.x for r in labeled]) if labeled else np.zeros((0, n))
    for i, r in enumerate(labeled):
        if r.label != "Regular":
            continue
        d = np.linalg.norm(pts_l - r.x, axis=1)
        nbr = (d > 1e-14) & (d <= neighbor_radius)
        if not np.any(nbr):
            continue
        open_tot += 1
        if all(labeled[j].label == "Regular" for j in np.nonzero(nbr)[0]):
            open_ok += 1
    open_frac = open_ok / open_tot if open_tot else 1.0

    # Holder seminorm of the frame-normalized normal along regular points
    beta = holder_exponent if holder_exponent is not None else cf.alpha / 2.0
    quot = 0.0
    reg_with_nu = [r for r in reg if r.nu is not None]
    frames = {i: np.linalg.inv(make_frame(cf, r.x).L)
              for i, r in enumerate(reg_with_nu)}
    for i in range(len(reg_with_nu)):
        di = frames[i] @ reg_with_nu[i].nu
        di = di / np.linalg.norm(di)
        for j in range(i + 1, len(reg_with_nu)):
            gap = float(np.linalg.norm(reg_with_nu[i].x - reg_with_nu[j].x))
            if gap < 1e-14 or gap > 0.5:
                continue
            dj = frames[j] @ reg_with_nu[j].nu
            dj = dj / np.linalg.norm(dj)
            diff = min(np.linalg.norm(di - dj), np.linalg.norm(di + dj))
            quot = max(quot, diff / gap**beta)

    return StratificationReport(
        records=records, strata=strata,
        regular_count=len(reg), singular_count=len(sing),
        ambiguous_count=len(amb), skipped_count=len(skip),
        regular_open_fraction=open_frac, normal_holder_quotient=quot,
        rank_tol=rank_tol,
        meta={"stride": stride, "beta": beta,
              "neighbor_radius": neighbor_radius,
              "grid_shape": None if grid is None else list(grid.shape)},
    )
