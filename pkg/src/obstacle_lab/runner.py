"""Scenario runner: executes analyses, checks expectations, writes artifacts.

run_scenario produces, per scenario output directory: solution.bin/.json,
trace_weiss.csv, trace_monneau.csv, strata.csv, report.json, and SVG plots,
each CSV/SVG with a .meta.json provenance sidecar (config hash, grid,
tolerances, version - no timestamps, so reruns are byte-identical).
"""

from __future__ import annotations

import hashlib
import json
import time
from dataclasses import dataclass, field as dc_field
from pathlib import Path
from typing import Optional

import numpy as np

from . import blowup as bl
from . import free_boundary as fb
from . import functionals as fn
from . import svgplot
from .errors import (
    AmbiguousProfile,
    ConfigError,
    EmptyInterior,
    GridTooCoarse,
    NoFiniteConstants,
    ObstacleLabError,
)
from .field_model import CoefficientField, make_coefficients, validate_field
from .geometry import grid_from_cells
from .obstacle_solver import ObstacleSolution, assemble, pde_residual, solve
from .quadrature import radius_ladder
from .scenarios import (
    RunOptions,
    Scenario,
    parse_config,
    scenario_descriptions,
)

FLOAT_FMT = "%.17g"
STABILITY_FLOOR = 0.05  # constants below this are compared as "both small"


@dataclass
class Check:
    name: str
    passed: bool
    value: object = None
    detail: str = ""

    def row(self) -> dict:
        return {"name": self.name, "passed": bool(self.passed),
                "value": self.value, "detail": self.detail}


@dataclass
class RunResult:
    scenario: str
    exit_status: int
    checks: list
    report: dict
    outdir: Optional[Path]

    @property
    def ok(self) -> bool:
        return self.exit_status == 0


# ---------------------------------------------------------------------------
# output helpers


def _jsonify(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonify(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonify(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonify(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if np.isfinite(v) else repr(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def _config_hash(scenario: Scenario, options: RunOptions) -> str:
    blob = json.dumps(_jsonify({
        "scenario": scenario.name,
        "resolutions": list(options.resolutions),
        "solver": options.solver,
        "analyses": list(options.analyses),
        "seed": options.seed,
        "radii": {k: (v.tolist() if isinstance(v, np.ndarray) else v)
                  for k, v in options.radii.items()},
    }), sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()


def _provenance(scenario, options, grid) -> dict:
    from . import __version__

    return {
        "config_sha256": _config_hash(scenario, options),
        "scenario": scenario.name,
        "grid_shape": list(grid.shape),
        "spacing": [float(v) for v in grid.h],
        "solver_tol": options.solver.get("tol", 1e-9),
        "seed": options.seed,
        "version": __version__,
    }


def _write_csv(path: Path, header: list[str], rows) -> None:
    lines = [",".join(header)]
    for row in rows:
        cells = []
        for v in row:
            if isinstance(v, str):
                cells.append(v)
            elif v is None:
                cells.append("")
            elif isinstance(v, (int, np.integer)):
                cells.append(str(int(v)))
            else:
                cells.append(FLOAT_FMT % float(v))
        lines.append(",".join(cells))
    path.write_text("\n".join(lines) + "\n")


def _sidecar(path: Path, prov: dict) -> None:
    meta = dict(prov)
    meta["file"] = path.name
    Path(str(path) + ".meta.json").write_text(
        json.dumps(_jsonify(meta), indent=2, sort_keys=True) + "\n")


def _write_table(outdir: Path, stem: str, header: list[str], rows,
                 prov: dict, fmt: str) -> None:
    """Write stem.csv (always) and a stem.json twin when fmt is 'json'."""
    rows = [list(r) for r in rows]
    p = outdir / f"{stem}.csv"
    _write_csv(p, header, rows)
    _sidecar(p, prov)
    if fmt == "json":
        q = outdir / f"{stem}.json"
        payload = [dict(zip(header, r)) for r in rows]
        q.write_text(json.dumps(_jsonify(payload), indent=2) + "\n")
        _sidecar(q, prov)


# ---------------------------------------------------------------------------
# pipeline pieces


def build_solution(scenario: Scenario, cf: CoefficientField, grid,
                   solver_opts: dict) -> ObstacleSolution:
    """Solve the LCP, or sample the exact field for synthetic scenarios."""
    if scenario.synthetic:
        de = assemble(cf, grid)
        values = np.asarray(scenario.exact_u(grid.node_points()),
                            dtype=float).reshape(grid.shape)
        hmax = float(np.max(grid.h))
        sol = ObstacleSolution(
            grid=grid, cf=cf, values=values, tol=0.0, iterations=0,
            converged=True, energy=de.value(values.ravel()),
            u_pos_threshold=hmax**2 * cf.f_sup(grid), comp_residual=0.0,
        )
        sol.comp_residual = pde_residual(sol, de).comp_max
        return sol
    de = assemble(cf, grid)
    return solve(
        de,
        tol=solver_opts.get("tol", 1e-9),
        max_iter=solver_opts.get("max_iter", 50_000),
        omega=solver_opts.get("omega", "auto"),
    )


def _pick_x0(scenario: Scenario, sol: ObstacleSolution,
             cf: CoefficientField) -> np.ndarray:
    target = np.asarray(scenario.x0, dtype=float)
    if not scenario.pick_x0_from_gamma:
        return target
    gamma = fb.extract(sol, cf)
    if len(gamma) == 0:
        return target
    k = int(np.argmin(np.linalg.norm(gamma.points - target, axis=1)))
    return gamma.points[k]


def _stability_ok(a: float, b: float, rtol: float = 0.2,
                  floor: float = STABILITY_FLOOR) -> bool:
    return abs(a - b) <= rtol * max(abs(a), abs(b), floor)


def _profile_homogeneity_defect(profile) -> float:
    from .quadrature import sphere_rule

    pts, _ = sphere_rule(profile.dim, 1.0, n_angular=256)
    worst = 0.0
    base = profile.value(pts)
    scale = max(float(np.max(np.abs(base))), 1e-300)
    for s in (0.25, 0.5, 0.75):
        worst = max(worst, float(np.max(np.abs(
            profile.value(s * pts) / s**2 - base))) / scale)
    return worst


# ---------------------------------------------------------------------------
# Payne-Weinberger triples


def _pw_triples():
    """The three reference (w, cf, F, r) identity checks."""
    from .geometry import box

    dom2 = box((-1.1, 1.1), (-1.1, 1.1))
    cf_id = make_coefficients(dom2, matrix="identity", f=1.0, g=0.0,
                              label="pw-identity")
    cf_lip = make_coefficients(dom2, matrix="radial-lipschitz",
                               matrix_params={"eps": 0.3}, f=1.0, g=0.0,
                               label="pw-lipschitz")
    a = np.array([1.0, 2.0])

    w_lin = fn.SmoothTestField(
        value=lambda p: np.atleast_2d(p) @ a,
        gradient=lambda p: np.broadcast_to(a, np.atleast_2d(p).shape).copy(),
        hessian=lambda p: np.zeros((len(np.atleast_2d(p)), 2, 2)),
    )
    w_sq = fn.SmoothTestField(
        value=lambda p: np.sum(np.atleast_2d(p) ** 2, axis=1),
        gradient=lambda p: 2.0 * np.atleast_2d(p),
        hessian=lambda p: np.broadcast_to(2.0 * np.eye(2),
                                          (len(np.atleast_2d(p)), 2, 2)).copy(),
    )

    def w_xy_hess(p):
        m = len(np.atleast_2d(p))
        h = np.zeros((m, 2, 2))
        h[:, 0, 1] = h[:, 1, 0] = 1.0
        return h

    w_xy = fn.SmoothTestField(
        value=lambda p: np.atleast_2d(p)[:, 0] * np.atleast_2d(p)[:, 1],
        gradient=lambda p: np.atleast_2d(p)[:, ::-1].copy(),
        hessian=w_xy_hess,
    )

    r = 1.0
    F_radial = fn.VectorFieldSpec(
        value=lambda p: np.atleast_2d(p) / r,
        jacobian=lambda p: np.broadcast_to(np.eye(2) / r,
                                           (len(np.atleast_2d(p)), 2, 2)).copy(),
    )
    F_linear = fn.VectorFieldSpec(
        value=lambda p: np.atleast_2d(p).astype(float),
        jacobian=lambda p: np.broadcast_to(np.eye(2),
                                           (len(np.atleast_2d(p)), 2, 2)).copy(),
    )

    def F_mu_val(p):
        p = np.atleast_2d(p)
        mats = cf_lip.A(p)
        nrm = np.linalg.norm(p, axis=1)
        nu = np.where(nrm[:, None] > 1e-300, p / np.maximum(nrm, 1e-300)[:, None], 0.0)
        mu_vals = np.einsum("pij,pi,pj->p", mats, nu, nu)
        mu_vals = np.where(nrm > 1e-300, mu_vals, 1.0)
        return np.einsum("pij,pj->pi", mats, p) / (r * mu_vals[:, None])

    F_mu = fn.VectorFieldSpec(value=F_mu_val)

    return [
        ("linear", cf_id, w_lin, F_radial, r),
        ("quadratic", cf_id, w_sq, F_linear, r),
        ("mixed-lipschitz", cf_lip, w_xy, F_mu, r),
    ]


PW_FLOOR = 1e-9


def run_pw_check(levels=(32, 64, 128)) -> dict:
    """Residuals of the three reference triples across quadrature levels."""
    rows = {}
    for name, cf, w, F, r in _pw_triples():
        residuals = []
        for n_rad in levels:
            res = fn.payne_weinberger_check(cf, w, F, r, n_radial=n_rad,
                                            n_angular=8 * n_rad)
            residuals.append(res.residual)
        # identically-zero or constant-integrand triples sit at the
        # quadrature/FD floor at every level; no order is measurable there
        if all(v <= PW_FLOOR for v in residuals):
            order = "floor"
        elif len(residuals) >= 2 and all(v > 0 for v in residuals):
            hs = np.log(1.0 / np.asarray(levels, dtype=float))
            order = float(np.polyfit(hs, np.log(residuals), 1)[0])
        else:
            order = None
        rows[name] = {"levels": list(levels), "residuals": residuals,
                      "order": order}
    return rows


# ---------------------------------------------------------------------------
# single-resolution pipeline


def _run_at_resolution(scenario: Scenario, options: RunOptions, cells: int,
                       outdir: Optional[Path], prov: dict,
                       checks: list, report: dict) -> ObstacleSolution:
    cf = scenario.coefficients()
    grid = grid_from_cells(scenario.domain, cells)
    probe = grid_from_cells(scenario.domain, min(cells, 64))
    validate_field(cf, probe, strict=True)

    t0 = time.perf_counter()
    sol = build_solution(scenario, cf, grid, options.solver)
    solve_s = time.perf_counter() - t0
    exp = scenario.expected
    tag = f"[{cells}]"
    level = {"cells": cells, "h": float(np.max(grid.h)),
             "solve_seconds": solve_s, "iterations": sol.iterations}

    if "solve" in options.analyses and not scenario.synthetic:
        checks.append(Check(f"solve-converged{tag}", bool(sol.converged),
                            sol.iterations,
                            f"{sol.iterations} sweeps, {solve_s:.2f}s"))
    if scenario.exact_u is not None:
        err = float(np.max(np.abs(
            sol.values - np.asarray(scenario.exact_u(grid.node_points()))
            .reshape(grid.shape))))
        level["linf_error"] = err
        if exp.get("linf") is not None and not scenario.synthetic:
            checks.append(Check(f"solution-linf{tag}", err <= exp["linf"], err,
                                f"L-inf error {err:.3e} vs bound {exp['linf']:.1e}"))

    if "residuals" in options.analyses:
        rep = pde_residual(sol)
        level["residuals"] = {
            "pde_max": rep.pde_max, "pde_l2": rep.pde_l2,
            "comp_max": rep.comp_max,
            "coincidence_violation": rep.coincidence_violation,
        }
        if not scenario.synthetic:
            bound = 10.0 * max(sol.tol, 1e-12)
            checks.append(Check(
                f"residual-complementarity{tag}", rep.comp_max <= bound,
                rep.comp_max,
                f"comp residual {rep.comp_max:.3e} vs {bound:.1e}"))

    x0 = _pick_x0(scenario, sol, cf)
    level["x0"] = [float(v) for v in x0]

    gamma = None
    if any(a in options.analyses for a in ("growth", "stratify")):
        try:
            gamma = fb.extract(sol, cf)
        except EmptyInterior as exc:
            checks.append(Check(f"gamma-extract{tag}", False, None, str(exc)))

    trace = None
    if "weiss" in options.analyses:
        r_max = options.radii.get("r_max")
        trace = fn.build_trace(sol, cf, x0, r_max=r_max)
        try:
            if len(trace.radii) < 8:
                raise GridTooCoarse(
                    f"only {len(trace.radii)} usable radii at this resolution")
            drift = fn.weiss_drift_test(trace, alpha=cf.alpha)
            caps = exp.get("c_caps", {})
            level["weiss"] = {"c3": drift.c3, "c4": drift.c4,
                              "admissible": drift.admissible,
                              "raw_violations": drift.raw_violations}
            checks.append(Check(
                f"weiss-admissible{tag}", drift.admissible,
                drift.c3 + drift.c4,
                f"C3={drift.c3:.4g} C4={drift.c4:.4g} "
                f"raw violations {drift.raw_violations}"))
            if "c3" in caps:
                checks.append(Check(f"weiss-c3-cap{tag}", drift.c3 <= caps["c3"],
                                    drift.c3, f"C3={drift.c3:.4g}"))
            if "c4" in caps:
                checks.append(Check(f"weiss-c4-cap{tag}", drift.c4 <= caps["c4"],
                                    drift.c4, f"C4={drift.c4:.4g}"))
        except (NoFiniteConstants, GridTooCoarse) as exc:
            checks.append(Check(f"weiss-admissible{tag}", False, None, str(exc)))
        if exp.get("phi_const") is not None:
            lo, hi = exp.get("phi_spread_range", (0.05, 0.5))
            sel = (trace.radii >= lo) & (trace.radii <= hi)
            if np.any(sel):
                phis = trace.phi[sel]
                spread = float((phis.max() - phis.min()) / abs(exp["phi_const"]))
                rtol = exp.get("phi_spread_rtol", 0.02)
                checks.append(Check(
                    f"weiss-phi-spread{tag}", spread <= rtol, spread,
                    f"spread {spread:.3%} over r in [{lo}, {hi}]"))
                mean_err = float(abs(phis.mean() - exp["phi_const"])
                                 / abs(exp["phi_const"]))
                checks.append(Check(
                    f"weiss-phi-value{tag}", mean_err <= 0.05, mean_err,
                    f"mean Phi {phis.mean():.6g} vs {exp['phi_const']:.6g}"))

    monneau = None
    if "monneau" in options.analyses and scenario.monneau_profile is not None:
        profile = scenario.monneau_profile()
        radii = options.radii.get("monneau")
        if radii is None and scenario.monneau_radii is not None:
            radii = scenario.monneau_radii(float(np.max(grid.h)))
        monneau = fn.monneau_test(sol, cf, x0, profile, radii=radii,
                                  alpha=cf.alpha)
        level["monneau"] = {"c5": monneau.c5,
                            "max_M": float(np.max(np.abs(monneau.M))),
                            "derivative_violations": monneau.derivative_violations}
        cap = exp.get("c_caps", {}).get("c5")
        if cap is not None:
            checks.append(Check(f"monneau-c5-cap{tag}", monneau.c5 <= cap,
                                monneau.c5, f"C5={monneau.c5:.4g}"))
        if exp.get("monneau_flat") is not None:
            peak = float(np.max(np.abs(monneau.M)))
            checks.append(Check(
                f"monneau-flat{tag}", peak <= exp["monneau_flat"], peak,
                f"max |M| {peak:.3e} vs {exp['monneau_flat']:.1e}"))

    blow = None
    if "blowup" in options.analyses:
        try:
            blow = bl.classify_point(sol, cf, x0)
        except (AmbiguousProfile, ObstacleLabError) as exc:
            checks.append(Check(f"classification{tag}", False, None, str(exc)))
        if blow is not None:
            level["blowup"] = {
                "label": blow.label, "phi_limit": blow.phi_limit,
                "stratum": blow.stratum, "decay_rate": blow.decay_rate,
                "residual": blow.fit.residual,
            }
            if blow.fit.nu is not None:
                level["blowup"]["nu"] = blow.fit.nu.tolist()
            if blow.fit.B is not None:
                level["blowup"]["B"] = blow.fit.B.tolist()
            if exp.get("label"):
                checks.append(Check(
                    f"classification{tag}", blow.label == exp["label"],
                    blow.label,
                    f"label {blow.label}, Phi(0+) {blow.phi_limit:.6g}"))
            if exp.get("phi_limit") is not None:
                rel = abs(blow.phi_limit - exp["phi_limit"]) / abs(exp["phi_limit"])
                checks.append(Check(
                    f"phi-limit{tag}", rel <= exp.get("phi_rtol", 0.10), rel,
                    f"Phi(0+) {blow.phi_limit:.6g} vs {exp['phi_limit']:.6g} "
                    f"({rel:.2%})"))
            if exp.get("nu") is not None and blow.fit.nu is not None:
                target = np.asarray(exp["nu"], dtype=float)
                target = target / np.linalg.norm(target)
                dot = float(blow.fit.nu @ target)
                checks.append(Check(
                    f"normal-direction{tag}", 1.0 - dot <= exp.get("nu_tol", 0.05),
                    dot, f"nu . nu* = {dot:.6f}"))
            if exp.get("B") is not None and blow.fit.B is not None:
                diff = float(np.max(np.abs(blow.fit.B - np.asarray(exp["B"]))))
                checks.append(Check(
                    f"blowup-matrix{tag}", diff <= exp.get("B_atol", 1e-3),
                    diff, f"entrywise error {diff:.2e}"))
            if exp.get("stratum") is not None:
                checks.append(Check(
                    f"stratum{tag}", blow.stratum == exp["stratum"],
                    blow.stratum, f"d = {blow.stratum}"))
            defect = _profile_homogeneity_defect(blow.profile)
            checks.append(Check(
                f"profile-homogeneity{tag}", defect <= 1e-9, defect,
                f"max |v(sy)/s^2 - v(y)| = {defect:.2e}"))
            # decay toward the profile is only meaningful when x0 sits
            # exactly on the free boundary; points recovered from the grid
            # carry an O(h) offset that floors the deviation
            if not scenario.pick_x0_from_gamma:
                decay = bl.estimate_decay_rate(sol, cf, x0, blow.profile,
                                               radii=blow.trace.radii,
                                               strict=False)
                slope = "floor" if decay.at_floor else f"{decay.rate:.3g}"
                checks.append(Check(f"decay{tag}", decay.ok, decay.rate,
                                    f"deviation slope {slope}"))

    strat = None
    if "stratify" in options.analyses:
        points = scenario.stratify_points
        source = points if points is not None else gamma
        if source is None or (hasattr(source, "__len__") and len(source) == 0):
            checks.append(Check(f"stratify{tag}", False, None,
                                "no free boundary points available"))
        else:
            strat = bl.stratify(sol, cf, fbs=source,
                                stride=scenario.stratify_stride,
                                threads=options.threads)
            level["stratify"] = {
                "regular": strat.regular_count, "singular": strat.singular_count,
                "ambiguous": strat.ambiguous_count, "skipped": strat.skipped_count,
                "strata": {str(k): v for k, v in strat.strata.items()},
                "open_fraction": strat.regular_open_fraction,
                "normal_holder_quotient": strat.normal_holder_quotient,
            }
            if exp.get("all_regular"):
                ok = (strat.singular_count == 0 and strat.ambiguous_count == 0
                      and strat.regular_count > 0)
                checks.append(Check(f"stratify-all-regular{tag}", ok,
                                    strat.regular_count, strat.summary()))
                checks.append(Check(
                    f"stratify-openness{tag}",
                    strat.regular_open_fraction >= 0.999,
                    strat.regular_open_fraction, strat.summary()))
            if exp.get("all_singular_stratum") is not None:
                d = exp["all_singular_stratum"]
                ok = (strat.regular_count == 0 and strat.ambiguous_count == 0
                      and strat.singular_count > 0
                      and strat.strata.get(d, 0) == strat.singular_count)
                checks.append(Check(f"stratify-stratum-{d}{tag}", ok,
                                    strat.strata.get(d, 0), strat.summary()))

    growth = None
    growth_ext = None
    if "growth" in options.analyses:
        hmax = float(np.max(grid.h))
        radii = radius_ladder(0.2, 4.0 * hmax)
        if scenario.gamma_points is not None:
            designated = fb.FreeBoundarySet(
                points=np.atleast_2d(scenario.gamma_points),
                orientations=np.zeros_like(np.atleast_2d(scenario.gamma_points)),
                threshold=sol.u_pos_threshold, grid=grid)
            growth = fb.quadratic_growth_check(sol, designated, radii)
            per = growth.per_point
            var = 0.0
            for i in range(per.shape[0]):
                row = per[i][np.isfinite(per[i])]
                if len(row):
                    var = max(var, float((row.max() - row.min()) / row.max()))
            level["growth"] = {"min_ratio": growth.min_ratio,
                               "max_ratio": growth.max_ratio,
                               "variation": var}
            checks.append(Check(
                f"growth-nondegenerate{tag}", growth.min_ratio >= 0.05,
                growth.min_ratio, f"min ratio {growth.min_ratio:.4g}"))
            if exp.get("growth_value") is not None:
                rel = abs(growth.min_ratio - exp["growth_value"]) \
                    / exp["growth_value"]
                checks.append(Check(
                    f"growth-value{tag}", rel <= exp.get("growth_rtol", 0.05),
                    growth.min_ratio,
                    f"theta-hat {growth.min_ratio:.4g} vs {exp['growth_value']}"))
                checks.append(Check(
                    f"growth-variation{tag}",
                    var <= exp.get("growth_var_rtol", 0.10), var,
                    f"max per-point variation {var:.2%}"))
        if gamma is not None and len(gamma):
            growth_ext = fb.quadratic_growth_check(sol, gamma, radii)
            level.setdefault("growth", {})["extracted_min_ratio"] = \
                growth_ext.min_ratio
            checks.append(Check(
                f"growth-extracted{tag}", growth_ext.min_ratio >= 0.05,
                growth_ext.min_ratio,
                f"min ratio over extracted Gamma {growth_ext.min_ratio:.4g}"))

    if "pw-check" in options.analyses:
        pw = run_pw_check()
        level["pw_check"] = pw
        checks.append(Check(
            f"pw-linear-floor{tag}", pw["linear"]["residuals"][-1] <= 1e-10,
            pw["linear"]["residuals"][-1],
            f"residual {pw['linear']['residuals'][-1]:.2e}"))
        for name in ("quadratic", "mixed-lipschitz"):
            order = pw[name]["order"]
            ok = order == "floor" or (isinstance(order, float) and order >= 1.8)
            checks.append(Check(f"pw-order-{name}{tag}", ok, order,
                                f"observed order {order}"))

    report["levels"].append(level)

    if outdir is not None:
        outdir.mkdir(parents=True, exist_ok=True)
        sol.save(outdir, provenance=prov)
        if trace is not None:
            _write_table(outdir, "trace_weiss",
                         ["r", "E", "H", "phi", "quad_tol"],
                         zip(trace.radii, trace.E, trace.H, trace.phi,
                             trace.quad_tol()),
                         prov, options.format)
            svg = outdir / "phi_trace.svg"
            svgplot.line_plot(svg, [("Phi(r)", trace.radii, trace.phi)],
                              title=f"{scenario.name}: Weiss energy",
                              xlabel="r", ylabel="Phi", logx=True)
            _sidecar(svg, prov)
        if monneau is not None:
            _write_table(outdir, "trace_monneau", ["r", "M", "phi", "tol"],
                         zip(monneau.radii, monneau.M, monneau.phi,
                             monneau.tol),
                         prov, options.format)
            svg = outdir / "monneau.svg"
            svgplot.line_plot(svg, [("M(r)", monneau.radii, monneau.M)],
                              title=f"{scenario.name}: Monneau deviation",
                              xlabel="r", ylabel="M")
            _sidecar(svg, prov)
        if strat is not None:
            rows = []
            for rec in strat.records:
                prof = ""
                if rec.nu is not None:
                    prof = "nu=" + "/".join(FLOAT_FMT % v for v in rec.nu)
                elif rec.B is not None:
                    prof = "B=" + "/".join(FLOAT_FMT % v
                                           for v in rec.B.ravel())
                rows.append(list(rec.x) + [rec.label, rec.phi_limit,
                                           rec.stratum, prof])
            coord_cols = [f"x{i + 1}" for i in range(grid.domain.dim)]
            _write_table(outdir, "strata",
                         coord_cols + ["label", "phi_limit", "stratum",
                                       "profile"], rows, prov, options.format)
            svg = outdir / "strata.svg"
            svgplot.strata_map(svg, strat.records, grid.domain,
                               title=f"{scenario.name}: strata")
            _sidecar(svg, prov)
        svg = outdir / "solution.svg"
        if grid.domain.dim == 1:
            svgplot.line_plot(svg, [("u", grid.axes[0], sol.values)],
                              title=f"{scenario.name}: solution",
                              xlabel="x", ylabel="u")
        else:
            overlay = gamma.points if gamma is not None else None
            vals = sol.values if grid.domain.dim == 2 else \
                sol.values[:, :, sol.values.shape[2] // 2]
            svgplot.heatmap(svg, grid, vals,
                            title=f"{scenario.name}: solution", points=overlay)
        _sidecar(svg, prov)

    return sol


# ---------------------------------------------------------------------------
# public entry points


def list_scenarios(registry=None) -> list[tuple[str, str]]:
    """Stable, alphabetized (name, description) pairs for the registry."""
    return scenario_descriptions(registry)


def run_scenario(config, write_outputs: bool = True) -> RunResult:
    """Run one scenario (optionally at several resolutions) and verdict it.

    config: a mapping, a JSON file path, or a (Scenario, RunOptions) pair.
    Exit status 0 iff every check passed; failures are listed in
    report.json under "checks".
    """
    if isinstance(config, tuple):
        scenario, options = config
    else:
        scenario, options = parse_config(config)

    outdir = None
    if write_outputs:
        outdir = Path(options.out) if options.out else Path("out") / scenario.name

    checks: list[Check] = []
    report: dict = {"scenario": scenario.name, "levels": []}

    grid_fine = grid_from_cells(scenario.domain, options.resolutions[-1])
    prov = _provenance(scenario, options, grid_fine)

    for i, cells in enumerate(options.resolutions):
        is_finest = i == len(options.resolutions) - 1
        _run_at_resolution(scenario, options, cells,
                           outdir if is_finest else None, prov, checks, report)

    # cross-resolution stability of the fitted constants
    if len(options.resolutions) >= 2:
        for key, names in (("weiss", ("c3", "c4")), ("monneau", ("c5",))):
            series = [lvl.get(key) for lvl in report["levels"]]
            if any(s is None for s in series):
                continue
            for cname in names:
                vals = [s[cname] for s in series]
                ok = all(_stability_ok(a, b) for a, b in zip(vals, vals[1:]))
                checks.append(Check(
                    f"{key}-{cname}-stability",
                    ok, vals[-1],
                    " -> ".join(f"{v:.4g}" for v in vals)))

    passed = all(c.passed for c in checks)
    report["checks"] = [c.row() for c in checks]
    report["provenance"] = prov
    report["passed"] = passed
    result = RunResult(
        scenario=scenario.name, exit_status=0 if passed else 1,
        checks=checks, report=_jsonify(report), outdir=outdir,
    )
    if outdir is not None:
        outdir.mkdir(parents=True, exist_ok=True)
        (outdir / "report.json").write_text(
            json.dumps(result.report, indent=2, sort_keys=True) + "\n")
    return result


@dataclass
class ConvergenceTable:
    scenario: str
    rows: list
    orders: dict

    def summary(self) -> str:
        lines = [f"{self.scenario}: refinement study"]
        for row in self.rows:
            lines.append("  " + " ".join(f"{k}={v}" for k, v in row.items()))
        for key, vals in self.orders.items():
            lines.append(f"  order[{key}]: " + ", ".join(str(v) for v in vals))
        return "\n".join(lines)

    def to_csv(self, path) -> None:
        if not self.rows:
            return
        header = list(self.rows[0].keys())
        _write_csv(Path(path), header,
                   [[row.get(k) for k in header] for row in self.rows])

    def to_json(self, path) -> None:
        payload = {"scenario": self.scenario, "rows": self.rows,
                   "orders": self.orders}
        Path(path).write_text(json.dumps(_jsonify(payload), indent=2) + "\n")


FLOOR_EPS = 1e-11


def _order_seq(errors: list[float]) -> list:
    out = []
    for a, b in zip(errors, errors[1:]):
        if a is None or b is None:
            out.append(None)
        elif b <= FLOOR_EPS or a <= FLOOR_EPS:
            out.append("floor")
        else:
            out.append(round(float(np.log2(a / b)), 3))
    return out


def refinement_study(config, levels: int = 3) -> ConvergenceTable:
    """Re-run a scenario at doubling resolutions and tabulate orders.

    Errors already at the quadrature/solver floor are reported as "floor"
    instead of a meaningless order estimate.
    """
    if levels < 2:
        raise ValueError("refinement study needs at least 2 levels")
    if isinstance(config, tuple):
        scenario, options = config
    else:
        scenario, options = parse_config(config)

    base = options.resolutions[0]
    study_analyses = tuple(a for a in options.analyses
                           if a in ("solve", "residuals", "weiss", "monneau"))
    rows = []
    errors = []
    for k in range(levels):
        cells = base * 2**k
        opts_k = RunOptions(
            resolutions=(cells,), solver=dict(options.solver),
            analyses=study_analyses, out=None, seed=options.seed,
            threads=options.threads, format=options.format,
            radii=dict(options.radii),
        )
        checks: list[Check] = []
        report = {"levels": []}
        _run_at_resolution(scenario, opts_k, cells, None,
                           _provenance(scenario, opts_k,
                                       grid_from_cells(scenario.domain, cells)),
                           checks, report)
        lvl = report["levels"][0]
        row = {"cells": cells, "h": lvl["h"]}
        err = lvl.get("linf_error")
        row["linf_error"] = err
        errors.append(err)
        if "weiss" in lvl:
            row["c3"] = lvl["weiss"]["c3"]
            row["c4"] = lvl["weiss"]["c4"]
        if "monneau" in lvl:
            row["c5"] = lvl["monneau"]["c5"]
        if "residuals" in lvl:
            row["comp_max"] = lvl["residuals"]["comp_max"]
        rows.append(row)

    orders = {}
    if any(e is not None for e in errors):
        orders["linf_error"] = _order_seq(errors)
    return ConvergenceTable(scenario=scenario.name, rows=rows, orders=orders)
