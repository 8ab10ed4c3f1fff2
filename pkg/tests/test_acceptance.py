"""Acceptance suite: one test per shipping criterion, one verdict line each.

Scenario runs are cached at module level so each expensive solve happens
once. Every test ends by printing "[PASS] criterion N: ..." (visible under
pytest -s or on failure) and asserting the same condition.

Frozen oracles: u=((x-1/2)+)^2/2 (1D), u=|x|^2/4 (radial), Phi = pi/16
(half-space 2D), pi/8 (radial 2D), growth ratios 1/2 and 1/4,
B = diag(0.4, 0.1) and diag(1/2, 0) for the synthetic profiles.
"""

import sys
import time

import numpy as np
import pytest

from obstacle_lab import (
    RunOptions,
    assemble,
    box,
    build_trace,
    get_scenario,
    grid_from_cells,
    make_coefficients,
    psi,
    run_scenario,
    solve,
)
from obstacle_lab.fields import AnalyticField
from obstacle_lab.functionals import HomogeneousProfile
from obstacle_lab.quadrature import radius_ladder
from obstacle_lab.runner import run_pw_check

PHI_HALFSPACE_2D = np.pi / 16.0
PHI_RADIAL_2D = np.pi / 8.0

_RUNS: dict = {}


def run_cached(name, resolutions=None):
    key = (name, resolutions)
    if key not in _RUNS:
        scenario = get_scenario(name)
        options = RunOptions(
            resolutions=resolutions or (scenario.cells,),
            solver=dict(scenario.solver),
            analyses=scenario.analyses,
        )
        t0 = time.perf_counter()
        result = run_scenario((scenario, options), write_outputs=False)
        _RUNS[key] = (result, time.perf_counter() - t0)
    return _RUNS[key]


def verdict(num, ok, detail):
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {num}: {detail}"
    print(line)
    print(line, file=sys.stderr)
    assert ok, line


def level(result, cells):
    for lvl in result.report["levels"]:
        if lvl["cells"] == cells:
            return lvl
    raise KeyError(cells)


def stable(a, b, rtol=0.20, floor=0.05):
    return abs(a - b) <= rtol * max(abs(a), abs(b), floor)


def test_criterion_01_solver_correctness_1d():
    result, _ = run_cached("halfspace-1d")
    lvl = level(result, 512)
    err = lvl["linf_error"]
    secs = lvl["solve_seconds"]

    # off-node kink ladder: N = 2 mod 4 keeps x = 1/2 mid-cell, so the
    # genuine O(h^2) truncation error is visible instead of nodal exactness
    scenario = get_scenario("halfspace-1d")
    cf = scenario.make_cf(scenario.domain)
    errs, hs = [], []
    for cells in (126, 250, 502):
        grid = grid_from_cells(scenario.domain, cells)
        sol = solve(assemble(cf, grid), tol=1e-12)
        exact = scenario.exact_u(grid.node_points()).reshape(grid.shape)
        errs.append(float(np.max(np.abs(sol.values - exact))))
        hs.append(float(np.max(grid.h)))
    order = float(np.polyfit(np.log(hs), np.log(errs), 1)[0])

    ok = err <= 5e-4 and order >= 1.9 and secs <= 1.0
    verdict(1, ok,
            f"1D L-inf {err:.3e} (<= 5e-4), order {order:.3f} (>= 1.9), "
            f"solve {secs:.2f}s (<= 1s)")


def test_criterion_02_solver_correctness_2d():
    result, _ = run_cached("radial-2d")
    lvl = level(result, 512)
    err = lvl["linf_error"]
    secs = lvl["solve_seconds"]
    ok = err <= 1e-3 and secs <= 60.0
    verdict(2, ok, f"2D L-inf {err:.3e} (<= 1e-3), solve {secs:.1f}s (<= 60s)")


def test_criterion_03_weiss_energy_constancy():
    dom = box((-1.0, 1.0), (-1.0, 1.0))
    cf = make_coefficients(dom, f=1.0)
    u = AnalyticField(
        2,
        lambda pts: 0.5 * np.maximum(np.atleast_2d(pts)[:, 1], 0.0) ** 2,
        lambda pts: np.stack(
            [np.zeros(len(np.atleast_2d(pts))),
             np.maximum(np.atleast_2d(pts)[:, 1], 0.0)], axis=-1),
    )
    trace = build_trace(u, cf, np.zeros(2), radii=radius_ladder(0.5, 0.05))
    mean = float(np.mean(trace.phi))
    spread = float((np.max(trace.phi) - np.min(trace.phi)) / mean)
    rel = abs(mean - PHI_HALFSPACE_2D) / PHI_HALFSPACE_2D
    ok = spread <= 0.01 and rel <= 0.02
    verdict(3, ok,
            f"Phi spread {spread:.2%} (<= 1%), mean {mean:.6f} vs pi/16 "
            f"({rel:.2%} <= 2%)")


def test_criterion_04_energy_gap_classification():
    hs, _ = run_cached("halfspace-2d")
    rd, _ = run_cached("radial-2d")
    bh = level(hs, 512)["blowup"]
    br = level(rd, 512)["blowup"]
    rel_h = abs(bh["phi_limit"] - PHI_HALFSPACE_2D) / PHI_HALFSPACE_2D
    rel_r = abs(br["phi_limit"] - PHI_RADIAL_2D) / PHI_RADIAL_2D
    ambiguous = level(hs, 512).get("stratify", {}).get("ambiguous", 0) \
        + level(rd, 512).get("stratify", {}).get("ambiguous", 0)
    ok = (bh["label"] == "Regular" and rel_h <= 0.10
          and br["label"] == "Singular" and rel_r <= 0.10
          and ambiguous == 0)
    verdict(4, ok,
            f"halfspace-2d {bh['label']} Phi {bh['phi_limit']:.5f} "
            f"({rel_h:.2%}), radial-2d {br['label']} Phi "
            f"{br['phi_limit']:.5f} ({rel_r:.2%}), ambiguous {ambiguous}")


def test_criterion_05_weiss_quasi_monotonicity_lipschitz():
    result, wall = run_cached("lipschitz-perturbed-2d", (256, 512))
    w1 = level(result, 256)["weiss"]
    w2 = level(result, 512)["weiss"]
    # admissible means the compensated map is monotone within quadrature
    # tolerance, i.e. no residual violation survives the fitted (C3, C4)
    ok = (w2["c3"] <= 100.0 and w2["c4"] <= 100.0
          and w1["admissible"] and w2["admissible"]
          and stable(w1["c3"], w2["c3"]) and stable(w1["c4"], w2["c4"])
          and wall <= 300.0)
    verdict(5, ok,
            f"C3 {w1['c3']:.4g}->{w2['c3']:.4g}, C4 {w1['c4']:.4g}->"
            f"{w2['c4']:.4g} (caps 100, stable 20%), compensated map "
            f"admissible at both levels, wall {wall:.0f}s")


def test_criterion_06_monneau_quasi_monotonicity():
    rd, _ = run_cached("radial-2d")
    flat = level(rd, 512)["monneau"]["max_M"]
    rp, _ = run_cached("radial-perturbed-2d", (256, 512))
    m1 = level(rp, 256)["monneau"]
    m2 = level(rp, 512)["monneau"]
    ok = (flat <= 1e-8 and np.isfinite(m1["c5"]) and np.isfinite(m2["c5"])
          and m2["c5"] <= 100.0 and stable(m1["c5"], m2["c5"]))
    verdict(6, ok,
            f"radial-2d max M {flat:.2e} (<= 1e-8), perturbed C5 "
            f"{m1['c5']:.4g}->{m2['c5']:.4g} (finite, stable 20%)")


def test_criterion_07_payne_weinberger_identity():
    pw = run_pw_check(levels=(32, 64, 128))
    lin = pw["linear"]["residuals"]
    oq = pw["quadratic"]["order"]
    om = pw["mixed-lipschitz"]["order"]

    def order_ok(o):
        return o == "floor" or (isinstance(o, float) and o >= 1.8)

    ok = max(lin) <= 1e-10 and order_ok(oq) and order_ok(om)
    verdict(7, ok,
            f"linear floor {max(lin):.1e} (<= 1e-10), quadratic order {oq}, "
            f"mixed-lipschitz order {om} (>= 1.8 or floor)")


def test_criterion_08_quadratic_growth():
    specs = [
        ("halfspace-1d", None), ("halfspace-2d", None), ("radial-2d", None),
        ("lipschitz-perturbed-2d", (256, 512)),
        ("radial-perturbed-2d", (256, 512)),
        ("synthetic-polynomial", None), ("synthetic-degenerate", None),
    ]
    worst = np.inf
    details = []
    ok = True
    for name, res in specs:
        result, _ = run_cached(name, res)
        scenario = get_scenario(name)
        lvl = level(result, res[-1] if res else scenario.cells)
        if "growth" not in lvl:
            continue
        g = lvl["growth"]
        # designated Gamma points where the scenario provides them,
        # extracted Gamma otherwise (perturbed scenarios)
        ratios = [g[k] for k in ("min_ratio", "extracted_min_ratio") if k in g]
        worst = min(worst, min(ratios))
        ok = ok and min(ratios) >= 0.05
        target = scenario.expected.get("growth_value")
        if target is not None:
            rel = abs(g["min_ratio"] - target) / target
            ok = ok and rel <= scenario.expected.get("growth_rtol", 0.05)
            ok = ok and g["variation"] <= 0.10
            details.append(f"{name} {g['min_ratio']:.3f}~{target}")
    verdict(8, ok,
            f"min ratio {worst:.3f} (>= 0.05 on all scenarios); closed forms "
            + ", ".join(details))


def test_criterion_09_psi_consistency():
    rng = np.random.default_rng(17)
    worst = 0.0
    for k in range(20):
        dim = 2 if k % 2 == 0 else 3
        M = rng.normal(size=(dim, dim))
        B = M @ M.T + 1e-3 * np.eye(dim)
        B *= 0.5 / np.trace(B)
        prof = HomogeneousProfile.polynomial(B)
        worst = max(worst, abs(psi(prof) - prof.psi_reference()))
    for k in range(20):
        dim = 2 if k % 2 == 0 else 3
        nu = rng.normal(size=dim)
        prof = HomogeneousProfile.half_space(nu / np.linalg.norm(nu))
        worst = max(worst, abs(psi(prof) - prof.psi_reference()))
    ok = worst <= 1e-6
    verdict(9, ok, f"max |psi - integral| {worst:.2e} over 20+20 profiles "
                   f"(<= 1e-6)")


def test_criterion_10_blowup_recovery():
    sp, _ = run_cached("synthetic-polynomial")
    sd, _ = run_cached("synthetic-degenerate")
    bp = level(sp, 512)["blowup"]
    bd = level(sd, 512)["blowup"]
    err = float(np.max(np.abs(np.asarray(bp["B"]) - np.diag([0.4, 0.1]))))
    ok = err <= 1e-3 and bp["stratum"] == 0 and bd["stratum"] == 1
    verdict(10, ok,
            f"B error {err:.2e} (<= 1e-3), strata d={bp['stratum']} "
            f"(expect 0) and d={bd['stratum']} (expect 1)")


def test_criterion_11_homogeneity_property_suite():
    specs = [
        ("halfspace-1d", None), ("halfspace-2d", None), ("radial-2d", None),
        ("lipschitz-perturbed-2d", (256, 512)),
        ("radial-perturbed-2d", (256, 512)),
        ("synthetic-polynomial", None), ("synthetic-degenerate", None),
    ]
    seen = 0
    worst = 0.0
    ok = True
    for name, res in specs:
        result, _ = run_cached(name, res)
        for check in result.checks:
            if check.name.startswith("profile-homogeneity"):
                seen += 1
                worst = max(worst, check.value)
                ok = ok and check.passed
    ok = ok and seen >= 5
    verdict(11, ok,
            f"{seen} extracted profiles, max defect {worst:.2e} (<= 1e-9)")


def test_criterion_12_determinism(tmp_path):
    names = ("halfspace-1d", "synthetic-polynomial")
    compared = 0
    ok = True
    for name in names:
        scenario = get_scenario(name)
        outs = []
        for tag in ("a", "b"):
            out = tmp_path / f"{name}-{tag}"
            options = RunOptions(resolutions=(scenario.cells,),
                                 solver=dict(scenario.solver),
                                 analyses=scenario.analyses,
                                 out=str(out), seed=11)
            run_scenario((scenario, options))
            outs.append(out)
        for csv in sorted(outs[0].glob("*.csv")):
            twin = outs[1] / csv.name
            ok = ok and twin.exists() \
                and csv.read_bytes() == twin.read_bytes()
            compared += 1
    ok = ok and compared >= 3
    verdict(12, ok, f"{compared} CSVs byte-identical across reruns "
                    f"of {', '.join(names)}")
