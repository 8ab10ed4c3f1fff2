"""Builtin scenarios and configuration parsing.

Each scenario fixes a domain, coefficients, boundary data, default grid
resolution, and the list of analyses to run, plus the expected outcomes the
runner turns into PASS/FAIL verdicts. Closed-form scenarios also carry the
exact solution and the true free-boundary points: extracted interface points
sit a threshold-width off the exact set, so nondegeneracy ratios that must
recover exact constants are evaluated at the designated points.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field as dc_field
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from .errors import ConfigError
from .field_model import CoefficientField, make_coefficients
from .functionals import HomogeneousProfile, theta_constant
from .geometry import Domain, box
from .quadrature import radius_ladder

ANALYSES = ("solve", "residuals", "weiss", "monneau", "blowup", "stratify",
            "growth", "pw-check")


@dataclass
class Scenario:
    """A fully specified experiment with expected outcomes."""

    name: str
    description: str
    domain: Domain
    cells: int
    make_cf: Callable[[Domain], CoefficientField]
    analyses: tuple
    x0: tuple
    alpha: float = 1.0
    synthetic: bool = False
    exact_u: Optional[Callable] = None
    gamma_points: Optional[np.ndarray] = None
    pick_x0_from_gamma: bool = False
    monneau_profile: Optional[Callable[[], HomogeneousProfile]] = None
    monneau_radii: Optional[Callable[[float], np.ndarray]] = None
    stratify_points: Optional[np.ndarray] = None
    stratify_stride: int = 4
    solver: dict = dc_field(default_factory=dict)
    expected: dict = dc_field(default_factory=dict)

    def coefficients(self) -> CoefficientField:
        return self.make_cf(self.domain)


# ---------------------------------------------------------------------------
# builtin scenario builders


def _halfspace_g(pts):
    pts = np.atleast_2d(pts)
    return 0.5 * np.maximum(pts[:, -1], 0.0) ** 2


def _halfspace_1d() -> Scenario:
    dom = box((-1.0, 1.0))

    def exact(pts):
        pts = np.atleast_2d(pts)
        return 0.5 * np.maximum(pts[:, 0] - 0.5, 0.0) ** 2

    return Scenario(
        name="halfspace-1d",
        description="1D obstacle problem with contact on [-1, 1/2]",
        domain=dom, cells=512,
        make_cf=lambda d: make_coefficients(d, matrix="identity", f=1.0,
                                            g=exact, alpha=1.0,
                                            label="halfspace-1d"),
        analyses=("solve", "residuals", "weiss", "blowup", "growth"),
        x0=(0.5,),
        exact_u=exact,
        gamma_points=np.array([[0.5]]),
        expected={
            "label": "Regular",
            "phi_limit": theta_constant(1), "phi_rtol": 0.10,
            "phi_const": theta_constant(1), "phi_spread_rtol": 0.02,
            "phi_spread_range": (0.05, 0.25),
            "nu": (1.0,), "nu_tol": 0.05,
            "growth_value": 0.5, "growth_rtol": 0.05, "growth_var_rtol": 0.10,
            "linf": 5e-4,
            "c_caps": {"c3": 100.0, "c4": 100.0},
        },
    )


def _halfspace_2d() -> Scenario:
    dom = box((-1.0, 1.0), (-1.0, 1.0))

    def exact(pts):
        return _halfspace_g(pts)

    ts = np.linspace(-0.5, 0.5, 5)
    gamma = np.stack([ts, np.zeros_like(ts)], axis=-1)
    return Scenario(
        name="halfspace-2d",
        description="2D half-space solution u = (x2+)^2/2, flat interface",
        domain=dom, cells=512,
        make_cf=lambda d: make_coefficients(d, matrix="identity", f=1.0,
                                            g=exact, alpha=1.0,
                                            label="halfspace-2d"),
        analyses=("solve", "residuals", "weiss", "blowup", "growth", "stratify"),
        x0=(0.0, 0.0),
        exact_u=exact,
        gamma_points=gamma,
        stratify_stride=64,
        expected={
            "label": "Regular",
            "phi_limit": np.pi / 16, "phi_rtol": 0.10,
            "phi_const": np.pi / 16, "phi_spread_rtol": 0.02,
            "phi_spread_range": (0.05, 0.5),
            "nu": (0.0, 1.0), "nu_tol": 0.05,
            "growth_value": 0.5, "growth_rtol": 0.05, "growth_var_rtol": 0.10,
            "linf": 1e-3,
            "c_caps": {"c3": 100.0, "c4": 100.0},
            "all_regular": True,
        },
    )


def _radial_2d() -> Scenario:
    dom = box((-1.0, 1.0), (-1.0, 1.0))

    def exact(pts):
        pts = np.atleast_2d(pts)
        return 0.25 * np.sum(pts**2, axis=1)

    return Scenario(
        name="radial-2d",
        description="radial solution |x|^2/4 with a single singular contact point",
        domain=dom, cells=512,
        make_cf=lambda d: make_coefficients(d, matrix="identity", f=1.0,
                                            g=exact, alpha=1.0,
                                            label="radial-2d"),
        analyses=("solve", "residuals", "weiss", "monneau", "blowup", "growth"),
        x0=(0.0, 0.0),
        exact_u=exact,
        gamma_points=np.array([[0.0, 0.0]]),
        monneau_profile=lambda: HomogeneousProfile.polynomial(0.25 * np.eye(2)),
        monneau_radii=lambda h: radius_ladder(0.5, 0.25),
        expected={
            "label": "Singular",
            "phi_limit": np.pi / 8, "phi_rtol": 0.10,
            "phi_const": np.pi / 8, "phi_spread_rtol": 0.02,
            "phi_spread_range": (0.05, 0.5),
            "B": (0.25 * np.eye(2)).tolist(), "B_atol": 1e-3,
            "stratum": 0,
            "growth_value": 0.25, "growth_rtol": 0.05, "growth_var_rtol": 0.10,
            "monneau_flat": 1e-8,
            "linf": 1e-3,
            "c_caps": {"c3": 100.0, "c4": 100.0, "c5": 100.0},
        },
    )


def _lipschitz_perturbed_2d() -> Scenario:
    dom = box((-1.0, 1.0), (-1.0, 1.0))
    return Scenario(
        name="lipschitz-perturbed-2d",
        description="half-space data under A = (1 + 0.3|x|) I, drift-fit stress test",
        domain=dom, cells=256,
        make_cf=lambda d: make_coefficients(
            d, matrix="radial-lipschitz", matrix_params={"eps": 0.3},
            f=1.0, g=_halfspace_g, alpha=1.0, label="lipschitz-perturbed-2d"),
        analyses=("solve", "residuals", "weiss", "blowup", "growth", "pw-check"),
        x0=(0.0, 0.0),
        pick_x0_from_gamma=True,
        expected={
            "label": "Regular",
            "c_caps": {"c3": 100.0, "c4": 100.0},
            "growth_min": 0.05,
        },
    )


def _radial_perturbed_2d() -> Scenario:
    dom = box((-1.0, 1.0), (-1.0, 1.0))

    def exact(pts):
        pts = np.atleast_2d(pts)
        rho = np.linalg.norm(pts, axis=1)
        return 0.25 * rho**2 + 0.2 * rho**3

    def forcing(pts):
        pts = np.atleast_2d(pts)
        rho = np.linalg.norm(pts, axis=1)
        return 1.0 + 2.25 * rho + 0.72 * rho**2

    return Scenario(
        name="radial-perturbed-2d",
        description="manufactured singular point under A = (1 + 0.3|x|) I",
        domain=dom, cells=256,
        make_cf=lambda d: make_coefficients(
            d, matrix="radial-lipschitz", matrix_params={"eps": 0.3},
            f=forcing, g=exact, alpha=1.0, c0=1.0, holder_f=4.3,
            label="radial-perturbed-2d"),
        analyses=("solve", "residuals", "weiss", "monneau", "blowup", "growth"),
        x0=(0.0, 0.0),
        exact_u=exact,
        gamma_points=np.array([[0.0, 0.0]]),
        monneau_profile=lambda: HomogeneousProfile.polynomial(0.25 * np.eye(2)),
        monneau_radii=lambda h: radius_ladder(0.5, 0.25),
        expected={
            "label": "Singular",
            "B": (0.25 * np.eye(2)).tolist(), "B_atol": 5e-3,
            "stratum": 0,
            "growth_min": 0.05,
            "c_caps": {"c3": 100.0, "c4": 100.0, "c5": 100.0},
        },
    )


def _synthetic_polynomial() -> Scenario:
    dom = box((-1.0, 1.0), (-1.0, 1.0))
    B = np.diag([0.4, 0.1])

    def exact(pts):
        pts = np.atleast_2d(pts)
        return np.einsum("pi,ij,pj->p", pts, B, pts)

    return Scenario(
        name="synthetic-polynomial",
        description="sampled anisotropic polynomial <B y, y>, B = diag(0.4, 0.1)",
        domain=dom, cells=512,
        make_cf=lambda d: make_coefficients(d, matrix="identity", f=1.0,
                                            g=exact, alpha=1.0,
                                            label="synthetic-polynomial"),
        analyses=("residuals", "weiss", "monneau", "blowup", "growth", "stratify"),
        x0=(0.0, 0.0),
        synthetic=True,
        exact_u=exact,
        gamma_points=np.array([[0.0, 0.0]]),
        monneau_profile=lambda: HomogeneousProfile.polynomial(B),
        monneau_radii=lambda h: radius_ladder(0.5, 0.25),
        stratify_points=np.array([[0.0, 0.0]]),
        stratify_stride=1,
        expected={
            "label": "Singular",
            "B": B.tolist(), "B_atol": 1e-3,
            "stratum": 0,
            "growth_min": 0.05,
            "monneau_flat": 1e-7,
            "c_caps": {"c3": 100.0, "c4": 100.0, "c5": 100.0},
        },
    )


def _synthetic_degenerate() -> Scenario:
    dom = box((-1.0, 1.0), (-1.0, 1.0))
    B = np.diag([0.5, 0.0])

    def exact(pts):
        pts = np.atleast_2d(pts)
        return 0.5 * pts[:, 0] ** 2

    ts = np.linspace(-0.4, 0.4, 5)
    line = np.stack([np.zeros_like(ts), ts], axis=-1)
    return Scenario(
        name="synthetic-degenerate",
        description="sampled degenerate polynomial, B = diag(1/2, 0), singular line",
        domain=dom, cells=512,
        make_cf=lambda d: make_coefficients(d, matrix="identity", f=1.0,
                                            g=exact, alpha=1.0,
                                            label="synthetic-degenerate"),
        analyses=("residuals", "blowup", "growth", "stratify"),
        x0=(0.0, 0.0),
        synthetic=True,
        exact_u=exact,
        gamma_points=line,
        stratify_points=line,
        stratify_stride=1,
        expected={
            "label": "Singular",
            "B": B.tolist(), "B_atol": 1e-3,
            "stratum": 1,
            "growth_value": 0.5, "growth_rtol": 0.05, "growth_var_rtol": 0.10,
            "all_singular_stratum": 1,
        },
    )


_BUILDERS = {
    "halfspace-1d": _halfspace_1d,
    "halfspace-2d": _halfspace_2d,
    "radial-2d": _radial_2d,
    "lipschitz-perturbed-2d": _lipschitz_perturbed_2d,
    "radial-perturbed-2d": _radial_perturbed_2d,
    "synthetic-polynomial": _synthetic_polynomial,
    "synthetic-degenerate": _synthetic_degenerate,
}

_CUSTOM: dict[str, Callable[[], Scenario]] = {}


def register_scenario(name: str, builder: Callable[[], Scenario]) -> None:
    _CUSTOM[name] = builder


def scenario_names(registry=None) -> list[str]:
    if registry is not None:
        return sorted(registry)
    return sorted(set(_BUILDERS) | set(_CUSTOM))


def get_scenario(name: str, registry=None) -> Scenario:
    if registry is not None:
        builder = registry.get(name)
    else:
        builder = _CUSTOM.get(name) or _BUILDERS.get(name)
    if builder is None:
        known = ", ".join(scenario_names(registry))
        raise ConfigError(f"scenario: unknown scenario '{name}' (known: {known})")
    return builder()


def scenario_descriptions(registry=None) -> list[tuple[str, str]]:
    return [(n, get_scenario(n, registry).description)
            for n in scenario_names(registry)]


# ---------------------------------------------------------------------------
# run options and config parsing


@dataclass
class RunOptions:
    resolutions: tuple
    solver: dict = dc_field(default_factory=dict)
    analyses: tuple = ANALYSES
    out: Optional[str] = None
    seed: int = 0
    threads: int = 1
    format: str = "csv"
    radii: dict = dc_field(default_factory=dict)

    @property
    def resolution(self) -> int:
        return self.resolutions[0]


def _fail(path: str, msg: str):
    raise ConfigError(f"{path}: {msg}")


def _check_solver(raw: dict) -> dict:
    out = {}
    for key, val in raw.items():
        path = f"solver.{key}"
        if key == "tol":
            if not isinstance(val, (int, float)) or val <= 0:
                _fail(path, "must be a positive number")
            out["tol"] = float(val)
        elif key == "max_iter":
            if not isinstance(val, int) or val <= 0:
                _fail(path, "must be a positive integer")
            out["max_iter"] = val
        elif key == "omega":
            if val == "auto":
                out["omega"] = "auto"
            elif isinstance(val, (int, float)) and 0 < val < 2:
                out["omega"] = float(val)
            else:
                _fail(path, "must be 'auto' or a number in (0, 2)")
        else:
            _fail(path, "unknown key")
    return out


def _check_radii(raw: dict) -> dict:
    out = {}
    for key, val in raw.items():
        path = f"radii.{key}"
        if key == "monneau":
            arr = np.asarray(val, dtype=float)
            if arr.ndim != 1 or len(arr) < 2 or np.any(arr <= 0) \
                    or np.any(np.diff(arr) <= 0):
                _fail(path, "must be a strictly increasing positive list")
            out["monneau"] = arr
        elif key == "r_max":
            if not isinstance(val, (int, float)) or val <= 0:
                _fail(path, "must be a positive number")
            out["r_max"] = float(val)
        elif key == "min_cells":
            if not isinstance(val, (int, float)) or val <= 0:
                _fail(path, "must be a positive number")
            out["min_cells"] = float(val)
        else:
            _fail(path, "unknown key")
    return out


def parse_config(source) -> tuple[Scenario, RunOptions]:
    """Validate a config mapping (or JSON file path) into a run plan.

    ConfigError messages name the offending key path, e.g. 'solver.tol'.
    """
    if isinstance(source, (str, Path)):
        try:
            raw = json.loads(Path(source).read_text())
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {source}")
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}")
    else:
        raw = dict(source)
    if not isinstance(raw, dict):
        raise ConfigError("config root must be an object")

    if "scenario" not in raw:
        _fail("scenario", "required key missing")
    scenario = get_scenario(raw["scenario"])

    known = {"scenario", "resolution", "solver", "radii", "analyses", "out",
             "seed", "threads", "format"}
    for key in raw:
        if key not in known:
            _fail(key, "unknown key")

    res = raw.get("resolution", scenario.cells)
    if isinstance(res, int) and not isinstance(res, bool):
        resolutions = (res,)
    elif isinstance(res, (list, tuple)):
        if not res or not all(isinstance(v, int) and not isinstance(v, bool)
                              for v in res):
            _fail("resolution", "must be an integer or list of integers")
        if any(b <= a for a, b in zip(res, res[1:])):
            _fail("resolution", "resolutions must be strictly increasing")
        resolutions = tuple(res)
    else:
        _fail("resolution", "must be an integer or list of integers")
    for v in resolutions:
        if v < 8:
            _fail("resolution", "must be at least 8 cells")

    solver = dict(scenario.solver)
    solver.update(_check_solver(raw.get("solver", {}))
                  if isinstance(raw.get("solver", {}), dict)
                  else _fail("solver", "must be an object"))

    radii = _check_radii(raw.get("radii", {})) \
        if isinstance(raw.get("radii", {}), dict) \
        else _fail("radii", "must be an object")

    analyses = raw.get("analyses", list(scenario.analyses))
    if not isinstance(analyses, (list, tuple)):
        _fail("analyses", "must be a list")
    for a in analyses:
        if a not in ANALYSES:
            _fail("analyses", f"unknown analysis '{a}' (known: {', '.join(ANALYSES)})")

    seed = raw.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool):
        _fail("seed", "must be an integer")
    threads = raw.get("threads", 1)
    if not isinstance(threads, int) or isinstance(threads, bool) or threads < 1:
        _fail("threads", "must be a positive integer")
    fmt = raw.get("format", "csv")
    if fmt not in ("csv", "json"):
        _fail("format", "must be 'csv' or 'json'")
    out = raw.get("out")
    if out is not None and not isinstance(out, str):
        _fail("out", "must be a string path")

    return scenario, RunOptions(
        resolutions=resolutions, solver=solver, analyses=tuple(analyses),
        out=out, seed=seed, threads=threads, format=fmt, radii=radii,
    )
