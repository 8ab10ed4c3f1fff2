"""Free boundary extraction, orientations, growth ratios, Hausdorff drift."""

import numpy as np
import numpy.testing as npt
import pytest

from obstacle_lab.errors import EmptyInterior, RadiusOutOfDomain
from obstacle_lab.field_model import make_coefficients
from obstacle_lab.free_boundary import (
    FreeBoundarySet,
    extract,
    hausdorff_distance,
    quadratic_growth_check,
)
from obstacle_lab.geometry import box, grid_from_cells
from obstacle_lab.obstacle_solver import assemble, solve
from obstacle_lab.quadrature import radius_ladder

DOM2 = box((-1.0, 1.0), (-1.0, 1.0))


def halfspace_g(pts):
    x2 = np.atleast_2d(pts)[:, 1]
    return 0.5 * np.maximum(x2, 0.0) ** 2


def radial_g(pts):
    return 0.25 * np.sum(np.atleast_2d(pts) ** 2, axis=1)


def solve_halfspace(cells):
    cf = make_coefficients(DOM2, f=1.0, g=halfspace_g)
    sol = solve(assemble(cf, grid_from_cells(DOM2, cells)), tol=1e-10,
                omega="auto")
    return sol, cf


def test_extract_interface_near_line():
    sol, cf = solve_halfspace(128)
    fb = extract(sol, cf)
    assert len(fb) > 50
    h = float(np.max(sol.grid.h))
    # threshold crossing sits within 2h of the exact interface x2 = 0
    assert np.max(np.abs(fb.points[:, 1])) <= 2.0 * h


def test_extract_orientations_point_into_positivity():
    sol, cf = solve_halfspace(128)
    fb = extract(sol, cf)
    interior = np.abs(fb.points[:, 0]) < 0.8
    dots = fb.orientations[interior] @ np.array([0.0, 1.0])
    assert np.min(dots) >= 0.95


def test_extract_zero_solution_empty_interior():
    cf = make_coefficients(DOM2, f=1.0, g=0.0)
    sol = solve(assemble(cf, grid_from_cells(DOM2, 24)), tol=1e-10)
    with pytest.raises(EmptyInterior):
        extract(sol, cf)


def test_extract_no_contact_returns_empty_set():
    # boundary data large enough that u stays positive everywhere
    cf = make_coefficients(DOM2, f=1.0,
                           g=lambda p: radial_g(p) + 1.0)
    sol = solve(assemble(cf, grid_from_cells(DOM2, 48)), tol=1e-10)
    fb = extract(sol, cf)
    assert len(fb) == 0


def test_extract_deterministic_ordering():
    sol, cf = solve_halfspace(64)
    a = extract(sol, cf)
    b = extract(sol, cf)
    npt.assert_array_equal(a.points, b.points)
    npt.assert_array_equal(a.orientations, b.orientations)


def test_hausdorff_under_refinement():
    sets = []
    for cells in (64, 128):
        sol, cf = solve_halfspace(cells)
        sets.append(extract(sol, cf).points)
    h_coarse = 2.0 / 64
    assert hausdorff_distance(sets[0], sets[1]) <= 2.0 * h_coarse


def test_hausdorff_simple_pairs():
    a = np.array([[0.0, 0.0], [1.0, 0.0]])
    b = np.array([[0.0, 0.5]])
    npt.assert_allclose(hausdorff_distance(a, a), 0.0)
    npt.assert_allclose(hausdorff_distance(a, b), np.hypot(1.0, 0.5))


def test_growth_halfspace_half():
    # designated point on the exact interface: sup u / r^2 = 1/2 exactly
    sol, cf = solve_halfspace(256)
    pts = np.array([[0.0, 0.0], [0.25, 0.0]])
    fb = FreeBoundarySet(points=pts, orientations=np.zeros_like(pts),
                         threshold=sol.u_pos_threshold, grid=sol.grid)
    h = float(np.max(sol.grid.h))
    rep = quadratic_growth_check(sol, fb, radius_ladder(0.2, 4 * h))
    npt.assert_allclose(rep.min_ratio, 0.5, rtol=0.05)
    npt.assert_allclose(rep.max_ratio, 0.5, rtol=0.05)


def test_growth_radial_quarter():
    cf = make_coefficients(DOM2, f=1.0, g=radial_g)
    sol = solve(assemble(cf, grid_from_cells(DOM2, 256)), tol=1e-10,
                omega="auto")
    pts = np.array([[0.0, 0.0]])
    fb = FreeBoundarySet(points=pts, orientations=np.zeros_like(pts),
                         threshold=sol.u_pos_threshold, grid=sol.grid)
    h = float(np.max(sol.grid.h))
    rep = quadratic_growth_check(sol, fb, radius_ladder(0.2, 4 * h))
    npt.assert_allclose(rep.min_ratio, 0.25, rtol=0.05)
    per = rep.per_point[0]
    spread = (np.nanmax(per) - np.nanmin(per)) / np.nanmax(per)
    assert spread <= 0.10


def test_growth_radius_outside_domain():
    sol, cf = solve_halfspace(64)
    pts = np.array([[0.0, 0.0]])
    fb = FreeBoundarySet(points=pts, orientations=np.zeros_like(pts),
                         threshold=sol.u_pos_threshold, grid=sol.grid)
    with pytest.raises(RadiusOutOfDomain):
        quadratic_growth_check(sol, fb, np.array([1.5]))


def test_free_boundary_rows_roundtrip():
    sol, cf = solve_halfspace(64)
    fb = extract(sol, cf)
    rows = fb.to_rows()
    assert len(rows) == len(fb)
    npt.assert_allclose(np.asarray(rows)[:, :2], fb.points)
