"""Discrete energy assembly and the projected SOR obstacle solver."""

import numpy as np
import numpy.testing as npt
import pytest

from obstacle_lab.errors import GridTooCoarse, InfeasibleBoundary
from obstacle_lab.field_model import make_coefficients
from obstacle_lab.geometry import box, grid_from_cells
from obstacle_lab.obstacle_solver import (
    ObstacleSolution,
    assemble,
    pde_residual,
    solve,
)

DOM1 = box((-1.0, 1.0))
DOM2 = box((-1.0, 1.0), (-1.0, 1.0))

# closed-form reference values
ENERGY_LINEAR_FIELD = 4.0        # int_{[-1,1]^2} (1 + 2 x1) dx
ENERGY_HALFSPACE_BOX = 4.0 / 3.0  # int (x2+)^2 + 2*(x2+)^2/2 = 2 * 2/3


def exact_1d(pts):
    x = np.atleast_2d(pts)[:, 0]
    return 0.5 * np.maximum(x - 0.5, 0.0) ** 2


def halfspace_2d(pts):
    x2 = np.atleast_2d(pts)[:, 1]
    return 0.5 * np.maximum(x2, 0.0) ** 2


def test_energy_linear_field_oracle():
    cf = make_coefficients(DOM2, f=1.0)
    errors = []
    for cells in (32, 64, 128):
        grid = grid_from_cells(DOM2, cells)
        de = assemble(cf, grid)
        v = grid.node_points()[:, 0]
        errors.append(abs(de.value(v) - ENERGY_LINEAR_FIELD))
    assert errors[-1] <= 1e-10
    # gradient of a linear field is stencil-exact, so only rounding remains
    assert all(e <= 1e-9 for e in errors)


def test_energy_zero_field():
    cf = make_coefficients(DOM2, f=1.0)
    grid = grid_from_cells(DOM2, 32)
    de = assemble(cf, grid)
    assert de.value(np.zeros(grid.n_nodes)) == 0.0


def test_energy_halfspace_second_order():
    cf = make_coefficients(DOM2, f=1.0)
    errors = []
    for cells in (32, 64, 128):
        grid = grid_from_cells(DOM2, cells)
        de = assemble(cf, grid)
        v = halfspace_2d(grid.node_points())
        errors.append(abs(de.value(v) - ENERGY_HALFSPACE_BOX))
    orders = np.log2(np.array(errors[:-1]) / np.array(errors[1:]))
    assert orders.min() >= 1.9, orders


def test_assemble_rejects_tiny_grid():
    cf = make_coefficients(DOM2, f=1.0)
    with pytest.raises(GridTooCoarse):
        assemble(cf, grid_from_cells(DOM2, 2))


def test_solve_1d_closed_form():
    cf = make_coefficients(DOM1, f=1.0, g=exact_1d)
    grid = grid_from_cells(DOM1, 256)
    sol = solve(assemble(cf, grid), tol=1e-10)
    assert sol.converged
    err = np.max(np.abs(sol.values - exact_1d(grid.node_points()).reshape(grid.shape)))
    # contact endpoint x = 0.5 lies on a node, so the stencil is exact
    assert err <= 1e-8
    mask = sol.positivity_mask()
    xs = grid.node_points()[:, 0].reshape(grid.shape)
    assert np.all(xs[mask] > 0.5 - 2.0 * grid.h[0])


def test_solve_1d_off_grid_kink_order_two():
    cf = make_coefficients(DOM1, f=1.0, g=exact_1d)
    errors = []
    for cells in (126, 250, 502):  # kink between nodes at these counts
        grid = grid_from_cells(DOM1, cells)
        sol = solve(assemble(cf, grid), tol=1e-12)
        errors.append(float(np.max(np.abs(
            sol.values - exact_1d(grid.node_points()).reshape(grid.shape)))))
    hs = np.log([2.0 / n for n in (126, 250, 502)])
    order = np.polyfit(hs, np.log(errors), 1)[0]
    assert order >= 1.9, (errors, order)


def test_solve_zero_boundary_gives_zero():
    cf = make_coefficients(DOM2, matrix="radial-lipschitz",
                           matrix_params={"eps": 0.3}, f=1.0, g=0.0)
    grid = grid_from_cells(DOM2, 32)
    sol = solve(assemble(cf, grid), tol=1e-12)
    npt.assert_allclose(sol.values, 0.0, atol=1e-12)


def test_solve_radial_2d_exact_stencil():
    cf = make_coefficients(DOM2, f=1.0,
                           g=lambda p: 0.25 * np.sum(np.atleast_2d(p) ** 2, axis=1))
    grid = grid_from_cells(DOM2, 64)
    sol = solve(assemble(cf, grid), tol=1e-11)
    exact = 0.25 * np.sum(grid.node_points() ** 2, axis=1).reshape(grid.shape)
    assert np.max(np.abs(sol.values - exact)) <= 1e-8


def test_infeasible_boundary_raises():
    cf = make_coefficients(DOM2, f=1.0, g=lambda p: np.atleast_2d(p)[:, 0])
    grid = grid_from_cells(DOM2, 16)
    with pytest.raises(InfeasibleBoundary):
        solve(assemble(cf, grid), tol=1e-8)


def test_max_iter_flagged_not_raised():
    cf = make_coefficients(DOM2, f=1.0, g=halfspace_2d)
    grid = grid_from_cells(DOM2, 64)
    with pytest.warns(UserWarning, match="MaxIterExceeded"):
        sol = solve(assemble(cf, grid), tol=1e-12, max_iter=5)
    assert not sol.converged
    assert sol.iterations == 5


def test_energy_history_monotone():
    cf = make_coefficients(DOM2, matrix="radial-lipschitz",
                           matrix_params={"eps": 0.3}, f=1.0, g=halfspace_2d)
    grid = grid_from_cells(DOM2, 48)
    sol = solve(assemble(cf, grid), tol=1e-10)
    hist = np.asarray(sol.energy_history)
    assert len(hist) >= 2
    assert np.all(np.diff(hist) <= 1e-11 * np.maximum(1.0, np.abs(hist[:-1])))


def test_comparison_principle_random_boundary_pairs():
    # nodewise larger boundary data never produces a smaller solution
    rng = np.random.default_rng(5)
    grid = grid_from_cells(DOM2, 24)
    for _ in range(4):
        coef = rng.uniform(0.0, 0.4, size=3)
        bump = rng.uniform(0.05, 0.3)

        def g_lo(p, c=coef):
            p = np.atleast_2d(p)
            return c[0] * (p[:, 0] + 1.0) + c[1] * np.maximum(p[:, 1], 0.0) + c[2]

        def g_hi(p, c=coef, b=bump):
            return g_lo(p, c) + b

        cf_lo = make_coefficients(DOM2, f=1.0, g=g_lo)
        cf_hi = make_coefficients(DOM2, f=1.0, g=g_hi)
        lo = solve(assemble(cf_lo, grid), tol=1e-10)
        hi = solve(assemble(cf_hi, grid), tol=1e-10)
        assert np.min(hi.values - lo.values) >= -1e-8


def test_self_consistency_under_initial_iterate():
    cf = make_coefficients(DOM2, f=1.0, g=halfspace_2d)
    grid = grid_from_cells(DOM2, 48)
    de = assemble(cf, grid)
    tol = 1e-10
    a = solve(de, tol=tol)
    b = solve(de, tol=tol, x0=np.full(grid.n_nodes, 0.7))
    assert np.max(np.abs(a.values - b.values)) <= 10.0 * tol


def test_pde_residual_interior_small():
    cf = make_coefficients(DOM2, f=1.0, g=halfspace_2d)
    grid = grid_from_cells(DOM2, 256)
    sol = solve(assemble(cf, grid), tol=1e-10, omega="auto")
    rep = pde_residual(sol)
    assert rep.pde_max <= 1e-6
    assert rep.coincidence_violation <= sol.u_pos_threshold
    assert rep.n_positive > 0 and rep.n_contact > 0


def test_pde_residual_zero_solution():
    cf = make_coefficients(DOM2, f=1.0, g=0.0)
    grid = grid_from_cells(DOM2, 32)
    sol = solve(assemble(cf, grid), tol=1e-10)
    rep = pde_residual(sol)
    assert rep.n_positive == 0
    assert rep.coincidence_violation == 0.0


def test_solution_masks_partition_interior():
    cf = make_coefficients(DOM2, f=1.0, g=halfspace_2d)
    grid = grid_from_cells(DOM2, 64)
    sol = solve(assemble(cf, grid), tol=1e-10)
    pos = sol.positivity_mask()
    coin = sol.coincidence_mask()
    assert not np.any(pos & coin)
    assert np.all(pos | coin)


def test_save_load_roundtrip(tmp_path):
    cf = make_coefficients(DOM2, f=1.0, g=halfspace_2d)
    grid = grid_from_cells(DOM2, 32)
    sol = solve(assemble(cf, grid), tol=1e-9)
    sol.save(tmp_path)
    back = ObstacleSolution.load(tmp_path, cf)
    npt.assert_array_equal(back.values, sol.values)
    assert back.iterations == sol.iterations
    assert back.u_pos_threshold == sol.u_pos_threshold
