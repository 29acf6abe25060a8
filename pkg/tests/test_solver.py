import numpy as np
import pytest

from netot import (
    DualPotentials,
    GridSpec,
    MassMismatchError,
    NetworkMeasure,
    SolverParams,
    ValidationError,
    build_network,
    ce_residual,
    eval_dual_objective,
    hj_residual,
    linear_seed,
    optimality_residual,
    solve_geodesic,
    wasserstein_edge_1d,
)


def _single_edge():
    return build_network([("a", (0.0, 0.0)), ("b", (1.0, 0.0))], [("e", "a", "b", 1.0)])


def _linear_duals(net, grid, slope_phi, slope_psi):
    """Hand-built potentials phi = slope_phi * t, psi = slope_psi * t."""
    t = grid.time_nodes()
    edge_potential = [
        np.tile(slope_phi * t[:, None], (1, grid.cells[j] + 1)) for j in range(net.n_edges)
    ]
    vertex_potential = np.tile(slope_psi * t[:, None], (1, net.n_vertices))
    # every trace equals slope_phi * t, so the negated mean is immediate
    multiplier = np.tile(-slope_phi * t[:, None], (1, net.n_vertices))
    return DualPotentials(edge_potential, vertex_potential, multiplier)


def _probability_pair(net, grid):
    cells = grid.cells[0]
    rho = np.full(cells, 0.9)
    mu = NetworkMeasure([rho], np.full(2, 0.05))
    return mu, mu


def test_dual_objective_decreasing_potentials():
    net = _single_edge()
    grid = GridSpec.for_network(net, 8, 4)
    start, end = _probability_pair(net, grid)
    duals = _linear_duals(net, grid, -1.0, -1.0)
    val = eval_dual_objective(duals, start, end, net, 1.0, grid)
    assert val == pytest.approx(-1.0, abs=1e-12)


def test_dual_objective_zero_potentials():
    net = _single_edge()
    grid = GridSpec.for_network(net, 8, 4)
    start, end = _probability_pair(net, grid)
    duals = _linear_duals(net, grid, 0.0, 0.0)
    assert eval_dual_objective(duals, start, end, net, 1.0, grid) == 0.0


def test_dual_objective_rejects_increasing_potential():
    net = _single_edge()
    grid = GridSpec.for_network(net, 8, 4)
    start, end = _probability_pair(net, grid)
    duals = _linear_duals(net, grid, 1.0, 0.0)
    assert eval_dual_objective(duals, start, end, net, 1.0, grid) == -np.inf


def test_hj_residual_linear_potentials():
    net = _single_edge()
    grid = GridSpec.for_network(net, 8, 4)
    e, v = hj_residual(_linear_duals(net, grid, -1.0, -1.0), net, 1.0, grid)
    assert e == 0.0 and v == 0.0
    e, v = hj_residual(_linear_duals(net, grid, 1.0, 0.0), net, 1.0, grid)
    assert e == pytest.approx(1.0)


def test_identity_endpoints_solve():
    net = _single_edge()
    grid = GridSpec.for_network(net, 16, 8)
    mu, _ = _probability_pair(net, grid)
    rep = solve_geodesic(net, grid, mu, mu, 1.0)
    assert rep.converged
    assert rep.value <= 1e-6
    res = ce_residual(rep.geodesic, mu, mu, net, grid)
    assert res.total <= 1e-8


def test_vertex_transfer_lower_bound():
    # all mass starts on one vertex and ends on the other; the exchange
    # cost alone already forces value >= kappa^2/2 * (1 + 1)
    net = _single_edge()
    grid = GridSpec.for_network(net, 16, 8)
    m0 = NetworkMeasure([np.zeros(16)], np.array([1.0, 0.0]))
    m1 = NetworkMeasure([np.zeros(16)], np.array([0.0, 1.0]))
    params = SolverParams(max_iters=200000, check_every=200, step_ratio=10.0)
    rep = solve_geodesic(net, grid, m0, m1, 1.0, params)
    assert rep.converged
    assert rep.value >= 1.0


def test_single_edge_bump_matches_quantile_oracle():
    net = _single_edge()
    grid = GridSpec.for_network(net, 64, 32)
    x = grid.cell_centers(net, 0)
    g0 = np.exp(-0.5 * ((x - 0.25) / 0.05) ** 2)
    g1 = np.exp(-0.5 * ((x - 0.75) / 0.05) ** 2)
    dx = float(grid.dx(net)[0])
    rho0 = g0 / (np.sum(g0) * dx)
    rho1 = g1 / (np.sum(g1) * dx)
    oracle = wasserstein_edge_1d(rho0, rho1, 1.0)
    assert oracle == pytest.approx(0.125, rel=0.02)
    m0 = NetworkMeasure([rho0], np.zeros(2))
    m1 = NetworkMeasure([rho1], np.zeros(2))
    params = SolverParams(max_iters=200000, check_every=200, step_ratio=10.0)
    rep = solve_geodesic(net, grid, m0, m1, 1.0, params)
    assert rep.converged
    assert rep.value == pytest.approx(oracle, rel=0.05)
    assert rep.value == pytest.approx(0.125, rel=0.05)


def test_weak_duality_and_gap_sign():
    net = _single_edge()
    grid = GridSpec.for_network(net, 16, 8)
    rng = np.random.default_rng(21)
    r0 = rng.uniform(0.5, 1.5, 16)
    r1 = rng.uniform(0.5, 1.5, 16)
    m0 = NetworkMeasure([0.9 * r0 / (np.sum(r0) / 16)], np.full(2, 0.05))
    m1 = NetworkMeasure([0.9 * r1 / (np.sum(r1) / 16)], np.full(2, 0.05))
    rep = solve_geodesic(net, grid, m0, m1, 1.0)
    assert rep.converged
    assert rep.dual_value <= rep.value + 1e-9
    assert rep.gap >= -1e-6 * max(1.0, rep.value)
    assert rep.gap == pytest.approx(rep.value - rep.dual_value, abs=1e-15)


def test_solver_dual_value_certified_by_evaluator():
    net = _single_edge()
    grid = GridSpec.for_network(net, 16, 8)
    rng = np.random.default_rng(22)
    r0 = rng.uniform(0.5, 1.5, 16)
    r1 = rng.uniform(0.5, 1.5, 16)
    m0 = NetworkMeasure([0.9 * r0 / (np.sum(r0) / 16)], np.full(2, 0.05))
    m1 = NetworkMeasure([0.9 * r1 / (np.sum(r1) / 16)], np.full(2, 0.05))
    rep = solve_geodesic(net, grid, m0, m1, 1.0)
    assert rep.converged
    certified = eval_dual_objective(rep.duals, m0, m1, net, 1.0, grid)
    assert np.isfinite(certified)
    assert certified == pytest.approx(rep.dual_value, abs=1e-9 * max(1.0, abs(rep.dual_value)))


def test_multiplier_consistency_with_traces():
    net = build_network(
        [("c", (0.0, 0.0)), ("l", (1.0, 0.0)), ("r", (0.0, 1.0))],
        [("e1", "c", "l", 1.0), ("e2", "c", "r", 1.0)],
    )
    grid = GridSpec.for_network(net, 8, 4)
    rng = np.random.default_rng(23)
    r0 = [rng.uniform(0.5, 1.0, 8) for _ in range(2)]
    r1 = [rng.uniform(0.5, 1.0, 8) for _ in range(2)]
    m0 = NetworkMeasure(r0, np.full(3, 0.02))
    m1 = NetworkMeasure(r1, np.full(3, 0.02))
    s0, s1 = sum(map(np.sum, r0)), sum(map(np.sum, r1))
    for r in m1.edge_density:
        r *= s0 / s1
    rep = solve_geodesic(net, grid, m0, m1, 1.0)
    duals = rep.duals
    for i in range(net.n_vertices):
        traces = np.zeros(grid.steps + 1)
        for j in net.incidence[i]:
            col = 0 if net.tails[j] == i else -1
            traces += duals.edge_potential[j][:, col]
        expect = -traces / net.degree(i)
        assert duals.vertex_multiplier[:, i] == pytest.approx(expect, abs=1e-12)


def test_optimality_residual_degenerate_cases():
    net = _single_edge()
    grid = GridSpec.for_network(net, 8, 4)
    mu = NetworkMeasure([np.zeros(8)], np.zeros(2))
    field = linear_seed(mu, mu, net, grid)
    duals = _linear_duals(net, grid, 0.0, 0.0)
    r1, r2 = optimality_residual(field, duals, net, 1.0, grid)
    assert r1 == 0.0 and r2 == 0.0

    prob, _ = _probability_pair(net, grid)
    rep = solve_geodesic(net, grid, prob, prob, 1.0)
    r1, r2 = optimality_residual(rep.geodesic, rep.duals, net, 1.0, grid)
    assert r1 <= 1e-6 and r2 <= 1e-6


def test_nonconvergence_reports_instead_of_raising():
    net = _single_edge()
    grid = GridSpec.for_network(net, 16, 8)
    x = grid.cell_centers(net, 0)
    g0 = np.exp(-0.5 * ((x - 0.3) / 0.08) ** 2)
    g1 = np.exp(-0.5 * ((x - 0.7) / 0.08) ** 2)
    dx = float(grid.dx(net)[0])
    m0 = NetworkMeasure([g0 / (np.sum(g0) * dx)], np.zeros(2))
    m1 = NetworkMeasure([g1 / (np.sum(g1) * dx)], np.zeros(2))
    rep = solve_geodesic(net, grid, m0, m1, 1.0, SolverParams(max_iters=10, check_every=5))
    assert not rep.converged
    assert rep.iterations <= 10
    assert np.isfinite(rep.value)


def test_warm_start_reuses_progress():
    net = _single_edge()
    grid = GridSpec.for_network(net, 16, 8)
    rng = np.random.default_rng(24)
    r0 = rng.uniform(0.5, 1.5, 16)
    r1 = rng.uniform(0.5, 1.5, 16)
    m0 = NetworkMeasure([0.9 * r0 / (np.sum(r0) / 16)], np.full(2, 0.05))
    m1 = NetworkMeasure([0.9 * r1 / (np.sum(r1) / 16)], np.full(2, 0.05))
    cold = solve_geodesic(net, grid, m0, m1, 1.0)
    warm = solve_geodesic(net, grid, m0, m1, 1.0, warm_start=cold)
    assert warm.converged
    assert warm.iterations < cold.iterations
    assert warm.value == pytest.approx(cold.value, rel=1e-4)


def test_mass_mismatch_rejected():
    net = _single_edge()
    grid = GridSpec.for_network(net, 8, 4)
    m0 = NetworkMeasure([np.full(8, 1.0)], np.zeros(2))
    m1 = NetworkMeasure([np.full(8, 0.5)], np.zeros(2))
    with pytest.raises(MassMismatchError):
        solve_geodesic(net, grid, m0, m1, 1.0)


def test_solver_param_validation():
    with pytest.raises(ValidationError):
        SolverParams(over_relaxation=2.5)
    with pytest.raises(ValidationError):
        SolverParams(tol_gap=-1.0)
    with pytest.raises(ValidationError):
        solve_geodesic(
            _single_edge(),
            GridSpec(cells=(4,), steps=2),
            NetworkMeasure([np.full(4, 1.0)], np.zeros(2)),
            NetworkMeasure([np.full(4, 1.0)], np.zeros(2)),
            kappa=-1.0,
        )
