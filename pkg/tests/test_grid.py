import numpy as np
import pytest

from netot import (
    GridSpec,
    NetworkMeasure,
    ShapeMismatchError,
    SpaceTimeTest,
    TrajectoryField,
    ValidationError,
    VertexTest,
    ZeroDensityFluxError,
    build_network,
    ce_residual,
    coupled_vertex_rates,
    linear_seed,
    velocity_field,
    weak_form_residual,
)
from netot.grid import interpolate_density_to_faces


def _single_edge():
    return build_network([("a", (0.0, 0.0)), ("b", (1.0, 0.0))], [("e", "a", "b", 1.0)])


def test_gridspec_steps_and_widths():
    net = build_network([("a", (0.0, 0.0)), ("b", (2.0, 0.0))], [("e", "a", "b", 2.0)])
    grid = GridSpec.for_network(net, 8, 4)
    assert grid.dt == pytest.approx(0.25)
    assert grid.dx(net)[0] == pytest.approx(0.25)
    assert grid.time_nodes()[0] == 0.0 and grid.time_nodes()[-1] == 1.0
    assert grid.cell_centers(net, 0)[0] == pytest.approx(0.125)
    assert grid.face_coords(net, 0)[-1] == pytest.approx(2.0)


def test_gridspec_rejects_bad_sizes():
    net = _single_edge()
    with pytest.raises(ValidationError):
        GridSpec.for_network(net, 0, 4)
    with pytest.raises(ValidationError):
        GridSpec.for_network(net, 4, 0)
    with pytest.raises(ShapeMismatchError):
        GridSpec.for_network(net, [4, 4], 4)


def test_ce_residual_constant_field_is_zero():
    net = _single_edge()
    grid = GridSpec.for_network(net, 4, 3)
    rho = np.full((4, 4), 0.7)
    field = TrajectoryField([rho], [np.zeros((3, 5))], np.full((4, 2), 0.1), np.zeros((3, 2)))
    mu = NetworkMeasure([np.full(4, 0.7)], np.full(2, 0.1))
    res = ce_residual(field, mu, mu, net, grid)
    assert res.total == 0.0


def test_ce_residual_one_cell_one_step_stationary():
    net = _single_edge()
    grid = GridSpec(cells=(1,), steps=1)
    field = TrajectoryField(
        [np.ones((2, 1))], [np.zeros((1, 2))], np.zeros((2, 2)), np.zeros((1, 2))
    )
    mu = NetworkMeasure([np.ones(1)], np.zeros(2))
    assert ce_residual(field, mu, mu, net, grid).total == 0.0


def test_ce_residual_vanishing_density_defect():
    net = _single_edge()
    grid = GridSpec(cells=(1,), steps=1)
    rho = np.array([[1.0], [0.0]])
    field = TrajectoryField([rho], [np.zeros((1, 2))], np.zeros((2, 2)), np.zeros((1, 2)))
    start = NetworkMeasure([np.ones(1)], np.zeros(2))
    end = NetworkMeasure([np.zeros(1)], np.zeros(2))
    res = ce_residual(field, start, end, net, grid)
    assert res.max_interior == pytest.approx(1.0)


def test_linear_seed_identity_endpoints_is_exact():
    net = _single_edge()
    grid = GridSpec.for_network(net, 6, 4)
    mu = NetworkMeasure([np.linspace(0.5, 1.5, 6)], np.array([0.2, 0.3]))
    field = linear_seed(mu, mu, net, grid)
    assert np.all(field.edge_flux[0] == 0.0)
    res = ce_residual(field, mu, mu, net, grid)
    assert res.total == 0.0


def test_linear_seed_midpoint_value():
    net = _single_edge()
    grid = GridSpec.for_network(net, 1, 2)
    start = NetworkMeasure([np.zeros(1)], np.zeros(2))
    end = NetworkMeasure([np.ones(1)], np.zeros(2))
    field = linear_seed(start, end, net, grid)
    assert field.edge_density[0][1, 0] == pytest.approx(0.5)


def test_linear_seed_vertex_interpolation():
    net = _single_edge()
    grid = GridSpec.for_network(net, 1, 2)
    start = NetworkMeasure([np.zeros(1)], np.array([1.0, 0.0]))
    end = NetworkMeasure([np.zeros(1)], np.array([0.0, 0.0]))
    field = linear_seed(start, end, net, grid)
    assert field.vertex_mass[:, 0] == pytest.approx([1.0, 0.5, 0.0])


def test_linear_seed_has_zero_coupling_violation():
    net = _single_edge()
    grid = GridSpec.for_network(net, 4, 3)
    start = NetworkMeasure([np.full(4, 1.0)], np.zeros(2))
    end = NetworkMeasure([np.full(4, 1.0)[::-1] * np.linspace(0.5, 1.5, 4)], np.zeros(2))
    for r in end.edge_density:
        r *= 1.0 / (np.sum(r) * 0.25)
    field = linear_seed(start, end, net, grid)
    res = ce_residual(field, start, end, net, grid)
    assert res.max_coupling == 0.0


def test_mass_conservation_telescopes_for_exact_fields():
    # a nonzero-flux field built to satisfy the discrete balance exactly
    net = _single_edge()
    grid = GridSpec.for_network(net, 4, 2)
    dt, dx = grid.dt, grid.dx(net)[0]
    rng = np.random.default_rng(11)
    F = [rng.standard_normal((2, 5)) * 0.05]
    F[0][:, 0] = 0.0  # keep vertex exchange out of this edge-only check
    F[0][:, -1] = 0.0
    rho = np.empty((3, 4))
    rho[0] = rng.uniform(1.0, 2.0, 4)
    for k in range(2):
        rho[k + 1] = rho[k] - dt * np.diff(F[0][k]) / dx
    field = TrajectoryField([rho], F, np.zeros((3, 2)), np.zeros((2, 2)))
    masses = [np.sum(rho[k]) * dx for k in range(3)]
    assert np.ptp(masses) < 1e-14
    start = NetworkMeasure([rho[0]], np.zeros(2))
    end = NetworkMeasure([rho[-1]], np.zeros(2))
    assert ce_residual(field, start, end, net, grid).total < 1e-13


def test_coupled_vertex_rates_signs():
    net = build_network(
        [("a", (0.0, 0.0)), ("b", (1.0, 0.0)), ("c", (2.0, 0.0))],
        [("e1", "a", "b", 1.0), ("e2", "b", "c", 1.0)],
    )
    F1 = np.array([[0.0, 0.0, 0.3]])  # arrives at head b
    F2 = np.array([[0.3, 0.0, 0.0]])  # leaves from tail b
    f = coupled_vertex_rates(net, [F1, F2])
    assert f[0, net.vertex_index("b")] == pytest.approx(0.0)
    assert f[0, net.vertex_index("a")] == pytest.approx(0.0)
    F2_blocked = np.zeros((1, 3))
    f2 = coupled_vertex_rates(net, [F1, F2_blocked])
    assert f2[0, net.vertex_index("b")] == pytest.approx(0.3)


def test_velocity_field_division_and_markers():
    net = _single_edge()
    grid = GridSpec(cells=(1,), steps=1)
    rho = np.array([[0.4], [0.4]])
    F = np.array([[0.2, 0.0]])
    field = TrajectoryField([rho], [F], np.zeros((2, 2)), np.zeros((1, 2)))
    u = velocity_field(field, net, grid)
    assert u[0][0, 0] == pytest.approx(0.5)

    vac = TrajectoryField([np.zeros((2, 1))], [np.zeros((1, 2))], np.zeros((2, 2)), np.zeros((1, 2)))
    u = velocity_field(vac, net, grid)
    assert np.isnan(u[0]).all()

    bad = TrajectoryField([np.zeros((2, 1))], [np.array([[0.1, 0.0]])], np.zeros((2, 2)), np.zeros((1, 2)))
    with pytest.raises(ZeroDensityFluxError):
        velocity_field(bad, net, grid)


def _constant_tests(net, value=1.0):
    edge_tests = [
        SpaceTimeTest(
            value=lambda t, x, v=value: np.full_like(np.asarray(t, dtype=float), v),
            dt=lambda t, x: np.zeros_like(np.asarray(t, dtype=float)),
            dx=lambda t, x: np.zeros_like(np.asarray(t, dtype=float)),
        )
        for _ in range(net.n_edges)
    ]
    vertex_tests = [
        VertexTest(
            value=lambda t, v=value: np.full_like(np.asarray(t, dtype=float), v),
            dt=lambda t: np.zeros_like(np.asarray(t, dtype=float)),
        )
        for _ in range(net.n_vertices)
    ]
    return edge_tests, vertex_tests


def test_weak_form_constants_on_exact_field():
    net = _single_edge()
    grid = GridSpec.for_network(net, 5, 3)
    mu = NetworkMeasure([np.linspace(0.5, 1.5, 5)], np.array([0.1, 0.2]))
    field = linear_seed(mu, mu, net, grid)
    edge_tests, vertex_tests = _constant_tests(net)
    assert weak_form_residual(field, edge_tests, vertex_tests, net, grid) < 1e-14


def _marched_field(net, grid):
    """Exact-balance field driven by a smooth flux vanishing at the ends."""
    dt, dx = grid.dt, grid.dx(net)[0]
    xf = grid.face_coords(net, 0)
    tm = grid.time_midpoints()
    F = [0.2 * np.sin(np.pi * xf)[None, :] * np.cos(0.5 * np.pi * tm)[:, None]]
    x = grid.cell_centers(net, 0)
    rho = np.empty((grid.steps + 1, grid.cells[0]))
    rho[0] = 1.0 + 0.5 * np.sin(2 * np.pi * x)
    for k in range(grid.steps):
        rho[k + 1] = rho[k] - dt * np.diff(F[0][k]) / dx
    return TrajectoryField(
        edge_density=[rho],
        edge_flux=F,
        vertex_mass=np.zeros((grid.steps + 1, 2)),
        vertex_rate=np.zeros((grid.steps, 2)),
    )


def test_weak_form_smooth_test_refines_to_zero():
    net = _single_edge()
    defects = []
    for cells, steps in [(8, 4), (16, 8), (32, 16), (64, 32)]:
        grid = GridSpec.for_network(net, cells, steps)
        field = _marched_field(net, grid)
        start = NetworkMeasure([field.edge_density[0][0]], np.zeros(2))
        end = NetworkMeasure([field.edge_density[0][-1]], np.zeros(2))
        assert ce_residual(field, start, end, net, grid).total < 1e-12
        edge_tests = [
            SpaceTimeTest(
                value=lambda t, x: np.exp(np.asarray(t, dtype=float)) * np.sin(np.asarray(x, dtype=float)),
                dt=lambda t, x: np.exp(np.asarray(t, dtype=float)) * np.sin(np.asarray(x, dtype=float)),
                dx=lambda t, x: np.exp(np.asarray(t, dtype=float)) * np.cos(np.asarray(x, dtype=float)),
            )
        ]
        _, vertex_tests = _constant_tests(net, value=0.0)
        defects.append(weak_form_residual(field, edge_tests, vertex_tests, net, grid))
    slopes = np.diff(np.log(defects)) / -np.log(2.0)
    assert min(slopes) >= 1.0


def test_weak_form_detects_broken_balance():
    net = _single_edge()
    grid = GridSpec.for_network(net, 6, 4)
    start = NetworkMeasure([np.full(6, 1.0)], np.zeros(2))
    end = NetworkMeasure([np.linspace(0.4, 1.6, 6)], np.zeros(2))
    for r in end.edge_density:
        r *= 1.0 / (np.sum(r) / 6.0)
    field = linear_seed(start, end, net, grid)  # teleports mass, no flux
    edge_tests = [
        SpaceTimeTest(
            value=lambda t, x: np.asarray(x, dtype=float),
            dt=lambda t, x: np.zeros_like(np.asarray(t, dtype=float)),
            dx=lambda t, x: np.ones_like(np.asarray(t, dtype=float)),
        )
    ]
    _, vertex_tests = _constant_tests(net, value=0.0)
    assert weak_form_residual(field, edge_tests, vertex_tests, net, grid) > 1e-3


def test_interpolation_to_faces_averages():
    rho = np.array([[1.0, 3.0], [3.0, 5.0]])
    out = interpolate_density_to_faces(rho)
    assert out.shape == (1, 3)
    assert out[0] == pytest.approx([2.0, 3.0, 4.0])


def test_trajectory_shape_validation():
    net = _single_edge()
    grid = GridSpec.for_network(net, 4, 2)
    bad = TrajectoryField([np.zeros((3, 5))], [np.zeros((2, 5))], np.zeros((3, 2)), np.zeros((2, 2)))
    with pytest.raises(ShapeMismatchError):
        bad.validate_shapes(net, grid)


def test_slice_measure_roundtrip():
    net = _single_edge()
    grid = GridSpec.for_network(net, 3, 2)
    mu0 = NetworkMeasure([np.array([1.2, 0.9, 0.9])], np.array([0.0, 0.0]))
    mu1 = NetworkMeasure([np.array([0.9, 0.9, 1.2])], np.array([0.0, 0.0]))
    field = linear_seed(mu0, mu1, net, grid)
    s = field.slice_measure(0)
    assert s.edge_density[0] == pytest.approx(mu0.edge_density[0])
    assert field.slice_measure(grid.steps).edge_density[0] == pytest.approx(mu1.edge_density[0])
