import numpy as np
import pytest

from netot import (
    ActionBreakdown,
    GridSpec,
    ParaboloidSet,
    TrajectoryField,
    ValidationError,
    action_density,
    action_eval,
    build_network,
    project_paraboloid,
    project_vertex_set,
    prox_action,
)


def test_action_density_values():
    assert action_density(1.0, 2.0) == pytest.approx(2.0)
    assert action_density(0.0, 0.0) == 0.0
    assert action_density(0.0, 1.0) == np.inf
    assert action_density(-0.5, 0.0) == np.inf
    assert action_density(2.0, -3.0) == pytest.approx(2.25)


def test_action_density_positively_homogeneous():
    rng = np.random.default_rng(3)
    for _ in range(50):
        a = rng.uniform(0.01, 5.0)
        b = rng.uniform(-5.0, 5.0)
        lam = rng.uniform(0.01, 10.0)
        assert action_density(lam * a, lam * b) == pytest.approx(
            lam * action_density(a, b), rel=1e-12
        )


def test_action_density_convex_on_samples():
    rng = np.random.default_rng(4)
    for _ in range(100):
        p = (rng.uniform(0.01, 4.0), rng.uniform(-4.0, 4.0))
        q = (rng.uniform(0.01, 4.0), rng.uniform(-4.0, 4.0))
        lam = rng.uniform(0.0, 1.0)
        mid = (lam * p[0] + (1 - lam) * q[0], lam * p[1] + (1 - lam) * q[1])
        assert action_density(*mid) <= lam * action_density(*p) + (
            1 - lam
        ) * action_density(*q) + 1e-12


def test_fenchel_identity_against_grid_search():
    # A(a, b) must equal the support function of the unit paraboloid set
    rng = np.random.default_rng(5)
    betas = np.linspace(-40.0, 40.0, 400001)
    alphas = -0.5 * betas**2
    for _ in range(20):
        a = rng.uniform(0.05, 3.0)
        b = rng.uniform(-3.0, 3.0)
        sup = np.max(a * alphas + b * betas)
        assert sup == pytest.approx(action_density(a, b), rel=1e-3, abs=1e-9)


def test_projection_keeps_feasible_points():
    assert project_paraboloid((-1.0, 0.0), 1.0) == (-1.0, 0.0)
    a, s = project_paraboloid((-2.0, 1.0), 1.0)
    assert (a, s) == (-2.0, 1.0)


def test_projection_of_apex_overshoot():
    a, s = project_paraboloid((1.0, 0.0), 1.0)
    assert a == pytest.approx(0.0, abs=1e-12)
    assert s == pytest.approx(0.0, abs=1e-12)


def test_projection_frozen_point():
    # projecting (0, 2): the boundary parameter solves s^3 + 2 s - 4 = 0
    a, s = project_paraboloid((0.0, 2.0), 1.0)
    assert s == pytest.approx(1.1795, abs=1e-4)
    assert a == pytest.approx(-0.6956, abs=1e-4)
    assert a + s * s / 2.0 <= 1e-12


def test_projection_idempotent_and_nonexpansive():
    rng = np.random.default_rng(6)
    for _ in range(200):
        c = rng.uniform(0.1, 10.0)
        p = (rng.uniform(-5, 5), rng.uniform(-8, 8))
        q = (rng.uniform(-5, 5), rng.uniform(-8, 8))
        pp = project_paraboloid(p, c)
        qq = project_paraboloid(q, c)
        again = project_paraboloid(pp, c)
        assert abs(again[0] - pp[0]) < 1e-12 and abs(again[1] - pp[1]) < 1e-12
        d_in = np.hypot(p[0] - q[0], p[1] - q[1])
        d_out = np.hypot(pp[0] - qq[0], pp[1] - qq[1])
        assert d_out <= d_in + 1e-12


def test_projection_optimality_against_dense_search():
    # closest boundary point found by brute force over the parametrized boundary
    for point in [(0.5, 1.5), (2.0, -1.0), (0.3, 0.0)]:
        a, s = project_paraboloid(point, 1.0)
        betas = np.linspace(-6.0, 6.0, 2000001)
        d2 = (point[0] + 0.5 * betas**2) ** 2 + (point[1] - betas) ** 2
        best = np.min(d2)
        got = (point[0] - a) ** 2 + (point[1] - s) ** 2
        assert got <= best + 1e-7


def test_paraboloid_set_membership_and_support():
    se = ParaboloidSet(curvature=1.0)
    assert se.contains((-3.0, 0.0))
    assert se.contains((-0.5, 1.0))
    assert not se.contains((0.1, 0.0))
    assert se.support(1.0, 2.0) == pytest.approx(2.0)
    sv = ParaboloidSet(curvature=4.0)
    assert sv.support(1.0, 2.0) == pytest.approx(8.0)
    with pytest.raises(ValidationError):
        ParaboloidSet(curvature=0.0)


def test_vertex_projection_trivial_cases():
    a, b, z = project_vertex_set(-1.0, 0.0, [0.0], kappa=1.0)
    assert (a, b) == (-1.0, 0.0) and z[0] == 0.0
    # s = 0 reduces the constraint to a <= 0
    a, b, z = project_vertex_set(1.0, 1.0, [1.0], kappa=1.0)
    assert a == pytest.approx(0.0, abs=1e-12)
    assert b == pytest.approx(1.0)
    assert z[0] == pytest.approx(1.0)


def test_vertex_projection_diagonal_shift_equivariance():
    rng = np.random.default_rng(8)
    for _ in range(100):
        d = rng.integers(1, 5)
        a = rng.uniform(-2, 2)
        b = rng.uniform(-3, 3)
        z = rng.uniform(-3, 3, d)
        kappa = rng.uniform(0.3, 3.0)
        k = rng.uniform(-5, 5)
        base = project_vertex_set(a, b, z, kappa)
        shifted = project_vertex_set(a, b + k, z + k, kappa)
        assert shifted[0] == pytest.approx(base[0], abs=1e-10)
        assert shifted[1] == pytest.approx(base[1] + k, abs=1e-10)
        assert shifted[2] == pytest.approx(base[2] + k, abs=1e-10)


def test_vertex_projection_against_dense_search():
    # one incident trace: minimize |(a,b,z) - x|^2 over a + (b-z)^2/2 <= 0
    x = (0.8, 1.2, -0.4)
    a, b, z = project_vertex_set(*x[:2], [x[2]], kappa=1.0)
    bs = np.linspace(-4, 4, 801)
    zs = np.linspace(-4, 4, 801)
    B, Z = np.meshgrid(bs, zs, indexing="ij")
    A = -0.5 * (B - Z) ** 2  # best feasible a for fixed (b, z) is the boundary or x_a
    A = np.minimum(A, x[0])
    d2 = (A - x[0]) ** 2 + (B - x[1]) ** 2 + (Z - x[2]) ** 2
    best = float(np.min(d2))
    got = (a - x[0]) ** 2 + (b - x[1]) ** 2 + (float(z[0]) - x[2]) ** 2
    assert got <= best + 1e-4


def test_prox_action_fixed_points():
    assert prox_action((1.0, 0.0), 1.0) == (1.0, 0.0)
    assert prox_action((0.0, 0.0), 0.7) == (0.0, 0.0)
    out = prox_action((-2.0, 0.0), 1.0)
    assert out[0] == pytest.approx(0.0, abs=1e-12)
    assert out[1] == pytest.approx(0.0, abs=1e-12)


def test_prox_action_moreau_identity():
    rng = np.random.default_rng(9)
    for _ in range(100):
        x = (rng.uniform(-3, 3), rng.uniform(-3, 3))
        sigma = rng.uniform(0.1, 5.0)
        y = prox_action(x, sigma)
        p = project_paraboloid((x[0] / sigma, x[1] / sigma), 1.0)
        assert y[0] == pytest.approx(x[0] - sigma * p[0], abs=1e-12)
        assert y[1] == pytest.approx(x[1] - sigma * p[1], abs=1e-12)
        assert y[0] >= -1e-13


def test_prox_action_minimizes_objective():
    rng = np.random.default_rng(10)
    for _ in range(30):
        x = (rng.uniform(-2, 3), rng.uniform(-3, 3))
        sigma = rng.uniform(0.2, 3.0)
        y = prox_action(x, sigma)
        ya = max(y[0], 0.0)
        yb = 0.0 if abs(y[1]) < 1e-12 else y[1]  # snap roundoff to the feasible corner
        fy = action_density(ya, yb) + ((y[0] - x[0]) ** 2 + (y[1] - x[1]) ** 2) / (2 * sigma)
        for _ in range(40):
            z = (rng.uniform(0.0, 4.0), rng.uniform(-4, 4))
            fz = action_density(*z) + ((z[0] - x[0]) ** 2 + (z[1] - x[1]) ** 2) / (2 * sigma)
            assert fy <= fz + 1e-9


def _one_cell_setup():
    net = build_network([("a", (0.0, 0.0)), ("b", (1.0, 0.0))], [("e", "a", "b", 1.0)])
    grid = GridSpec(cells=(1,), steps=1)
    return net, grid


def test_action_eval_zero_flux_is_zero():
    net, grid = _one_cell_setup()
    field = TrajectoryField(
        [np.array([[1.0], [1.0]])], [np.zeros((1, 2))], np.zeros((2, 2)), np.zeros((1, 2))
    )
    out = action_eval(field, 1.0, net, grid)
    assert out.total == 0.0
    assert out.edge_total == 0.0 and out.vertex_total == 0.0


def test_action_eval_single_face_contribution():
    # one active face with interpolated density 1 and flux 2 on a unit cell
    net, grid = _one_cell_setup()
    field = TrajectoryField(
        [np.array([[1.0], [1.0]])],
        [np.array([[2.0, 0.0]])],
        np.zeros((2, 2)),
        np.zeros((1, 2)),
    )
    out = action_eval(field, 1.0, net, grid)
    assert out.edge_total == pytest.approx(2.0)


def test_action_eval_vertex_weighting():
    net, grid = _one_cell_setup()
    field = TrajectoryField(
        [np.array([[0.0], [0.0]])],
        [np.zeros((1, 2))],
        np.ones((2, 2)),
        np.array([[1.0, 0.0]]),
    )
    out = action_eval(field, 2.0, net, grid)
    assert out.vertex_total == pytest.approx(2.0)
    assert out.total == pytest.approx(out.edge_total + out.vertex_total)


def test_action_eval_propagates_infinity():
    net, grid = _one_cell_setup()
    field = TrajectoryField(
        [np.array([[0.0], [0.0]])],
        [np.array([[0.5, 0.0]])],
        np.zeros((2, 2)),
        np.zeros((1, 2)),
    )
    assert action_eval(field, 1.0, net, grid).total == np.inf


def test_action_breakdown_total_consistency():
    bd = ActionBreakdown(per_edge=[0.5, 0.25], per_vertex=np.array([0.1, 0.0]))
    assert bd.total == pytest.approx(bd.edge_total + bd.vertex_total)
    assert bd.total == pytest.approx(0.85)
