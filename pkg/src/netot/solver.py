"""Geodesic solver: primal-dual hybrid gradient on the staggered grid.

The squared distance is the minimum of the quadrature-weighted action over
fields satisfying the discrete continuity system. The saddle form is

    min_u  iota_{Cu=d}(u) + sum_p A( (K u + k0)_p )

with u the staggered unknowns and K the interpolation onto centered points,
each point's quadrature weight folded into its row of K through the
1-homogeneity of the action. A is the support function of the unit
paraboloid, so the dual update is a pointwise Euclidean projection onto it;
the primal update is the exact projection onto the continuity space through
a cached sparse factorization. Dual potentials fall out of the continuity
multipliers.

The iteration is the relaxed diagonally preconditioned primal-dual scheme:
with diagonal step metrics T (primal) and Sigma (dual) satisfying
||Sigma^1/2 K T^1/2|| < 1 and relaxation in [1, 2),

    x~ = Pi_CE(x - T K^T y)        (projection in the T metric)
    y~ = Pi_S (y + Sigma (K (2 x~ - x) + k0))
    (x, y) += relaxation * ((x~, y~) - (x, y)).

The diagonal metrics absorb the large spread between edge quadrature weights
(dx_j * dt) and vertex weights (kappa^2 * dt) that defeats scalar steps.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from typing import Optional

import numpy as np

from ._discrete import Discretization
from .action import project_paraboloid_array
from .exceptions import ValidationError
from .grid import GridSpec, TrajectoryField, interpolate_density_to_faces
from .netgraph import Network, NetworkMeasure, total_mass
from .exceptions import MassMismatchError

_GAP_SCALE_FLOOR = 1e-12


@dataclass
class SolverParams:
    """Knobs for the primal-dual solve.

    step_size overrides the power-iteration estimate when set (it is the
    common base step; tau = step/ratio, sigma = step*ratio keeps the product
    fixed). tol_gap is relative; tol_ce is an absolute infinity norm on the
    continuity residual (the exact projection keeps it at solver precision).
    """

    max_iters: int = 50_000
    tol_gap: float = 1e-6
    tol_ce: float = 1e-8
    tol_dual: float = 1e-9
    over_relaxation: float = 1.8
    step_ratio: float = 1.0
    step_size: Optional[float] = None
    check_every: int = 25
    power_iters: int = 50
    step_safety: float = 0.9

    def __post_init__(self):
        if not (1.0 <= self.over_relaxation < 2.0):
            raise ValidationError(
                f"over_relaxation must lie in [1, 2), got {self.over_relaxation}"
            )
        if self.tol_gap <= 0 or self.tol_ce <= 0 or self.tol_dual <= 0:
            raise ValidationError("tolerances must be positive")
        if self.max_iters < 1 or self.check_every < 1:
            raise ValidationError("iteration counts must be positive")
        if self.step_ratio <= 0:
            raise ValidationError("step_ratio must be positive")
        if not (0.0 < self.step_safety <= 1.0):
            raise ValidationError("step_safety must lie in (0, 1]")


@dataclass
class DualPotentials:
    """Space-time potentials read off the continuity multipliers.

    edge_potential[j] has shape (P+1, N_j+1) (time nodes x faces),
    vertex_potential has shape (P+1, n). vertex_multiplier is the derived
    field -(1/deg) * sum of incident edge-potential traces, stored per time
    node. The additive gauge is fixed by edge_potential[0][0, 0] = 0.

    The remaining fields hold the raw certificate on the staggered grid,
    under the same gauge: edge_potential_mid[j] is the (P, N_j) multiplier
    field at (time midpoint, cell), vertex_potential_mid is (P, n), and the
    *_dual_* arrays are the converged dual pair at the centered action
    points, one (density-like, flux-like) pair per flux face and time
    midpoint (shape (P, N_j+1)) plus one per vertex and midpoint. The
    flux-like component is the discrete potential gradient; residual and
    certificate routines prefer these exact fields and fall back to
    interpolation when they are absent (hand-built potentials).
    """

    edge_potential: list
    vertex_potential: np.ndarray
    vertex_multiplier: np.ndarray
    edge_potential_mid: Optional[list] = None
    vertex_potential_mid: Optional[np.ndarray] = None
    edge_dual_density: Optional[list] = None
    edge_dual_flux: Optional[list] = None
    vertex_dual_density: Optional[np.ndarray] = None
    vertex_dual_flux: Optional[np.ndarray] = None


@dataclass
class SolveReport:
    """Outcome of a geodesic solve. Non-convergence is reported, not raised."""

    value: float
    dual_value: float
    gap: float
    iterations: int
    converged: bool
    geodesic: TrajectoryField
    duals: Optional[DualPotentials]
    residual_history: list = dc_field(default_factory=list, repr=False)
    _warm: Optional[tuple] = dc_field(default=None, repr=False)

    @property
    def rel_gap(self) -> float:
        scale = max(abs(self.value), abs(self.dual_value), _GAP_SCALE_FLOOR)
        return self.gap / scale


def _check_endpoints(net, grid, start, end):
    start.validate(net)
    end.validate(net)
    for j in range(net.n_edges):
        if len(start.edge_density[j]) != grid.cells[j] or len(end.edge_density[j]) != grid.cells[j]:
            raise ValidationError(
                f"endpoint densities on edge {j} do not match the grid cell count"
            )
    m0 = total_mass(start, net)
    m1 = total_mass(end, net)
    if abs(m0 - m1) > 1e-12:
        raise MassMismatchError(
            f"endpoint masses differ: {m0!r} vs {m1!r}; the continuity system is infeasible"
        )


def _run_pdhg(disc: Discretization, params: SolverParams, warm=None):
    """Shared iteration for all modes. Returns (x, y, report fields)."""
    disc.configure_steps(
        step_ratio=params.step_ratio,
        step_safety=params.step_safety,
        power_iters=params.power_iters,
        step_size=params.step_size,
    )
    tau = disc.tau_diag
    sigma = disc.sigma_diag
    relax = params.over_relaxation

    if warm is not None and warm[0].size == disc.u_size and warm[1].size == disc.w_size:
        x = warm[0].copy()
        ya = warm[1].copy()
        yb = warm[2].copy()
    else:
        x = disc.seed_vector()
        ya = np.zeros(disc.w_size)
        yb = np.zeros(disc.w_size)
    x = disc.project_ce(x)

    history = []
    value = np.inf
    dual_value = -np.inf
    converged = False
    it = 0
    for it in range(1, params.max_iters + 1):
        g = disc.apply_KT(ya, yb)
        xt = disc.project_ce(x - tau * g)
        wa, wb = disc.apply_K(2.0 * xt - x)
        ya_t, yb_t = project_paraboloid_array(ya + sigma * wa, yb + sigma * wb, 1.0)
        x = x + relax * (xt - x)
        ya = ya + relax * (ya_t - ya)
        yb = yb + relax * (yb_t - yb)

        if it % params.check_every == 0 or it == params.max_iters:
            g = disc.apply_KT(ya, yb)
            mu = disc.ce_multipliers(g)
            dual_value = disc.dual_value(mu, ya)
            wa_x, wb_x = disc.apply_K(x)
            value = disc.value_estimate(wa_x, wb_x)
            ce_inf = disc.ce_infnorm(x)
            dual_feas = float(np.max(np.abs(g + disc.C_T @ mu))) if g.size else 0.0
            gap = value - dual_value
            scale = max(abs(value), abs(dual_value), _GAP_SCALE_FLOOR)
            g_scale = max(1.0, float(np.max(np.abs(g))) if g.size else 0.0)
            history.append((it, value, dual_value, gap / scale, ce_inf, dual_feas))
            if (
                abs(gap) <= params.tol_gap * scale
                and ce_inf <= params.tol_ce
                and dual_feas <= params.tol_dual * g_scale
            ):
                converged = True
                break

    g = disc.apply_KT(ya, yb)
    mu = disc.ce_multipliers(g)
    dual_value = disc.dual_value(mu, ya)
    wa_x, wb_x = disc.apply_K(x)
    value = disc.value_estimate(wa_x, wb_x)
    return x, (ya, yb), mu, value, dual_value, converged, it, history


def _node_potentials(disc: Discretization, mu, ya, yb) -> DualPotentials:
    """Interpolate midpoint/cell multiplier fields to time-node/face arrays
    and attach the raw staggered certificate."""
    phi_mid, psi_mid = disc.potentials_from_mu(mu)
    P = disc.grid.steps
    edge_potential = []
    for j, blk in enumerate(phi_mid):
        N = disc.grid.cells[j]
        faces = np.empty((P, N + 1))
        faces[:, 0] = blk[:, 0]
        faces[:, -1] = blk[:, -1]
        if N > 1:
            faces[:, 1:-1] = 0.5 * (blk[:, :-1] + blk[:, 1:])
        nodes = np.empty((P + 1, N + 1))
        nodes[0] = faces[0]
        nodes[-1] = faces[-1]
        if P > 1:
            nodes[1:-1] = 0.5 * (faces[:-1] + faces[1:])
        edge_potential.append(nodes)
    psi_nodes = np.empty((P + 1, psi_mid.shape[1]))
    psi_nodes[0] = psi_mid[0]
    psi_nodes[-1] = psi_mid[-1]
    if P > 1:
        psi_nodes[1:-1] = 0.5 * (psi_mid[:-1] + psi_mid[1:])

    gauge = edge_potential[0][0, 0]
    edge_potential = [p - gauge for p in edge_potential]
    psi_nodes = psi_nodes - gauge
    phi_mid = [p - gauge for p in phi_mid]
    psi_mid = psi_mid - gauge

    net = disc.net
    lam = np.zeros_like(psi_nodes)
    for i in range(net.n_vertices):
        acc = np.zeros(P + 1)
        for j in net.incidence[i]:
            face = 0 if net.tails[j] == i else disc.grid.cells[j]
            acc += edge_potential[j][:, face]
        lam[:, i] = -acc / net.degree(i)

    e_da, e_db = [], []
    for j in range(net.n_edges):
        N = disc.grid.cells[j]
        sl = slice(disc.wedge_off[j], disc.wedge_off[j] + P * (N + 1))
        e_da.append(ya[sl].reshape(P, N + 1).copy())
        e_db.append(yb[sl].reshape(P, N + 1).copy())
    if disc.has_vertex_action:
        v_da = ya[disc.wvertex_off :].reshape(P, net.n_vertices).copy()
        v_db = yb[disc.wvertex_off :].reshape(P, net.n_vertices).copy()
    else:
        v_da = v_db = None
    return DualPotentials(
        edge_potential,
        psi_nodes,
        lam,
        edge_potential_mid=phi_mid,
        vertex_potential_mid=psi_mid,
        edge_dual_density=e_da,
        edge_dual_flux=e_db,
        vertex_dual_density=v_da,
        vertex_dual_flux=v_db,
    )


def solve_geodesic(
    net: Network,
    grid: GridSpec,
    start: NetworkMeasure,
    end: NetworkMeasure,
    kappa: float,
    params: Optional[SolverParams] = None,
    warm_start: Optional[SolveReport] = None,
) -> SolveReport:
    """Minimize the discrete action between two measures on the network.

    Returns a SolveReport whether or not the iteration converged (check the
    flag); only invalid inputs raise. kappa > 0 weights the vertex exchange
    cost; see the metrics module for the kappa = 0 relaxation and the frozen
    vertex variant.
    """
    params = params or SolverParams()
    _check_endpoints(net, grid, start, end)
    disc = Discretization(net, grid, start, end, kappa, mode="full")
    warm = warm_start._warm if warm_start is not None and warm_start._warm else None
    x, (ya, yb), mu, value, dual_value, converged, its, history = _run_pdhg(disc, params, warm)
    duals = _node_potentials(disc, mu, ya, yb)
    return SolveReport(
        value=value,
        dual_value=dual_value,
        gap=value - dual_value,
        iterations=its,
        converged=converged,
        geodesic=disc.field_from_u(x),
        duals=duals,
        residual_history=history,
        _warm=(x, ya, yb),
    )


def _face_weights(N: int) -> np.ndarray:
    """Interpolation weight a face carries in an adjacent cell's stencil."""
    wf = np.full(N + 1, 0.25)
    wf[0] = wf[-1] = 0.5
    return wf


def _face_slice(rho: np.ndarray) -> np.ndarray:
    """Two-cell averages of one density slice, one-sided at the ends."""
    out = np.empty(rho.size + 1)
    out[0] = rho[0]
    out[-1] = rho[-1]
    out[1:-1] = 0.5 * (rho[:-1] + rho[1:])
    return out


def _centered_space(arr: np.ndarray, dx: float) -> np.ndarray:
    out = np.empty_like(arr)
    out[:, 0] = (arr[:, 1] - arr[:, 0]) / dx
    out[:, -1] = (arr[:, -1] - arr[:, -2]) / dx
    if arr.shape[1] > 2:
        out[:, 1:-1] = (arr[:, 2:] - arr[:, :-2]) / (2.0 * dx)
    return out


def hj_residual(duals: DualPotentials, net: Network, kappa: float, grid: GridSpec):
    """Max positive violations of the discrete Hamilton-Jacobi system.

    Edge part:   (d_t phi + |d_x phi|^2 / 2)_+
    Vertex part: (d_t psi + |psi - mean incident trace|^2 / (2 kappa^2))_+

    Both are evaluated on the staggered stencils under which the solver's
    optimality conditions furnish them: the time difference of the midpoint
    potential at an interior time node and cell is bounded by the stencil
    average of the squared dual gradient (Cauchy-Schwarz over the 2 x 2
    interpolation weights), and the vertex gradient is (psi - trace)/kappa^2.
    When the raw certificate fields are missing the gradient is rebuilt from
    staggered differences of the node potentials, which is only approximate
    near kinks.

    Returns (edge_max, vertex_max).
    """
    dt = grid.dt
    dxs = grid.dx(net)
    P = grid.steps
    exact = duals.edge_potential_mid is not None and duals.edge_dual_flux is not None

    edge_max = 0.0
    beta_mids = []
    for j in range(net.n_edges):
        N = grid.cells[j]
        if exact:
            phi_mid = duals.edge_potential_mid[j]
            beta = duals.edge_dual_flux[j]
        else:
            nodes = duals.edge_potential[j]
            phi_faces = 0.5 * (nodes[:-1] + nodes[1:]) if P > 0 else nodes
            phi_mid = 0.5 * (phi_faces[:, :-1] + phi_faces[:, 1:])
            beta = np.empty((P, N + 1))
            beta[:, 1:-1] = (phi_mid[:, 1:] - phi_mid[:, :-1]) / dxs[j]
            beta[:, 0] = beta[:, 1] if N > 1 else 0.0
            beta[:, -1] = beta[:, -2] if N > 1 else 0.0
        beta_mids.append(beta)
        if P < 2:
            continue
        T = (phi_mid[1:] - phi_mid[:-1]) / dt
        wf = _face_weights(N)
        b2 = beta[:-1] + beta[1:]
        S = b2[:, :-1] * wf[:-1] + b2[:, 1:] * wf[1:]
        W = 2.0 * (wf[:-1] + wf[1:])
        viol = T + S**2 / (2.0 * W)
        edge_max = max(edge_max, float(np.max(viol)))

    vertex_max = 0.0
    if P >= 2:
        if exact and duals.vertex_dual_flux is not None:
            psi_mid = duals.vertex_potential_mid
            T = (psi_mid[1:] - psi_mid[:-1]) / dt
            b2 = duals.vertex_dual_flux[:-1] + duals.vertex_dual_flux[1:]
            viol = T + kappa * kappa * b2**2 / 8.0
            vertex_max = float(np.max(viol))
        else:
            psi = duals.vertex_potential
            psi_mid = 0.5 * (psi[:-1] + psi[1:])
            T = (psi_mid[1:] - psi_mid[:-1]) / dt
            for i in range(net.n_vertices):
                trace = np.zeros(P)
                for j in net.incidence[i]:
                    face = 0 if net.tails[j] == i else grid.cells[j]
                    nodes = duals.edge_potential[j][:, face]
                    trace += 0.5 * (nodes[:-1] + nodes[1:])
                trace /= net.degree(i)
                grad = (psi_mid[:, i] - trace) / (kappa * kappa)
                g2 = grad[:-1] + grad[1:]
                viol = T[:, i] + kappa * kappa * g2**2 / 8.0
                vertex_max = max(vertex_max, float(np.max(viol)))
    return max(edge_max, 0.0), max(vertex_max, 0.0)


def eval_dual_objective(
    duals: DualPotentials,
    start: NetworkMeasure,
    end: NetworkMeasure,
    net: Network,
    kappa: float,
    grid: GridSpec,
    tol: float = 1e-9,
) -> float:
    """Certified lower bound read off a Hamilton-Jacobi subsolution.

    Pairs the first/last midpoint potentials with the endpoint measures,

        sum_j int(phi_1 drho_1 - phi_0 drho_0) + sum_i (psi_1 g_1 - psi_0 g_0),

    plus, when the raw certificate is attached, the endpoint half-step
    correction (the density-like dual component paired against the pinned
    interpolation offsets), which makes the result agree exactly with the
    solver's reported dual value. Returns -inf when the discrete subsolution
    inequalities are violated by more than `tol`.
    """
    e, v = hj_residual(duals, net, kappa, grid)
    if max(e, v) > tol:
        return -np.inf
    dxs = grid.dx(net)
    dt = grid.dt
    val = 0.0
    exact = duals.edge_potential_mid is not None
    for j in range(net.n_edges):
        if exact:
            top = duals.edge_potential_mid[j][-1]
            bot = duals.edge_potential_mid[j][0]
        else:
            phi = duals.edge_potential[j]
            top = 0.5 * (phi[-1, :-1] + phi[-1, 1:])
            bot = 0.5 * (phi[0, :-1] + phi[0, 1:])
        val += float(np.sum(top * end.edge_density[j]) - np.sum(bot * start.edge_density[j])) * dxs[j]
    if exact:
        psi_bot = duals.vertex_potential_mid[0]
        psi_top = duals.vertex_potential_mid[-1]
    else:
        psi_bot = duals.vertex_potential[0]
        psi_top = duals.vertex_potential[-1]
    val += float(np.sum(psi_top * end.vertex_mass) - np.sum(psi_bot * start.vertex_mass))

    if exact and duals.edge_dual_density is not None:
        for j in range(net.n_edges):
            alpha = duals.edge_dual_density[j]
            r0 = _face_slice(start.edge_density[j])
            r1 = _face_slice(end.edge_density[j])
            val += 0.5 * dxs[j] * dt * float(np.sum(r0 * alpha[0]) + np.sum(r1 * alpha[-1]))
        if duals.vertex_dual_density is not None:
            alpha_v = duals.vertex_dual_density
            val += 0.5 * kappa * kappa * dt * float(
                np.sum(start.vertex_mass * alpha_v[0]) + np.sum(end.vertex_mass * alpha_v[-1])
            )
    return val


def optimality_residual(
    field: TrajectoryField,
    duals: DualPotentials,
    net: Network,
    kappa: float,
    grid: GridSpec,
):
    """Residuals of the primal-dual optimality relations.

    r1: quadrature-weighted L2 defect of F = rho_bar * d_x phi over faces
        whose interpolated density exceeds 1e-6 times the max density.
    r2: max defect of kappa^2 f = gamma_bar * (psi - mean incident trace)
        over vertex midpoints with gamma_bar above the same relative floor.
    """
    dt = grid.dt
    dxs = grid.dx(net)
    rho_max = max(
        (float(np.max(r)) for r in field.edge_density if r.size), default=0.0
    )
    eps = 1e-6 * max(rho_max, 1e-300)
    r1_sq = 0.0
    for j in range(net.n_edges):
        rho_bar = interpolate_density_to_faces(field.edge_density[j])
        phi = duals.edge_potential[j]
        phi_mid = 0.5 * (phi[:-1] + phi[1:])
        dphi = _centered_space(phi_mid, dxs[j])
        defect = field.edge_flux[j] - rho_bar * dphi
        mask = rho_bar > eps
        r1_sq += float(np.sum(defect[mask] ** 2)) * dxs[j] * dt
    r1 = float(np.sqrt(r1_sq))

    gamma_bar = 0.5 * (field.vertex_mass[:-1] + field.vertex_mass[1:])
    g_eps = 1e-6 * max(float(np.max(field.vertex_mass)), 1e-300)
    psi = duals.vertex_potential
    psi_mid = 0.5 * (psi[:-1] + psi[1:])
    r2 = 0.0
    for i in range(net.n_vertices):
        mean_trace = np.zeros(grid.steps + 1)
        for j in net.incidence[i]:
            face = 0 if net.tails[j] == i else grid.cells[j]
            mean_trace += duals.edge_potential[j][:, face]
        mean_trace /= net.degree(i)
        trace_mid = 0.5 * (mean_trace[:-1] + mean_trace[1:])
        defect = kappa * kappa * field.vertex_rate[:, i] - gamma_bar[:, i] * (
            psi_mid[:, i] - trace_mid
        )
        mask = gamma_bar[:, i] > g_eps
        if np.any(mask):
            r2 = max(r2, float(np.max(np.abs(defect[mask]))))
    return r1, r2
