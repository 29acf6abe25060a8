"""Comparison metrics and limit relationships.

This module gathers every quantity the transport distance is compared
against: the vertex Fisher-Rao cost (closed form plus a discretized program
used as the normative cross-check), the exact 1-D per-edge Wasserstein value
through quantile functions, the Kirchhoff-coupled edge-only distance, the
free-exchange relaxation, bounded-Lipschitz distances through a small linear
program, and the kappa sweep that exercises monotonicity, the large-kappa
limit, and the vertex-mass lower bound.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field as dc_field
from typing import Optional

import numpy as np
from scipy.optimize import linprog, minimize

from ._discrete import Discretization
from .exceptions import MassMismatchError, ValidationError
from .grid import GridSpec, TrajectoryField
from .netgraph import Network, NetworkMeasure, total_mass
from .solver import SolverParams, SolveReport, _node_potentials, _run_pdhg

__all__ = [
    "fisher_rao",
    "fisher_rao_program",
    "wasserstein_edge_1d",
    "wasserstein_edges_kirchhoff",
    "w_zero",
    "bl_distance_edge",
    "bl_distance_vertex",
    "bl_constant",
    "bl_path_estimate",
    "KappaSweep",
    "sweep_kappa",
]


# --------------------------------------------------------------------- FR
def fisher_rao(gamma0, gamma1, kappa: float) -> float:
    """Vertex Fisher-Rao cost, closed form: sum_i 2 kappa^2 (sqrt g1 - sqrt g0)^2.

    This is the decoupled per-vertex optimum of the exchange-only action
    (no edge transport). The variational definition is kept available in
    fisher_rao_program for cross-checking.
    """
    g0 = np.atleast_1d(np.asarray(gamma0, dtype=float))
    g1 = np.atleast_1d(np.asarray(gamma1, dtype=float))
    if kappa <= 0.0:
        raise ValidationError("exchange rate kappa must be positive")
    if np.any(g0 < 0.0) or np.any(g1 < 0.0):
        raise ValidationError("vertex masses must be nonnegative")
    if g0.shape != g1.shape:
        raise ValidationError("endpoint vertex vectors must share a shape")
    return float(2.0 * kappa * kappa * np.sum((np.sqrt(g1) - np.sqrt(g0)) ** 2))


def _fr_objective(gamma_path: np.ndarray, kappa: float, dt: float):
    """Action and gradient of one vertex path sampled at the time nodes."""
    diff = np.diff(gamma_path)
    mid = np.maximum(0.5 * (gamma_path[:-1] + gamma_path[1:]), 1e-14)
    c = kappa * kappa / (2.0 * dt)
    val = c * np.sum(diff * diff / mid)
    grad = np.zeros_like(gamma_path)
    common = diff / mid
    curv = diff * diff / (2.0 * mid * mid)
    grad[:-1] += c * (-2.0 * common - curv)
    grad[1:] += c * (2.0 * common - curv)
    return val, grad


def fisher_rao_program(gamma0, gamma1, kappa: float, steps: int = 200) -> float:
    """Discretized exchange-only action, minimized per vertex.

    Normative evaluation of the Fisher-Rao cost: the path gamma(t) is a free
    variable at `steps` time intervals and the perspective action
    kappa^2 (dgamma/dt)^2 / (2 gamma) is minimized directly (convex; solved
    componentwise by a quasi-Newton method warm-started at the closed-form
    geodesic). Agrees with the closed form to about 1/steps^2 relative.
    """
    g0 = np.atleast_1d(np.asarray(gamma0, dtype=float))
    g1 = np.atleast_1d(np.asarray(gamma1, dtype=float))
    if kappa <= 0.0:
        raise ValidationError("exchange rate kappa must be positive")
    if np.any(g0 < 0.0) or np.any(g1 < 0.0):
        raise ValidationError("vertex masses must be nonnegative")
    if steps < 2:
        raise ValidationError("need at least two time steps")
    dt = 1.0 / steps
    t = np.arange(1, steps)[:, None] * dt
    total = 0.0
    for i in range(g0.size):
        a, b = g0[i], g1[i]
        if a == b:
            continue
        seed = ((1.0 - t[:, 0]) * np.sqrt(a) + t[:, 0] * np.sqrt(b)) ** 2

        def obj(x, a=a, b=b):
            path = np.concatenate(([a], x, [b]))
            val, grad = _fr_objective(path, kappa, dt)
            return val, grad[1:-1]

        res = minimize(
            obj,
            seed,
            jac=True,
            method="L-BFGS-B",
            bounds=[(0.0, None)] * (steps - 1),
            options={"maxiter": 2000, "ftol": 1e-16, "gtol": 1e-12},
        )
        total += float(res.fun)
    return total


# ------------------------------------------------------------- 1-D oracle
def _quantile(s: np.ndarray, M: np.ndarray, faces: np.ndarray, r: np.ndarray, dx: float):
    """Generalized inverse of a piecewise-linear cumulative mass profile.

    Zero-density cells make M flat, so plain linear interpolation of the
    inverse breaks down there. Locate the owning cell by binary search and
    invert within it; queries strictly between distinct cumulative values
    always land in a cell of positive density.
    """
    idx = np.clip(np.searchsorted(M, s, side="right") - 1, 0, r.size - 1)
    dens = r[idx]
    safe = np.where(dens > 0.0, dens, 1.0)
    frac = np.where(dens > 0.0, (s - M[idx]) / safe, 0.0)
    return faces[idx] + np.minimum(frac, dx)


def wasserstein_edge_1d(rho0, rho1, length: float = 1.0) -> float:
    """Exact squared transport cost between cell-average densities on one
    interval, with the 1/2 kinetic normalization.

    Computes (1/2) * integral |Q0(s) - Q1(s)|^2 ds over the common mass,
    where Q are the quantile functions of the piecewise-constant densities.
    Q0 - Q1 is piecewise linear between merged cumulative-mass breakpoints,
    so two-point Gauss quadrature per segment integrates it exactly.
    """
    r0 = np.asarray(rho0, dtype=float)
    r1 = np.asarray(rho1, dtype=float)
    if r0.ndim != 1 or r0.shape != r1.shape:
        raise ValidationError("edge densities must be 1-D arrays of equal size")
    if np.any(r0 < 0.0) or np.any(r1 < 0.0):
        raise ValidationError("densities must be nonnegative")
    if length <= 0.0:
        raise ValidationError("edge length must be positive")
    N = r0.size
    dx = length / N
    m0 = float(np.sum(r0) * dx)
    m1 = float(np.sum(r1) * dx)
    if abs(m0 - m1) > 1e-10:
        raise MassMismatchError(f"edge masses differ: {m0!r} vs {m1!r}")
    mass = min(m0, m1)
    if mass <= 0.0:
        return 0.0
    faces = np.linspace(0.0, length, N + 1)
    M0 = np.concatenate(([0.0], np.cumsum(r0) * dx))
    M1 = np.concatenate(([0.0], np.cumsum(r1) * dx))
    cuts = np.union1d(M0, M1)
    cuts = cuts[(cuts >= 0.0) & (cuts <= mass)]
    if cuts[-1] < mass:
        cuts = np.append(cuts, mass)
    seg_a, seg_b = cuts[:-1], cuts[1:]
    h = seg_b - seg_a
    keep = h > 0.0
    seg_a, h = seg_a[keep], h[keep]
    # two-point Gauss nodes stay inside each segment, away from quantile jumps
    off = 0.5 / np.sqrt(3.0)
    nodes = np.concatenate([seg_a + (0.5 - off) * h, seg_a + (0.5 + off) * h])
    q0 = _quantile(nodes, M0, faces, r0, dx)
    q1 = _quantile(nodes, M1, faces, r1, dx)
    d2 = (q0 - q1) ** 2
    k = h.size
    integral = float(np.sum(0.5 * h * (d2[:k] + d2[k:])))
    return 0.5 * integral


# ------------------------------------------------- constrained solver runs
def _edge_masses(net: Network, grid: GridSpec, densities) -> float:
    dxs = grid.dx(net)
    return float(sum(np.sum(np.asarray(r, float)) * dxs[j] for j, r in enumerate(densities)))


def _report_from_run(disc: Discretization, params: SolverParams, warm=None) -> SolveReport:
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


def kirchhoff_report(net: Network, grid: GridSpec, rho0, rho1, params: Optional[SolverParams] = None) -> SolveReport:
    """Edge-only transport with vertex masses frozen (signed boundary fluxes
    cancel at every vertex). Full report variant of wasserstein_edges_kirchhoff."""
    params = params or SolverParams()
    m0 = _edge_masses(net, grid, rho0)
    m1 = _edge_masses(net, grid, rho1)
    if abs(m0 - m1) > 1e-10:
        raise MassMismatchError(f"overall edge masses differ: {m0!r} vs {m1!r}")
    zero = np.zeros(net.n_vertices)
    start = NetworkMeasure([np.asarray(r, float) for r in rho0], zero.copy())
    end = NetworkMeasure([np.asarray(r, float) for r in rho1], zero.copy())
    start.validate(net)
    end.validate(net)
    disc = Discretization(net, grid, start, end, kappa=0.0, mode="kirchhoff")
    return _report_from_run(disc, params)


def wasserstein_edges_kirchhoff(net: Network, grid: GridSpec, rho0, rho1, params: Optional[SolverParams] = None) -> float:
    """Optimal edge action under Kirchhoff flux balance at the vertices.

    Vertex masses are frozen: at each vertex the signed boundary fluxes of
    the incident edges must cancel at every time step, so mass may flow
    through vertices but never park there.
    """
    return kirchhoff_report(net, grid, rho0, rho1, params).value


def w_zero(net: Network, grid: GridSpec, start: NetworkMeasure, end: NetworkMeasure, params: Optional[SolverParams] = None) -> float:
    """Transport value with free vertex exchange (the kappa = 0 relaxation).

    The vertex action term is deleted, so moving mass in and out of vertex
    storage costs nothing; only edge kinetic energy is charged. The interior
    vertex masses along the path are unconstrained in sign (relaxation);
    the value is a lower bound for the distance at every kappa > 0.
    """
    params = params or SolverParams()
    start.validate(net)
    end.validate(net)
    m0 = total_mass(start, net)
    m1 = total_mass(end, net)
    if abs(m0 - m1) > 1e-12:
        raise MassMismatchError(f"total masses differ: {m0!r} vs {m1!r}")
    disc = Discretization(net, grid, start, end, kappa=0.0, mode="free")
    return _report_from_run(disc, params).value


# ------------------------------------------------------- bounded-Lipschitz
def bl_distance_edge(rho0, rho1, dx: float) -> float:
    """Bounded-Lipschitz distance between two cell-average densities.

    Solves the small linear program
        max sum_c Phi_c (rho1 - rho0)_c dx
        s.t. |Phi_c| <= s, |Phi_{c+1} - Phi_c| <= l * dx, s + l <= 1
    whose value is the dual-norm distance over test functions with
    sup-norm plus Lipschitz constant at most one.
    """
    r0 = np.asarray(rho0, dtype=float)
    r1 = np.asarray(rho1, dtype=float)
    if r0.shape != r1.shape or r0.ndim != 1:
        raise ValidationError("densities must be 1-D arrays of equal size")
    if dx <= 0.0:
        raise ValidationError("cell width must be positive")
    N = r0.size
    nv = N + 2  # Phi cells, then s, then l
    c_obj = np.zeros(nv)
    c_obj[:N] = -dx * (r1 - r0)
    rows = []
    rhs = []
    for cc in range(N):
        row = np.zeros(nv)
        row[cc] = 1.0
        row[N] = -1.0
        rows.append(row)
        rhs.append(0.0)
        row = np.zeros(nv)
        row[cc] = -1.0
        row[N] = -1.0
        rows.append(row)
        rhs.append(0.0)
    for cc in range(N - 1):
        row = np.zeros(nv)
        row[cc + 1] = 1.0
        row[cc] = -1.0
        row[N + 1] = -dx
        rows.append(row)
        rhs.append(0.0)
        row = np.zeros(nv)
        row[cc + 1] = -1.0
        row[cc] = 1.0
        row[N + 1] = -dx
        rows.append(row)
        rhs.append(0.0)
    row = np.zeros(nv)
    row[N] = 1.0
    row[N + 1] = 1.0
    rows.append(row)
    rhs.append(1.0)
    bounds = [(None, None)] * N + [(0.0, None), (0.0, None)]
    res = linprog(
        c_obj,
        A_ub=np.asarray(rows),
        b_ub=np.asarray(rhs),
        bounds=bounds,
        method="highs",
    )
    if not res.success:
        raise ValidationError(f"bounded-Lipschitz linear program failed: {res.message}")
    return float(-res.fun)


def bl_distance_vertex(gamma0, gamma1) -> float:
    """Vertex-side bounded-Lipschitz distance: total variation of the masses."""
    g0 = np.atleast_1d(np.asarray(gamma0, dtype=float))
    g1 = np.atleast_1d(np.asarray(gamma1, dtype=float))
    return float(np.sum(np.abs(g1 - g0)))


def bl_constant(net: Network, kappa: float) -> float:
    """Constant in the time-regularity estimate for geodesics."""
    n, m = net.n_vertices, net.n_edges
    return 2.0 * np.sqrt(2.0 * (n + m)) * max(1.0, 1.0 / kappa)


def bl_path_estimate(field: TrajectoryField, net: Network, grid: GridSpec, kappa: float, action: float):
    """Worst ratio of slice-pair displacement to the regularity bound.

    For every pair of time nodes s < t, compares
        sum_j d_BL(rho^j_s, rho^j_t) + sum_i |gamma^i_s - gamma^i_t|
    against bl_constant * sqrt(action) * |t - s|^{1/2}. Returns the max
    ratio (<= 1 + tolerance when the estimate holds).
    """
    dxs = grid.dx(net)
    P = grid.steps
    worst = 0.0
    sqrt_action = np.sqrt(max(action, 0.0))
    if sqrt_action == 0.0:
        return 0.0
    const = bl_constant(net, kappa)
    for s in range(P + 1):
        for t in range(s + 1, P + 1):
            lhs = 0.0
            for j in range(net.n_edges):
                lhs += bl_distance_edge(
                    field.edge_density[j][s], field.edge_density[j][t], dxs[j]
                )
            lhs += bl_distance_vertex(field.vertex_mass[s], field.vertex_mass[t])
            rhs = const * sqrt_action * np.sqrt((t - s) * grid.dt)
            worst = max(worst, lhs / rhs)
    return worst


# --------------------------------------------------------------- kappa sweep
@dataclass
class KappaSweep:
    """Results of solving the same instance over an increasing kappa grid.

    reference holds the Kirchhoff-coupled edge-only value when the endpoint
    vertex masses agree (the large-kappa limit target), else None.
    lower_bound_ratios holds value / (kappa^2/2 * sum |dgamma|^2) when the
    vertex masses differ (each entry >= 1 when the mass-difference bound
    holds), else None. flux_max and flux_l2 are norms of the vertex exchange
    rates of each geodesic, expected to shrink like 1/kappa on
    node-compatible instances.
    """

    kappas: np.ndarray
    values: np.ndarray
    dual_values: np.ndarray
    gaps: np.ndarray
    converged: list
    flux_max: np.ndarray
    flux_l2: np.ndarray
    node_compatible: bool
    reference: Optional[float]
    mass_difference_sq: float
    lower_bound_ratios: Optional[np.ndarray]
    monotonicity_defects: list
    reports: list = dc_field(default_factory=list, repr=False)


def _flux_norms(field: TrajectoryField, dt: float):
    f = field.vertex_rate
    fmax = float(np.max(np.abs(f))) if f.size else 0.0
    fl2 = float(np.sqrt(np.sum(f * f) * dt))
    return fmax, fl2


def sweep_kappa(
    net: Network,
    grid: GridSpec,
    start: NetworkMeasure,
    end: NetworkMeasure,
    kappas,
    params: Optional[SolverParams] = None,
    workers: Optional[int] = None,
) -> KappaSweep:
    """Solve the instance at each kappa and assemble the limit diagnostics.

    Solves run sequentially with warm starts by default; set workers > 1 (or
    the NETOT_THREADS environment variable) to run cold solves concurrently.
    """
    from .solver import solve_geodesic  # local import to avoid a cycle at module load

    kap = np.asarray(list(kappas), dtype=float)
    if kap.ndim != 1 or kap.size == 0:
        raise ValidationError("kappa grid must be a nonempty 1-D sequence")
    if np.any(kap <= 0.0) or np.any(np.diff(kap) <= 0.0):
        raise ValidationError("kappa grid must be positive and strictly increasing")
    params = params or SolverParams()
    if workers is None:
        env = os.environ.get("NETOT_THREADS")
        workers = int(env) if env else 1
    workers = max(1, min(workers, kap.size))

    reports: list = [None] * kap.size
    if workers == 1:
        warm = None
        for idx, k in enumerate(kap):
            rep = solve_geodesic(net, grid, start, end, float(k), params, warm_start=warm)
            reports[idx] = rep
            warm = rep
    else:
        def run(idx_k):
            idx, k = idx_k
            return idx, solve_geodesic(net, grid, start, end, float(k), params)

        with ThreadPoolExecutor(max_workers=workers) as pool:
            for idx, rep in pool.map(run, enumerate(kap)):
                reports[idx] = rep

    values = np.array([r.value for r in reports])
    duals = np.array([r.dual_value for r in reports])
    gaps = np.array([r.gap for r in reports])
    conv = [r.converged for r in reports]
    norms = [_flux_norms(r.geodesic, grid.dt) for r in reports]
    fmax = np.array([a for a, _ in norms])
    fl2 = np.array([b for _, b in norms])

    node_compatible = bool(
        np.allclose(start.vertex_mass, end.vertex_mass, rtol=0.0, atol=1e-12)
    )
    reference = None
    if node_compatible:
        reference = wasserstein_edges_kirchhoff(
            net, grid, start.edge_density, end.edge_density, params
        )
    diff_sq = float(np.sum((end.vertex_mass - start.vertex_mass) ** 2))
    ratios = None
    if diff_sq > 0.0:
        ratios = values / (0.5 * kap * kap * diff_sq)

    defects = []
    for i in range(kap.size - 1):
        tol = params.tol_gap * max(values[i], values[i + 1], 1e-12)
        if values[i + 1] < values[i] - tol:
            defects.append(i)

    return KappaSweep(
        kappas=kap,
        values=values,
        dual_values=duals,
        gaps=gaps,
        converged=conv,
        flux_max=fmax,
        flux_l2=fl2,
        node_compatible=node_compatible,
        reference=reference,
        mass_difference_sq=diff_sq,
        lower_bound_ratios=ratios,
        monotonicity_defects=defects,
        reports=reports,
    )
