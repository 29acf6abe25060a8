"""Staggered space-time grids on a network and fields living on them.

Layout per edge j with N_j cells and P time steps on the unit horizon:
    density   rho:  (P+1, N_j)   cell centers, time nodes t_k = k/P
    flux      F:    (P, N_j+1)   cell faces,  time midpoints t_{k+1/2}
Per vertex i:
    mass      gamma: (P+1,)      time nodes
    exchange  f:     (P,)        time midpoints

Face 0 of an edge sits at its tail vertex, face N_j at its head. The vertex
exchange rate is coupled to the boundary fluxes with the orientation sign:
f^i = sum_j sigma_{i,j} F^j(face at V_i), so a positive exchange rate moves
mass from the incident edges into the vertex.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .exceptions import ShapeMismatchError, ValidationError, ZeroDensityFluxError
from .netgraph import Network, NetworkMeasure, incidence_sign


@dataclass(frozen=True)
class GridSpec:
    """Discretization of a network's space-time cylinder on the unit horizon."""

    cells: tuple
    steps: int

    def __post_init__(self):
        if self.steps < 1:
            raise ValidationError(f"need at least one time step, got {self.steps}")
        for j, n in enumerate(self.cells):
            if n < 1:
                raise ValidationError(f"edge {j} needs at least one cell, got {n}")

    @staticmethod
    def for_network(net: Network, cells, steps: int) -> "GridSpec":
        """Build a spec with `cells` per edge (int or per-edge sequence)."""
        if np.isscalar(cells):
            cells_t = tuple(int(cells) for _ in range(net.n_edges))
        else:
            cells_t = tuple(int(c) for c in cells)
            if len(cells_t) != net.n_edges:
                raise ShapeMismatchError(
                    f"{len(cells_t)} cell counts for {net.n_edges} edges"
                )
        return GridSpec(cells=cells_t, steps=int(steps))

    @property
    def dt(self) -> float:
        return 1.0 / self.steps

    def dx(self, net: Network) -> np.ndarray:
        return net.lengths / np.asarray(self.cells, dtype=float)

    def time_nodes(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.steps + 1)

    def time_midpoints(self) -> np.ndarray:
        return (np.arange(self.steps) + 0.5) * self.dt

    def cell_centers(self, net: Network, j: int) -> np.ndarray:
        h = net.lengths[j] / self.cells[j]
        return (np.arange(self.cells[j]) + 0.5) * h

    def face_coords(self, net: Network, j: int) -> np.ndarray:
        h = net.lengths[j] / self.cells[j]
        return np.arange(self.cells[j] + 1) * h


@dataclass
class TrajectoryField:
    """A time-dependent (density, flux, vertex mass, exchange) tuple on the grid."""

    edge_density: list
    edge_flux: list
    vertex_mass: np.ndarray
    vertex_rate: np.ndarray

    def __post_init__(self):
        self.edge_density = [np.asarray(a, dtype=float) for a in self.edge_density]
        self.edge_flux = [np.asarray(a, dtype=float) for a in self.edge_flux]
        self.vertex_mass = np.asarray(self.vertex_mass, dtype=float)
        self.vertex_rate = np.asarray(self.vertex_rate, dtype=float)

    def validate_shapes(self, net: Network, grid: GridSpec) -> None:
        P = grid.steps
        if len(self.edge_density) != net.n_edges or len(self.edge_flux) != net.n_edges:
            raise ShapeMismatchError("per-edge arrays do not match the edge count")
        for j in range(net.n_edges):
            n = grid.cells[j]
            if self.edge_density[j].shape != (P + 1, n):
                raise ShapeMismatchError(
                    f"edge {j} density shape {self.edge_density[j].shape} != {(P + 1, n)}"
                )
            if self.edge_flux[j].shape != (P, n + 1):
                raise ShapeMismatchError(
                    f"edge {j} flux shape {self.edge_flux[j].shape} != {(P, n + 1)}"
                )
        if self.vertex_mass.shape != (P + 1, net.n_vertices):
            raise ShapeMismatchError(
                f"vertex mass shape {self.vertex_mass.shape} != {(P + 1, net.n_vertices)}"
            )
        if self.vertex_rate.shape != (P, net.n_vertices):
            raise ShapeMismatchError(
                f"vertex rate shape {self.vertex_rate.shape} != {(P, net.n_vertices)}"
            )

    def slice_measure(self, k: int) -> NetworkMeasure:
        """The measure at time node k."""
        return NetworkMeasure(
            edge_density=[r[k] for r in self.edge_density],
            vertex_mass=self.vertex_mass[k].copy(),
        )


def coupled_vertex_rates(net: Network, edge_flux: Sequence) -> np.ndarray:
    """Exchange rates implied by the boundary fluxes: f^i = sum_j sigma_{i,j} F^j(V_i)."""
    P = edge_flux[0].shape[0]
    f = np.zeros((P, net.n_vertices))
    for j in range(net.n_edges):
        f[:, net.tails[j]] -= edge_flux[j][:, 0]
        f[:, net.heads[j]] += edge_flux[j][:, -1]
    return f


@dataclass
class CEResidual:
    """Residuals of the discrete continuity system.

    max_interior: worst cell balance defect over all edges and steps.
    max_vertex:   worst vertex mass balance defect.
    max_coupling: worst defect between stored rates and signed boundary fluxes.
    max_endpoint: worst mismatch between the field's first/last slices and the
                  prescribed endpoint measures.
    """

    max_interior: float
    max_vertex: float
    max_coupling: float
    max_endpoint: float

    @property
    def total(self) -> float:
        return max(self.max_interior, self.max_vertex, self.max_coupling, self.max_endpoint)


def ce_residual(
    field: TrajectoryField,
    start: NetworkMeasure,
    end: NetworkMeasure,
    net: Network,
    grid: GridSpec,
) -> CEResidual:
    """Pointwise residuals of the continuity equation on the staggered grid.

    Interior balance at (edge j, step k, cell c):
        (rho^{k+1}_c - rho^k_c)/dt + (F^k_{c+1} - F^k_c)/dx_j
    Vertex balance at (vertex i, step k):
        (gamma^{k+1} - gamma^k)/dt - f^k
    """
    field.validate_shapes(net, grid)
    dt = grid.dt
    dxs = grid.dx(net)

    max_interior = 0.0
    for j in range(net.n_edges):
        rho = field.edge_density[j]
        F = field.edge_flux[j]
        r = np.diff(rho, axis=0) / dt + np.diff(F, axis=1) / dxs[j]
        if r.size:
            max_interior = max(max_interior, float(np.max(np.abs(r))))

    rv = np.diff(field.vertex_mass, axis=0) / dt - field.vertex_rate
    max_vertex = float(np.max(np.abs(rv))) if rv.size else 0.0

    implied = coupled_vertex_rates(net, field.edge_flux)
    max_coupling = float(np.max(np.abs(field.vertex_rate - implied)))

    max_endpoint = 0.0
    for j in range(net.n_edges):
        max_endpoint = max(
            max_endpoint,
            float(np.max(np.abs(field.edge_density[j][0] - start.edge_density[j]))),
            float(np.max(np.abs(field.edge_density[j][-1] - end.edge_density[j]))),
        )
    max_endpoint = max(
        max_endpoint,
        float(np.max(np.abs(field.vertex_mass[0] - start.vertex_mass))),
        float(np.max(np.abs(field.vertex_mass[-1] - end.vertex_mass))),
    )
    return CEResidual(max_interior, max_vertex, max_coupling, max_endpoint)


def linear_seed(
    start: NetworkMeasure, end: NetworkMeasure, net: Network, grid: GridSpec
) -> TrajectoryField:
    """Mass teleportation seed: densities interpolate linearly in time, all
    fluxes and exchange rates are zero. Violates the continuity equation
    whenever start != end; useful as a solver starting point."""
    P = grid.steps
    t = np.linspace(0.0, 1.0, P + 1)[:, None]
    rho = [
        (1.0 - t) * start.edge_density[j][None, :] + t * end.edge_density[j][None, :]
        for j in range(net.n_edges)
    ]
    F = [np.zeros((P, grid.cells[j] + 1)) for j in range(net.n_edges)]
    gamma = (1.0 - t) * start.vertex_mass[None, :] + t * end.vertex_mass[None, :]
    f = np.zeros((P, net.n_vertices))
    return TrajectoryField(rho, F, gamma, f)


def interpolate_density_to_faces(rho: np.ndarray) -> np.ndarray:
    """Map a (P+1, N) node/cell density to (P, N+1) face/midpoint averages.

    Time: average of the two adjacent time nodes. Space: average of the two
    adjacent cells at interior faces, one-sided copy at boundary faces.
    """
    mid = 0.5 * (rho[:-1] + rho[1:])
    out = np.empty((mid.shape[0], mid.shape[1] + 1))
    out[:, 0] = mid[:, 0]
    out[:, -1] = mid[:, -1]
    if mid.shape[1] > 1:
        out[:, 1:-1] = 0.5 * (mid[:, :-1] + mid[:, 1:])
    return out


def velocity_field(field: TrajectoryField, net: Network, grid: GridSpec):
    """Face velocities u = F / rho_bar with the face-interpolated density.

    Returns a list of (P, N_j+1) arrays. Faces where both the interpolated
    density and the flux vanish get NaN (velocity undefined there). A face
    with zero density but nonzero flux raises ZeroDensityFluxError.
    """
    field.validate_shapes(net, grid)
    out = []
    for j in range(net.n_edges):
        rho_bar = interpolate_density_to_faces(field.edge_density[j])
        F = field.edge_flux[j]
        bad = (rho_bar <= 0.0) & (F != 0.0)
        if np.any(bad):
            k, c = np.argwhere(bad)[0]
            raise ZeroDensityFluxError(
                f"edge {j}: flux {F[k, c]!r} through zero-density face {c} at step {k}"
            )
        with np.errstate(divide="ignore", invalid="ignore"):
            u = np.where(rho_bar > 0.0, F / np.where(rho_bar > 0.0, rho_bar, 1.0), np.nan)
        out.append(u)
    return out


@dataclass
class SpaceTimeTest:
    """A C^1 test function on one edge's space-time rectangle.

    value/dt/dx are callables (t, x) -> array, vectorized over numpy inputs,
    with exact partial derivatives supplied by the caller.
    """

    value: Callable
    dt: Callable
    dx: Callable


@dataclass
class VertexTest:
    """A C^1 test function of time at one vertex."""

    value: Callable
    dt: Callable


def weak_form_residual(
    field: TrajectoryField,
    edge_tests: Sequence,
    vertex_tests: Sequence,
    net: Network,
    grid: GridSpec,
) -> float:
    """Defect of the discrete weak continuity identities under midpoint quadrature.

    Edge identity (one global C^1 test phi, supplied per edge, continuous
    across vertices):
        sum_j iint dphi/dt drho + dphi/dx dF  -  sum_i int phi(V_i) f^i dt
          = sum_j [ int phi(1) drho_1 - int phi(0) drho_0 ]
    Vertex identity (independent tests psi^i):
        sum_i int dpsi/dt gamma dt = sum_i int psi f dt + sum_i [psi(1)gamma_1 - psi(0)gamma_0]

    Returns |edge defect| + |vertex defect|. For fields with zero continuity
    residual the defect is a pure quadrature error, O(dt + max dx) for C^1 tests.
    """
    field.validate_shapes(net, grid)
    P = grid.steps
    dt = grid.dt
    dxs = grid.dx(net)
    tmid = grid.time_midpoints()

    edge_lhs = 0.0
    edge_rhs = 0.0
    for j in range(net.n_edges):
        test = edge_tests[j]
        xc = grid.cell_centers(net, j)
        xf = grid.face_coords(net, j)
        rho = field.edge_density[j]
        F = field.edge_flux[j]
        rho_mid = 0.5 * (rho[:-1] + rho[1:])
        T, X = np.meshgrid(tmid, xc, indexing="ij")
        edge_lhs += float(np.sum(test.dt(T, X) * rho_mid)) * dxs[j] * dt
        Tf, Xf = np.meshgrid(tmid, xf, indexing="ij")
        wface = np.full(len(xf), dxs[j])
        wface[0] = wface[-1] = 0.5 * dxs[j]
        edge_lhs += float(np.sum(test.dx(Tf, Xf) * F * wface[None, :])) * dt
        edge_rhs += float(np.sum(test.value(np.ones_like(xc), xc) * rho[-1])) * dxs[j]
        edge_rhs -= float(np.sum(test.value(np.zeros_like(xc), xc) * rho[0])) * dxs[j]

    # pair the exchange rates with the edge test traced at the vertices; a
    # proper network test function has equal traces, the mean keeps the
    # evaluation well-defined either way
    for i in range(net.n_vertices):
        traces = np.zeros(P)
        for j in net.incidence[i]:
            x_v = 0.0 if net.tails[j] == i else net.lengths[j]
            traces += np.asarray(edge_tests[j].value(tmid, np.full(P, x_v)), dtype=float)
        traces /= net.degree(i)
        edge_lhs -= float(np.sum(traces * field.vertex_rate[:, i])) * dt

    vertex_lhs = 0.0
    vertex_rhs = 0.0
    for i in range(net.n_vertices):
        test = vertex_tests[i]
        gm = 0.5 * (field.vertex_mass[:-1, i] + field.vertex_mass[1:, i])
        vertex_lhs += float(np.sum(np.asarray(test.dt(tmid), dtype=float) * gm)) * dt
        vertex_rhs += float(np.sum(np.asarray(test.value(tmid), dtype=float) * field.vertex_rate[:, i])) * dt
        vertex_rhs += float(test.value(1.0)) * field.vertex_mass[-1, i]
        vertex_rhs -= float(test.value(0.0)) * field.vertex_mass[0, i]

    return abs(edge_lhs - edge_rhs) + abs(vertex_lhs - vertex_rhs)
