"""Internal flattened linear algebra for the transport solver.

One Discretization instance freezes a (network, grid, endpoints, mode) tuple
into sparse operators:

  * the affine continuity constraint C u = d on the flat unknown vector
    u = (interior density slices, all fluxes, interior vertex masses), with
    endpoint slices eliminated into d and one redundant balance row dropped
    so that C has full row rank;
  * the interpolation K from staggered unknowns to centered action points
    (one per flux face and time midpoint, plus one per vertex and time
    midpoint in "full" mode), split into a density-like part K_a (affine,
    pinned endpoint slices enter the offset k0_a) and a flux-like part K_b
    (linear; the vertex component is the signed sum of boundary fluxes).
    Each point's quadrature weight is folded into its coordinates through
    the 1-homogeneity of the action, w * A(a, b) = A(w a, w b), so every
    centered pair is measured against the *unit* paraboloid;
  * diagonal primal/dual step metrics in the style of preconditioned
    primal-dual splitting (row/column absolute sums of the scaled operator),
    normalized by a power-iteration estimate with a safety factor, so the
    scheme is insensitive to the spread between edge weights dx_j*dt and
    vertex weights kappa^2*dt;
  * a cached sparse LU factorization of C T C^T (T the primal step metric)
    used for the exact projection onto {C u = d} and for reading the
    constraint multipliers, from which the dual potentials are extracted.

Modes:
  full       vertex masses move, vertex exchange is charged at weight kappa^2
  free       vertex masses move, exchange costs nothing (kappa = 0 relaxation)
  kirchhoff  vertex masses frozen, signed boundary fluxes must cancel
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .exceptions import ValidationError
from .grid import GridSpec, TrajectoryField, coupled_vertex_rates
from .netgraph import Network, NetworkMeasure

_MODES = ("full", "free", "kirchhoff")


class Discretization:
    def __init__(
        self,
        net: Network,
        grid: GridSpec,
        start: NetworkMeasure,
        end: NetworkMeasure,
        kappa: float,
        mode: str = "full",
    ):
        if mode not in _MODES:
            raise ValidationError(f"unknown mode {mode!r}")
        if mode == "full" and kappa <= 0.0:
            raise ValidationError("full mode needs kappa > 0")
        self.net = net
        self.grid = grid
        self.start = start
        self.end = end
        self.kappa = float(kappa)
        self.mode = mode
        self.has_gamma = mode in ("full", "free")
        self.has_vertex_action = mode == "full"

        P = grid.steps
        n = net.n_vertices
        m = net.n_edges
        cells = grid.cells
        self.dt = grid.dt
        self.dxs = grid.dx(net)

        # ---- unknown layout -------------------------------------------------
        off = 0
        self.rho_off = []
        for j in range(m):
            self.rho_off.append(off)
            off += (P - 1) * cells[j]
        self.flux_off = []
        for j in range(m):
            self.flux_off.append(off)
            off += P * (cells[j] + 1)
        self.gamma_off = off
        if self.has_gamma:
            off += (P - 1) * n
        self.u_size = off

        # ---- centered point layout ------------------------------------------
        off = 0
        self.wedge_off = []
        for j in range(m):
            self.wedge_off.append(off)
            off += P * (cells[j] + 1)
        self.wvertex_off = off
        if self.has_vertex_action:
            off += P * n
        self.w_size = off

        # quadrature weight of each point's action term; folded into the
        # point coordinates, so the dual sets are unit paraboloids
        weight = np.empty(self.w_size)
        for j in range(m):
            weight[self.wedge_off[j] : self.wedge_off[j] + P * (cells[j] + 1)] = (
                self.dxs[j] * self.dt
            )
        if self.has_vertex_action:
            weight[self.wvertex_off :] = self.kappa * self.kappa * self.dt
        self.weight = weight

        # ---- constraint rows -------------------------------------------------
        self.erow_off = []
        off = 0
        for j in range(m):
            self.erow_off.append(off)
            off += P * cells[j]
        self.vrow_off = off
        off += P * n
        self.rows_full = off

        self._assemble_constraints()
        self._assemble_interpolation()
        self._steps_ready = False

    # ------------------------------------------------------------------ C, d
    def _assemble_constraints(self):
        net, grid = self.net, self.grid
        P, n, m = grid.steps, net.n_vertices, net.n_edges
        dt, dxs = self.dt, self.dxs
        rows, cols, vals = [], [], []
        d = np.zeros(self.rows_full)

        def add(r, c, v):
            rows.append(np.asarray(r, dtype=np.int64).ravel())
            cols.append(np.asarray(c, dtype=np.int64).ravel())
            vals.append(np.asarray(v, dtype=float).ravel())

        for j in range(m):
            N = grid.cells[j]
            k_idx = np.arange(P)[:, None]
            c_idx = np.arange(N)[None, :]
            rid = self.erow_off[j] + k_idx * N + c_idx
            # density time differences; pinned slices go to d
            for kk in range(P):
                r_row = self.erow_off[j] + kk * N + np.arange(N)
                if kk + 1 <= P - 1:
                    add(r_row, self.rho_off[j] + kk * N + np.arange(N), np.full(N, 1.0 / dt))
                else:
                    d[r_row] += -self.end.edge_density[j] / dt
                if kk >= 1:
                    add(r_row, self.rho_off[j] + (kk - 1) * N + np.arange(N), np.full(N, -1.0 / dt))
                else:
                    d[r_row] += self.start.edge_density[j] / dt
            # flux space differences
            fcol = self.flux_off[j] + k_idx * (N + 1) + c_idx
            add(rid, fcol + 1, np.full((P, N), 1.0 / dxs[j]))
            add(rid, fcol, np.full((P, N), -1.0 / dxs[j]))

        for kk in range(P):
            r_row = self.vrow_off + kk * n + np.arange(n)
            if self.has_gamma:
                if kk + 1 <= P - 1:
                    add(r_row, self.gamma_off + kk * n + np.arange(n), np.full(n, 1.0 / dt))
                else:
                    d[r_row] += -self.end.vertex_mass / dt
                if kk >= 1:
                    add(r_row, self.gamma_off + (kk - 1) * n + np.arange(n), np.full(n, -1.0 / dt))
                else:
                    d[r_row] += self.start.vertex_mass / dt
        for j in range(m):
            N = grid.cells[j]
            k_idx = np.arange(P)
            # tail face: -sigma = +1, head face: -sigma = -1
            add(
                self.vrow_off + k_idx * n + net.tails[j],
                self.flux_off[j] + k_idx * (N + 1),
                np.ones(P),
            )
            add(
                self.vrow_off + k_idx * n + net.heads[j],
                self.flux_off[j] + k_idx * (N + 1) + N,
                -np.ones(P),
            )

        C_full = sp.coo_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(self.rows_full, self.u_size),
        ).tocsr()
        # the balance rows carry one global redundancy (total mass telescopes);
        # dropping the last vertex row restores full row rank
        self.C = C_full[:-1]
        self.d = d[:-1]
        self.C_T = self.C.T.tocsr()

    # ------------------------------------------------------------------ K
    def _assemble_interpolation(self):
        net, grid = self.net, self.grid
        P, n, m = grid.steps, net.n_vertices, net.n_edges
        rows_a, cols_a, vals_a = [], [], []
        rows_b, cols_b, vals_b = [], [], []
        k0_a = np.zeros(self.w_size)
        wgt = self.weight

        def add_a(r, c, v):
            rows_a.append(int(r))
            cols_a.append(int(c))
            vals_a.append(float(v))

        for j in range(m):
            N = grid.cells[j]
            start_r = self.start.edge_density[j]
            end_r = self.end.edge_density[j]
            for kk in range(P):
                for g in range(N + 1):
                    pid = self.wedge_off[j] + kk * (N + 1) + g
                    cells_w = [(g - 1, 0.25), (g, 0.25)]
                    if g == 0:
                        cells_w = [(0, 0.5)]
                    elif g == N:
                        cells_w = [(N - 1, 0.5)]
                    for level in (kk, kk + 1):
                        for cc, frac in cells_w:
                            if level == 0:
                                k0_a[pid] += wgt[pid] * frac * start_r[cc]
                            elif level == P:
                                k0_a[pid] += wgt[pid] * frac * end_r[cc]
                            else:
                                add_a(pid, self.rho_off[j] + (level - 1) * N + cc, wgt[pid] * frac)
                    # flux component is the identity onto the same point
                    rows_b.append(pid)
                    cols_b.append(self.flux_off[j] + kk * (N + 1) + g)
                    vals_b.append(wgt[pid])

        if self.has_vertex_action:
            g0 = self.start.vertex_mass
            g1 = self.end.vertex_mass
            for kk in range(P):
                for i in range(n):
                    pid = self.wvertex_off + kk * n + i
                    for level in (kk, kk + 1):
                        if level == 0:
                            k0_a[pid] += wgt[pid] * 0.5 * g0[i]
                        elif level == P:
                            k0_a[pid] += wgt[pid] * 0.5 * g1[i]
                        else:
                            add_a(pid, self.gamma_off + (level - 1) * n + i, wgt[pid] * 0.5)
                for j in range(m):
                    N = grid.cells[j]
                    pid_t = self.wvertex_off + kk * n + net.tails[j]
                    rows_b.append(pid_t)
                    cols_b.append(self.flux_off[j] + kk * (N + 1))
                    vals_b.append(-wgt[pid_t])
                    pid_h = self.wvertex_off + kk * n + net.heads[j]
                    rows_b.append(pid_h)
                    cols_b.append(self.flux_off[j] + kk * (N + 1) + N)
                    vals_b.append(wgt[pid_h])

        self.K_a = sp.coo_matrix(
            (vals_a, (rows_a, cols_a)), shape=(self.w_size, self.u_size)
        ).tocsr()
        self.K_b = sp.coo_matrix(
            (vals_b, (rows_b, cols_b)), shape=(self.w_size, self.u_size)
        ).tocsr()
        self.k0_a = k0_a
        self.K_aT = self.K_a.T.tocsr()
        self.K_bT = self.K_b.T.tocsr()

    # -------------------------------------------------------------- stepping
    def configure_steps(
        self,
        step_ratio: float = 1.0,
        step_safety: float = 0.9,
        power_iters: int = 50,
        step_size=None,
    ):
        """Build the diagonal step metrics and the projection factorization.

        Dual steps are one value per centered point (both components of a
        point share it, keeping the dual prox a plain Euclidean projection);
        primal steps are one value per staggered unknown. The row/column
        absolute-sum rule already guarantees the step condition; a power
        iteration on the scaled operator then normalizes with a safety
        factor. A scalar step_size overrides the diagonal rule entirely.
        """
        abs_a = abs(self.K_a)
        abs_b = abs(self.K_b)
        row_sum = np.asarray(abs_a.sum(axis=1)).ravel() + np.asarray(abs_b.sum(axis=1)).ravel()
        col_sum = np.asarray(abs_a.sum(axis=0)).ravel() + np.asarray(abs_b.sum(axis=0)).ravel()
        if step_size is not None:
            sigma = np.full(self.w_size, float(step_size) * step_ratio)
            tau = np.full(self.u_size, float(step_size) / step_ratio)
        else:
            sigma = np.where(row_sum > 0, step_ratio / np.maximum(row_sum, 1e-300), 1.0)
            pos = col_sum > 0
            fill = 1.0 / np.mean(col_sum[pos]) if np.any(pos) else 1.0
            tau = np.where(pos, 1.0 / (step_ratio * np.maximum(col_sum, 1e-300)), fill)
            # normalize ||Sigma^1/2 K T^1/2|| to step_safety
            rng = np.random.default_rng(12345)
            x = rng.standard_normal(self.u_size)
            x /= np.linalg.norm(x)
            sq_t, sq_s = np.sqrt(tau), np.sqrt(sigma)
            lam = 1.0
            for _ in range(power_iters):
                z = sq_t * x
                y = self.K_aT @ (sigma * (self.K_a @ z)) + self.K_bT @ (sigma * (self.K_b @ z))
                y = sq_t * y
                lam = np.linalg.norm(y)
                if lam == 0.0:
                    lam = 1.0
                    break
                x = y / lam
            norm_est = float(np.sqrt(lam))
            scale = step_safety / max(norm_est, 1e-30)
            sigma = sigma * scale
            tau = tau * scale
        self.sigma_diag = sigma
        self.tau_diag = tau
        mass = (self.C @ sp.diags(tau) @ self.C_T).tocsc()
        self._lu = splu(mass)
        self._steps_ready = True

    # ------------------------------------------------------------- operations
    def apply_K(self, u):
        return self.K_a @ u + self.k0_a, self.K_b @ u

    def apply_KT(self, va, vb):
        return self.K_aT @ va + self.K_bT @ vb

    def project_ce(self, u):
        """Exact projection onto {C u = d} in the primal step metric."""
        r = self.C @ u - self.d
        return u - self.tau_diag * (self.C_T @ self._lu.solve(r))

    def ce_infnorm(self, u) -> float:
        r = self.C @ u - self.d
        return float(np.max(np.abs(r))) if r.size else 0.0

    def ce_multipliers(self, g):
        """Weighted least-squares multipliers mu with C^T mu ~ -g (g = K^T y)."""
        return -self._lu.solve(self.C @ (self.tau_diag * g))

    def dual_value(self, mu, ya) -> float:
        """Lagrangian dual value <k0, y_a> - <d, mu>.

        Valid as a lower bound once the dual constraint K^T y + C^T mu = 0
        is satisfied; the affine interpolation offset k0 (pinned endpoint
        slices) pairs with the density-like dual component.
        """
        return float(self.k0_a @ ya) - float(self.d @ mu)

    # ------------------------------------------------------------- transforms
    def seed_vector(self) -> np.ndarray:
        """Flattened linear-interpolation seed (before CE projection)."""
        P = self.grid.steps
        u = np.zeros(self.u_size)
        t = np.arange(1, P)[:, None] * self.dt
        for j in range(self.net.n_edges):
            N = self.grid.cells[j]
            if P > 1:
                interp = (1 - t) * self.start.edge_density[j] + t * self.end.edge_density[j]
                u[self.rho_off[j] : self.rho_off[j] + (P - 1) * N] = interp.ravel()
        if self.has_gamma and P > 1:
            interp = (1 - t) * self.start.vertex_mass + t * self.end.vertex_mass
            u[self.gamma_off : self.gamma_off + (P - 1) * self.net.n_vertices] = interp.ravel()
        return u

    def field_from_u(self, u) -> TrajectoryField:
        P = self.grid.steps
        n = self.net.n_vertices
        rho = []
        flux = []
        for j in range(self.net.n_edges):
            N = self.grid.cells[j]
            arr = np.empty((P + 1, N))
            arr[0] = self.start.edge_density[j]
            arr[-1] = self.end.edge_density[j]
            if P > 1:
                arr[1:-1] = u[self.rho_off[j] : self.rho_off[j] + (P - 1) * N].reshape(P - 1, N)
            rho.append(arr)
            flux.append(u[self.flux_off[j] : self.flux_off[j] + P * (N + 1)].reshape(P, N + 1))
        gamma = np.empty((P + 1, n))
        gamma[0] = self.start.vertex_mass
        gamma[-1] = self.end.vertex_mass
        if self.has_gamma:
            if P > 1:
                gamma[1:-1] = u[self.gamma_off : self.gamma_off + (P - 1) * n].reshape(P - 1, n)
        else:
            gamma[1:-1] = self.start.vertex_mass
        rate = coupled_vertex_rates(self.net, flux)
        return TrajectoryField(rho, flux, gamma, rate)

    def potentials_from_mu(self, mu):
        """Edge/vertex potentials at (time midpoint, cell) resolution.

        The multiplier of the balance row at (edge j, step k, cell c) is the
        potential there times the local space-time volume dx_j*dt; vertex rows
        scale by dt. The dropped redundant row gets multiplier 0, which is a
        gauge choice (the kernel direction shifts all potentials by a common
        constant).
        """
        mu_full = np.append(mu, 0.0)
        P = self.grid.steps
        n = self.net.n_vertices
        phi = []
        for j in range(self.net.n_edges):
            N = self.grid.cells[j]
            block = mu_full[self.erow_off[j] : self.erow_off[j] + P * N].reshape(P, N)
            phi.append(block / (self.dxs[j] * self.dt))
        psi = mu_full[self.vrow_off : self.vrow_off + P * n].reshape(P, n) / self.dt
        return phi, psi

    def value_estimate(self, wa, wb) -> float:
        """Kinetic value of scaled centered coordinates, skipping degenerate
        points. Weights are already folded in, so the sum is plain A(wa, wb).
        At convergence the flux vanishes quadratically wherever the density
        drops to the floor, so the omission is far below solver tolerances."""
        floor = 1e-12 * max(1.0, float(np.max(wa, initial=0.0)))
        pos = wa > floor
        if not np.any(pos):
            return 0.0
        return float(np.sum(wb[pos] ** 2 / (2.0 * wa[pos])))
