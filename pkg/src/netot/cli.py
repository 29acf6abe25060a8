"""Command-line interface: problem files, reports, CSV exports, verify.

Problem files are JSON documents with this shape (all solver fields optional):

    {
      "network": {
        "vertices": [{"id": "v1", "x": 0.0, "y": 0.0,
                      "gamma0": 0.0, "gamma1": 0.0}, ...],
        "edges": [{"id": "e1", "tail": "v1", "head": "v2", "length": 1.0,
                   "rho0": {"type": "pwc", "values": [...]},
                   "rho1": {"type": "gaussian", "center": 0.5,
                             "width": 0.1, "mass": 1.0}}, ...]
      },
      "discretization": {"cells": 32, "steps": 16},
      "kappa": 1.0,
      "solver": {"max_iters": 50000, "tol_gap": 1e-6, ...},
      "normalize": false,
      "energy": {"edge_potential": [...], "vertex_cost": {...}}
    }

Density specs are either piecewise-constant profiles ("pwc", equal-width
pieces spanning the edge, resampled exactly onto the cell grid) or Gaussian
bumps clipped to the edge and normalized to the requested mass.
"discretization" takes "cells" (one count, or a per-edge list) or a global
"dx" target, plus "steps" time intervals. Endpoint measures must have total
mass 1 within 1e-9 unless "normalize": true rescales them. The optional
"energy" section feeds the gradflow subcommand: per-edge potentials (number
or pwc spec) and a vertex cost ({"type": "quadratic", "strength": s,
"target": g} or {"type": "entropy"}), defaulting to zero potentials and a
zero-strength quadratic cost.

All floating-point output is printed with 17 significant digits so that
parse -> serialize -> parse round-trips bitwise. CSV outputs carry a header
row and deterministic row order. The environment variable NETOT_THREADS
caps sweep parallelism (unset means sequential warm-started solves).
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import dataclass, fields as dc_fields
from pathlib import Path
from typing import Optional

import numpy as np

from .exceptions import MassMismatchError, NetotError, SchemaError
from .gradflow import (
    EnergySpec,
    FlowState,
    entropy_vertex_energy,
    quadratic_vertex_energy,
    simulate,
)
from .grid import GridSpec
from .metrics import (
    bl_distance_edge,
    bl_distance_vertex,
    fisher_rao,
    kirchhoff_report,
    sweep_kappa,
    wasserstein_edge_1d,
)
from .netgraph import Network, NetworkMeasure, build_network, total_mass
from .solver import SolverParams, solve_geodesic

__all__ = ["Problem", "parse_problem", "serialize_problem", "main"]

_INT_PARAMS = {"max_iters", "check_every", "power_iters"}


# ------------------------------------------------------------ JSON output
def _fmt(x) -> str:
    """17-significant-digit decimal form; round-trips binary64 exactly."""
    v = float(x)
    if not np.isfinite(v):
        raise ValueError(f"cannot serialize non-finite value {v!r}")
    return format(v, ".17g")


def _json_text(obj, indent: int = 0) -> str:
    pad = "  " * indent
    inner = "  " * (indent + 1)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [
            f"{inner}{json.dumps(str(k))}: {_json_text(v, indent + 1)}"
            for k, v in obj.items()
        ]
        return "{\n" + ",\n".join(items) + "\n" + pad + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        seq = list(obj)
        if not seq:
            return "[]"
        if all(isinstance(v, (float, np.floating, int, np.integer)) and not isinstance(v, bool) for v in seq):
            return "[" + ", ".join(_json_text(v) for v in seq) + "]"
        items = [f"{inner}{_json_text(v, indent + 1)}" for v in seq]
        return "[\n" + ",\n".join(items) + "\n" + pad + "]"
    if isinstance(obj, bool) or obj is None:
        return json.dumps(obj)
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return _fmt(obj)
    if isinstance(obj, str):
        return json.dumps(obj)
    raise TypeError(f"cannot serialize {type(obj).__name__}")


# ------------------------------------------------------------- schema walk
def _expect(cond: bool, where: str, msg: str) -> None:
    if not cond:
        raise SchemaError(f"{where}: {msg}")


def _get(obj: dict, key: str, where: str, required: bool = True, default=None):
    _expect(isinstance(obj, dict), where, "expected an object")
    if key not in obj:
        if required:
            raise SchemaError(f"{where}: missing required field {key!r}")
        return default
    return obj[key]


def _number(val, where: str) -> float:
    _expect(isinstance(val, (int, float)) and not isinstance(val, bool), where, "expected a number")
    return float(val)


def _resample_pwc(values, length: float, cells: int) -> np.ndarray:
    """Exact cell averages of an equal-width piecewise-constant profile."""
    vals = np.asarray(values, dtype=float)
    if vals.size == cells:  # already on the cell grid; avoid cumsum roundoff
        return vals.copy()
    breaks = np.linspace(0.0, length, vals.size + 1)
    cum = np.concatenate(([0.0], np.cumsum(vals) * (length / vals.size)))
    faces = np.linspace(0.0, length, cells + 1)
    integ = np.interp(faces, breaks, cum)
    return np.diff(integ) / (length / cells)


def _parse_density(spec, length: float, cells: int, where: str) -> np.ndarray:
    _expect(isinstance(spec, dict), where, "expected a density spec object")
    kind = _get(spec, "type", where)
    if kind == "pwc":
        values = _get(spec, "values", f"{where}.values")
        _expect(isinstance(values, list) and len(values) > 0, f"{where}.values", "expected a nonempty list")
        arr = np.array([_number(v, f"{where}.values[{i}]") for i, v in enumerate(values)])
        _expect(bool(np.all(arr >= 0.0)), f"{where}.values", "density values must be nonnegative")
        return _resample_pwc(arr, length, cells)
    if kind == "gaussian":
        center = _number(_get(spec, "center", f"{where}.center"), f"{where}.center")
        width = _number(_get(spec, "width", f"{where}.width"), f"{where}.width")
        mass = _number(_get(spec, "mass", f"{where}.mass"), f"{where}.mass")
        _expect(width > 0.0, f"{where}.width", "width must be positive")
        _expect(mass >= 0.0, f"{where}.mass", "mass must be nonnegative")
        dx = length / cells
        x = (np.arange(cells) + 0.5) * dx
        g = np.exp(-0.5 * ((x - center) / width) ** 2)
        total = float(np.sum(g) * dx)
        _expect(total > 1e-300 or mass == 0.0, where, "gaussian has no mass on the edge")
        return g * (mass / total) if mass > 0.0 else np.zeros(cells)
    raise SchemaError(f"{where}.type: unknown density type {kind!r}")


def _parse_vertex_cost(spec, where: str):
    _expect(isinstance(spec, dict), where, "expected a vertex cost object")
    kind = _get(spec, "type", where)
    if kind == "quadratic":
        strength = _number(_get(spec, "strength", f"{where}.strength"), f"{where}.strength")
        target = _number(_get(spec, "target", f"{where}.target", required=False, default=0.0), f"{where}.target")
        return quadratic_vertex_energy(strength, target), {"type": "quadratic", "strength": strength, "target": target}
    if kind == "entropy":
        return entropy_vertex_energy(), {"type": "entropy"}
    raise SchemaError(f"{where}.type: unknown vertex cost type {kind!r}")


@dataclass
class Problem:
    """A fully ingested problem file. Iterates like the documented 5-tuple
    (network, grid, (start, end), kappa, params)."""

    net: Network
    grid: GridSpec
    start: NetworkMeasure
    end: NetworkMeasure
    kappa: float
    params: SolverParams
    energy: EnergySpec
    vertex_cost_spec: list

    def __iter__(self):
        return iter((self.net, self.grid, (self.start, self.end), self.kappa, self.params))


def parse_problem(path) -> Problem:
    """Load and validate a JSON problem file.

    Raises:
        SchemaError: malformed document (message carries the JSON path).
        MassMismatchError: endpoint mass differs from 1 without "normalize".
        OSError: unreadable file.
    """
    text = Path(path).read_text()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise SchemaError(f"{path}: not valid JSON ({e})") from None
    _expect(isinstance(doc, dict), "document", "expected a JSON object")

    netdoc = _get(doc, "network", "network")
    vdocs = _get(netdoc, "vertices", "network.vertices")
    edocs = _get(netdoc, "edges", "network.edges")
    _expect(isinstance(vdocs, list) and vdocs, "network.vertices", "expected a nonempty list")
    _expect(isinstance(edocs, list) and edocs, "network.edges", "expected a nonempty list")

    vertices = []
    gamma0, gamma1 = [], []
    for i, v in enumerate(vdocs):
        where = f"network.vertices[{i}]"
        vid = _get(v, "id", where)
        _expect(isinstance(vid, str), f"{where}.id", "expected a string")
        x = _number(_get(v, "x", f"{where}.x"), f"{where}.x")
        y = _number(_get(v, "y", f"{where}.y"), f"{where}.y")
        vertices.append((vid, (x, y)))
        gamma0.append(_number(_get(v, "gamma0", f"{where}.gamma0", required=False, default=0.0), f"{where}.gamma0"))
        gamma1.append(_number(_get(v, "gamma1", f"{where}.gamma1", required=False, default=0.0), f"{where}.gamma1"))

    edges = []
    rho_specs = []
    for i, e in enumerate(edocs):
        where = f"network.edges[{i}]"
        eid = _get(e, "id", where)
        _expect(isinstance(eid, str), f"{where}.id", "expected a string")
        tail = _get(e, "tail", where)
        head = _get(e, "head", where)
        length = e.get("length")
        if length is not None:
            length = _number(length, f"{where}.length")
        edges.append((eid, tail, head, length))
        rho_specs.append((_get(e, "rho0", where), _get(e, "rho1", where), where))
    net = build_network(vertices, edges)

    disc = _get(doc, "discretization", "discretization")
    steps = _get(disc, "steps", "discretization.steps")
    _expect(isinstance(steps, int) and not isinstance(steps, bool) and steps >= 1,
            "discretization.steps", "expected a positive integer")
    cells_spec = disc.get("cells")
    dx_target = disc.get("dx")
    _expect((cells_spec is None) != (dx_target is None), "discretization",
            "give exactly one of 'cells' or 'dx'")
    if cells_spec is not None:
        if isinstance(cells_spec, int) and not isinstance(cells_spec, bool):
            cells = [cells_spec] * net.n_edges
        else:
            _expect(isinstance(cells_spec, list) and len(cells_spec) == net.n_edges,
                    "discretization.cells", f"expected an integer or a list of {net.n_edges}")
            cells = []
            for i, c in enumerate(cells_spec):
                _expect(isinstance(c, int) and not isinstance(c, bool) and c >= 1,
                        f"discretization.cells[{i}]", "expected a positive integer")
                cells.append(c)
    else:
        dxv = _number(dx_target, "discretization.dx")
        _expect(dxv > 0.0, "discretization.dx", "expected a positive number")
        cells = [max(1, int(round(L / dxv))) for L in net.lengths]
    grid = GridSpec.for_network(net, cells, steps)

    kappa = _number(_get(doc, "kappa", "kappa"), "kappa")
    _expect(kappa > 0.0, "kappa", "expected a positive number")

    params_doc = _get(doc, "solver", "solver", required=False, default={})
    _expect(isinstance(params_doc, dict), "solver", "expected an object")
    allowed = {f.name for f in dc_fields(SolverParams)}
    kwargs = {}
    for k, v in params_doc.items():
        _expect(k in allowed, f"solver.{k}", "unknown solver parameter")
        if k == "step_size":
            kwargs[k] = None if v is None else _number(v, f"solver.{k}")
        elif k in _INT_PARAMS:
            _expect(isinstance(v, int) and not isinstance(v, bool), f"solver.{k}", "expected an integer")
            kwargs[k] = v
        else:
            kwargs[k] = _number(v, f"solver.{k}")
    params = SolverParams(**kwargs)

    rho0 = [_parse_density(s0, net.lengths[j], grid.cells[j], f"{w}.rho0")
            for j, (s0, _, w) in enumerate(rho_specs)]
    rho1 = [_parse_density(s1, net.lengths[j], grid.cells[j], f"{w}.rho1")
            for j, (_, s1, w) in enumerate(rho_specs)]
    start = NetworkMeasure(rho0, np.asarray(gamma0))
    end = NetworkMeasure(rho1, np.asarray(gamma1))
    start.validate(net)
    end.validate(net)

    normalize = _get(doc, "normalize", "normalize", required=False, default=False)
    _expect(isinstance(normalize, bool), "normalize", "expected a boolean")
    for name, meas in (("start", start), ("end", end)):
        m = total_mass(meas, net)
        if normalize:
            _expect(m > 0.0, "normalize", f"{name} measure has zero total mass")
            for r in meas.edge_density:
                r /= m
            meas.vertex_mass /= m
        elif abs(m - 1.0) > 1e-9:
            raise MassMismatchError(
                f"{name} measure has total mass {m!r}; set \"normalize\": true to rescale"
            )

    endoc = _get(doc, "energy", "energy", required=False, default={})
    _expect(isinstance(endoc, dict), "energy", "expected an object")
    pot_spec = endoc.get("edge_potential")
    potentials = []
    for j in range(net.n_edges):
        if pot_spec is None:
            potentials.append(np.zeros(grid.cells[j]))
            continue
        _expect(isinstance(pot_spec, list) and len(pot_spec) == net.n_edges,
                "energy.edge_potential", f"expected a list of {net.n_edges}")
        item = pot_spec[j]
        where = f"energy.edge_potential[{j}]"
        if isinstance(item, (int, float)) and not isinstance(item, bool):
            potentials.append(np.full(grid.cells[j], float(item)))
        else:
            _expect(isinstance(item, dict) and item.get("type") == "pwc", where,
                    "expected a number or a pwc spec")
            values = _get(item, "values", f"{where}.values")
            arr = np.array([_number(v, f"{where}.values[{i}]") for i, v in enumerate(values)])
            potentials.append(_resample_pwc(arr, net.lengths[j], grid.cells[j]))
    cost_doc = endoc.get("vertex_cost")
    if cost_doc is None:
        cost_doc = {"type": "quadratic", "strength": 0.0, "target": 0.0}
    (h, hp), cost_spec = _parse_vertex_cost(cost_doc, "energy.vertex_cost")
    energy = EnergySpec(potentials, [h] * net.n_vertices, [hp] * net.n_vertices, kappa)
    return Problem(net, grid, start, end, kappa, params, energy, cost_spec)


def serialize_problem(problem: Problem) -> str:
    """Canonical JSON text for an ingested problem; reparsing is bitwise-stable."""
    net, grid = problem.net, problem.grid
    vertices = []
    for i, vid in enumerate(net.vertex_ids):
        vertices.append({
            "id": vid,
            "x": float(net.coords[i, 0]),
            "y": float(net.coords[i, 1]),
            "gamma0": float(problem.start.vertex_mass[i]),
            "gamma1": float(problem.end.vertex_mass[i]),
        })
    edges = []
    for j, eid in enumerate(net.edge_ids):
        edges.append({
            "id": eid,
            "tail": net.vertex_ids[net.tails[j]],
            "head": net.vertex_ids[net.heads[j]],
            "length": float(net.lengths[j]),
            "rho0": {"type": "pwc", "values": problem.start.edge_density[j]},
            "rho1": {"type": "pwc", "values": problem.end.edge_density[j]},
        })
    params = {f.name: getattr(problem.params, f.name) for f in dc_fields(SolverParams)}
    doc = {
        "network": {"vertices": vertices, "edges": edges},
        "discretization": {"cells": list(grid.cells), "steps": grid.steps},
        "kappa": problem.kappa,
        "solver": params,
        "energy": {
            "edge_potential": [{"type": "pwc", "values": w} for w in problem.energy.edge_potential],
            "vertex_cost": problem.vertex_cost_spec,
        },
    }
    return _json_text(doc) + "\n"


# ----------------------------------------------------------------- outputs
def _report_dict(report) -> dict:
    return {
        "value": report.value,
        "dual_value": report.dual_value,
        "gap": report.gap,
        "iterations": report.iterations,
        "converged": report.converged,
    }


def _write_geodesic_csv(outdir: Path, net: Network, grid: GridSpec, field) -> None:
    times = grid.time_nodes()
    with open(outdir / "edges.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["edge", "cell", "time", "rho"])
        for j, eid in enumerate(net.edge_ids):
            rho = field.edge_density[j]
            for c in range(grid.cells[j]):
                for k, t in enumerate(times):
                    w.writerow([eid, c, _fmt(t), _fmt(rho[k, c])])
    with open(outdir / "vertices.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["vertex", "time", "gamma"])
        for i, vid in enumerate(net.vertex_ids):
            for k, t in enumerate(times):
                w.writerow([vid, _fmt(t), _fmt(field.vertex_mass[k, i])])


def _sweep_rows(sweep) -> list:
    rows = [["kappa", "value", "dual_value", "gap", "flux_max", "reference"]]
    ref = "" if sweep.reference is None else _fmt(sweep.reference)
    for i in range(sweep.kappas.size):
        rows.append([
            _fmt(sweep.kappas[i]),
            _fmt(sweep.values[i]),
            _fmt(sweep.dual_values[i]),
            _fmt(sweep.gaps[i]),
            _fmt(sweep.flux_max[i]),
            ref,
        ])
    return rows


def _write_flow_csv(outdir: Path, net: Network, grid: GridSpec, traj) -> None:
    with open(outdir / "edges.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "edge", "cell", "rho"])
        for j, eid in enumerate(net.edge_ids):
            for c in range(grid.cells[j]):
                for k, t in enumerate(traj.times):
                    w.writerow([_fmt(t), eid, c, _fmt(traj.states[k].edge_density[j][c])])
    with open(outdir / "vertices.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "vertex", "gamma", "energy"])
        for i, vid in enumerate(net.vertex_ids):
            for k, t in enumerate(traj.times):
                w.writerow([_fmt(t), vid, _fmt(traj.states[k].vertex_mass[i]), _fmt(traj.energies[k])])


# ------------------------------------------------------------- subcommands
def _cmd_distance(args) -> int:
    problem = parse_problem(args.problem)
    report = solve_geodesic(problem.net, problem.grid, problem.start, problem.end,
                            problem.kappa, problem.params)
    print(_json_text(_report_dict(report)))
    return 0 if report.converged else 2


def _cmd_geodesic(args) -> int:
    problem = parse_problem(args.problem)
    report = solve_geodesic(problem.net, problem.grid, problem.start, problem.end,
                            problem.kappa, problem.params)
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    (outdir / "report.json").write_text(_json_text(_report_dict(report)) + "\n")
    _write_geodesic_csv(outdir, problem.net, problem.grid, report.geodesic)
    print(_json_text(_report_dict(report)))
    return 0 if report.converged else 2


def _cmd_sweep(args) -> int:
    problem = parse_problem(args.problem)
    try:
        kappas = [float(tok) for tok in args.kappas.split(",") if tok.strip()]
    except ValueError:
        raise SchemaError(f"--kappas: cannot parse {args.kappas!r} as comma-separated numbers") from None
    sweep = sweep_kappa(problem.net, problem.grid, problem.start, problem.end,
                        kappas, problem.params)
    rows = _sweep_rows(sweep)
    text = "\n".join(",".join(str(v) for v in row) for row in rows) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    sys.stdout.write(text)
    return 0 if all(sweep.converged) else 2


def _cmd_metrics(args) -> int:
    problem = parse_problem(args.problem)
    net, grid = problem.net, problem.grid
    dxs = grid.dx(net)
    per_edge = []
    for j in range(net.n_edges):
        try:
            per_edge.append(wasserstein_edge_1d(problem.start.edge_density[j],
                                                problem.end.edge_density[j],
                                                float(net.lengths[j])))
        except MassMismatchError:
            per_edge.append(None)
    wk = None
    wk_converged = None
    try:
        rep = kirchhoff_report(net, grid, problem.start.edge_density,
                               problem.end.edge_density, problem.params)
        wk = rep.value
        wk_converged = rep.converged
    except MassMismatchError:
        pass
    out = {
        "fisher_rao": fisher_rao(problem.start.vertex_mass, problem.end.vertex_mass, problem.kappa),
        "wasserstein_edges": wk,
        "wasserstein_edges_converged": wk_converged,
        "per_edge_1d": per_edge,
        "bl_distances": {
            "edges": [bl_distance_edge(problem.start.edge_density[j],
                                       problem.end.edge_density[j], float(dxs[j]))
                      for j in range(net.n_edges)],
            "vertices": [bl_distance_vertex(problem.start.vertex_mass[i],
                                            problem.end.vertex_mass[i])
                         for i in range(net.n_vertices)],
        },
    }
    print(_json_text(out))
    return 0 if wk_converged in (None, True) else 2


def _cmd_gradflow(args) -> int:
    problem = parse_problem(args.problem)
    state0 = FlowState([r.copy() for r in problem.start.edge_density],
                       problem.start.vertex_mass.copy())
    traj = simulate(state0, args.T, args.dt, problem.energy, problem.net, problem.grid)
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    _write_flow_csv(outdir, problem.net, problem.grid, traj)
    print(_json_text({
        "steps": len(traj.states) - 1,
        "final_energy": float(traj.energies[-1]),
        "max_mass_drift": traj.max_mass_drift,
        "energy_increases": traj.energy_increases,
    }))
    return 0


def _cmd_verify(args) -> int:
    from .acceptance import run_acceptance

    results = run_acceptance(quick=args.quick)
    ok = True
    for res in results:
        ok &= res.passed
        print(res.line())
    print(f"{'ALL PASS' if ok else 'FAILURES'}: {sum(r.passed for r in results)}/{len(results)} criteria")
    return 0 if ok else 1


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"error: {message}\n")
        raise SystemExit(1)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="netot", description="Transport distances, geodesics, and gradient flows on metric networks.")
    sub = p.add_subparsers(dest="command", required=True)

    d = sub.add_parser("distance", help="solve one instance, print a JSON report")
    d.add_argument("problem")
    d.set_defaults(func=_cmd_distance)

    g = sub.add_parser("geodesic", help="solve and export the geodesic as CSV frames")
    g.add_argument("problem")
    g.add_argument("--out", required=True, help="output directory")
    g.set_defaults(func=_cmd_geodesic)

    s = sub.add_parser("sweep-kappa", help="solve over a kappa grid, print CSV")
    s.add_argument("problem")
    s.add_argument("--kappas", required=True, help="comma-separated kappa grid, increasing")
    s.add_argument("--out", help="also write the CSV to this file")
    s.set_defaults(func=_cmd_sweep)

    m = sub.add_parser("metrics", help="comparison metrics for one instance, JSON")
    m.add_argument("problem")
    m.set_defaults(func=_cmd_metrics)

    f = sub.add_parser("gradflow", help="integrate the gradient flow, export CSV")
    f.add_argument("problem")
    f.add_argument("--T", type=float, required=True, help="final time")
    f.add_argument("--dt", type=float, required=True, help="time step")
    f.add_argument("--out", required=True, help="output directory")
    f.set_defaults(func=_cmd_gradflow)

    v = sub.add_parser("verify", help="run the acceptance property suite")
    v.add_argument("--quick", action="store_true", help="reduced resolutions, < 5 minutes")
    v.set_defaults(func=_cmd_verify)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        return args.func(args)
    except NetotError as e:
        sys.stderr.write(f"error: {e}\n")
        return 1
    except OSError as e:
        sys.stderr.write(f"i/o error: {e}\n")
        return 3


if __name__ == "__main__":
    sys.exit(main())
