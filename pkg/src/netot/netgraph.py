"""Metric networks: finite connected multigraphs with edge lengths and
planar coordinates, plus measures living on them (edge densities + vertex masses).

Edges are oriented intervals [0, L_j]; orientation fixes which endpoint is the
tail (arc coordinate 0) and which is the head (arc coordinate L_j). Vertices
can carry point masses alongside the edge densities.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .exceptions import (
    DanglingVertexError,
    DisconnectedNetworkError,
    MassMismatchError,
    NonpositiveLengthError,
    SelfLoopError,
    ShapeMismatchError,
    ValidationError,
)


@dataclass(frozen=True)
class Network:
    """Immutable oriented metric network.

    Attributes:
        vertex_ids: vertex identifiers, index order is the canonical order.
        coords: (n, 2) planar coordinates (metadata only, never validated
            against edge lengths beyond the default-length rule).
        edge_ids: edge identifiers.
        tails: (m,) vertex index of each edge's tail (arc coordinate 0).
        heads: (m,) vertex index of each edge's head (arc coordinate L_j).
        lengths: (m,) positive edge lengths.
        incidence: per vertex, the tuple of incident edge indices. Parallel
            edges appear once each; self-loops are rejected at build time.
    """

    vertex_ids: tuple
    coords: np.ndarray
    edge_ids: tuple
    tails: np.ndarray
    heads: np.ndarray
    lengths: np.ndarray
    incidence: tuple = field(repr=False)

    @property
    def n_vertices(self) -> int:
        return len(self.vertex_ids)

    @property
    def n_edges(self) -> int:
        return len(self.edge_ids)

    def vertex_index(self, vertex_id) -> int:
        try:
            return self.vertex_ids.index(vertex_id)
        except ValueError:
            raise DanglingVertexError(f"unknown vertex id {vertex_id!r}") from None

    def edge_index(self, edge_id) -> int:
        try:
            return self.edge_ids.index(edge_id)
        except ValueError:
            raise ValidationError(f"unknown edge id {edge_id!r}") from None

    def degree(self, i: int) -> int:
        return len(self.incidence[i])

    def boundary_face(self, i: int, j: int, cells: int) -> int:
        """Face index of edge j at vertex i on a grid with `cells` cells."""
        if self.tails[j] == i:
            return 0
        if self.heads[j] == i:
            return cells
        raise ValidationError(f"edge {j} is not incident to vertex {i}")


def incidence_sign(net: Network, i: int, j: int) -> int:
    """Orientation sign of edge j at vertex i: +1 at the head, -1 at the tail.

    This is the outward-normal convention for fluxes: a positive flux at the
    head face (or a negative flux at the tail face) carries mass off the edge
    and into the vertex.
    """
    if net.heads[j] == i:
        return 1
    if net.tails[j] == i:
        return -1
    raise ValidationError(f"edge {j} is not incident to vertex {i}")


def build_network(vertices: Sequence, edges: Sequence) -> Network:
    """Build and validate a Network from raw vertex/edge records.

    Args:
        vertices: sequence of (id, (x, y)) pairs.
        edges: sequence of (id, tail_id, head_id) or (id, tail_id, head_id, length)
            records. A missing or None length defaults to the Euclidean distance
            between the endpoint coordinates.

    Raises:
        SelfLoopError, DanglingVertexError, NonpositiveLengthError,
        DisconnectedNetworkError, ValidationError: each condition gets its
        own error type so callers can tell them apart.
    """
    if len(vertices) == 0:
        raise ValidationError("network needs at least one vertex")
    vertex_ids = tuple(v[0] for v in vertices)
    if len(set(vertex_ids)) != len(vertex_ids):
        raise ValidationError("duplicate vertex ids")
    coords = np.asarray([v[1] for v in vertices], dtype=float).reshape(len(vertices), 2)
    index = {vid: i for i, vid in enumerate(vertex_ids)}

    if len(edges) == 0:
        raise ValidationError("network needs at least one edge")
    edge_ids = []
    tails = []
    heads = []
    lengths = []
    for rec in edges:
        if len(rec) == 3:
            eid, tail_id, head_id = rec
            length = None
        elif len(rec) == 4:
            eid, tail_id, head_id, length = rec
        else:
            raise ValidationError(f"edge record {rec!r} must have 3 or 4 entries")
        if tail_id not in index:
            raise DanglingVertexError(f"edge {eid!r} references unknown vertex {tail_id!r}")
        if head_id not in index:
            raise DanglingVertexError(f"edge {eid!r} references unknown vertex {head_id!r}")
        ti, hi = index[tail_id], index[head_id]
        if ti == hi:
            raise SelfLoopError(f"edge {eid!r} is a self-loop at vertex {tail_id!r}")
        if length is None:
            length = float(np.hypot(*(coords[hi] - coords[ti])))
        length = float(length)
        if not np.isfinite(length) or length <= 0.0:
            raise NonpositiveLengthError(f"edge {eid!r} has nonpositive length {length}")
        edge_ids.append(eid)
        tails.append(ti)
        heads.append(hi)
        lengths.append(length)
    if len(set(edge_ids)) != len(edge_ids):
        raise ValidationError("duplicate edge ids")

    tails_a = np.asarray(tails, dtype=int)
    heads_a = np.asarray(heads, dtype=int)

    # connectivity over the union of edges (parallel edges are fine)
    n = len(vertex_ids)
    adj = [[] for _ in range(n)]
    for t, h in zip(tails_a, heads_a):
        adj[t].append(h)
        adj[h].append(t)
    seen = np.zeros(n, dtype=bool)
    stack = [0]
    seen[0] = True
    while stack:
        v = stack.pop()
        for w in adj[v]:
            if not seen[w]:
                seen[w] = True
                stack.append(w)
    if not seen.all():
        missing = [vertex_ids[i] for i in np.flatnonzero(~seen)]
        raise DisconnectedNetworkError(f"network is disconnected; unreachable: {missing}")

    incidence = tuple(
        tuple(j for j in range(len(edge_ids)) if tails_a[j] == i or heads_a[j] == i)
        for i in range(n)
    )
    return Network(
        vertex_ids=vertex_ids,
        coords=coords,
        edge_ids=tuple(edge_ids),
        tails=tails_a,
        heads=heads_a,
        lengths=np.asarray(lengths, dtype=float),
        incidence=incidence,
    )


@dataclass
class NetworkMeasure:
    """A nonnegative measure on a network: per-edge cell-average densities
    plus per-vertex point masses.

    The number of cells per edge is implied by the density arrays; the cell
    width on edge j is L_j / len(edge_density[j]).
    """

    edge_density: list
    vertex_mass: np.ndarray

    def __post_init__(self):
        self.edge_density = [np.asarray(r, dtype=float) for r in self.edge_density]
        self.vertex_mass = np.asarray(self.vertex_mass, dtype=float)

    def validate(self, net: Network) -> None:
        if len(self.edge_density) != net.n_edges:
            raise ShapeMismatchError(
                f"measure has {len(self.edge_density)} edge densities, network has {net.n_edges} edges"
            )
        if self.vertex_mass.shape != (net.n_vertices,):
            raise ShapeMismatchError(
                f"vertex mass vector has shape {self.vertex_mass.shape}, expected ({net.n_vertices},)"
            )
        for j, r in enumerate(self.edge_density):
            if r.ndim != 1 or r.size < 1:
                raise ShapeMismatchError(f"edge {j} density must be a nonempty 1-d array")
            if np.any(r < 0) or not np.all(np.isfinite(r)):
                raise ValidationError(f"edge {j} density has negative or non-finite entries")
        if np.any(self.vertex_mass < 0) or not np.all(np.isfinite(self.vertex_mass)):
            raise ValidationError("vertex masses must be finite and nonnegative")


def total_mass(measure: NetworkMeasure, net: Network) -> float:
    """Total mass: sum of cell averages times cell widths, plus vertex masses."""
    m = float(np.sum(measure.vertex_mass))
    for j, r in enumerate(measure.edge_density):
        m += float(np.sum(r)) * net.lengths[j] / len(r)
    return float(m)


def check_probability(measure: NetworkMeasure, net: Network, tol: float = 1e-12) -> None:
    """Raise MassMismatchError unless the measure has total mass 1 within tol."""
    m = total_mass(measure, net)
    if abs(m - 1.0) > tol:
        raise MassMismatchError(f"total mass {m!r} differs from 1 by more than {tol}")
