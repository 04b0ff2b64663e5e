"""Node proximity measures and per-predicate temporal signature series.

Neighborhoods are taken over the undirected view of a graph slice: an edge
``(s, -, o)`` makes ``o`` a neighbor of ``s`` and vice versa.  A signature
series stacks, per timestamp, the proximity scores of the entity pairs a
predicate connects at that timestamp, giving one row per timestamp and one
column per pair the predicate ever connects.  Change points in that matrix
are where the predicate's neighborhood structure shifts.
"""
from __future__ import annotations

import math
from typing import Callable, Iterable

import numpy as np

from .graph import TemporalGraph

PROXIMITY_MEASURES = ("jaccard", "adar", "pref")


class NeighborIndex:
    """Undirected adjacency over a set of (s, o) edges.

    Self-loops contribute the node to its own neighborhood once; parallel
    edges collapse (neighborhoods are sets).
    """

    def __init__(self, edges: Iterable[tuple[int, int]]):
        adj: dict[int, set[int]] = {}
        for s, o in edges:
            adj.setdefault(s, set()).add(o)
            adj.setdefault(o, set()).add(s)
        self._adj = adj

    def neighbors(self, v: int) -> set[int]:
        return self._adj.get(v, set())

    def degree(self, v: int) -> int:
        return len(self._adj.get(v, ()))


def jaccard(index: NeighborIndex, u: int, v: int) -> float:
    """|N(u) & N(v)| / |N(u) | N(v)|, zero when the union is empty."""
    nu, nv = index.neighbors(u), index.neighbors(v)
    union = len(nu | nv)
    if union == 0:
        return 0.0
    return len(nu & nv) / union


def adamic_adar(index: NeighborIndex, u: int, v: int) -> float:
    """Sum of 1/ln(deg(z)) over common neighbors z with degree > 1.

    Degree-one common neighbors would divide by ln(1) = 0 and are skipped.
    """
    total = 0.0
    for z in index.neighbors(u) & index.neighbors(v):
        dz = index.degree(z)
        if dz > 1:
            total += 1.0 / math.log(dz)
    return total


def pref_attachment(index: NeighborIndex, u: int, v: int) -> float:
    """deg(u) * deg(v)."""
    return float(index.degree(u) * index.degree(v))


_MEASURES: dict[str, Callable[[NeighborIndex, int, int], float]] = {
    "jaccard": jaccard,
    "adar": adamic_adar,
    "pref": pref_attachment,
}


def get_measure(name: str) -> Callable[[NeighborIndex, int, int], float]:
    try:
        return _MEASURES[name]
    except KeyError:
        raise ValueError(
            f"unknown proximity measure {name!r}; expected one of {PROXIMITY_MEASURES}"
        ) from None


class SignatureSeries:
    """Per-timestamp proximity scores for the pairs a predicate connects.

    ``matrix`` has shape (num timestamps in the graph, num distinct pairs);
    ``pairs[j]`` is the canonical (min, max) entity pair of column ``j`` and
    ``pair_index`` the inverse map.  Column order is fixed by sorted pair
    order, so identical inputs always produce identical matrices.  A cell is
    zero whenever its pair is not connected by the predicate at that row's
    timestamp.
    """

    def __init__(self, predicate: int, matrix: np.ndarray, pairs: list[tuple[int, int]]):
        self.predicate = predicate
        self.matrix = matrix
        self.pairs = pairs
        self.pair_index = {pq: j for j, pq in enumerate(pairs)}

    @property
    def shape(self) -> tuple[int, int]:
        return self.matrix.shape


def signature_series(
    g: TemporalGraph,
    predicate: int,
    measure: str = "pref",
    scope: str = "predicate",
) -> SignatureSeries:
    """Build the proximity signature of one predicate across all timestamps.

    ``scope`` selects which edges define neighborhoods at each timestamp:
    ``"predicate"`` uses only the predicate's own facts valid then (the
    default), ``"graph"`` uses every fact valid then.  Scores are written
    only for pairs connected at the row's timestamp; other cells stay zero.
    """
    if scope not in ("predicate", "graph"):
        raise ValueError(f"unknown signature scope {scope!r}")
    score = get_measure(measure)

    mine = [g.facts[i] for i in g.by_predicate().get(predicate, [])]
    pairs = sorted({(min(f.s, f.o), max(f.s, f.o)) for f in mine})

    n_t = g.num_timestamps
    matrix = np.zeros((n_t, len(pairs)), dtype=np.float64)
    series = SignatureSeries(predicate, matrix, pairs)
    if not pairs:
        return series

    # bucket facts into every slice they span
    active: list[set[tuple[int, int]]] = [set() for _ in range(n_t)]
    for f in mine:
        pq = (min(f.s, f.o), max(f.s, f.o))
        for t in range(f.b, f.e + 1):
            active[t].add(pq)

    if scope == "predicate":
        pool = mine
    else:
        pool = list(g.facts)
    edges: list[list[tuple[int, int]]] = [[] for _ in range(n_t)]
    for f in pool:
        for t in range(f.b, f.e + 1):
            edges[t].append((f.s, f.o))

    col = series.pair_index
    for t in range(n_t):
        if not active[t]:
            continue
        index = NeighborIndex(edges[t])
        row = matrix[t]
        for u, v in active[t]:
            row[col[(u, v)]] = score(index, u, v)
    return series


def signature_csv(series: SignatureSeries, entity_labels: tuple[str, ...]) -> str:
    """Debug dump: header of canonical pair labels, one row per timestamp."""
    header = ",".join(f"{entity_labels[u]}|{entity_labels[v]}" for u, v in series.pairs)
    lines = [header]
    for row in series.matrix:
        lines.append(",".join(repr(float(x)) for x in row))
    return "\n".join(lines) + "\n"
