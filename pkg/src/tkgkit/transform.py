"""Graph transformations that move temporal scope into the predicate set.

Each transformation consumes a :class:`~tkgkit.graph.TemporalGraph` and
produces a new graph over the same entities and timestamps, a lineage that
maps every derived predicate back to its source plus a validity interval,
and a report of what happened.  Available rewrites:

* ``timestamp``: one derived predicate per observed (predicate, timestamp).
* ``split_parameterized``: repeatedly halve the most frequent predicate at a
  midpoint ("time") or fact-balancing ("count") timestamp.
* ``split_cpd``: split each predicate at the change points of its proximity
  signature.
* ``merge``: timestamp first, then fuse temporally adjacent derived
  predicates of one source, least occurring first.
* ``random_split``: seeded uniform splitting, the sanity baseline.
"""
from __future__ import annotations

import heapq
import logging
import random
from bisect import bisect_left, bisect_right
from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .cpd import CpdConfig, bottom_up, normalize_rows
from .graph import DataError, Quintuple, TemporalGraph
from .proximity import signature_series

logger = logging.getLogger(__name__)

SPLIT_METHODS = ("time", "count")

# rows inside a predicate bucket: (subject, object, begin, end, split)
_Row = tuple[int, int, int, int, int]


@dataclass
class LineageEntry:
    """Provenance of one derived predicate.

    ``source`` is the original predicate's label, ``begin``/``end`` the
    validity interval (time ids, inclusive), ``stamp`` the single timestamp
    for timestamp-derived predicates.
    """

    source: str
    begin: int
    end: int
    stamp: int | None = None


@dataclass
class TransformReport:
    method: str
    params: dict
    predicates_before: int
    predicates_after: int
    facts_before: int
    facts_after: int
    splits_applied: int = 0
    merges_applied: int = 0
    skipped_points: int = 0
    split_points: list[tuple[str, str]] = field(default_factory=list)
    merge_trace: list[str] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)

    def format(self) -> str:
        lines = [f"method\t{self.method}"]
        for k in sorted(self.params):
            lines.append(f"param.{k}\t{self.params[k]}")
        lines.append(f"predicates.before\t{self.predicates_before}")
        lines.append(f"predicates.after\t{self.predicates_after}")
        lines.append(f"facts.before\t{self.facts_before}")
        lines.append(f"facts.after\t{self.facts_after}")
        if self.splits_applied:
            lines.append(f"splits.applied\t{self.splits_applied}")
        if self.merges_applied:
            lines.append(f"merges.applied\t{self.merges_applied}")
        if self.skipped_points:
            lines.append(f"splits.skipped\t{self.skipped_points}")
        for note in self.notes:
            lines.append(f"note\t{note}")
        for w in self.warnings:
            lines.append(f"warning\t{w}")
        for pred, t in self.split_points:
            lines.append(f"split\t{pred}\t{t}")
        for entry in self.merge_trace:
            lines.append(f"merge\t{entry}")
        return "\n".join(lines) + "\n"


@dataclass
class TransformResult:
    graph: TemporalGraph
    lineage: dict[int, LineageEntry]
    report: TransformReport


class _MutableTKG:
    """Working copy of a graph while a transformation runs.

    Facts sit in per-predicate buckets; new predicates take ids past the
    input vocabulary and ``live`` tracks which ids survive into the output.
    Sources are carried as labels so chained transformations keep pointing
    at the oldest ancestor.
    """

    def __init__(self, g: TemporalGraph, lineage: dict[int, LineageEntry] | None = None):
        self.g = g
        self.labels: list[str] = list(g.predicate_labels)
        self._used: set[str] = set(self.labels)
        self.buckets: dict[int, list[_Row]] = {p: [] for p in range(g.num_predicates)}
        for f, sp in zip(g.facts, g.splits):
            self.buckets[f.p].append((f.s, f.o, f.b, f.e, sp))
        self.live: set[int] = set(range(g.num_predicates))
        last = g.num_timestamps - 1
        self.source: dict[int, str] = {}
        self.interval: dict[int, tuple[int, int]] = {}
        self.stamp: dict[int, int | None] = {}
        for p in range(g.num_predicates):
            ent = lineage.get(p) if lineage else None
            if ent is None:
                ent = LineageEntry(source=g.predicate_labels[p], begin=0, end=last)
            self.source[p] = ent.source
            self.interval[p] = (ent.begin, ent.end)
            self.stamp[p] = ent.stamp
        self._ordinal: dict[str, int] = defaultdict(int)

    def new_predicate(
        self, label: str, source: str, interval: tuple[int, int], stamp: int | None = None
    ) -> int:
        while label in self._used:
            label += "'"
        pid = len(self.labels)
        self.labels.append(label)
        self._used.add(label)
        self.buckets[pid] = []
        self.live.add(pid)
        self.source[pid] = source
        self.interval[pid] = interval
        self.stamp[pid] = stamp
        return pid

    def count(self, pid: int) -> int:
        return len(self.buckets.get(pid, ()))

    def span(self, pid: int) -> tuple[int, int] | None:
        """Active span: earliest begin and latest end over the facts."""
        rows = self.buckets.get(pid)
        if not rows:
            return None
        return min(r[2] for r in rows), max(r[3] for r in rows)

    def split_once(self, pid: int, t: int) -> tuple[int, int]:
        """Replace ``pid`` by two children partitioned at ``t``.

        Facts spanning ``t`` land in both children, cut at ``t``; the rest
        go left or right whole.  ``t`` must lie in the active span.
        """
        span = self.span(pid)
        if span is None:
            raise ValueError(f"predicate {self.labels[pid]!r} has no facts to split")
        if not span[0] <= t <= span[1]:
            raise ValueError(
                f"split point {t} outside active span {span} of {self.labels[pid]!r}"
            )
        src = self.source[pid]
        lo, hi = self.interval[pid]
        tl = self.g.time_labels
        n = self._ordinal[src]
        self._ordinal[src] = n + 2
        r1 = self.new_predicate(f"{src}#{n + 1}[{tl[lo]},{tl[t]}]", src, (lo, t))
        r2 = self.new_predicate(f"{src}#{n + 2}[{tl[t]},{tl[hi]}]", src, (t, hi))
        for s, o, b, e, sp in self.buckets.pop(pid):
            if b <= t <= e:
                self.buckets[r1].append((s, o, b, t, sp))
                self.buckets[r2].append((s, o, t, e, sp))
            elif e <= t:
                self.buckets[r1].append((s, o, b, e, sp))
            else:
                self.buckets[r2].append((s, o, b, e, sp))
        self.live.discard(pid)
        return r1, r2

    def finalize(self) -> tuple[TemporalGraph, dict[int, LineageEntry]]:
        """Compact live predicates into a fresh graph plus its lineage."""
        order = sorted(self.live)
        labels = []
        facts: list[Quintuple] = []
        splits: list[int] = []
        lineage: dict[int, LineageEntry] = {}
        for new_pid, pid in enumerate(order):
            labels.append(self.labels[pid])
            lo, hi = self.interval[pid]
            lineage[new_pid] = LineageEntry(
                source=self.source[pid], begin=lo, end=hi, stamp=self.stamp[pid]
            )
            for s, o, b, e, sp in self.buckets.get(pid, ()):
                facts.append(Quintuple(s, new_pid, o, b, e))
                splits.append(sp)
        graph = TemporalGraph(
            facts=tuple(facts),
            splits=tuple(splits),
            entity_labels=self.g.entity_labels,
            predicate_labels=tuple(labels),
            time_labels=self.g.time_labels,
        )
        return graph, lineage


def _base_report(method: str, params: dict, g: TemporalGraph) -> TransformReport:
    return TransformReport(
        method=method,
        params=params,
        predicates_before=g.num_predicates,
        predicates_after=g.num_predicates,
        facts_before=len(g.facts),
        facts_after=len(g.facts),
    )


def _finish(mg: _MutableTKG, report: TransformReport) -> TransformResult:
    graph, lineage = mg.finalize()
    report.predicates_after = graph.num_predicates
    report.facts_after = len(graph.facts)
    return TransformResult(graph=graph, lineage=lineage, report=report)


def identity(g: TemporalGraph) -> TransformResult:
    """No-op transformation; facts and predicates pass through unchanged."""
    last = g.num_timestamps - 1
    lineage = {
        p: LineageEntry(source=g.predicate_labels[p], begin=0, end=last)
        for p in range(g.num_predicates)
    }
    return TransformResult(graph=g, lineage=lineage, report=_base_report("none", {}, g))


# ---------------------------------------------------------------------------
# timestamping
# ---------------------------------------------------------------------------

def _timestamp_into(mg: _MutableTKG) -> dict[int, list[tuple[int, int]]]:
    """Expand every fact into per-timestamp facts under stamped predicates.

    Returns, per source predicate id, the stamped children as (t, pid)
    pairs in chronological order.
    """
    g = mg.g
    memo: dict[tuple[int, int], int] = {}
    for pid in range(g.num_predicates):
        rows = mg.buckets.pop(pid, [])
        mg.live.discard(pid)
        label = g.predicate_labels[pid]
        for s, o, b, e, sp in rows:
            for t in range(b, e + 1):
                dp = memo.get((pid, t))
                if dp is None:
                    dp = mg.new_predicate(
                        f"{label}@{g.time_labels[t]}", label, (t, t), stamp=t
                    )
                    memo[(pid, t)] = dp
                mg.buckets[dp].append((s, o, t, t, sp))
    children: dict[int, list[tuple[int, int]]] = defaultdict(list)
    for (pid, t), dp in memo.items():
        children[pid].append((t, dp))
    for pid in children:
        children[pid].sort()
    return children


def timestamp(g: TemporalGraph) -> TransformResult:
    """One derived predicate per observed (predicate, timestamp) pair.

    A fact valid over [b, e] becomes e - b + 1 single-stamp facts; pairs
    never observed get no predicate.
    """
    mg = _MutableTKG(g)
    _timestamp_into(mg)
    report = _base_report("timestamp", {}, g)
    return _finish(mg, report)


# ---------------------------------------------------------------------------
# splitting
# ---------------------------------------------------------------------------

def split_once(
    g: TemporalGraph,
    predicate: int,
    t: int,
    lineage: dict[int, LineageEntry] | None = None,
) -> TransformResult:
    """Split one predicate of ``g`` at timestamp ``t``.

    ``lineage`` from an earlier transformation keeps sources pointing at
    the oldest ancestors; without it every predicate counts as original.
    """
    if not 0 <= predicate < g.num_predicates:
        raise ValueError(f"predicate id {predicate} not in graph")
    mg = _MutableTKG(g, lineage)
    mg.split_once(predicate, t)
    report = _base_report(
        "split_once", {"predicate": g.predicate_labels[predicate], "t": g.time_labels[t]}, g
    )
    report.splits_applied = 1
    report.split_points.append((g.predicate_labels[predicate], g.time_labels[t]))
    return _finish(mg, report)


def _midpoint_split(mg: _MutableTKG, pid: int) -> int | None:
    span = mg.span(pid)
    if span is None or span[0] >= span[1]:
        return None
    return (span[0] + span[1]) // 2


def _balanced_split(mg: _MutableTKG, pid: int) -> int | None:
    """Timestamp minimizing |#facts ending by t - #facts starting from t|.

    Only timestamps leaving both sides nonempty qualify; ties take the
    earliest timestamp.  Returns None when no qualifying timestamp exists.
    """
    span = mg.span(pid)
    if span is None or span[0] >= span[1]:
        return None
    rows = mg.buckets[pid]
    begins = sorted(r[2] for r in rows)
    ends = sorted(r[3] for r in rows)
    lo, hi = ends[0], begins[-1]
    if lo > hi:
        return None
    n = len(rows)
    best_t = None
    best_obj = None
    for t in range(lo, hi + 1):
        n_left = bisect_right(ends, t)
        n_right = n - bisect_left(begins, t)
        if n_left == 0 or n_right == 0:
            continue
        obj = abs(n_left - n_right)
        if best_obj is None or obj < best_obj:
            best_obj, best_t = obj, t
    return best_t


def split_parameterized(g: TemporalGraph, method: str, grow: float) -> TransformResult:
    """Grow the predicate set by repeatedly splitting the most frequent one.

    ``method`` picks the split timestamp: "time" takes the floor midpoint of
    the predicate's active span, "count" the timestamp best balancing facts
    ending by it against facts starting from it.  Stops once the predicate
    count reaches ``grow`` times the original count; predicates whose span
    is a single timestamp (or that cannot balance) are left alone.
    """
    if method not in SPLIT_METHODS:
        raise ValueError(f"unknown split method {method!r}; expected one of {SPLIT_METHODS}")
    if grow <= 1:
        raise ValueError("grow must be > 1")
    choose = _midpoint_split if method == "time" else _balanced_split
    mg = _MutableTKG(g)
    target = grow * g.num_predicates
    heap: list[tuple[int, int]] = [(-mg.count(p), p) for p in sorted(mg.live)]
    heapq.heapify(heap)
    report = _base_report(f"split_{method}", {"grow": grow}, g)
    while len(mg.live) < target:
        while heap:
            negc, pid = heapq.heappop(heap)
            if pid in mg.live:
                break
        else:
            report.warnings.append(
                f"no splittable predicate left at {len(mg.live)} predicates"
                f" (target {target:g})"
            )
            break
        t = choose(mg, pid)
        if t is None:
            continue
        label = mg.labels[pid]
        r1, r2 = mg.split_once(pid, t)
        report.splits_applied += 1
        report.split_points.append((label, g.time_labels[t]))
        heapq.heappush(heap, (-mg.count(r1), r1))
        heapq.heappush(heap, (-mg.count(r2), r2))
    return _finish(mg, report)


def split_cpd(
    g: TemporalGraph,
    score: str = "pref",
    cfg: CpdConfig | None = None,
    scope: str = "predicate",
    workers: int = 1,
) -> TransformResult:
    """Split each predicate at the change points of its proximity signature.

    Per predicate: build the signature series, row-normalize, run bottom-up
    detection, then apply the interior breakpoints left to right (each one
    lands in the rightmost child produced so far).  Breakpoints falling
    outside the current child's active span are skipped and counted.
    Signature and detection work may run on ``workers`` threads; splits are
    applied sequentially in predicate order either way.
    """
    cfg = cfg or CpdConfig()
    cfg.validate()
    mg = _MutableTKG(g)
    report = _base_report(
        "split_cpd",
        {
            "score": score,
            "epsilon": cfg.epsilon,
            "min_size": cfg.min_size,
            "jump": cfg.jump,
            "gamma": "median" if cfg.gamma is None else cfg.gamma,
            "scope": scope,
        },
        g,
    )

    def analyze(pid: int) -> tuple[int, list[int]]:
        series = signature_series(g, pid, measure=score, scope=scope)
        if series.matrix.size == 0:
            return pid, []
        if bool(np.all(series.matrix == series.matrix[0])):
            return pid, []
        x = normalize_rows(series.matrix)
        seg = bottom_up(x, cfg.epsilon, min_size=cfg.min_size, jump=cfg.jump, gamma=cfg.gamma)
        return pid, seg.change_points

    pids = list(range(g.num_predicates))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(analyze, pids))
    else:
        results = [analyze(p) for p in pids]

    for pid, points in results:
        current = pid
        applied: list[int] = []
        for k in points:
            span = mg.span(current)
            if span is None or span[0] >= span[1] or not span[0] <= k <= span[1]:
                report.skipped_points += 1
                continue
            label = mg.labels[current]
            _, current = mg.split_once(current, k)
            report.split_points.append((label, g.time_labels[k]))
            report.splits_applied += 1
            applied.append(k)
        if applied:
            report.notes.append(
                f"{g.predicate_labels[pid]}: change points at "
                + ",".join(g.time_labels[k] for k in applied)
            )
    return _finish(mg, report)


def random_split(g: TemporalGraph, grow: float, seed: int = 0) -> TransformResult:
    """Seeded baseline: split uniformly chosen predicates at uniform points.

    Each step draws a predicate from the current set and a timestamp in its
    active span.  Draws hitting a single-timestamp span are rejected; 100
    consecutive rejections stop the transformation with a warning.
    """
    if grow <= 1:
        raise ValueError("grow must be > 1")
    rng = random.Random(seed)
    mg = _MutableTKG(g)
    target = grow * g.num_predicates
    pool = sorted(mg.live)
    report = _base_report("random_split", {"grow": grow, "seed": seed}, g)
    failures = 0
    while len(mg.live) < target:
        if failures >= 100:
            report.warnings.append(
                f"stopped after 100 consecutive unsplittable draws"
                f" at {len(mg.live)} predicates (target {target:g})"
            )
            break
        i = rng.randrange(len(pool))
        span = mg.span(pool[i])
        if span is None or span[0] >= span[1]:
            failures += 1
            continue
        t = rng.randint(span[0], span[1])
        label = mg.labels[pool[i]]
        r1, r2 = mg.split_once(pool[i], t)
        pool[i] = r1
        pool.append(r2)
        failures = 0
        report.splits_applied += 1
        report.split_points.append((label, g.time_labels[t]))
    return _finish(mg, report)


# ---------------------------------------------------------------------------
# merging
# ---------------------------------------------------------------------------

class _MergeNode:
    __slots__ = ("pid", "src", "lo", "hi", "count", "prev", "next", "alive")

    def __init__(self, pid: int, src: int, lo: int, hi: int, count: int):
        self.pid = pid
        self.src = src
        self.lo = lo
        self.hi = hi
        self.count = count
        self.prev: _MergeNode | None = None
        self.next: _MergeNode | None = None
        self.alive = True


def merge(g: TemporalGraph, shrink: float) -> TransformResult:
    """Timestamp the graph, then fuse adjacent stamped predicates.

    Candidates are chronologically adjacent predicates of the same source;
    the pair with the fewest combined facts merges first (ties: earlier
    stamp, then lower source id).  Stops once the predicate count drops to
    the timestamped count divided by ``shrink``; ``shrink=inf`` merges all
    the way back to one predicate per source.
    """
    if shrink <= 1:
        raise ValueError("shrink must be > 1")
    mg = _MutableTKG(g)
    children = _timestamp_into(mg)
    m_ts = len(mg.live)
    target = m_ts / shrink
    report = _base_report("merge", {"shrink": shrink}, g)
    report.notes.append(f"timestamped predicates: {m_ts}")

    heap: list[tuple[int, int, int, int, _MergeNode, _MergeNode]] = []
    seq = 0

    def push(a: _MergeNode, b: _MergeNode) -> None:
        nonlocal seq
        heap.append((a.count + b.count, a.lo, a.src, seq, a, b))
        seq += 1

    n_sources = 0
    for src in sorted(children):
        stamped = children[src]
        n_sources += 1
        prev: _MergeNode | None = None
        for t, dp in stamped:
            node = _MergeNode(dp, src, t, t, mg.count(dp))
            if prev is not None:
                prev.next = node
                node.prev = prev
                push(prev, node)
            prev = node
    heapq.heapify(heap)

    tl = g.time_labels
    while len(mg.live) > target and heap:
        total, _, src, _, a, b = heapq.heappop(heap)
        if not (a.alive and b.alive and a.next is b):
            continue
        label = f"{mg.source[a.pid]}~[{tl[a.lo]},{tl[b.hi]}]"
        dp = mg.new_predicate(label, mg.source[a.pid], (a.lo, b.hi), stamp=None)
        mg.buckets[dp] = mg.buckets.pop(a.pid) + mg.buckets.pop(b.pid)
        mg.live.discard(a.pid)
        mg.live.discard(b.pid)
        a.alive = b.alive = False
        node = _MergeNode(dp, src, a.lo, b.hi, total)
        node.prev = a.prev
        node.next = b.next
        if node.prev is not None:
            node.prev.next = node
            push(node.prev, node)
        if node.next is not None:
            node.next.prev = node
            push(node, node.next)
        report.merges_applied += 1
        report.merge_trace.append(f"{mg.labels[a.pid]} + {mg.labels[b.pid]} -> {label}")
    if len(mg.live) > target:
        if len(mg.live) == n_sources:
            report.notes.append("fully merged: one predicate per source")
        else:
            report.warnings.append(
                f"no merge candidates left at {len(mg.live)} predicates (target {target:g})"
            )
    return _finish(mg, report)


# ---------------------------------------------------------------------------
# lineage persistence
# ---------------------------------------------------------------------------

def save_lineage(
    g: TemporalGraph, lineage: dict[int, LineageEntry], path: str | Path
) -> None:
    """Write the lineage sidecar: derived, source, begin, end[, stamp]."""
    with open(path, "w", encoding="utf-8") as fh:
        for pid in sorted(lineage):
            ent = lineage[pid]
            row = [
                g.predicate_labels[pid],
                ent.source,
                g.time_labels[ent.begin],
                g.time_labels[ent.end],
            ]
            if ent.stamp is not None:
                row.append(g.time_labels[ent.stamp])
            fh.write("\t".join(row) + "\n")


def load_lineage(g: TemporalGraph, path: str | Path) -> dict[int, LineageEntry]:
    """Read a lineage sidecar back against the graph it was written for."""
    pred_id = {label: i for i, label in enumerate(g.predicate_labels)}
    time_id = {label: i for i, label in enumerate(g.time_labels)}
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    lineage: dict[int, LineageEntry] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) not in (4, 5):
            raise DataError(f"{path}:{lineno}: expected 4 or 5 columns")
        derived, source, b_lab, e_lab = parts[:4]
        if derived not in pred_id:
            raise DataError(f"{path}:{lineno}: unknown predicate {derived!r}")
        if b_lab not in time_id or e_lab not in time_id:
            raise DataError(f"{path}:{lineno}: unknown timestamp in {line!r}")
        stamp = None
        if len(parts) == 5 and parts[4]:
            if parts[4] not in time_id:
                raise DataError(f"{path}:{lineno}: unknown stamp {parts[4]!r}")
            stamp = time_id[parts[4]]
        lineage[pred_id[derived]] = LineageEntry(
            source=source, begin=time_id[b_lab], end=time_id[e_lab], stamp=stamp
        )
    return lineage
