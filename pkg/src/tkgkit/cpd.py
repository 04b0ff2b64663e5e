"""Kernel change-point detection on multivariate time series.

Signals are (num samples, num features) arrays.  Segment homogeneity is the
kernelized mean-change cost under an RBF kernel: for samples a..b-1,

    cost(a, b) = (b - a) - (1 / (b - a)) * sum_{i,j in [a,b)} k(x_i, x_j)

which is zero for constant segments and grows with within-segment spread.
Breakpoints are estimated bottom-up: start from a fine grid, repeatedly merge
the pair of adjacent segments whose removal raises total cost the least, and
stop when the next merge would push total cost past the penalty threshold.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


def normalize_rows(signal: np.ndarray) -> np.ndarray:
    """Scale each row to unit L2 norm; all-zero rows are left untouched."""
    signal = np.asarray(signal, dtype=np.float64)
    norms = np.linalg.norm(signal, axis=1, keepdims=True)
    safe = np.where(norms == 0.0, 1.0, norms)
    return signal / safe


def rbf_kernel(x1: np.ndarray, x2: np.ndarray, gamma: float) -> float:
    """exp(-gamma * ||x1 - x2||^2)."""
    a = np.asarray(x1, dtype=np.float64)
    b = np.asarray(x2, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    diff = a - b
    return float(np.exp(-gamma * float(diff @ diff)))


def median_heuristic_gamma(signal: np.ndarray, max_pairs: int = 10000) -> float:
    """1 / median pairwise squared distance, from at most ``max_pairs`` pairs.

    Pairs are taken deterministically by striding the full (i < j) pair list.
    Falls back to 1.0 when the median distance is zero (constant signal) or
    there are fewer than two samples.
    """
    x = np.asarray(signal, dtype=np.float64)
    n = x.shape[0]
    if n < 2:
        return 1.0
    total = n * (n - 1) // 2
    stride = -(-total // max_pairs)
    dists = []
    flat = 0
    for i in range(n - 1):
        row = x[i + 1 :] - x[i]
        sq = np.einsum("ij,ij->i", row, row)
        take = np.arange((-flat) % stride, sq.shape[0], stride)
        if take.size:
            dists.append(sq[take])
        flat += sq.shape[0]
    all_d = np.concatenate(dists) if dists else np.zeros(0)
    if all_d.size == 0:
        return 1.0
    med = float(np.median(all_d))
    if med <= 0.0 or not math.isfinite(med):
        return 1.0
    return 1.0 / med


@dataclass
class CpdConfig:
    """Detection knobs: stop threshold, grid geometry, optional bandwidth.

    ``gamma=None`` selects the per-signal median heuristic.
    """

    epsilon: float = 10.0
    min_size: int = 1
    jump: int = 1
    gamma: float | None = None

    def validate(self) -> None:
        if self.epsilon <= 0:
            raise ValueError("epsilon must be > 0")
        if self.min_size < 1:
            raise ValueError("min_size must be >= 1")
        if self.jump < 1:
            raise ValueError("jump must be >= 1")
        if self.gamma is not None and self.gamma <= 0:
            raise ValueError("gamma must be > 0 when given")


@dataclass
class Segmentation:
    """Result of one detection run.

    ``breakpoints`` are the end indices of each segment, excluding 0 and
    including ``num_samples``; interior values are the change points.
    """

    breakpoints: list[int]
    num_samples: int
    total_cost: float
    gamma: float
    degenerate: bool = False
    warnings: list[str] = field(default_factory=list)

    @property
    def change_points(self) -> list[int]:
        return self.breakpoints[:-1]


class _GramCosts:
    """Segment costs from a precomputed Gram matrix via 2D prefix sums."""

    def __init__(self, signal: np.ndarray, gamma: float):
        x = np.asarray(signal, dtype=np.float64)
        sq = np.einsum("ij,ij->i", x, x)
        d2 = sq[:, None] + sq[None, :] - 2.0 * (x @ x.T)
        np.maximum(d2, 0.0, out=d2)
        gram = np.exp(-gamma * d2)
        n = x.shape[0]
        self._prefix = np.zeros((n + 1, n + 1))
        self._prefix[1:, 1:] = gram.cumsum(axis=0).cumsum(axis=1)

    def block_sum(self, a: int, b: int) -> float:
        p = self._prefix
        return float(p[b, b] - 2 * p[b, a] + p[a, a])

    def cost(self, a: int, b: int) -> float:
        length = b - a
        if length <= 0:
            raise ValueError(f"empty segment [{a}, {b})")
        return length - self.block_sum(a, b) / length


def segment_cost(signal: np.ndarray, a: int, b: int, gamma: float) -> float:
    """Kernelized mean-change cost of samples a..b-1 (standalone helper)."""
    x = np.asarray(signal, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    return _GramCosts(x[a:b], gamma).cost(0, b - a)


def bottom_up(
    signal: np.ndarray,
    penalty: float,
    min_size: int = 1,
    jump: int = 1,
    gamma: float | None = None,
) -> Segmentation:
    """Bottom-up kernel change-point detection.

    The initial grid places candidate breakpoints at multiples of ``jump``,
    keeping every segment at least ``min_size`` long.  Adjacent segments are
    merged smallest-gain-first (gain = merged cost minus the two parts'
    costs; ties broken on the smaller left boundary) until accepting the next
    merge would make the total segmentation cost exceed ``penalty``.
    """
    x = np.asarray(signal, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    n = x.shape[0]
    if n == 0:
        raise ValueError("empty signal")
    if min_size < 1:
        raise ValueError("min_size must be >= 1")
    if jump < 1:
        raise ValueError("jump must be >= 1")
    if penalty < 0:
        raise ValueError("penalty must be >= 0")

    warnings: list[str] = []
    if n < 2 * min_size:
        g = gamma if gamma is not None else median_heuristic_gamma(x)
        costs = _GramCosts(x, g)
        return Segmentation(
            breakpoints=[n],
            num_samples=n,
            total_cost=costs.cost(0, n),
            gamma=g,
            degenerate=True,
            warnings=[f"signal too short to split ({n} < 2*min_size)"],
        )

    g = gamma if gamma is not None else median_heuristic_gamma(x)
    costs = _GramCosts(x, g)

    # all grid points at multiples of jump that leave min_size on each side
    bounds = [0]
    for k in range(jump, n, jump):
        if k - bounds[-1] >= min_size and n - k >= min_size:
            bounds.append(k)
    bounds.append(n)

    seg_cost = {
        (bounds[i], bounds[i + 1]): costs.cost(bounds[i], bounds[i + 1])
        for i in range(len(bounds) - 1)
    }
    total = sum(seg_cost.values())

    while len(bounds) > 2:
        best_gain = math.inf
        best_i = -1
        for i in range(1, len(bounds) - 1):
            a, m, b = bounds[i - 1], bounds[i], bounds[i + 1]
            gain = costs.cost(a, b) - seg_cost[(a, m)] - seg_cost[(m, b)]
            if gain < best_gain:
                best_gain = gain
                best_i = i
        if total + best_gain > penalty:
            break
        a, m, b = bounds[best_i - 1], bounds[best_i], bounds[best_i + 1]
        del seg_cost[(a, m)], seg_cost[(m, b)]
        seg_cost[(a, b)] = costs.cost(a, b)
        total += best_gain
        del bounds[best_i]

    return Segmentation(
        breakpoints=bounds[1:],
        num_samples=n,
        total_cost=total,
        gamma=g,
        warnings=warnings,
    )
