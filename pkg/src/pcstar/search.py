"""The PC skeleton-and-orientation search with a pluggable independence test.

``tester="std"`` gives classical PC; ``tester="hybrid"`` swaps in the
smoothed-table test and nothing else, which is the starred variant.  A
callable tester ``(x, y, z) -> bool`` supports oracle-driven runs.

The search starts from the complete undirected graph and, for growing
conditioning-set sizes, removes an edge as soon as some subset of either
endpoint's adjacency renders the pair independent, recording that separating
set.  Truncation by the conditioning-size cap or the wall-clock budget is
reported through the ``stalled`` flag.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from itertools import combinations
from typing import Callable, Mapping, Sequence

import numpy as np

from .independence import hybrid_it, std_it
from .network import Dataset, PriorSpec, Variable
from .patterns import Pattern, orient_with_sepsets

__all__ = [
    "SepsetMap",
    "SearchConfig",
    "SkeletonResult",
    "SearchOutcome",
    "find_independence_graph",
    "orient_edges",
    "pc_search",
    "stall_cutoff",
]

SepsetMap = dict[tuple[int, int], tuple[int, ...]]

Tester = Callable[[int, int, tuple[int, ...]], bool]


@dataclass(frozen=True)
class SearchConfig:
    """Knobs for one search run.

    ``max_cond_size`` of None means no cap; ``time_budget`` is wall-clock
    seconds, None for unbounded.  ``tester`` is "std", "hybrid", or a
    callable ``(x, y, z) -> independent``.
    """

    alpha: float = 0.05
    max_cond_size: int | None = None
    time_budget: float | None = None
    tester: str | Tester = "std"
    priors: PriorSpec | None = None

    def __post_init__(self) -> None:
        if not (0 < self.alpha < 1):
            raise ValueError("alpha must be in (0, 1)")
        if self.max_cond_size is not None and self.max_cond_size < 0:
            raise ValueError("max_cond_size must be >= 0")
        if self.time_budget is not None and self.time_budget < 0:
            raise ValueError("time_budget must be >= 0")
        if isinstance(self.tester, str) and self.tester not in ("std", "hybrid"):
            raise ValueError(f"unknown tester {self.tester!r}")


@dataclass
class SkeletonResult:
    edges: set[tuple[int, int]]
    adjacency: dict[int, set[int]]
    sepsets: SepsetMap
    stalled: bool
    tests_performed: int


@dataclass(frozen=True)
class SearchOutcome:
    pattern: Pattern
    sepsets: SepsetMap
    stalled: bool
    elapsed: float
    tests_performed: int


def _make_tester(data: Dataset, cfg: SearchConfig) -> Tester:
    if callable(cfg.tester):
        return cfg.tester
    if cfg.tester == "std":
        return lambda x, y, z: std_it(x, y, z, data, cfg.alpha).independent
    priors = cfg.priors if cfg.priors is not None else PriorSpec.k2()
    return lambda x, y, z: hybrid_it(x, y, z, data, cfg.alpha, priors).independent


def _candidate_sets(a: int, b: int, size: int, adjacency: dict[int, set[int]]):
    """Size-``size`` subsets of Adj(a)\\{b} then Adj(b)\\{a}, deduplicated,
    in lexicographic order over ascending variable ids."""
    seen: set[tuple[int, ...]] = set()
    for u, v in ((a, b), (b, a)):
        nbrs = sorted(adjacency[u] - {v})
        if len(nbrs) < size:
            continue
        for combo in combinations(nbrs, size):
            if combo not in seen:
                seen.add(combo)
                yield combo


def find_independence_graph(data: Dataset, cfg: SearchConfig) -> SkeletonResult:
    """Level-wise skeleton search (edge removals only).

    Terminates when no variable has more adjacencies than the next
    conditioning-set size, or earlier when the cap or budget truncates the
    sweep (reported via ``stalled``).
    """
    n = len(data.variables)
    if n == 0:
        raise ValueError("dataset must have at least one variable")
    tester = _make_tester(data, cfg)
    adjacency: dict[int, set[int]] = {i: set(range(n)) - {i} for i in range(n)}
    edges = {(a, b) for a in range(n) for b in range(a + 1, n)}
    sepsets: SepsetMap = {}
    tests = 0
    start = time.monotonic()
    deadline = None if cfg.time_budget is None else start + cfg.time_budget

    def expired() -> bool:
        return deadline is not None and time.monotonic() >= deadline

    stalled = False
    size = 0
    while True:
        if expired():
            stalled = True
            break
        for a, b in sorted(edges):
            if b not in adjacency[a]:
                continue
            for zs in _candidate_sets(a, b, size, adjacency):
                if expired():
                    stalled = True
                    break
                tests += 1
                if tester(a, b, zs):
                    adjacency[a].discard(b)
                    adjacency[b].discard(a)
                    sepsets[(a, b)] = zs
                    break
            if stalled:
                break
        edges = {(a, b) for a, b in edges if b in adjacency[a]}
        if stalled:
            break
        size += 1
        max_degree = max((len(s) for s in adjacency.values()), default=0)
        if max_degree <= size:
            break
        if cfg.max_cond_size is not None and size > cfg.max_cond_size:
            stalled = True
            break
    return SkeletonResult(edges, adjacency, sepsets, stalled, tests)


def orient_edges(
    variables: Sequence[Variable],
    skeleton: set[tuple[int, int]],
    sepsets: Mapping[tuple[int, int], Sequence[int]],
) -> Pattern:
    """Collider detection from separating sets plus orientation-rule closure."""
    return orient_with_sepsets(variables, skeleton, sepsets)


def pc_search(data: Dataset, cfg: SearchConfig) -> SearchOutcome:
    """Skeleton search followed by edge orientation."""
    start = time.monotonic()
    skeleton = find_independence_graph(data, cfg)
    pattern = orient_edges(data.variables, skeleton.edges, skeleton.sepsets)
    elapsed = time.monotonic() - start
    return SearchOutcome(pattern, skeleton.sepsets, skeleton.stalled, elapsed, skeleton.tests_performed)


def stall_cutoff(times: Sequence[float]) -> float:
    """Cutoff mean + 5 sd over observed run times of the reference method."""
    if len(times) < 2:
        raise ValueError("stall cutoff undefined for fewer than 2 time samples")
    arr = np.asarray(times, dtype=np.float64)
    return float(arr.mean() + 5.0 * arr.std(ddof=1))
