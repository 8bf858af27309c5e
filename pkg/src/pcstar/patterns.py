"""Partially directed graphs and Markov-equivalence machinery.

A :class:`Pattern` is a mixed graph (directed plus undirected edges) with no
bi-directed arcs and an acyclic directed part.  This module builds the
pattern of a DAG (compelled arcs via v-structures plus orientation-rule
closure), extends patterns back to member DAGs, and decides d-separation.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .network import CycleError, Dag, Variable, _check_variables, _kahn

__all__ = [
    "NotExtendableError",
    "Pattern",
    "pattern_of_dag",
    "orient_with_sepsets",
    "consistent_extension",
    "extend_with_fallback",
    "d_separated",
]

PairSet = frozenset[tuple[int, int]]


class NotExtendableError(RuntimeError):
    """No DAG extends the pattern without new v-structures or cycles."""


def _norm_pair(a: int, b: int) -> tuple[int, int]:
    return (a, b) if a < b else (b, a)


@dataclass(frozen=True)
class Pattern:
    """A mixed graph over a dense variable set.

    ``directed`` holds (parent, child) arcs, ``undirected`` holds
    (low-id, high-id) pairs.  Construction rejects bi-directed arcs, pairs
    that are both directed and undirected, and directed cycles.
    """

    variables: tuple[Variable, ...]
    directed: PairSet
    undirected: PairSet

    def __init__(
        self,
        variables: Sequence[Variable],
        directed: Iterable[tuple[int, int]],
        undirected: Iterable[tuple[int, int]],
    ):
        variables = tuple(variables)
        _check_variables(variables)
        n = len(variables)
        dir_set = frozenset((int(a), int(b)) for a, b in directed)
        und_set = frozenset(_norm_pair(int(a), int(b)) for a, b in undirected)
        for a, b in dir_set | und_set:
            if a == b:
                raise ValueError(f"self-loop on node {a}")
            if not (0 <= a < n and 0 <= b < n):
                raise ValueError(f"edge ({a}, {b}) out of range")
        dir_pairs = {_norm_pair(a, b) for a, b in dir_set}
        if len(dir_pairs) != len(dir_set):
            raise ValueError("bi-directed arcs are not allowed")
        if dir_pairs & und_set:
            raise ValueError("an edge cannot be both directed and undirected")
        _kahn(n, dir_set)  # raises CycleError on a directed cycle
        object.__setattr__(self, "variables", variables)
        object.__setattr__(self, "directed", dir_set)
        object.__setattr__(self, "undirected", und_set)

    @property
    def n(self) -> int:
        return len(self.variables)

    def skeleton(self) -> PairSet:
        return frozenset({_norm_pair(a, b) for a, b in self.directed} | self.undirected)

    def adjacency(self) -> list[set[int]]:
        adj: list[set[int]] = [set() for _ in range(self.n)]
        for a, b in self.skeleton():
            adj[a].add(b)
            adj[b].add(a)
        return adj

    def v_structures(self) -> frozenset[tuple[int, int, int]]:
        """Colliders a -> c <- b with a, b nonadjacent, as (min, c, max)."""
        parents: list[set[int]] = [set() for _ in range(self.n)]
        for a, b in self.directed:
            parents[b].add(a)
        skel = self.skeleton()
        out = set()
        for c in range(self.n):
            ps = sorted(parents[c])
            for i in range(len(ps)):
                for j in range(i + 1, len(ps)):
                    if _norm_pair(ps[i], ps[j]) not in skel:
                        out.add((ps[i], c, ps[j]))
        return frozenset(out)

    def is_fully_directed(self) -> bool:
        return not self.undirected

    def __repr__(self) -> str:
        return (
            f"Pattern(n={self.n}, directed={sorted(self.directed)}, "
            f"undirected={sorted(self.undirected)})"
        )


class _MixedGraph:
    """Mutable working graph for orientation passes."""

    def __init__(self, n: int, skeleton: Iterable[tuple[int, int]]):
        self.n = n
        self.adj: list[set[int]] = [set() for _ in range(n)]
        self.und: set[tuple[int, int]] = set()
        self.parents: list[set[int]] = [set() for _ in range(n)]
        self.children: list[set[int]] = [set() for _ in range(n)]
        for a, b in skeleton:
            pair = _norm_pair(a, b)
            self.adj[a].add(b)
            self.adj[b].add(a)
            self.und.add(pair)

    def is_undirected(self, a: int, b: int) -> bool:
        return _norm_pair(a, b) in self.und

    def has_arc(self, a: int, b: int) -> bool:
        return b in self.children[a]

    def orient(self, a: int, b: int) -> None:
        self.und.discard(_norm_pair(a, b))
        self.children[a].add(b)
        self.parents[b].add(a)

    def has_directed_path(self, src: int, dst: int) -> bool:
        if src == dst:
            return True
        stack = [src]
        seen = {src}
        while stack:
            node = stack.pop()
            for child in self.children[node]:
                if child == dst:
                    return True
                if child not in seen:
                    seen.add(child)
                    stack.append(child)
        return False

    def can_orient(self, a: int, b: int) -> bool:
        """a -> b is allowed: edge currently undirected, no cycle results."""
        return self.is_undirected(a, b) and not self.has_directed_path(b, a)

    def to_pattern(self, variables: Sequence[Variable]) -> Pattern:
        directed = {(a, b) for a in range(self.n) for b in self.children[a]}
        return Pattern(variables, directed, set(self.und))


def _unshielded_triples(adj: Sequence[set[int]]) -> list[tuple[int, int, int]]:
    """Triples (a, c, b) with a - c - b, a < b, a and b nonadjacent.

    Sorted by the ascending id triple so visitation order is deterministic.
    """
    triples = []
    for c in range(len(adj)):
        nbrs = sorted(adj[c])
        for i in range(len(nbrs)):
            for j in range(i + 1, len(nbrs)):
                a, b = nbrs[i], nbrs[j]
                if b not in adj[a]:
                    triples.append((a, c, b))
    triples.sort(key=lambda t: tuple(sorted(t)))
    return triples


def _apply_colliders(g: _MixedGraph, triples: Iterable[tuple[int, int, int]]) -> None:
    """Orient a -> c <- b for each triple, skipping any that would create a
    bi-directed arc or a directed cycle (first orientation wins)."""
    for a, c, b in triples:
        if g.has_arc(c, a) or g.has_arc(c, b):
            continue
        need = [(x, c) for x in (a, b) if not g.has_arc(x, c)]
        if any(g.has_directed_path(c, x) for x, _ in need):
            continue
        for x, _ in need:
            g.orient(x, c)


def _meek_r1(g: _MixedGraph) -> bool:
    changed = False
    for b in range(g.n):
        for a in sorted(g.parents[b]):
            for c in sorted(g.adj[b]):
                if c != a and c not in g.adj[a] and g.can_orient(b, c):
                    g.orient(b, c)
                    changed = True
    return changed


def _meek_r2(g: _MixedGraph) -> bool:
    changed = False
    for a, b in sorted(g.und):
        for u, w in ((a, b), (b, a)):
            if any(g.has_arc(u, m) and g.has_arc(m, w) for m in sorted(g.adj[u])):
                if g.can_orient(u, w):
                    g.orient(u, w)
                    changed = True
                break
    return changed


def _meek_r3(g: _MixedGraph) -> bool:
    changed = False
    for a, b in sorted(g.und):
        for u, w in ((a, b), (b, a)):
            spokes = [m for m in sorted(g.adj[u]) if g.is_undirected(u, m) and g.has_arc(m, w)]
            hit = False
            for i in range(len(spokes)):
                for j in range(i + 1, len(spokes)):
                    if spokes[j] not in g.adj[spokes[i]]:
                        hit = True
                        break
                if hit:
                    break
            if hit and g.can_orient(u, w):
                g.orient(u, w)
                changed = True
                break
    return changed


def _meek_closure(g: _MixedGraph) -> None:
    while True:
        changed = _meek_r1(g)
        changed |= _meek_r2(g)
        changed |= _meek_r3(g)
        if not changed:
            return


def pattern_of_dag(dag: Dag) -> Pattern:
    """The pattern (essential graph) of a DAG.

    Keeps the skeleton, directs exactly the compelled edges: v-structure arcs
    plus their closure under the orientation rules.
    """
    skel = dag.skeleton()
    g = _MixedGraph(dag.n, skel)
    colliders = []
    for c in range(dag.n):
        ps = dag.parents(c)
        for i in range(len(ps)):
            for j in range(i + 1, len(ps)):
                if _norm_pair(ps[i], ps[j]) not in skel:
                    colliders.append((ps[i], c, ps[j]))
    colliders.sort(key=lambda t: tuple(sorted(t)))
    _apply_colliders(g, colliders)
    _meek_closure(g)
    return g.to_pattern(dag.variables)


def orient_with_sepsets(
    variables: Sequence[Variable],
    skeleton: Iterable[tuple[int, int]],
    sepsets: Mapping[tuple[int, int], Sequence[int]],
) -> Pattern:
    """Orient a learned skeleton from separating sets.

    Unshielded triples a - c - b become colliders when c is missing from the
    recorded separating set of (a, b); orientation-rule closure follows.  All
    orientations are guarded against bi-directed arcs and directed cycles,
    first orientation winning, so the output is a valid pattern for any
    tester, however inconsistent.
    """
    g = _MixedGraph(len(variables), skeleton)
    colliders = [
        (a, c, b)
        for a, c, b in _unshielded_triples(g.adj)
        if c not in sepsets.get(_norm_pair(a, b), ())
    ]
    _apply_colliders(g, colliders)
    _meek_closure(g)
    return g.to_pattern(variables)


def consistent_extension(pattern: Pattern, rng: np.random.Generator) -> Dag:
    """Direct every undirected edge without new v-structures or cycles.

    Repeatedly removes an admissible sink (no outgoing arcs; undirected
    neighbors adjacent to all of its other neighbors), chosen uniformly at
    random, orienting its undirected edges inward.  Raises
    :class:`NotExtendableError` when the pattern admits no extension.
    """
    if pattern.is_fully_directed():
        return Dag(pattern.variables, pattern.directed)
    n = pattern.n
    und: list[set[int]] = [set() for _ in range(n)]
    for a, b in pattern.undirected:
        und[a].add(b)
        und[b].add(a)
    parents: list[set[int]] = [set() for _ in range(n)]
    children: list[set[int]] = [set() for _ in range(n)]
    for a, b in pattern.directed:
        parents[b].add(a)
        children[a].add(b)
    alive = set(range(n))
    arcs = set(pattern.directed)

    def admissible(x: int) -> bool:
        if children[x] & alive:
            return False
        nbrs_und = und[x] & alive
        if not nbrs_und:
            return True
        others = (nbrs_und | (parents[x] & alive)) - {x}
        for y in nbrs_und:
            for w in others:
                if w != y and w not in und[y] and w not in parents[y] and y not in parents[w]:
                    return False
        return True

    while alive:
        sinks = [x for x in sorted(alive) if admissible(x)]
        if not sinks:
            raise NotExtendableError("pattern admits no consistent extension")
        x = sinks[int(rng.integers(len(sinks)))]
        for y in und[x] & alive:
            arcs.add((y, x))
        alive.remove(x)
    return Dag(pattern.variables, arcs)


def _force_extension(pattern: Pattern, rng: np.random.Generator) -> Dag:
    """Orient undirected edges one at a time in random order.

    Rejects orientations that create a directed cycle, prefers ones that
    create no v-structure absent from the pattern, and accepts a new
    v-structure only when both directions create one.
    """
    n = pattern.n
    adj = pattern.adjacency()
    original_v = pattern.v_structures()
    g = _MixedGraph(n, pattern.skeleton())
    for a, b in pattern.directed:
        g.orient(a, b)
    edges = sorted(pattern.undirected)
    order = rng.permutation(len(edges))

    def creates_new_v(u: int, w: int) -> bool:
        for other in g.parents[w]:
            if other != u and other not in adj[u]:
                if (_norm_pair(u, other)[0], w, _norm_pair(u, other)[1]) not in original_v:
                    return True
        return False

    for idx in order:
        a, b = edges[int(idx)]
        options = [(u, w) for u, w in ((a, b), (b, a)) if not g.has_directed_path(w, u)]
        if not options:
            raise AssertionError("both orientations cyclic on an acyclic graph")
        if len(options) == 2:
            quiet = [o for o in options if not creates_new_v(*o)]
            pool = quiet if quiet else options
            choice = pool[int(rng.integers(len(pool)))] if len(pool) == 2 else pool[0]
        else:
            choice = options[0]
        g.orient(*choice)
    arcs = {(a, b) for a in range(n) for b in g.children[a]}
    return Dag(pattern.variables, arcs)


def extend_with_fallback(pattern: Pattern, rng: np.random.Generator) -> tuple[Dag, bool]:
    """Consistent extension, falling back to forced orientation.

    Returns ``(dag, forced)``; ``forced`` is True when the pattern was not
    extendable and random cycle-free orientation was used instead.
    """
    try:
        return consistent_extension(pattern, rng), False
    except NotExtendableError:
        return _force_extension(pattern, rng), True


def d_separated(dag: Dag, x: int, y: int, z: Iterable[int]) -> bool:
    """Whether every path between x and y is blocked given z.

    Uses the ancestral moral graph: restrict to ancestors of {x, y} and z,
    marry co-parents, drop the conditioning nodes, and test connectivity.
    """
    z = frozenset(int(i) for i in z)
    if x == y:
        raise ValueError("x and y must differ")
    if x in z or y in z:
        raise ValueError("x and y must not be in the conditioning set")
    targets = {x, y, *z}
    ancestors: set[int] = set()
    stack = list(targets)
    while stack:
        node = stack.pop()
        if node in ancestors:
            continue
        ancestors.add(node)
        stack.extend(dag.parents(node))
    moral: dict[int, set[int]] = {i: set() for i in ancestors}
    for c in ancestors:
        ps = [p for p in dag.parents(c)]
        for p in ps:
            moral[p].add(c)
            moral[c].add(p)
        for i in range(len(ps)):
            for j in range(i + 1, len(ps)):
                moral[ps[i]].add(ps[j])
                moral[ps[j]].add(ps[i])
    stack = [x]
    seen = {x}
    while stack:
        node = stack.pop()
        for nbr in moral[node]:
            if nbr in z or nbr in seen:
                continue
            if nbr == y:
                return False
            seen.add(nbr)
            stack.append(nbr)
    return True
