"""Discrete Bayesian-network core.

Graph and table types (:class:`Variable`, :class:`Dag`, :class:`Cpt`,
:class:`BayesNet`, :class:`Dataset`, :class:`PriorSpec`, :class:`JointTable`),
Dirichlet-smoothed parameter estimation, forward sampling, projection of a
joint distribution onto a DAG, and KL divergence between networks.

Conventions used throughout the package:

* variable ids are dense ``0..N-1`` and index every per-variable sequence;
* a CPT is stored as an ``(arity, n_configs)`` array whose column ``j`` is the
  distribution of the node given the j-th parent configuration;
* parent configurations are mixed-radix encoded with parents listed in
  ascending id order and the first listed parent as the most significant
  digit (C order, so ``numpy.reshape`` round-trips the encoding).
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

__all__ = [
    "CycleError",
    "InfiniteDivergenceError",
    "Variable",
    "Dag",
    "Cpt",
    "BayesNet",
    "Dataset",
    "PriorSpec",
    "JointTable",
    "KlResult",
    "binary_variables",
    "config_count",
    "config_strides",
    "topological_order",
    "map_parameters",
    "joint_probability",
    "sample_uniform_parameters",
    "sample_records",
    "joint_table",
    "project",
    "kl_divergence",
    "independent_in_joint",
    "independent_by_column_equality",
]

MAX_JOINT_CELLS = 1 << 22
EXACT_KL_MAX_CELLS = 1 << 20


class CycleError(ValueError):
    """An edge set admits no topological order."""


class InfiniteDivergenceError(ValueError):
    """KL(p || q) diverges: q assigns probability 0 where p does not."""


@dataclass(frozen=True)
class Variable:
    """A discrete variable with states ``0..arity-1``."""

    id: int
    name: str
    arity: int

    def __post_init__(self) -> None:
        if self.arity < 2:
            raise ValueError(f"variable {self.name!r}: arity must be >= 2, got {self.arity}")


def binary_variables(n: int, prefix: str = "X") -> tuple[Variable, ...]:
    """n binary variables named ``X1..Xn`` with ids ``0..n-1``."""
    return tuple(Variable(i, f"{prefix}{i + 1}", 2) for i in range(n))


def _check_variables(variables: Sequence[Variable]) -> None:
    ids = [v.id for v in variables]
    if ids != list(range(len(variables))):
        raise ValueError(f"variable ids must be dense 0..{len(variables) - 1}, got {ids}")
    names = {v.name for v in variables}
    if len(names) != len(variables):
        raise ValueError("variable names must be unique")


def config_strides(arities: Sequence[int]) -> np.ndarray:
    """Mixed-radix strides; position 0 is the most significant digit."""
    k = len(arities)
    strides = np.ones(k, dtype=np.int64)
    for i in range(k - 2, -1, -1):
        strides[i] = strides[i + 1] * arities[i + 1]
    return strides


def config_count(arities: Sequence[int]) -> int:
    return int(np.prod([int(a) for a in arities], dtype=np.int64)) if len(arities) else 1


def _kahn(n: int, edges: Iterable[tuple[int, int]]) -> tuple[int, ...]:
    indegree = [0] * n
    children: list[list[int]] = [[] for _ in range(n)]
    for a, b in edges:
        indegree[b] += 1
        children[a].append(b)
    heap = [i for i in range(n) if indegree[i] == 0]
    heapq.heapify(heap)
    order: list[int] = []
    while heap:
        i = heapq.heappop(heap)
        order.append(i)
        for c in children[i]:
            indegree[c] -= 1
            if indegree[c] == 0:
                heapq.heappush(heap, c)
    if len(order) != n:
        raise CycleError("edge set contains a directed cycle")
    return tuple(order)


class Dag:
    """Directed acyclic graph over a dense variable set.

    Immutable after construction; acyclicity, self-loops and edge bounds are
    validated eagerly.
    """

    __slots__ = ("variables", "edges", "_parents", "_children", "_topo")

    def __init__(self, variables: Sequence[Variable], edges: Iterable[tuple[int, int]]):
        self.variables = tuple(variables)
        _check_variables(self.variables)
        n = len(self.variables)
        edge_set = frozenset((int(a), int(b)) for a, b in edges)
        for a, b in edge_set:
            if a == b:
                raise ValueError(f"self-loop on node {a}")
            if not (0 <= a < n and 0 <= b < n):
                raise ValueError(f"edge ({a}, {b}) out of range for {n} variables")
        self.edges = edge_set
        parents: list[list[int]] = [[] for _ in range(n)]
        children: list[list[int]] = [[] for _ in range(n)]
        for a, b in edge_set:
            parents[b].append(a)
            children[a].append(b)
        self._parents = tuple(tuple(sorted(p)) for p in parents)
        self._children = tuple(tuple(sorted(c)) for c in children)
        self._topo = _kahn(n, edge_set)

    @property
    def n(self) -> int:
        return len(self.variables)

    def parents(self, i: int) -> tuple[int, ...]:
        return self._parents[i]

    def children(self, i: int) -> tuple[int, ...]:
        return self._children[i]

    def skeleton(self) -> frozenset[tuple[int, int]]:
        """Adjacent pairs as (low-id, high-id) tuples."""
        return frozenset((a, b) if a < b else (b, a) for a, b in self.edges)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Dag):
            return NotImplemented
        return self.variables == other.variables and self.edges == other.edges

    def __hash__(self) -> int:
        return hash((self.variables, self.edges))

    def __repr__(self) -> str:
        return f"Dag(n={self.n}, edges={sorted(self.edges)})"


def topological_order(dag: Dag) -> list[int]:
    """Kahn order with smallest-id tie-break; every edge goes left to right."""
    return list(dag._topo)


@dataclass(frozen=True)
class Cpt:
    """Conditional probability table of one node.

    ``table`` has shape ``(arity, n_configs)``; column ``j`` is the
    distribution of the node given the parent configuration encoded by ``j``
    under the mixed-radix convention for the stated parent order.
    """

    node: int
    parents: tuple[int, ...]
    table: np.ndarray

    def __post_init__(self) -> None:
        table = np.asarray(self.table, dtype=np.float64)
        if table.ndim != 2:
            raise ValueError("cpt table must be 2-D (arity x configs)")
        object.__setattr__(self, "table", table)
        object.__setattr__(self, "parents", tuple(int(p) for p in self.parents))
        if np.any(table < -1e-12) or np.any(table > 1 + 1e-12):
            raise ValueError(f"cpt for node {self.node}: entries outside [0, 1]")
        colsums = table.sum(axis=0)
        if np.any(np.abs(colsums - 1.0) > 1e-9):
            worst = float(np.abs(colsums - 1.0).max())
            raise ValueError(f"cpt for node {self.node}: columns must sum to 1 (off by {worst:g})")

    @property
    def arity(self) -> int:
        return self.table.shape[0]

    @property
    def n_configs(self) -> int:
        return self.table.shape[1]


class BayesNet:
    """A DAG plus one CPT per node."""

    __slots__ = ("dag", "cpts")

    def __init__(self, dag: Dag, cpts: Iterable[Cpt]):
        cpt_list = sorted(cpts, key=lambda c: c.node)
        if [c.node for c in cpt_list] != list(range(dag.n)):
            raise ValueError("exactly one cpt per node required")
        for cpt in cpt_list:
            want = dag.parents(cpt.node)
            if tuple(sorted(cpt.parents)) != want:
                raise ValueError(
                    f"cpt parents {cpt.parents} do not match dag parents {want} "
                    f"for node {cpt.node}"
                )
            var = dag.variables[cpt.node]
            if cpt.arity != var.arity:
                raise ValueError(f"cpt arity {cpt.arity} != variable arity {var.arity}")
            q = config_count([dag.variables[p].arity for p in cpt.parents])
            if cpt.n_configs != q:
                raise ValueError(f"cpt for node {cpt.node}: expected {q} columns, got {cpt.n_configs}")
        self.dag = dag
        self.cpts = tuple(cpt_list)

    @property
    def variables(self) -> tuple[Variable, ...]:
        return self.dag.variables

    def __repr__(self) -> str:
        return f"BayesNet(n={self.dag.n}, edges={sorted(self.dag.edges)})"


class Dataset:
    """Complete records of state indices over a variable set."""

    __slots__ = ("variables", "records")

    def __init__(self, variables: Sequence[Variable], records: np.ndarray):
        self.variables = tuple(variables)
        _check_variables(self.variables)
        arr = np.asarray(records, dtype=np.int64)
        if arr.size == 0:
            arr = arr.reshape(0, len(self.variables))
        if arr.ndim != 2 or arr.shape[1] != len(self.variables):
            raise ValueError(f"records must be (n, {len(self.variables)}), got {arr.shape}")
        if arr.size:
            if arr.min() < 0:
                raise ValueError("negative state index in records")
            arities = np.array([v.arity for v in self.variables], dtype=np.int64)
            if np.any(arr.max(axis=0) >= arities):
                raise ValueError("state index out of range for variable arity")
        self.records = arr

    @property
    def n_records(self) -> int:
        return self.records.shape[0]

    def __repr__(self) -> str:
        return f"Dataset(n_records={self.n_records}, n_vars={len(self.variables)})"


@dataclass(frozen=True)
class PriorSpec:
    """Dirichlet hyperparameter rule ``alpha(node, parents, config, state)``.

    ``constant`` is set when the rule is a constant function, enabling
    vectorized estimation paths.
    """

    alpha: Callable[[int, tuple[int, ...], int, int], float]
    constant: float | None = None

    @classmethod
    def uniform(cls, value: float) -> "PriorSpec":
        value = float(value)
        if value <= 0:
            raise ValueError("hyperparameters must be positive")
        return cls(alpha=lambda node, parents, config, state: value, constant=value)

    @classmethod
    def k2(cls) -> "PriorSpec":
        """The noninformative choice alpha = 1 for every parameter."""
        return cls.uniform(1.0)

    def alpha_column(self, node: int, parents: tuple[int, ...], config: int, arity: int) -> np.ndarray:
        if self.constant is not None:
            return np.full(arity, self.constant)
        return np.array([float(self.alpha(node, parents, config, k)) for k in range(arity)])


@dataclass(frozen=True)
class JointTable:
    """Dense joint distribution; axis ``i`` ranges over variable ``i``'s states."""

    variables: tuple[Variable, ...]
    probabilities: np.ndarray

    def __post_init__(self) -> None:
        _check_variables(self.variables)
        probs = np.asarray(self.probabilities, dtype=np.float64)
        shape = tuple(v.arity for v in self.variables)
        if probs.shape != shape:
            probs = probs.reshape(shape)
        if probs.size > MAX_JOINT_CELLS:
            raise ValueError(f"joint too large to materialize ({probs.size} cells)")
        if np.any(probs < -1e-12):
            raise ValueError("joint probabilities must be nonnegative")
        if abs(float(probs.sum()) - 1.0) > 1e-9:
            raise ValueError(f"joint must sum to 1, got {float(probs.sum())!r}")
        object.__setattr__(self, "probabilities", probs)

    @property
    def n_cells(self) -> int:
        return self.probabilities.size


def _parent_configs(records: np.ndarray, parents: Sequence[int], arities: Sequence[int]) -> np.ndarray:
    """Mixed-radix config index of each record's parent states."""
    if not parents:
        return np.zeros(records.shape[0], dtype=np.int64)
    strides = config_strides([arities[p] for p in parents])
    return records[:, list(parents)] @ strides


def map_parameters(dag: Dag, data: Dataset, priors: PriorSpec | None = None) -> BayesNet:
    """Smoothed parameter estimates (alpha + N) / (alpha_total + N_total).

    Unobserved parent configurations reduce to the normalized prior, so every
    column is well defined.
    """
    if data.variables != dag.variables:
        raise ValueError("dataset variables do not match dag variables")
    priors = priors if priors is not None else PriorSpec.k2()
    arities = [v.arity for v in dag.variables]
    cpts = []
    for v in dag.variables:
        ps = dag.parents(v.id)
        r = v.arity
        q = config_count([arities[p] for p in ps])
        configs = _parent_configs(data.records, ps, arities)
        counts = np.bincount(configs * r + data.records[:, v.id], minlength=q * r)
        counts = counts.reshape(q, r).astype(np.float64)
        if priors.constant is not None:
            a = priors.constant
            table = (a + counts) / (a * r + counts.sum(axis=1, keepdims=True))
        else:
            alphas = np.array([priors.alpha_column(v.id, ps, j, r) for j in range(q)])
            table = (alphas + counts) / (alphas.sum(axis=1, keepdims=True) + counts.sum(axis=1, keepdims=True))
        cpts.append(Cpt(v.id, ps, table.T))
    return BayesNet(dag, cpts)


def joint_probability(bn: BayesNet, assignment: Sequence[int]) -> float:
    """Chain-rule probability of one full assignment."""
    states = np.asarray(assignment, dtype=np.int64)
    if states.shape != (bn.dag.n,):
        raise ValueError(f"assignment must cover all {bn.dag.n} variables")
    arities = [v.arity for v in bn.variables]
    p = 1.0
    for cpt in bn.cpts:
        if cpt.parents:
            strides = config_strides([arities[q] for q in cpt.parents])
            config = int(states[list(cpt.parents)] @ strides)
        else:
            config = 0
        p *= float(cpt.table[states[cpt.node], config])
    return p


def sample_uniform_parameters(dag: Dag, rng: np.random.Generator) -> BayesNet:
    """Each CPT column drawn uniformly from the probability simplex.

    Uses normalized independent unit-exponential draws, the standard
    Dirichlet(1, ..., 1) construction.
    """
    arities = [v.arity for v in dag.variables]
    cpts = []
    for v in dag.variables:
        ps = dag.parents(v.id)
        q = config_count([arities[p] for p in ps])
        draws = rng.standard_exponential((v.arity, q))
        cpts.append(Cpt(v.id, ps, draws / draws.sum(axis=0)))
    return BayesNet(dag, cpts)


def sample_records(bn: BayesNet, n: int, rng: np.random.Generator) -> Dataset:
    """n i.i.d. records via forward sampling in topological order."""
    if n < 0:
        raise ValueError("record count must be >= 0")
    n_vars = bn.dag.n
    arities = [v.arity for v in bn.variables]
    records = np.zeros((n, n_vars), dtype=np.int64)
    if n:
        for i in topological_order(bn.dag):
            cpt = bn.cpts[i]
            configs = _parent_configs(records, cpt.parents, arities)
            cum = np.cumsum(cpt.table[:, configs], axis=0)
            u = rng.random(n)
            records[:, i] = np.minimum((cum <= u).sum(axis=0), arities[i] - 1)
    return Dataset(bn.variables, records)


def joint_table(bn: BayesNet) -> JointTable:
    """Materialize the full joint of a network as a dense table."""
    arities = [v.arity for v in bn.variables]
    n_cells = config_count(arities)
    if n_cells > MAX_JOINT_CELLS:
        raise ValueError(f"joint too large to materialize ({n_cells} cells)")
    probs = np.ones(tuple(arities), dtype=np.float64)
    n_vars = bn.dag.n
    for cpt in bn.cpts:
        family = sorted(cpt.parents + (cpt.node,))
        # (parents ascending ..., node) axes, then node moved to its family slot
        factor = cpt.table.T.reshape(tuple(arities[p] for p in cpt.parents) + (cpt.arity,))
        factor = np.moveaxis(factor, -1, family.index(cpt.node))
        shape = [1] * n_vars
        for f in family:
            shape[f] = arities[f]
        probs = probs * factor.reshape(shape)
    return JointTable(bn.variables, probs)


def project(joint: JointTable, dag: Dag) -> BayesNet:
    """Re-express a joint through a DAG by installing its exact conditionals.

    Parent configurations with probability 0 get a uniform column; they carry
    no weight in the projected joint.
    """
    if joint.variables != dag.variables:
        raise ValueError("joint and dag must share variables")
    arities = [v.arity for v in dag.variables]
    n_vars = dag.n
    cpts = []
    for v in dag.variables:
        ps = dag.parents(v.id)
        family = sorted(ps + (v.id,))
        drop = tuple(i for i in range(n_vars) if i not in family)
        marg = joint.probabilities.sum(axis=drop) if drop else joint.probabilities
        # axes of marg follow ascending family ids; put the node axis last
        marg = np.moveaxis(marg, family.index(v.id), -1)
        q = config_count([arities[p] for p in ps])
        flat = marg.reshape(q, v.arity)
        totals = flat.sum(axis=1, keepdims=True)
        with np.errstate(invalid="ignore", divide="ignore"):
            table = np.where(totals > 0, flat / np.where(totals > 0, totals, 1.0), 1.0 / v.arity)
        cpts.append(Cpt(v.id, ps, table.T))
    return BayesNet(dag, cpts)


def _log_joint_records(bn: BayesNet, records: np.ndarray) -> np.ndarray:
    """Log joint probability of each record; raises if any factor is 0."""
    arities = [v.arity for v in bn.variables]
    total = np.zeros(records.shape[0], dtype=np.float64)
    for cpt in bn.cpts:
        configs = _parent_configs(records, cpt.parents, arities)
        probs = cpt.table[records[:, cpt.node], configs]
        if np.any(probs <= 0.0):
            raise InfiniteDivergenceError("network assigns probability 0 to a sampled record")
        total += np.log(probs)
    return total


@dataclass(frozen=True)
class KlResult:
    """KL(true || learned); ``stderr`` is set for Monte Carlo estimates."""

    value: float
    stderr: float | None
    method: str


def kl_divergence(
    true_bn: BayesNet,
    learned_bn: BayesNet,
    method: str = "auto",
    samples: int = 100_000,
    rng: np.random.Generator | None = None,
) -> KlResult:
    """KL(P_true || P_learned) in nats.

    ``method`` is ``"exact"`` (full enumeration, joints up to 2**20 cells),
    ``"mc"`` (forward-sampling estimate with a standard error), or ``"auto"``
    which picks exact whenever enumeration is feasible.
    """
    if true_bn.variables != learned_bn.variables:
        raise ValueError("networks must share variables")
    n_cells = config_count([v.arity for v in true_bn.variables])
    if method == "auto":
        method = "exact" if n_cells <= EXACT_KL_MAX_CELLS else "mc"
    if method == "exact":
        if n_cells > EXACT_KL_MAX_CELLS:
            raise ValueError(f"exact KL limited to {EXACT_KL_MAX_CELLS} joint cells, got {n_cells}")
        p = joint_table(true_bn).probabilities.ravel()
        q = joint_table(learned_bn).probabilities.ravel()
        support = p > 0
        if np.any(q[support] == 0):
            raise InfiniteDivergenceError("learned joint is 0 on the true support")
        ps, qs = p[support], q[support]
        return KlResult(float(np.sum(ps * (np.log(ps) - np.log(qs)))), None, "exact")
    if method == "mc":
        if rng is None:
            raise ValueError("monte-carlo KL requires an rng")
        if samples < 2:
            raise ValueError("monte-carlo KL requires at least 2 samples")
        draws = sample_records(true_bn, samples, rng).records
        diffs = _log_joint_records(true_bn, draws) - _log_joint_records(learned_bn, draws)
        stderr = float(diffs.std(ddof=1) / math.sqrt(samples))
        return KlResult(float(diffs.mean()), stderr, "mc")
    raise ValueError(f"unknown KL method {method!r}")


def _xyz_slices(joint: JointTable, x: int, y: int, z: Sequence[int]) -> np.ndarray:
    """Marginal of (x, y, z) reshaped to (r_x, r_y, n_z_configs)."""
    z = list(z)
    keep = {x, y, *z}
    if len(keep) != 2 + len(z):
        raise ValueError("x, y, z must be distinct")
    arities = [v.arity for v in joint.variables]
    drop = tuple(i for i in range(len(arities)) if i not in keep)
    marg = joint.probabilities.sum(axis=drop) if drop else joint.probabilities
    family = sorted(keep)
    marg = np.moveaxis(marg, (family.index(x), family.index(y)), (0, 1))
    # remaining axes are the z variables in ascending id order
    return marg.reshape(arities[x], arities[y], -1)


def independent_in_joint(joint: JointTable, x: int, y: int, z: Sequence[int], tol: float = 1e-9) -> bool:
    """Exact conditional independence via the factorization test.

    True iff P(x, y | z) = P(x | z) P(y | z) within ``tol`` for every z
    configuration of positive probability.
    """
    cells = _xyz_slices(joint, x, y, z)
    for j in range(cells.shape[2]):
        block = cells[:, :, j]
        pz = float(block.sum())
        if pz <= 0:
            continue
        pxy = block / pz
        expected = np.outer(pxy.sum(axis=1), pxy.sum(axis=0))
        if float(np.abs(pxy - expected).max()) > tol:
            return False
    return True


def independent_by_column_equality(
    joint: JointTable, x: int, y: int, z: Sequence[int], tol: float = 1e-9
) -> bool:
    """Exact conditional independence via column equality.

    True iff P(y | z, x) does not depend on x, comparing conditionals across
    all x states of positive probability within each z configuration.
    """
    cells = _xyz_slices(joint, x, y, z)
    for j in range(cells.shape[2]):
        block = cells[:, :, j]
        px = block.sum(axis=1)
        live = np.nonzero(px > 0)[0]
        if live.size <= 1:
            continue
        cols = block[live] / px[live, None]
        if float(np.abs(cols - cols[0]).max()) > tol:
            return False
    return True
