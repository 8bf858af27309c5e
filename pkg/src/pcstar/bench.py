"""Synthetic-data experiment harness.

Each trial generates a random sparse network with uniform-simplex parameters,
samples records, learns with the configured methods, extends every learned
pattern to a member DAG, refits parameters on the same records, and scores
structural errors and KL divergence against the generating network.  Error
and KL deltas are reported relative to the smoothed-test searcher
("pcstar"), mirroring the benchmark table layout this harness reproduces.

Determinism: every stochastic step draws from a generator derived from
(master seed, trial index, stream), so trials are independent of execution
order and parallelism, and reruns reproduce all seed-driven content.  Wall
times (and anything derived from wall-clock budgets) are the only fields
that vary between runs; ``mask_times_csv`` / ``mask_times_jsonl`` normalize
them away for byte-level comparisons.
"""

from __future__ import annotations

import csv
import io
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from typing import Mapping, Sequence

import numpy as np
from scipy.special import ndtri

from .greedy import gtt_search
from .network import (
    BayesNet,
    Dag,
    Dataset,
    PriorSpec,
    Variable,
    config_count,
    kl_divergence,
    map_parameters,
    sample_records,
    sample_uniform_parameters,
)
from .patterns import Pattern, d_separated, extend_with_fallback, pattern_of_dag
from .search import SearchConfig, pc_search, stall_cutoff
from .serialize import atomic_write_text

__all__ = [
    "METHODS",
    "REFERENCE_METHOD",
    "REPORT_COLUMNS",
    "ALPHA_SWEEP_COLUMNS",
    "ExperimentConfig",
    "MethodOutcome",
    "TrialResult",
    "SummaryStats",
    "random_structure",
    "structural_errors",
    "delta_kl",
    "run_trial",
    "run_experiment",
    "summarize",
    "report_rows",
    "rows_to_csv",
    "write_report",
    "trials_to_jsonl",
    "write_trials",
    "mask_times_csv",
    "mask_times_jsonl",
    "stall_experiment",
    "alpha_sweep",
]

METHODS = ("pc", "pcstar", "gtt")
REFERENCE_METHOD = "pcstar"
Z_ONE_SIDED_99 = 2.326
CPT_CELL_CAP = 1 << 22

REPORT_COLUMNS = (
    "N",
    "N_r",
    "method",
    "mean_delta_adj",
    "ci_adj",
    "mean_delta_v",
    "ci_v",
    "mean_delta_kl_pct",
    "ci_kl",
    "stall_prob",
    "mean_time_s",
    "n_trials",
    "n_excluded",
)

ALPHA_SWEEP_COLUMNS = (
    "N",
    "N_r",
    "alpha",
    "mean_delta_kl_pct",
    "ci_kl",
    "mean_kl_pc",
    "mean_kl_pcstar",
    "stall_prob",
    "mean_time_s",
    "n_trials",
    "n_excluded",
)


@dataclass(frozen=True)
class ExperimentConfig:
    """One benchmark cell.

    ``budget_policy`` is "none" (unbounded searches), "fixed"
    (``budget_seconds`` for both searchers), or "tau" (two passes: pcstar
    first, then the other methods with the stall cutoff derived from pcstar's
    run times).  ``oracle`` swaps the perfect d-separation test into both
    searchers, for verification runs.  Cells with more than 20 nodes must opt
    in with ``long_run`` since exact KL enumeration is replaced by Monte
    Carlo and runtimes grow sharply.
    """

    n_nodes: int
    records: int
    trials: int
    max_parents: int = 5
    alpha: float = 0.05
    seed: int = 0
    methods: tuple[str, ...] = ("pc", "pcstar")
    budget_policy: str = "none"
    budget_seconds: float | None = None
    pcstar_guard_seconds: float = 120.0
    kl_mc_samples: int = 100_000
    long_run: bool = False
    oracle: bool = False

    def __post_init__(self) -> None:
        if self.n_nodes < 2:
            raise ValueError("n_nodes must be >= 2")
        if self.max_parents < 0:
            raise ValueError("max_parents must be >= 0")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if self.records < 0:
            raise ValueError("records must be >= 0")
        if not (0 < self.alpha < 1):
            raise ValueError("alpha must be in (0, 1)")
        methods = tuple(self.methods)
        unknown = set(methods) - set(METHODS)
        if unknown:
            raise ValueError(f"unknown methods {sorted(unknown)}")
        if REFERENCE_METHOD not in methods:
            raise ValueError(f"methods must include the reference {REFERENCE_METHOD!r}")
        object.__setattr__(self, "methods", methods)
        if self.budget_policy not in ("none", "fixed", "tau"):
            raise ValueError(f"unknown budget policy {self.budget_policy!r}")
        if self.budget_policy == "fixed" and self.budget_seconds is None:
            raise ValueError("fixed budget policy requires budget_seconds")
        if self.n_nodes > 20 and not self.long_run:
            raise ValueError("cells with more than 20 nodes require long_run=true")


@dataclass(frozen=True)
class MethodOutcome:
    adj_errors: int
    v_errors: int
    kl: float | None
    kl_stderr: float | None
    kl_excluded: str | None
    time_s: float
    stalled: bool
    tests: int | None
    fallback: bool


@dataclass(frozen=True)
class TrialResult:
    index: int
    seed: int
    methods: dict[str, MethodOutcome]


def _rng(*key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(tuple(int(k) for k in key)))


def random_structure(n: int, k: int, rng: np.random.Generator, arity: int = 2) -> Dag:
    """Random DAG with arcs from lower to higher index.

    Node i draws its parent count uniformly from {0, ..., min(i, k)} and its
    parents uniformly without replacement from its predecessors.
    """
    if n < 1:
        raise ValueError("need at least one node")
    if k < 0:
        raise ValueError("max parents must be >= 0")
    variables = tuple(Variable(i, f"X{i + 1}", arity) for i in range(n))
    edges = []
    for i in range(n):
        n_max = min(i, k)
        n_parents = int(rng.integers(0, n_max + 1))
        if n_parents:
            for p in rng.choice(i, size=n_parents, replace=False):
                edges.append((int(p), i))
    return Dag(variables, edges)


def _errors_vs_pattern(learned: Pattern, truth_pattern: Pattern) -> tuple[int, int]:
    adj = len(learned.skeleton() ^ truth_pattern.skeleton())
    v = len(learned.v_structures() ^ truth_pattern.v_structures())
    return adj, v


def structural_errors(learned: Pattern, truth: Dag) -> tuple[int, int]:
    """(adjacency errors, v-structure errors) as symmetric differences
    against the truth's pattern; (0, 0) iff the patterns agree exactly."""
    return _errors_vs_pattern(learned, pattern_of_dag(truth))


def delta_kl(kl_method: float, kl_star: float) -> float:
    """Percent increase of a method's KL over the reference's.

    Both zero gives 0; a zero reference with a positive method KL is marked
    infinite (excluded from means downstream).
    """
    if kl_method < 0 or kl_star < 0:
        raise ValueError("KL values must be nonnegative")
    if kl_star == 0.0:
        return 0.0 if kl_method == 0.0 else math.inf
    return (kl_method - kl_star) / kl_star * 100.0


def _fit_cells(dag: Dag) -> int:
    arities = [v.arity for v in dag.variables]
    return sum(
        arities[i] * config_count([arities[p] for p in dag.parents(i)]) for i in range(dag.n)
    )


def _learn(
    method: str,
    data: Dataset,
    cfg: ExperimentConfig,
    budget: float | None,
    truth: Dag,
) -> tuple[Pattern, float, bool, int | None]:
    if method == "gtt":
        start = time.monotonic()
        dag = gtt_search(data, PriorSpec.k2())
        return pattern_of_dag(dag), time.monotonic() - start, False, None
    if cfg.oracle:
        tester = lambda x, y, z: d_separated(truth, x, y, z)  # noqa: E731
    else:
        tester = "std" if method == "pc" else "hybrid"
    out = pc_search(
        data,
        SearchConfig(alpha=cfg.alpha, time_budget=budget, tester=tester, priors=PriorSpec.k2()),
    )
    return out.pattern, out.elapsed, out.stalled, out.tests_performed


def run_trial(
    cfg: ExperimentConfig,
    index: int,
    methods: Sequence[str] | None = None,
    budgets: Mapping[str, float | None] | None = None,
) -> TrialResult:
    """One trial: generate, sample, learn, extend, refit, score.

    Fully determined by (config seed, trial index) except for measured wall
    times and any truncation those times trigger through ``budgets``.
    """
    todo = tuple(m for m in METHODS if m in (tuple(methods) if methods is not None else cfg.methods))
    budgets = dict(budgets or {})
    gen = _rng(cfg.seed, index, 0)
    truth_dag = random_structure(cfg.n_nodes, cfg.max_parents, gen)
    truth_bn = sample_uniform_parameters(truth_dag, gen)
    data = sample_records(truth_bn, cfg.records, gen)
    truth_pattern = pattern_of_dag(truth_dag)
    outcomes: dict[str, MethodOutcome] = {}
    for method in todo:
        stream = METHODS.index(method)
        pattern, elapsed, stalled, tests = _learn(method, data, cfg, budgets.get(method), truth_dag)
        adj_errors, v_errors = _errors_vs_pattern(pattern, truth_pattern)
        member, fallback = extend_with_fallback(pattern, _rng(cfg.seed, index, 1, stream))
        kl = kl_stderr = None
        kl_excluded = None
        if _fit_cells(member) > CPT_CELL_CAP:
            kl_excluded = "too-large"
        else:
            fitted = map_parameters(member, data, PriorSpec.k2())
            result = kl_divergence(
                truth_bn, fitted, "auto", cfg.kl_mc_samples, _rng(cfg.seed, index, 2, stream)
            )
            kl, kl_stderr = result.value, result.stderr
        outcomes[method] = MethodOutcome(
            adj_errors, v_errors, kl, kl_stderr, kl_excluded, elapsed, stalled, tests, fallback
        )
    seed_id = int(np.random.SeedSequence((cfg.seed, index)).generate_state(1)[0])
    return TrialResult(index, seed_id, outcomes)


def _trial_args(args) -> TrialResult:
    return run_trial(*args)


def _map_trials(
    cfg: ExperimentConfig,
    methods: Sequence[str],
    budgets: Mapping[str, float | None],
    parallel: int,
) -> list[TrialResult]:
    jobs = [(cfg, i, tuple(methods), dict(budgets)) for i in range(cfg.trials)]
    if parallel <= 1:
        return [_trial_args(job) for job in jobs]
    with ProcessPoolExecutor(max_workers=parallel) as pool:
        return list(pool.map(_trial_args, jobs))


def run_experiment(cfg: ExperimentConfig, parallel: int = 1) -> list[TrialResult]:
    """All trials of one cell, honoring the configured budget policy.

    Under the "tau" policy the reference searcher runs first across all
    trials (under its absolute guard budget); its run times fix the stall
    cutoff applied to the classical searcher, and a reference run counts as
    stalled when it exceeds 100x the median reference time.
    """
    if cfg.budget_policy == "tau":
        first = _map_trials(cfg, (REFERENCE_METHOD,), {REFERENCE_METHOD: cfg.pcstar_guard_seconds}, parallel)
        times = [r.methods[REFERENCE_METHOD].time_s for r in first]
        guard = 100.0 * float(np.median(times))
        merged = []
        for r in first:
            out = r.methods[REFERENCE_METHOD]
            if out.time_s > guard and not out.stalled:
                out = replace(out, stalled=True)
            merged.append(TrialResult(r.index, r.seed, {REFERENCE_METHOD: out}))
        rest = tuple(m for m in cfg.methods if m != REFERENCE_METHOD)
        if rest:
            tau = stall_cutoff(times) if len(times) >= 2 else None
            second = _map_trials(cfg, rest, {"pc": tau}, parallel)
            merged = [
                TrialResult(a.index, a.seed, {**b.methods, **a.methods})
                for a, b in zip(merged, second)
            ]
        return merged
    if cfg.budget_policy == "fixed":
        budgets = {"pc": cfg.budget_seconds, "pcstar": cfg.budget_seconds}
    else:
        budgets = {}
    return _map_trials(cfg, cfg.methods, budgets, parallel)


@dataclass(frozen=True)
class SummaryStats:
    """Per-method summary of deltas against the reference searcher."""

    method: str
    n_trials: int
    mean_delta_adj: float
    ci_adj: float
    mean_delta_v: float
    ci_v: float
    mean_delta_kl_pct: float
    ci_kl: float
    n_kl_excluded: int
    stall_prob: float
    mean_time_s: float
    mean_kl: float


def _one_sided_halfwidth(values: Sequence[float], confidence: float) -> float:
    if len(values) < 2:
        return 0.0
    z = Z_ONE_SIDED_99 if confidence == 0.99 else float(ndtri(confidence))
    arr = np.asarray(values, dtype=np.float64)
    return float(z * arr.std(ddof=1) / math.sqrt(len(values)))


def _mean(values: Sequence[float]) -> float:
    return float(np.mean(values)) if len(values) else math.nan


def summarize(
    results: Sequence[TrialResult],
    confidence: float = 0.99,
) -> dict[str, SummaryStats]:
    """Means, one-sided confidence half-widths, and stall probabilities.

    KL deltas that are infinite or undefined (either KL missing) are
    excluded from the KL mean and counted in ``n_kl_excluded``; the
    half-width divisor is the included-trial count.
    """
    if not results:
        raise ValueError("summarize requires at least one trial")
    present = [m for m in METHODS if all(m in r.methods for r in results)]
    if REFERENCE_METHOD not in present:
        raise ValueError(f"summaries require the {REFERENCE_METHOD!r} reference in every trial")
    summaries = {}
    for method in present:
        adj = [float(r.methods[method].adj_errors - r.methods[REFERENCE_METHOD].adj_errors) for r in results]
        vs = [float(r.methods[method].v_errors - r.methods[REFERENCE_METHOD].v_errors) for r in results]
        kl_deltas = []
        excluded = 0
        for r in results:
            kl_m = r.methods[method].kl
            kl_ref = r.methods[REFERENCE_METHOD].kl
            if kl_m is None or kl_ref is None:
                excluded += 1
                continue
            d = delta_kl(kl_m, kl_ref)
            if math.isinf(d) or math.isnan(d):
                excluded += 1
                continue
            kl_deltas.append(d)
        own_kl = [r.methods[method].kl for r in results if r.methods[method].kl is not None]
        summaries[method] = SummaryStats(
            method=method,
            n_trials=len(results),
            mean_delta_adj=_mean(adj),
            ci_adj=_one_sided_halfwidth(adj, confidence),
            mean_delta_v=_mean(vs),
            ci_v=_one_sided_halfwidth(vs, confidence),
            mean_delta_kl_pct=_mean(kl_deltas),
            ci_kl=_one_sided_halfwidth(kl_deltas, confidence),
            n_kl_excluded=excluded,
            stall_prob=float(np.mean([r.methods[method].stalled for r in results])),
            mean_time_s=_mean([r.methods[method].time_s for r in results]),
            mean_kl=_mean(own_kl),
        )
    return summaries


def report_rows(cfg: ExperimentConfig, summaries: Mapping[str, SummaryStats]) -> list[dict]:
    rows = []
    for method in METHODS:
        if method not in summaries:
            continue
        s = summaries[method]
        rows.append(
            {
                "N": cfg.n_nodes,
                "N_r": cfg.records,
                "method": method,
                "mean_delta_adj": s.mean_delta_adj,
                "ci_adj": s.ci_adj,
                "mean_delta_v": s.mean_delta_v,
                "ci_v": s.ci_v,
                "mean_delta_kl_pct": s.mean_delta_kl_pct,
                "ci_kl": s.ci_kl,
                "stall_prob": s.stall_prob,
                "mean_time_s": s.mean_time_s,
                "n_trials": s.n_trials,
                "n_excluded": s.n_kl_excluded,
            }
        )
    return rows


def rows_to_csv(columns: Sequence[str], rows: Sequence[Mapping]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([row[c] for c in columns])
    return buf.getvalue()


def write_report(path: str, rows: Sequence[Mapping], columns: Sequence[str] = REPORT_COLUMNS) -> None:
    atomic_write_text(path, rows_to_csv(columns, rows))


def _outcome_dict(out: MethodOutcome) -> dict:
    return {
        "adj_errors": out.adj_errors,
        "v_errors": out.v_errors,
        "kl": out.kl,
        "kl_stderr": out.kl_stderr,
        "kl_excluded": out.kl_excluded,
        "time_s": out.time_s,
        "stalled": out.stalled,
        "tests": out.tests,
        "fallback": out.fallback,
    }


def trials_to_jsonl(results: Sequence[TrialResult]) -> str:
    lines = []
    for r in results:
        doc = {
            "trial": r.index,
            "seed": r.seed,
            "methods": {m: _outcome_dict(out) for m, out in sorted(r.methods.items())},
        }
        lines.append(json.dumps(doc, sort_keys=True))
    return "\n".join(lines) + ("\n" if lines else "")


def write_trials(path: str, results: Sequence[TrialResult]) -> None:
    atomic_write_text(path, trials_to_jsonl(results))


def mask_times_csv(text: str, columns: Sequence[str] = ("mean_time_s",)) -> str:
    """Report text with wall-time columns normalized, for byte comparisons."""
    rows = list(csv.reader(io.StringIO(text)))
    header = rows[0]
    idx = [header.index(c) for c in columns if c in header]
    for row in rows[1:]:
        for i in idx:
            row[i] = "-"
    return rows_to_csv(header, [dict(zip(header, row)) for row in rows[1:]])


def mask_times_jsonl(text: str) -> str:
    """Raw-trials text with per-method wall times normalized."""
    lines = []
    for line in text.splitlines():
        if not line:
            continue
        doc = json.loads(line)
        for out in doc.get("methods", {}).values():
            out["time_s"] = None
        lines.append(json.dumps(doc, sort_keys=True))
    return "\n".join(lines) + ("\n" if lines else "")


def stall_experiment(
    base: ExperimentConfig,
    cells: Sequence[tuple[int, int]],
    parallel: int = 1,
) -> tuple[list[dict], dict[tuple[int, int], list[TrialResult]]]:
    """Stall probabilities over a grid of (node count, record count) cells.

    Every cell runs under the "tau" budget policy: the classical searcher is
    truncated at the cutoff derived from the reference searcher's times, and
    truncation is what "stall" means here.
    """
    rows: list[dict] = []
    by_cell: dict[tuple[int, int], list[TrialResult]] = {}
    for n_nodes, records in cells:
        cfg = replace(base, n_nodes=n_nodes, records=records, budget_policy="tau")
        results = run_experiment(cfg, parallel)
        rows.extend(report_rows(cfg, summarize(results)))
        by_cell[(n_nodes, records)] = results
    return rows, by_cell


def alpha_sweep(
    base: ExperimentConfig,
    alphas: Sequence[float],
    parallel: int = 1,
) -> tuple[list[dict], dict[float, list[TrialResult]]]:
    """KL comparison of both searchers as the significance level varies.

    Trials are paired across alpha values: the same trial index draws the
    same network and records for every alpha.
    """
    rows: list[dict] = []
    by_alpha: dict[float, list[TrialResult]] = {}
    for alpha in alphas:
        cfg = replace(base, alpha=float(alpha), methods=("pc", "pcstar"))
        results = run_experiment(cfg, parallel)
        summaries = summarize(results)
        pc = summaries["pc"]
        rows.append(
            {
                "N": cfg.n_nodes,
                "N_r": cfg.records,
                "alpha": cfg.alpha,
                "mean_delta_kl_pct": pc.mean_delta_kl_pct,
                "ci_kl": pc.ci_kl,
                "mean_kl_pc": pc.mean_kl,
                "mean_kl_pcstar": summaries[REFERENCE_METHOD].mean_kl,
                "stall_prob": pc.stall_prob,
                "mean_time_s": pc.mean_time_s,
                "n_trials": pc.n_trials,
                "n_excluded": pc.n_kl_excluded,
            }
        )
        by_alpha[cfg.alpha] = results
    return rows, by_alpha
