"""Batch command-line interface.

Subcommands: ``generate`` (random network), ``sample`` (records from a
network), ``citest`` (one independence test), ``learn`` (pc / pcstar / gtt),
``bench`` / ``stall`` / ``alpha-sweep`` (experiment harness, JSON config).

Exit codes: 0 success, 1 I/O failure, 2 usage or malformed input, 3 search
stalled (output still written).
"""

from __future__ import annotations

import argparse
import json
import sys
from typing import Sequence

import numpy as np

from . import bench
from .greedy import gtt_search
from .independence import hybrid_it, std_it
from .network import Dataset, PriorSpec, sample_records, sample_uniform_parameters
from .search import SearchConfig, pc_search
from .serialize import (
    atomic_write_text,
    dag_to_dot,
    dag_to_pattern_json,
    load_dataset,
    load_network,
    pattern_to_dot,
    pattern_to_json,
    save_dataset,
    save_network,
)

EXIT_OK = 0
EXIT_IO = 1
EXIT_USAGE = 2
EXIT_STALLED = 3


class UsageError(Exception):
    pass


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pcstar", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write a random network as JSON")
    p.add_argument("--nodes", type=int, required=True, help="number of variables")
    p.add_argument("--max-parents", type=int, default=5, help="sparsity cap (default 5)")
    p.add_argument("--arity", type=int, default=2, help="states per variable (default 2)")
    p.add_argument("--seed", type=int, required=True, help="rng seed")
    p.add_argument("--out", required=True, help="output network JSON path")

    p = sub.add_parser("sample", help="sample records from a network into CSV")
    p.add_argument("--net", required=True, help="network JSON path")
    p.add_argument("--records", type=int, required=True, help="number of records")
    p.add_argument("--seed", type=int, required=True, help="rng seed")
    p.add_argument("--out", required=True, help="output CSV path")

    p = sub.add_parser("citest", help="run one conditional-independence test")
    p.add_argument("--data", required=True, help="dataset CSV path")
    p.add_argument("--x", required=True, help="first variable (name or index)")
    p.add_argument("--y", required=True, help="second variable (name or index)")
    p.add_argument("--z", default="", help="conditioning variables, comma separated")
    p.add_argument("--alpha", type=float, default=0.05, help="significance level (default 0.05)")
    p.add_argument("--method", choices=("std", "hybrid"), default="std")

    p = sub.add_parser("learn", help="learn a structure from data")
    p.add_argument("--data", required=True, help="dataset CSV path")
    p.add_argument("--method", choices=("pc", "pcstar", "gtt"), required=True)
    p.add_argument("--alpha", type=float, default=0.05, help="significance level (default 0.05)")
    p.add_argument("--max-cond-size", type=int, default=None, help="conditioning-set cap")
    p.add_argument("--time-budget", type=float, default=None, help="wall-clock budget in seconds")
    p.add_argument("--out", required=True, help="output pattern JSON path")
    p.add_argument("--dot", default=None, help="optional DOT export path")

    for name, help_text in (
        ("bench", "run the benchmark loop for one experiment cell"),
        ("stall", "measure stall probabilities over a (N, N_r) grid"),
        ("alpha-sweep", "compare searchers across significance levels"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="experiment config JSON path")
        p.add_argument("--out", required=True, help="output report CSV path")
        p.add_argument("--raw", default=None, help="optional raw per-trial JSONL path")
        p.add_argument("--parallel", type=int, default=1, help="worker processes (default 1)")

    return parser


def _resolve_variable(data: Dataset, token: str) -> int:
    for v in data.variables:
        if v.name == token:
            return v.id
    try:
        idx = int(token)
    except ValueError:
        raise UsageError(f"unknown variable {token!r}") from None
    if not (0 <= idx < len(data.variables)):
        raise UsageError(f"variable index {idx} out of range")
    return idx


def _cmd_generate(args) -> int:
    rng = np.random.default_rng(args.seed)
    dag = bench.random_structure(args.nodes, args.max_parents, rng, arity=args.arity)
    net = sample_uniform_parameters(dag, rng)
    save_network(net, args.out)
    return EXIT_OK


def _cmd_sample(args) -> int:
    net = load_network(args.net)
    if args.records < 0:
        raise UsageError("--records must be >= 0")
    data = sample_records(net, args.records, np.random.default_rng(args.seed))
    save_dataset(data, args.out)
    return EXIT_OK


def _cmd_citest(args) -> int:
    data = load_dataset(args.data)
    x = _resolve_variable(data, args.x)
    y = _resolve_variable(data, args.y)
    z = [_resolve_variable(data, tok) for tok in args.z.split(",") if tok.strip()]
    if len({x, y, *z}) != 2 + len(z):
        raise UsageError("x, y and z must name distinct variables")
    if args.method == "std":
        result = std_it(x, y, z, data, args.alpha)
    else:
        result = hybrid_it(x, y, z, data, args.alpha, PriorSpec.k2())
    print(json.dumps(result.to_dict(), sort_keys=True))
    return EXIT_OK


def _cmd_learn(args) -> int:
    data = load_dataset(args.data)
    if args.method == "gtt":
        import time

        start = time.monotonic()
        dag = gtt_search(data, PriorSpec.k2())
        elapsed = time.monotonic() - start
        atomic_write_text(args.out, dag_to_pattern_json(dag))
        if args.dot:
            atomic_write_text(args.dot, dag_to_dot(dag))
        print(json.dumps({"elapsed_s": elapsed, "stalled": False, "tests": None}, sort_keys=True))
        return EXIT_OK
    cfg = SearchConfig(
        alpha=args.alpha,
        max_cond_size=args.max_cond_size,
        time_budget=args.time_budget,
        tester="std" if args.method == "pc" else "hybrid",
        priors=PriorSpec.k2(),
    )
    outcome = pc_search(data, cfg)
    atomic_write_text(args.out, pattern_to_json(outcome.pattern))
    if args.dot:
        atomic_write_text(args.dot, pattern_to_dot(outcome.pattern))
    print(
        json.dumps(
            {
                "elapsed_s": outcome.elapsed,
                "stalled": outcome.stalled,
                "tests": outcome.tests_performed,
            },
            sort_keys=True,
        )
    )
    return EXIT_STALLED if outcome.stalled else EXIT_OK


_CONFIG_KEYS = {
    "N": "n_nodes",
    "N_r": "records",
    "trials": "trials",
    "K": "max_parents",
    "alpha": "alpha",
    "seed": "seed",
    "methods": "methods",
    "budget_policy": "budget_policy",
    "budget_seconds": "budget_seconds",
    "pcstar_guard_seconds": "pcstar_guard_seconds",
    "kl_mc_samples": "kl_mc_samples",
    "long_run": "long_run",
}


def _experiment_config(doc: dict, extra_allowed: Sequence[str] = ()) -> bench.ExperimentConfig:
    unknown = set(doc) - set(_CONFIG_KEYS) - set(extra_allowed)
    if unknown:
        raise UsageError(f"unknown config keys: {sorted(unknown)}")
    kwargs = {}
    for key, field in _CONFIG_KEYS.items():
        if key in doc:
            value = doc[key]
            kwargs[field] = tuple(value) if field == "methods" else value
    try:
        return bench.ExperimentConfig(**kwargs)
    except (TypeError, ValueError) as err:
        raise UsageError(f"invalid config: {err}") from None


def _load_config(path: str) -> dict:
    with open(path, "r", encoding="utf-8") as handle:
        try:
            doc = json.load(handle)
        except json.JSONDecodeError as err:
            raise UsageError(f"malformed config JSON: {err}") from None
    if not isinstance(doc, dict):
        raise UsageError("config must be a JSON object")
    return doc


def _write_outputs(args, rows, columns, results_groups) -> None:
    bench.write_report(args.out, rows, columns)
    if args.raw:
        chunks = [bench.trials_to_jsonl(results) for results in results_groups]
        atomic_write_text(args.raw, "".join(chunks))


def _cmd_bench(args) -> int:
    cfg = _experiment_config(_load_config(args.config))
    results = bench.run_experiment(cfg, parallel=args.parallel)
    rows = bench.report_rows(cfg, bench.summarize(results))
    _write_outputs(args, rows, bench.REPORT_COLUMNS, [results])
    return EXIT_OK


def _cmd_stall(args) -> int:
    doc = _load_config(args.config)
    cells = doc.get("cells")
    if not isinstance(cells, list) or not cells:
        raise UsageError("stall config requires a nonempty 'cells' list")
    try:
        parsed = [(int(c["N"]), int(c["N_r"])) for c in cells]
    except (TypeError, KeyError) as err:
        raise UsageError(f"each cell needs N and N_r: {err}") from None
    base_doc = {k: v for k, v in doc.items() if k != "cells"}
    base_doc.setdefault("N", parsed[0][0])
    base_doc.setdefault("N_r", parsed[0][1])
    base = _experiment_config(base_doc)
    rows, by_cell = bench.stall_experiment(base, parsed, parallel=args.parallel)
    _write_outputs(args, rows, bench.REPORT_COLUMNS, list(by_cell.values()))
    return EXIT_OK


def _cmd_alpha_sweep(args) -> int:
    doc = _load_config(args.config)
    alphas = doc.pop("alphas", None)
    if not isinstance(alphas, list) or not alphas:
        raise UsageError("alpha-sweep config requires a nonempty 'alphas' list")
    doc.setdefault("alpha", float(alphas[0]))
    base = _experiment_config(doc)
    rows, by_alpha = bench.alpha_sweep(base, [float(a) for a in alphas], parallel=args.parallel)
    _write_outputs(args, rows, bench.ALPHA_SWEEP_COLUMNS, list(by_alpha.values()))
    return EXIT_OK


_HANDLERS = {
    "generate": _cmd_generate,
    "sample": _cmd_sample,
    "citest": _cmd_citest,
    "learn": _cmd_learn,
    "bench": _cmd_bench,
    "stall": _cmd_stall,
    "alpha-sweep": _cmd_alpha_sweep,
}


def main(argv: Sequence[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return _HANDLERS[args.command](args)
    except UsageError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except ValueError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as err:
        print(f"i/o error: {err}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
