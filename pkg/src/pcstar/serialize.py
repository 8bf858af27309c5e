"""File formats: network JSON, dataset CSV, pattern JSON, DOT export.

All writers are deterministic (stable key order, shortest round-trip float
formatting) so identical inputs produce byte-identical files.
"""

from __future__ import annotations

import csv
import io
import json
import os
import tempfile
from typing import Sequence

import numpy as np

from .network import BayesNet, Cpt, Dag, Dataset, Variable
from .patterns import Pattern

__all__ = [
    "atomic_write_text",
    "network_to_json",
    "network_from_json",
    "save_network",
    "load_network",
    "dataset_to_csv",
    "dataset_from_csv",
    "save_dataset",
    "load_dataset",
    "pattern_to_json",
    "dag_to_pattern_json",
    "save_pattern",
    "pattern_to_dot",
    "dag_to_dot",
]


def atomic_write_text(path: str, text: str) -> None:
    """Write via a temp file and rename, so interruptions never truncate."""
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix="~")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as handle:
            handle.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def network_to_json(bn: BayesNet) -> str:
    doc = {
        "variables": [{"name": v.name, "arity": v.arity} for v in bn.variables],
        "edges": [[a, b] for a, b in sorted(bn.dag.edges)],
        "cpts": [
            {
                "node": cpt.node,
                "parents": list(cpt.parents),
                "columns": cpt.table.T.tolist(),
            }
            for cpt in bn.cpts
        ],
    }
    return json.dumps(doc, indent=1, sort_keys=True) + "\n"


def network_from_json(text: str) -> BayesNet:
    doc = json.loads(text)
    variables = tuple(
        Variable(i, str(v["name"]), int(v["arity"])) for i, v in enumerate(doc["variables"])
    )
    dag = Dag(variables, [(int(a), int(b)) for a, b in doc["edges"]])
    cpts = [
        Cpt(int(c["node"]), tuple(int(p) for p in c["parents"]), np.asarray(c["columns"]).T)
        for c in doc["cpts"]
    ]
    return BayesNet(dag, cpts)


def save_network(bn: BayesNet, path: str) -> None:
    atomic_write_text(path, network_to_json(bn))


def load_network(path: str) -> BayesNet:
    with open(path, "r", encoding="utf-8") as handle:
        return network_from_json(handle.read())


def dataset_to_csv(data: Dataset) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow([v.name for v in data.variables])
    for row in data.records:
        writer.writerow([int(s) for s in row])
    return buf.getvalue()


def dataset_from_csv(text: str, arities: Sequence[int] | None = None) -> Dataset:
    """Parse a header-plus-integer-rows CSV.

    The format carries no arity metadata; unless ``arities`` is given, each
    variable's arity is inferred as max(observed state + 1, 2).
    """
    rows = list(csv.reader(io.StringIO(text)))
    if not rows:
        raise ValueError("empty dataset file")
    names = rows[0]
    body = [[int(cell) for cell in row] for row in rows[1:] if row]
    records = np.asarray(body, dtype=np.int64).reshape(len(body), len(names)) if body else (
        np.zeros((0, len(names)), dtype=np.int64)
    )
    if arities is None:
        observed = records.max(axis=0) + 1 if len(body) else np.full(len(names), 2)
        arities = np.maximum(observed, 2)
    variables = tuple(Variable(i, name, int(arities[i])) for i, name in enumerate(names))
    return Dataset(variables, records)


def save_dataset(data: Dataset, path: str) -> None:
    atomic_write_text(path, dataset_to_csv(data))


def load_dataset(path: str, arities: Sequence[int] | None = None) -> Dataset:
    with open(path, "r", encoding="utf-8") as handle:
        return dataset_from_csv(handle.read(), arities)


def pattern_to_json(pattern: Pattern) -> str:
    doc = {
        "directed": [[a, b] for a, b in sorted(pattern.directed)],
        "undirected": [[a, b] for a, b in sorted(pattern.undirected)],
    }
    return json.dumps(doc, indent=1, sort_keys=True) + "\n"


def dag_to_pattern_json(dag: Dag) -> str:
    """A DAG is a fully directed pattern; serialize it in the same shape."""
    doc = {"directed": [[a, b] for a, b in sorted(dag.edges)], "undirected": []}
    return json.dumps(doc, indent=1, sort_keys=True) + "\n"


def save_pattern(pattern: Pattern, path: str) -> None:
    atomic_write_text(path, pattern_to_json(pattern))


def _dot(names: Sequence[str], directed, undirected) -> str:
    lines = ["digraph pattern {"]
    for a, b in sorted(directed):
        lines.append(f'  "{names[a]}" -> "{names[b]}";')
    for a, b in sorted(undirected):
        lines.append(f'  "{names[a]}" -> "{names[b]}" [dir=none];')
    lines.append("}")
    return "\n".join(lines) + "\n"


def pattern_to_dot(pattern: Pattern) -> str:
    names = [v.name for v in pattern.variables]
    return _dot(names, pattern.directed, pattern.undirected)


def dag_to_dot(dag: Dag) -> str:
    names = [v.name for v in dag.variables]
    return _dot(names, dag.edges, [])
