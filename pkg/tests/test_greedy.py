import itertools
import math
from fractions import Fraction

import numpy as np
import pytest

from pcstar.bench import random_structure
from pcstar.greedy import FamilyScoreCache, gtt_search, log_marginal_likelihood
from pcstar.network import (
    BayesNet,
    Cpt,
    Dag,
    PriorSpec,
    binary_variables,
    sample_records,
    sample_uniform_parameters,
)

from conftest import dataset_from_rows

FOUR_RECORDS = [[0, 0], [0, 1], [1, 0], [1, 1]]


def factorial_oracle(dag, data):
    """Exact K2 marginal likelihood via integer factorials.

    For each node and observed parent configuration the factor is
    (r - 1)! / (N + r - 1)! * prod_k N_k!; exact rational arithmetic, so it
    is independent of the log-gamma path it checks.
    """
    total = Fraction(1)
    for v in dag.variables:
        ps = dag.parents(v.id)
        r = v.arity
        groups = {}
        for row in data.records:
            key = tuple(row[list(ps)]) if ps else ()
            groups.setdefault(key, []).append(int(row[v.id]))
        for states in groups.values():
            counts = [states.count(k) for k in range(r)]
            factor = Fraction(math.factorial(r - 1), math.factorial(len(states) + r - 1))
            for c in counts:
                factor *= math.factorial(c)
            total *= factor
    return math.log(total)


def all_dags_3():
    """All DAGs over 3 nodes (25 of them)."""
    variables = binary_variables(3)
    pairs = [(0, 1), (0, 2), (1, 2)]
    dags = []
    for choice in itertools.product((0, 1, 2), repeat=3):
        edges = []
        for (a, b), c in zip(pairs, choice):
            if c == 1:
                edges.append((a, b))
            elif c == 2:
                edges.append((b, a))
        try:
            dags.append(Dag(variables, edges))
        except ValueError:
            continue
    return dags


class TestLogMarginalLikelihood:
    def test_worked_pair(self):
        data = dataset_from_rows(FOUR_RECORDS)
        empty = Dag(binary_variables(2), [])
        arc = Dag(binary_variables(2), [(0, 1)])
        assert log_marginal_likelihood(empty, data) == pytest.approx(math.log(1 / 900), abs=1e-9)
        assert log_marginal_likelihood(arc, data) == pytest.approx(math.log(1 / 1080), abs=1e-9)

    def test_empty_dataset_scores_zero(self):
        data = dataset_from_rows(np.zeros((0, 2)))
        assert log_marginal_likelihood(Dag(binary_variables(2), [(0, 1)]), data) == 0.0

    def test_matches_factorial_oracle(self, rng):
        for _ in range(30):
            n = int(rng.integers(1, 4))
            dag = random_structure(n, 2, rng)
            records = rng.integers(0, 2, size=(int(rng.integers(0, 9)), n))
            data = dataset_from_rows(records) if n > 1 else dataset_from_rows(records.reshape(-1, 1))
            assert log_marginal_likelihood(dag, data) == pytest.approx(
                factorial_oracle(dag, data), abs=1e-9
            )

    def test_decomposability_cache_consistency(self, rng):
        for _ in range(100):
            n = int(rng.integers(2, 5))
            dag = random_structure(n, 3, rng)
            bn = sample_uniform_parameters(dag, rng)
            data = sample_records(bn, 50, rng)
            cache = FamilyScoreCache(data)
            total = sum(cache.family_score(i, frozenset(dag.parents(i))) for i in range(n))
            assert total == pytest.approx(log_marginal_likelihood(dag, data), abs=1e-9)
            # cached values equal fresh recomputation
            for i in range(n):
                parents = frozenset(dag.parents(i))
                assert cache.family_score(i, parents) == pytest.approx(
                    cache.compute(i, parents), abs=1e-9
                )


class TestGttSearch:
    def test_four_records_yield_empty_graph(self):
        data = dataset_from_rows(FOUR_RECORDS)
        assert gtt_search(data).edges == frozenset()

    def test_deterministic_relationship_yields_one_arc(self, rng):
        x = rng.integers(0, 2, size=10_000)
        data = dataset_from_rows(np.column_stack([x, x]))
        result = gtt_search(data)
        assert result.skeleton() == frozenset({(0, 1)})

    def test_recovers_skeleton_at_high_sample_size(self):
        # monotone parent effects keep every edge identifiable; uniform-simplex
        # parameters routinely produce edges too weak for any method to find
        from pcstar.network import config_count

        def monotone_net(dag):
            cpts = []
            for v in dag.variables:
                ps = dag.parents(v.id)
                q = config_count([2] * len(ps))
                if not ps:
                    top = np.full(1, 0.35)
                else:
                    top = np.array(
                        [0.15 + 0.7 * bin(j).count("1") / len(ps) for j in range(q)]
                    )
                cpts.append(Cpt(v.id, ps, np.vstack([1 - top, top])))
            return BayesNet(dag, cpts)

        hits = 0
        runs = 20
        for seed in range(runs):
            rng = np.random.default_rng(seed)
            dag = random_structure(5, 5, rng)
            data = sample_records(monotone_net(dag), 6400, rng)
            hits += gtt_search(data).skeleton() == dag.skeleton()
        assert hits / runs >= 0.8

    def test_three_node_count_is_25(self):
        assert len(all_dags_3()) == 25

    def test_result_beats_empty_start(self, rng):
        for _ in range(10):
            dag = random_structure(3, 2, rng)
            bn = sample_uniform_parameters(dag, rng)
            data = sample_records(bn, 100, rng)
            result = gtt_search(data)
            empty_score = log_marginal_likelihood(Dag(data.variables, []), data)
            assert log_marginal_likelihood(result, data) >= empty_score

    def test_result_is_local_optimum(self, rng):
        for _ in range(50):
            dag = random_structure(3, 2, rng)
            bn = sample_uniform_parameters(dag, rng)
            data = sample_records(bn, int(rng.integers(20, 200)), rng)
            result = gtt_search(data)
            base = log_marginal_likelihood(result, data)
            # no single addition or deletion strictly improves the score
            for candidate in all_dags_3():
                diff = candidate.edges ^ result.edges
                if len(diff) != 1:
                    continue
                assert log_marginal_likelihood(candidate, data) <= base + 1e-9

    def test_acyclic_output(self, rng):
        for _ in range(20):
            dag = random_structure(6, 4, rng)
            bn = sample_uniform_parameters(dag, rng)
            data = sample_records(bn, 200, rng)
            gtt_search(data)  # Dag construction raises on cycles
