import math

import numpy as np
import pytest
from scipy import stats as sps

from pcstar.bench import (
    ExperimentConfig,
    _one_sided_halfwidth,
    delta_kl,
    mask_times_csv,
    mask_times_jsonl,
    random_structure,
    report_rows,
    rows_to_csv,
    run_experiment,
    run_trial,
    stall_experiment,
    structural_errors,
    summarize,
    trials_to_jsonl,
    REPORT_COLUMNS,
)
from pcstar.network import Dag, binary_variables, map_parameters, kl_divergence
from pcstar.network import sample_records, sample_uniform_parameters
from pcstar.patterns import Pattern, pattern_of_dag
from pcstar.bench import _rng

from conftest import collider3


class TestRandomStructure:
    def test_first_node_parentless(self, rng):
        for _ in range(200):
            dag = random_structure(6, 5, rng)
            assert dag.parents(0) == ()

    def test_two_node_parent_count_balanced(self, rng):
        ones = sum(len(random_structure(2, 5, rng).edges) for _ in range(10_000))
        assert ones / 10_000 == pytest.approx(0.5, abs=0.02)

    def test_last_node_parent_count_uniform(self, rng):
        counts = np.zeros(6)
        draws = 10_000
        for _ in range(draws):
            dag = random_structure(10, 5, rng)
            counts[len(dag.parents(9))] += 1
        assert sps.chisquare(counts).pvalue > 1e-3

    def test_edges_point_forward(self, rng):
        for _ in range(100):
            dag = random_structure(8, 3, rng)
            assert all(a < b for a, b in dag.edges)


class TestStructuralErrors:
    def test_exact_match_is_zero(self, rng):
        dag = random_structure(8, 5, rng)
        assert structural_errors(pattern_of_dag(dag), dag) == (0, 0)

    def test_missing_collider_counts_once(self):
        truth = collider3()
        learned = Pattern(truth.variables, [], [(0, 2), (1, 2)])
        assert structural_errors(learned, truth) == (0, 1)

    def test_extra_adjacencies(self):
        truth = Dag(binary_variables(3), [])
        learned = Pattern(truth.variables, [], [(0, 1), (0, 2), (1, 2)])
        assert structural_errors(learned, truth) == (3, 0)


class TestDeltaKl:
    def test_percent_increase(self):
        assert delta_kl(1.2, 1.0) == pytest.approx(20.0)

    def test_equal_values(self):
        assert delta_kl(0.7, 0.7) == 0.0

    def test_zero_reference_rules(self):
        assert delta_kl(0.0, 0.0) == 0.0
        assert math.isinf(delta_kl(0.5, 0.0))


class TestRunTrial:
    CFG = ExperimentConfig(n_nodes=6, records=100, trials=4, seed=9, methods=("pc", "pcstar"))

    def test_oracle_trials_are_perfect(self):
        cfg = ExperimentConfig(
            n_nodes=8, records=20, trials=5, seed=3, methods=("pc", "pcstar"), oracle=True
        )
        for i in range(cfg.trials):
            result = run_trial(cfg, i)
            for method in cfg.methods:
                assert result.methods[method].adj_errors == 0
                assert result.methods[method].v_errors == 0

    def test_oracle_kl_close_to_refit_truth(self):
        cfg = ExperimentConfig(
            n_nodes=6, records=200, trials=20, seed=4, methods=("pcstar",), oracle=True
        )
        ratios = []
        for i in range(cfg.trials):
            result = run_trial(cfg, i)
            gen = _rng(cfg.seed, i, 0)
            truth_dag = random_structure(cfg.n_nodes, cfg.max_parents, gen)
            truth_bn = sample_uniform_parameters(truth_dag, gen)
            data = sample_records(truth_bn, cfg.records, gen)
            refit = kl_divergence(truth_bn, map_parameters(truth_dag, data), "exact").value
            ratios.append((result.methods["pcstar"].kl, refit))
        assert np.mean([k for k, _ in ratios]) <= 3 * np.mean([r for _, r in ratios]) + 1e-9

    def test_no_records_pcstar_learns_nothing(self):
        cfg = ExperimentConfig(n_nodes=6, records=0, trials=1, seed=5, methods=("pcstar",))
        result = run_trial(cfg, 0)
        gen = _rng(cfg.seed, 0, 0)
        truth = random_structure(cfg.n_nodes, cfg.max_parents, gen)
        assert result.methods["pcstar"].adj_errors == len(truth.skeleton())

    def test_same_seed_reproduces(self):
        a = run_trial(self.CFG, 2)
        b = run_trial(self.CFG, 2)
        assert a.seed == b.seed
        for method in self.CFG.methods:
            ma, mb = a.methods[method], b.methods[method]
            assert (ma.adj_errors, ma.v_errors, ma.kl, ma.tests) == (
                mb.adj_errors,
                mb.v_errors,
                mb.kl,
                mb.tests,
            )

    def test_method_subsets_compose(self):
        # per-method streams are independent: running methods separately
        # gives the same outcomes as running them together
        joint = run_trial(self.CFG, 1)
        pc_only = run_trial(self.CFG, 1, methods=("pc",))
        star_only = run_trial(self.CFG, 1, methods=("pcstar",))
        for method, part in (("pc", pc_only), ("pcstar", star_only)):
            a, b = joint.methods[method], part.methods[method]
            assert (a.adj_errors, a.v_errors, a.kl) == (b.adj_errors, b.v_errors, b.kl)


class TestSummarize:
    @staticmethod
    def _results(cfg):
        return run_experiment(cfg, parallel=1)

    def test_identical_deltas_zero_halfwidth(self):
        assert _one_sided_halfwidth([2.0, 2.0, 2.0], 0.99) == 0.0

    def test_two_value_halfwidth(self):
        # mean 1, sd sqrt(2), se 1 -> half-width exactly 2.326
        assert _one_sided_halfwidth([0.0, 2.0], 0.99) == pytest.approx(2.326)

    def test_normal_sample_halfwidth(self, rng):
        values = rng.standard_normal(1000)
        assert _one_sided_halfwidth(values.tolist(), 0.99) == pytest.approx(
            2.326 / math.sqrt(1000), abs=0.005
        )

    def test_single_trial_degenerate(self):
        cfg = ExperimentConfig(n_nodes=4, records=50, trials=1, seed=7, methods=("pc", "pcstar"))
        stats = summarize(self._results(cfg))
        assert stats["pc"].ci_adj == 0.0
        assert stats["pc"].ci_kl == 0.0

    def test_pcstar_reference_row_is_zero_delta(self):
        cfg = ExperimentConfig(n_nodes=5, records=80, trials=3, seed=8, methods=("pc", "pcstar"))
        stats = summarize(self._results(cfg))
        ref = stats["pcstar"]
        assert ref.mean_delta_adj == 0.0 and ref.mean_delta_v == 0.0
        assert ref.mean_delta_kl_pct == 0.0 and ref.n_kl_excluded == 0


class TestDeterminism:
    CFG = ExperimentConfig(n_nodes=6, records=60, trials=6, seed=11, methods=("pc", "pcstar"))

    def test_rerun_identical_after_time_masking(self):
        a = run_experiment(self.CFG, parallel=1)
        b = run_experiment(self.CFG, parallel=1)
        assert mask_times_jsonl(trials_to_jsonl(a)) == mask_times_jsonl(trials_to_jsonl(b))
        rows_a = rows_to_csv(REPORT_COLUMNS, report_rows(self.CFG, summarize(a)))
        rows_b = rows_to_csv(REPORT_COLUMNS, report_rows(self.CFG, summarize(b)))
        assert mask_times_csv(rows_a) == mask_times_csv(rows_b)

    def test_parallel_matches_serial(self):
        serial = run_experiment(self.CFG, parallel=1)
        parallel = run_experiment(self.CFG, parallel=2)
        assert mask_times_jsonl(trials_to_jsonl(serial)) == mask_times_jsonl(
            trials_to_jsonl(parallel)
        )

    def test_trial_order_invariance(self):
        forward = [run_trial(self.CFG, i) for i in range(4)]
        backward = [run_trial(self.CFG, i) for i in (3, 2, 1, 0)][::-1]
        assert mask_times_jsonl(trials_to_jsonl(forward)) == mask_times_jsonl(
            trials_to_jsonl(backward)
        )


class TestPolicies:
    def test_no_budget_never_stalls(self):
        cfg = ExperimentConfig(n_nodes=6, records=40, trials=5, seed=13, methods=("pc", "pcstar"))
        stats = summarize(run_experiment(cfg, parallel=1))
        assert stats["pc"].stall_prob == 0.0
        assert stats["pcstar"].stall_prob == 0.0

    def test_stall_experiment_smoke(self):
        base = ExperimentConfig(
            n_nodes=8, records=40, trials=4, seed=14, methods=("pc", "pcstar")
        )
        rows, by_cell = stall_experiment(base, [(8, 40)], parallel=1)
        assert {r["method"] for r in rows} == {"pc", "pcstar"}
        for r in rows:
            assert 0.0 <= r["stall_prob"] <= 1.0
        assert len(by_cell[(8, 40)]) == 4

    def test_large_sample_cell_never_stalls(self):
        # plenty of records: neither searcher comes near the cutoff
        base = ExperimentConfig(
            n_nodes=10, records=6400, trials=5, seed=15, methods=("pc", "pcstar")
        )
        rows, _ = stall_experiment(base, [(10, 6400)], parallel=2)
        for r in rows:
            assert r["stall_prob"] < 0.05

    def test_dense_alpha_gives_dense_skeleton(self, rng):
        # with alpha near 1 almost every test rejects, so edges survive
        from pcstar.search import SearchConfig, pc_search
        from pcstar.network import Dataset

        data = Dataset(binary_variables(6), rng.integers(0, 2, size=(200, 6)))
        dense = pc_search(data, SearchConfig(alpha=0.999, tester="hybrid"))
        sparse = pc_search(data, SearchConfig(alpha=0.001, tester="hybrid"))
        assert len(dense.pattern.skeleton()) > len(sparse.pattern.skeleton())
        assert len(dense.pattern.skeleton()) >= 0.8 * 15


class TestConfigValidation:
    def test_methods_must_include_reference(self):
        with pytest.raises(ValueError, match="reference"):
            ExperimentConfig(n_nodes=5, records=10, trials=1, methods=("pc",))

    def test_large_n_requires_long_run(self):
        with pytest.raises(ValueError, match="long_run"):
            ExperimentConfig(n_nodes=40, records=10, trials=1)

    def test_unknown_method_rejected(self):
        with pytest.raises(ValueError, match="unknown methods"):
            ExperimentConfig(n_nodes=5, records=10, trials=1, methods=("pcstar", "ges"))

    def test_fixed_policy_needs_seconds(self):
        with pytest.raises(ValueError, match="budget_seconds"):
            ExperimentConfig(
                n_nodes=5, records=10, trials=1, budget_policy="fixed"
            )
