"""Causal structure learning toolkit.

Constraint-based search (PC) with either the classical chi-squared test or a
smoothed contingency-table test (the starred variant), a greedy Bayesian
baseline, and a synthetic-data benchmark harness.
"""

from .network import (
    BayesNet,
    Cpt,
    CycleError,
    Dag,
    Dataset,
    InfiniteDivergenceError,
    JointTable,
    KlResult,
    PriorSpec,
    Variable,
    binary_variables,
    independent_by_column_equality,
    independent_in_joint,
    joint_probability,
    joint_table,
    kl_divergence,
    map_parameters,
    project,
    sample_records,
    sample_uniform_parameters,
    topological_order,
)
from .patterns import (
    NotExtendableError,
    Pattern,
    consistent_extension,
    d_separated,
    extend_with_fallback,
    pattern_of_dag,
)
from .independence import (
    ContingencyTable,
    TestResult,
    build_fragment,
    calc_stats,
    chi_squared_test,
    count_table,
    hybrid_it,
    std_it,
)
from .search import (
    SearchConfig,
    SearchOutcome,
    SepsetMap,
    find_independence_graph,
    orient_edges,
    pc_search,
    stall_cutoff,
)
from .greedy import FamilyScoreCache, gtt_search, log_marginal_likelihood
from .bench import (
    ExperimentConfig,
    SummaryStats,
    TrialResult,
    alpha_sweep,
    delta_kl,
    random_structure,
    run_experiment,
    run_trial,
    stall_experiment,
    structural_errors,
    summarize,
)

__version__ = "0.1.0"
