"""Architecture search over discrete candidate sets: tree-Wasserstein
distances, a GP surrogate with learned kernel scales, and quality k-DPP
batch selection."""

from .arch import (
    Architecture,
    DepthProfile,
    EmpiricalMeasure,
    canonical_key,
    degree_measures,
    depth_profile,
    ngram_measure,
    validate,
)
from .bench import BenchmarkOracle, load_tabular, query, synth_space
from .gp import GpModel, HyperBounds, fit, log_marginal, lml_gradient, optimize_hypers, predict, predict_cov
from .pool import Mutation, SpaceSpec, generate_pool, mutate, random_architecture
from .runner import ExperimentConfig, RunRecord, run_batch, run_sequential, summarize
from .select import (
    BatchStrategy,
    QualityKernel,
    argmax_acquisition,
    batch_select,
    conditional_kernel,
    ei,
    quality_kernel,
    sample_kdpp,
    ucb,
)
from .trees import (
    MetricTree,
    TaxonomySpec,
    build_operation_tree,
    chain_tree,
    default_taxonomy,
    parse_taxonomy,
    subtree_masses,
    tree_distance,
)
from .tw import (
    DistanceWeights,
    KernelParams,
    PairDistanceCache,
    component_distances,
    d_nn,
    kernel,
    kernel_matrix,
    ot_oracle,
    tw_distance,
)

__version__ = "0.1.0"
