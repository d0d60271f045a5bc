"""Distance-based evaluation of generative models against multi-client
reference data.

Scores (Gaussian 2-Wasserstein, kernel squared-MMD, log-likelihood,
precision/recall/density/coverage) come in two aggregations over a set
of weighted clients: ``avg`` (weighted mean of per-client scores) and
``all`` (score against the pooled mixture).  The package computes both,
verifies the structural identities that relate them, and simulates the
federated message exchange needed for each with exact byte accounting.
"""

from .counterexample import CounterexampleReport, construct, search_matched_pair
from .errors import (
    CapabilityError,
    ConvergenceError,
    NotPsdError,
    NumericalError,
    SampleCountError,
)
from .fedsim import (
    ClientSpec,
    GeneratorSpec,
    Message,
    ProtocolTrace,
    RankingComparison,
    Scenario,
    ScoreReport,
    compare_rankings,
    default_collapse_scenario,
    mode_collapse_timeline,
    run_round,
    run_scenario,
    toy_mixture_sweep,
    variance_limited_sweep,
)
from .frechet import (
    BarycenterSolution,
    FrechetResult,
    barycenter,
    fid_all,
    fid_avg,
    fid_avg_decomposition,
    frechet_distance,
    psd_sqrt,
)
from .kernelmmd import (
    KernelSpec,
    MmdResult,
    kernel_eval,
    kid_all,
    kid_avg,
    kid_constant_gap,
    mmd2,
)
from .prdc import PrdcResult, knn_radii, prdc_aggregate, prdc_scores
from .statkit import (
    Client,
    ClientSet,
    GaussianModel,
    GaussianStats,
    LogLikelihoodScores,
    as_embeddings,
    ingest,
    load_client_set,
    log_likelihood_scores,
    moments,
    pool_moments,
    write_embeddings,
)

__version__ = "0.1.0"
