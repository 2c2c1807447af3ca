"""Cointegrated linear-Kuramoto toolkit.

Simulation of clustered error-correction systems, wild-bootstrap
cointegration rank inference, coupling estimation under simultaneous
symmetry and low-rank restrictions, and modularity-based cluster recovery.
"""

__version__ = "0.1.0"

from .community import (
    ClusterAssignment,
    WeightedGraph,
    cnm_cluster,
    graph_from_pi,
    modularity,
    per_cluster_reestimate,
    score_recovery,
)
from .errors import (
    CoikError,
    ConfigError,
    DegenerateLikelihoodError,
    InvalidInputError,
    IterationLimitError,
    NormalizationError,
    RankDeficiencyError,
    UndefinedMeasureError,
)
from .johansen import (
    JohansenEstimate,
    RRRSolution,
    fit_rank,
    normalize_beta,
    rrr_solve,
    trace_stat,
)
from .kuramoto import (
    KuramotoSpec,
    KuramotoSystem,
    build_cluster_block,
    build_factors,
    build_system,
    coupling_grid,
    i1_condition,
)
from .linmodel import (
    SufficientStats,
    TimeSeries,
    VECMModel,
    lrt_between,
    ols_pi,
    omega_given_pi,
    profile_loglik,
    simulate_vecm,
    suffstats,
)
from .lowrank import (
    PiEstimate,
    estimate_johansen,
    estimate_ols,
    estimate_proj,
    estimate_sym,
    hermitian_part,
    matrix_angle,
    offblock_std,
    project_and_lift,
    svd_truncate,
    sym_factorize,
)
from .rankboot import (
    BootstrapConfig,
    RankDecision,
    RankTestRecord,
    bootstrap_test,
    sequential_rank,
    wild_resample,
)
