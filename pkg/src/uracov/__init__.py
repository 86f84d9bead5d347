"""Unsourced random access over a block-fading massive-MIMO channel.

Covariance-based activity detection on the inner code, tree coding on the
outer code, and a Monte-Carlo harness tying both together.
"""

from uracov.channel import (
    BudgetExceededError,
    CodingMatrix,
    ActiveSet,
    SystemConfig,
    build_gamma,
    noise_var_from_ebn0,
    sample_coding_matrix,
    synthesize_slot,
)
from uracov.decoder import (
    DecoderSettings,
    DecoderState,
    InverseDriftError,
    SupportDecision,
    coordinate_descent,
    khatri_rao_objective,
    ml_coordinate_step,
    ml_cost,
    nnls_coordinate_step,
    nnls_residual,
    rank_one_inverse_update,
    sample_covariance,
    threshold_support,
    topk_support,
)
from uracov.treecode import (
    ParityProfile,
    PathOverflowError,
    TreeCodebook,
    entropy_bound,
    or_mac_combine,
    outer_encode,
    outer_encode_batch,
    sumrate_feasible,
    tree_decode,
)
from uracov.harness import (
    Metrics,
    RunConfig,
    TrialRecord,
    compute_metrics,
    derive_rng,
    run_sweep,
    run_trial,
)

__all__ = [
    "ActiveSet",
    "BudgetExceededError",
    "CodingMatrix",
    "DecoderSettings",
    "DecoderState",
    "InverseDriftError",
    "Metrics",
    "ParityProfile",
    "PathOverflowError",
    "RunConfig",
    "SupportDecision",
    "SystemConfig",
    "TreeCodebook",
    "TrialRecord",
    "build_gamma",
    "compute_metrics",
    "coordinate_descent",
    "derive_rng",
    "entropy_bound",
    "khatri_rao_objective",
    "ml_coordinate_step",
    "ml_cost",
    "nnls_coordinate_step",
    "nnls_residual",
    "noise_var_from_ebn0",
    "or_mac_combine",
    "outer_encode",
    "outer_encode_batch",
    "rank_one_inverse_update",
    "run_sweep",
    "run_trial",
    "sample_coding_matrix",
    "sample_covariance",
    "sumrate_feasible",
    "synthesize_slot",
    "threshold_support",
    "topk_support",
    "tree_decode",
]

__version__ = "0.1.0"
