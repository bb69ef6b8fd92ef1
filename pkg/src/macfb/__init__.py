"""Exact tools for two-sender channels with noiseless feedback.

Posterior-state dynamic programming for minimum error probability,
entropy and extrinsic-divergence stage costs with their telescoping
identities, and directed-information rate bounds, all at exactly
verifiable desk scale.
"""

from .capacity import (
    CnSearchResult,
    DirectedInfoBreakdown,
    JointState,
    LambdaWeights,
    check_factorization,
    check_kernel_independence,
    evaluate_In,
    full_history_In,
    joint_kernel_step,
    lambda_sweep,
    search_Cn_lambda,
    stage_rewards,
    sweep_rows_to_csv,
)
from .config import ExperimentConfig, from_toml, resolve_channel, to_toml
from .costs import (
    CostFunctional,
    FixedPointResult,
    SimplexGrid,
    check_telescoping,
    cost_conditional_entropy,
    cost_ejs,
    cost_joint_entropy,
    fixed_point_solve,
)
from .dp import (
    PolicyTree,
    ReachableTree,
    backward_dp,
    backward_dp_rational,
    brute_force_rational,
    brute_force_unstructured,
    build_reachable_tree,
    check_belief_recursion,
    constant_policy,
    evaluate_policy_exact,
    policy_from_fn,
    simulate_monte_carlo,
)
from .errors import (
    BudgetExceeded,
    ConfigError,
    DimensionMismatch,
    IncompletePolicy,
    MacfbError,
    NegativeEntry,
    NegativeInformation,
    NotStochastic,
    ZeroProbabilityInput,
    ZeroProbabilityObservation,
)
from .information import binary_entropy, entropy, kl_divergence
from .model import (
    Channel,
    EncoderFunction,
    JointAction,
    JointBelief,
    PrivateBelief,
    ProblemSpec,
    all_encoder_functions,
    all_joint_actions,
    belief_update,
    identity_encoders,
    identity_pair_channel,
    induced_input_marginal,
    ml_decode,
    private_belief_update,
    random_channel,
    terminal_cost,
    uniform_channel,
    validate_channel,
    xor_bsc_channel,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
