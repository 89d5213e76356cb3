"""Two-agent average-reward MDP online learning with certified bound checks."""
from .bias_q import QTable, q_policy, q_values
from .chain_analysis import (
    MixingEstimate,
    NonMixing,
    StationaryDist,
    average_reward,
    dobrushin,
    evolve_distribution,
    finite_return,
    mixing_estimate,
    stationary_distribution,
)
from .learners import EXP_DRBIAS, EXP_RESTART, LearnerConfig, LearnerState
from .mdp_core import (
    CollabError,
    ConfigError,
    Mdp,
    NumericFailure,
    Policy,
    induce_action_kernel,
    induce_kernel,
    induce_reward_matrix,
    load_mdp,
    max_norm,
    op_inf_norm,
    validate,
)
from .opponents import OpponentSpec

__version__ = "0.1.0"
