"""Diversity-regularized cooperative multi-agent Q-learning.

A library plus CLI for value-decomposition Q-learning where each agent's
local value splits into a shared and an individual part, an information
based intrinsic reward pushes agents toward distinguishable behavior, and
an L1 penalty keeps the individual parts small unless diversity pays.
"""

from .agents import AgentNetwork, QOutputs, boltzmann_policy, epsilon_schedule, select_action
from .checkpoint import CheckpointError, LoadedCheckpoint, load_checkpoint, save_checkpoint
from .config import (
    ABLATIONS,
    ConfigError,
    ExploreConfig,
    LearnerConfig,
    RunConfig,
    apply_ablation,
    build_run_config,
    read_config_file,
    write_config_snapshot,
)
from .diversity import (
    IntrinsicConfig,
    IntrinsicOutput,
    MutualInformation,
    PosteriorModels,
    action_diversity_reward,
    backward_obs_reward,
    forward_obs_reward,
    intrinsic_for_sequences,
    kl_divergence,
    marginal_policy,
    mc_mutual_information,
    train_posteriors,
)
from .envs import EnvContractError, EnvSpec, PacMenEnv, StepResult, build_pacmen_layout
from .learner import (
    Learner,
    LossParts,
    compute_losses,
    l1_penalty,
    masked_mse,
    td_target,
    train_run,
)
from .mixer import AdditiveMixer, DuelingMixer, build_mixer, dueling_mix, greedy_joint_value
from .replay import Episode, EpisodeBatch, ReplayBuffer, collate
from .runner import EvalResult, evaluate, run_training
from .seeding import SeedBundle, rng_from, seed_bundle

__version__ = "0.1.0"

__all__ = [
    "ABLATIONS",
    "AdditiveMixer",
    "AgentNetwork",
    "CheckpointError",
    "ConfigError",
    "DuelingMixer",
    "EnvContractError",
    "EnvSpec",
    "Episode",
    "EpisodeBatch",
    "EvalResult",
    "ExploreConfig",
    "IntrinsicConfig",
    "IntrinsicOutput",
    "Learner",
    "LearnerConfig",
    "LoadedCheckpoint",
    "LossParts",
    "MutualInformation",
    "PacMenEnv",
    "PosteriorModels",
    "QOutputs",
    "ReplayBuffer",
    "RunConfig",
    "SeedBundle",
    "StepResult",
    "action_diversity_reward",
    "apply_ablation",
    "backward_obs_reward",
    "boltzmann_policy",
    "build_mixer",
    "build_pacmen_layout",
    "build_run_config",
    "collate",
    "compute_losses",
    "dueling_mix",
    "epsilon_schedule",
    "evaluate",
    "forward_obs_reward",
    "greedy_joint_value",
    "intrinsic_for_sequences",
    "kl_divergence",
    "l1_penalty",
    "load_checkpoint",
    "marginal_policy",
    "masked_mse",
    "mc_mutual_information",
    "read_config_file",
    "rng_from",
    "run_training",
    "save_checkpoint",
    "seed_bundle",
    "select_action",
    "td_target",
    "train_posteriors",
    "train_run",
    "write_config_snapshot",
]
