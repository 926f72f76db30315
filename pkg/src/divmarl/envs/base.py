"""Shared environment contract for cooperative multi-agent tasks.

Environments are fully self-contained: one instance is driven by one caller
at a time, several instances can run in parallel with no shared state.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class EnvContractError(RuntimeError):
    """Raised when a caller violates the environment stepping contract."""


@dataclass(frozen=True)
class EnvSpec:
    n_agents: int
    n_actions: int
    obs_dim: int
    state_dim: int
    episode_limit: int

    def __post_init__(self) -> None:
        for name in ("n_agents", "n_actions", "obs_dim", "state_dim", "episode_limit"):
            if getattr(self, name) < 1:
                raise ValueError(f"EnvSpec.{name} must be >= 1, got {getattr(self, name)}")


@dataclass
class StepResult:
    """Per-step outputs: local views for acting, global state for mixing."""

    observations: np.ndarray  # [n_agents, obs_dim] float32
    global_state: np.ndarray  # [state_dim] float32
    reward: float
    terminated: bool
    truncated: bool

    def __post_init__(self) -> None:
        if self.terminated and self.truncated:
            raise ValueError("at most one of terminated/truncated may be set")

    @property
    def done(self) -> bool:
        return self.terminated or self.truncated
