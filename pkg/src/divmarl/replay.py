"""Episode-granular replay storage and batch collation."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np
import torch


@dataclass
class Episode:
    """One rollout, stored as numpy arrays.

    obs and state carry T+1 entries (the post-reset frame plus one per step);
    the step-indexed arrays carry T. mask flags which steps are real so
    shorter rollouts can be padded to a common length before stacking.
    """

    obs: np.ndarray          # [T+1, n_agents, obs_dim] float32
    state: np.ndarray        # [T+1, state_dim] float32
    actions: np.ndarray      # [T, n_agents] int64
    reward_env: np.ndarray   # [T] float32
    reward_int: np.ndarray   # [T] float32
    int_action: np.ndarray   # [T] float32
    int_obs: np.ndarray      # [T] float32
    terminal: np.ndarray     # [T] float32, 1.0 where the episode ended
    mask: np.ndarray         # [T] float32, 1.0 for real steps
    env_seed: int

    def __post_init__(self) -> None:
        steps = self.actions.shape[0]
        if self.obs.shape[0] != steps + 1 or self.state.shape[0] != steps + 1:
            raise ValueError("obs/state must hold exactly one more entry than actions")
        for name in ("reward_env", "reward_int", "int_action", "int_obs", "terminal", "mask"):
            if getattr(self, name).shape[0] != steps:
                raise ValueError(f"{name} length does not match the action count")

    @property
    def length(self) -> int:
        return int(self.mask.sum())


@dataclass
class EpisodeBatch:
    """Stacked episodes as torch tensors, batch axis first."""

    obs: torch.Tensor          # [B, T+1, n_agents, obs_dim]
    state: torch.Tensor        # [B, T+1, state_dim]
    actions: torch.Tensor      # [B, T, n_agents]
    reward_env: torch.Tensor   # [B, T]
    reward_int: torch.Tensor   # [B, T]
    terminal: torch.Tensor     # [B, T]
    mask: torch.Tensor         # [B, T]

    @property
    def batch_size(self) -> int:
        return self.obs.shape[0]

    @property
    def seq_len(self) -> int:
        return self.actions.shape[1]


def collate(episodes: list[Episode]) -> EpisodeBatch:
    if not episodes:
        raise ValueError("cannot collate an empty episode list")
    lengths = {ep.actions.shape[0] for ep in episodes}
    if len(lengths) != 1:
        raise ValueError(f"episodes must share a common padded length, got {sorted(lengths)}")

    def stack(name: str) -> torch.Tensor:
        return torch.from_numpy(np.stack([getattr(ep, name) for ep in episodes]))

    return EpisodeBatch(
        obs=stack("obs"),
        state=stack("state"),
        actions=stack("actions"),
        reward_env=stack("reward_env"),
        reward_int=stack("reward_int"),
        terminal=stack("terminal"),
        mask=stack("mask"),
    )


class ReplayBuffer:
    """FIFO ring of whole episodes with uniform sampling."""

    def __init__(self, capacity: int) -> None:
        if capacity < 1:
            raise ValueError("capacity must be at least 1")
        self.capacity = capacity
        self._episodes: deque[Episode] = deque(maxlen=capacity)

    def __len__(self) -> int:
        return len(self._episodes)

    def add(self, episode: Episode) -> None:
        self._episodes.append(episode)

    def can_sample(self, batch_size: int) -> bool:
        return len(self._episodes) >= batch_size

    def sample(self, rng: np.random.Generator, batch_size: int) -> list[Episode]:
        if not self.can_sample(batch_size):
            raise ValueError(f"buffer holds {len(self._episodes)} episodes, need {batch_size}")
        idx = rng.choice(len(self._episodes), size=batch_size, replace=False)
        return [self._episodes[int(i)] for i in idx]
