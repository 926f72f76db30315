"""Joint-value factorization with a guaranteed local/global argmax match.

The dueling mixer writes Q_tot = sum_i V_i + sum_i w_i(s) * A_i with
V_i = max_a Q_i(a), A_i = Q_i(a_i) - V_i <= 0 and state-conditioned weights
w_i(s) >= 0, so the joint greedy action decomposes into per-agent greedy
actions by construction. An additive mixer (plain sum of chosen values) is
available as a baseline.
"""

from __future__ import annotations

import torch
from torch import nn

MIXER_KINDS = ("dueling", "additive")


def dueling_mix(chosen_q: torch.Tensor, max_q: torch.Tensor, weights: torch.Tensor) -> torch.Tensor:
    """Q_tot from per-agent chosen/max values and nonnegative advantage weights."""
    return max_q.sum(dim=-1) + (weights * (chosen_q - max_q)).sum(dim=-1)


class DuelingMixer(nn.Module):
    """Advantage weights from four linear heads on the global state, abs-rectified.

    Each head is a single linear map (no hidden layers) from state to one
    scalar per agent; head outputs pass through abs() and are summed, so the
    generated weights are nonnegative for any state.
    """

    kind = "dueling"

    def __init__(self, n_agents: int, state_dim: int, n_heads: int = 4) -> None:
        super().__init__()
        self.n_agents = n_agents
        self.n_heads = n_heads
        self.weight_heads = nn.Linear(state_dim, n_heads * n_agents)

    def advantage_weights(self, state: torch.Tensor) -> torch.Tensor:
        w = self.weight_heads(state)
        w = w.reshape(*w.shape[:-1], self.n_heads, self.n_agents)
        return w.abs().sum(dim=-2)

    def forward(self, chosen_q: torch.Tensor, max_q: torch.Tensor, state: torch.Tensor) -> torch.Tensor:
        return dueling_mix(chosen_q, max_q, self.advantage_weights(state))


class AdditiveMixer(nn.Module):
    """VDN-style sum of chosen local values; ignores the global state."""

    kind = "additive"

    def __init__(self, n_agents: int, state_dim: int) -> None:
        super().__init__()
        self.n_agents = n_agents

    def forward(self, chosen_q: torch.Tensor, max_q: torch.Tensor, state: torch.Tensor) -> torch.Tensor:
        return chosen_q.sum(dim=-1)


def build_mixer(kind: str, n_agents: int, state_dim: int) -> nn.Module:
    if kind == "dueling":
        return DuelingMixer(n_agents, state_dim)
    if kind == "additive":
        return AdditiveMixer(n_agents, state_dim)
    raise ValueError(f"unknown mixer kind {kind!r}; expected one of {MIXER_KINDS}")


def greedy_joint_value(q_all: torch.Tensor, state: torch.Tensor, mixer: nn.Module) -> torch.Tensor:
    """Value of the joint greedy action: the mixer evaluated at per-agent argmaxes.

    q_all [..., n_agents, n_actions] -> [...]. Equals the exhaustive joint
    maximum for any mixer honoring the argmax-consistency contract.
    """
    v = q_all.max(dim=-1).values
    return mixer(v, v, state)
