"""Recurrent agent network: shared trajectory encoder, decomposed local Q.

Every agent runs the same FC+GRU encoder over (observation, previous
action); no identity feature enters the encoder. Each local Q value is the
exact sum of a shared head and that agent's individual head, so knowledge
lives in the shared head unless an agent has a reason to diverge.

The `all_shared` variant drops the individual heads and instead appends an
identity one-hot to the encoder input (the architecture used by
parameter-sharing baselines).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
from torch import nn

from .envs import EnvSpec

HIDDEN_DIM = 64


@dataclass
class QOutputs:
    """Per-agent per-action values of both components; q_total drives acting."""

    q_shared: torch.Tensor  # [..., n_agents, n_actions]
    q_individual: torch.Tensor  # same shape

    @property
    def q_total(self) -> torch.Tensor:
        return self.q_shared + self.q_individual


class AgentNetwork(nn.Module):
    def __init__(
        self,
        spec: EnvSpec,
        hidden_dim: int = HIDDEN_DIM,
        individual_heads: bool = True,
        id_in_input: bool = False,
    ) -> None:
        super().__init__()
        self.spec = spec
        self.hidden_dim = hidden_dim
        self.id_in_input = id_in_input
        self.input_dim = spec.obs_dim + spec.n_actions + (spec.n_agents if id_in_input else 0)
        self.fc = nn.Linear(self.input_dim, hidden_dim)
        self.gru = nn.GRU(hidden_dim, hidden_dim)
        self.shared_head = nn.Linear(hidden_dim, spec.n_actions)
        if individual_heads:
            self.individual_heads: nn.ModuleList | None = nn.ModuleList(
                nn.Linear(hidden_dim, spec.n_actions) for _ in range(spec.n_agents)
            )
        else:
            self.individual_heads = None

    @property
    def has_individual_heads(self) -> bool:
        return self.individual_heads is not None

    @property
    def n_agents(self) -> int:
        return self.spec.n_agents

    @property
    def n_actions(self) -> int:
        return self.spec.n_actions

    def init_hidden(self, batch: int = 1) -> torch.Tensor:
        p = self.fc.weight
        return torch.zeros(batch, self.spec.n_agents, self.hidden_dim, dtype=p.dtype, device=p.device)

    # -- encoding ------------------------------------------------------------

    def _encoder_input(self, obs: torch.Tensor, prev_action: torch.Tensor) -> torch.Tensor:
        parts = [obs, prev_action]
        if self.id_in_input:
            n = self.spec.n_agents
            eye = torch.eye(n, dtype=obs.dtype, device=obs.device)
            parts.append(eye.expand(*obs.shape[:-2], n, n))
        return torch.cat(parts, dim=-1)

    def encode_step(self, obs: torch.Tensor, prev_action: torch.Tensor, hidden: torch.Tensor) -> torch.Tensor:
        """Advance the recurrent state one step. obs [B,n,O], prev_action [B,n,A], hidden [B,n,H]."""
        batch, n = obs.shape[0], obs.shape[1]
        x = torch.relu(self.fc(self._encoder_input(obs, prev_action)))
        _, h = self.gru(x.reshape(1, batch * n, -1), hidden.reshape(1, batch * n, -1).contiguous())
        return h.reshape(batch, n, self.hidden_dim)

    def encode_sequence(self, obs: torch.Tensor, prev_actions: torch.Tensor, hidden: torch.Tensor) -> torch.Tensor:
        """Encode a whole padded episode in one fused GRU call.

        obs [T,B,n,O], prev_actions [T,B,n,A], hidden [B,n,H] -> hiddens [T,B,n,H].
        """
        t, batch, n = obs.shape[0], obs.shape[1], obs.shape[2]
        x = torch.relu(self.fc(self._encoder_input(obs, prev_actions)))
        out, _ = self.gru(x.reshape(t, batch * n, -1), hidden.reshape(1, batch * n, -1).contiguous())
        return out.reshape(t, batch, n, self.hidden_dim)

    # -- heads ----------------------------------------------------------------

    def q_values(self, hidden: torch.Tensor) -> QOutputs:
        """Both Q components for each agent's own hidden state [..., n, H]."""
        q_shared = self.shared_head(hidden)
        if self.individual_heads is None:
            return QOutputs(q_shared=q_shared, q_individual=torch.zeros_like(q_shared))
        q_ind = torch.stack(
            [head(hidden[..., i, :]) for i, head in enumerate(self.individual_heads)], dim=-2
        )
        return QOutputs(q_shared=q_shared, q_individual=q_ind)

    def q_all_heads(self, hidden: torch.Tensor) -> torch.Tensor:
        """Cross-evaluation [..., n_traj, n_id, A]: every head on every agent's hidden.

        Requires the id-free encoder; with id_in_input use cross_id_step instead.
        """
        if self.id_in_input:
            raise RuntimeError("q_all_heads undefined when identity is an encoder input")
        q_shared = self.shared_head(hidden).unsqueeze(-2)
        if self.individual_heads is None:
            return q_shared.expand(*q_shared.shape[:-2], self.spec.n_agents, self.spec.n_actions)
        q_ind = torch.stack([head(hidden) for head in self.individual_heads], dim=-2)
        return q_shared + q_ind

    def cross_id_step(
        self, obs: torch.Tensor, prev_action: torch.Tensor, hidden: torch.Tensor
    ) -> tuple[torch.Tensor, torch.Tensor]:
        """One step yielding own-id hiddens plus counterfactual-id Q values.

        Returns (h_next [B,n,H], q_cross [B,n_traj,n_id,A]). Without identity
        inputs the counterfactual is exact (swap heads on one hidden); with
        id_in_input the current step is re-encoded once per candidate id.
        """
        h_next = self.encode_step(obs, prev_action, hidden)
        if not self.id_in_input:
            return h_next, self.q_all_heads(h_next)
        batch, n = obs.shape[0], obs.shape[1]
        eye = torch.eye(n, dtype=obs.dtype, device=obs.device)
        # tile agents over candidate ids: row (i, j) encodes agent i's input with id j
        obs_t = obs.unsqueeze(2).expand(batch, n, n, -1)
        act_t = prev_action.unsqueeze(2).expand(batch, n, n, -1)
        ids = eye.expand(batch, n, n, n)
        x = torch.relu(self.fc(torch.cat([obs_t, act_t, ids], dim=-1)))
        h_prev = hidden.unsqueeze(2).expand(batch, n, n, -1)
        _, h = self.gru(
            x.reshape(1, batch * n * n, -1), h_prev.reshape(1, batch * n * n, -1).contiguous()
        )
        q_cross = self.shared_head(h.reshape(batch, n, n, -1))
        return h_next, q_cross


# -- action selection ----------------------------------------------------------


def select_action(q_total, epsilon: float, rng: np.random.Generator) -> np.ndarray:
    """Epsilon-greedy over each agent's total Q; argmax ties break to the lowest index."""
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError(f"epsilon must be in [0, 1], got {epsilon}")
    q = q_total.detach().cpu().numpy() if isinstance(q_total, torch.Tensor) else np.asarray(q_total)
    greedy = np.argmax(q, axis=-1)
    explore = rng.random(q.shape[:-1]) < epsilon
    randoms = rng.integers(0, q.shape[-1], size=q.shape[:-1])
    return np.where(explore, randoms, greedy).astype(np.int64)


def epsilon_schedule(step: int, start: float = 1.0, end: float = 0.05, anneal_steps: int = 500_000) -> float:
    if anneal_steps <= 0:
        return end
    frac = min(max(step, 0) / anneal_steps, 1.0)
    return start + (end - start) * frac


def boltzmann_policy(q_total: torch.Tensor, beta1: float) -> torch.Tensor:
    """SoftMax(beta1 * Q) along the action axis, stable under value shifts."""
    if beta1 < 0:
        raise ValueError(f"beta1 must be >= 0, got {beta1}")
    z = beta1 * q_total
    z = z - z.max(dim=-1, keepdim=True).values
    return torch.softmax(z, dim=-1)
