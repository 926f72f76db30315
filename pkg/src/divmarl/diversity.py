"""Identity-conditioned diversity bonus and its learned posterior models.

The bonus has two parts, both computable per transition:

  action term   beta2 * KL( pi(.|tau, id) || p(.|tau) )
      pi is a Boltzmann readout of the local value head at inverse
      temperature beta1; p is the identity-marginalized policy, either a
      uniform average over identities or weighted by a learned posterior
      q_xi(id|tau).

  observation term, forward form
      beta1 * log q_phi(o'|tau, a, id) - log q_phi2(o'|tau, a)
  observation term, backward form
      beta1 * log q_eta1(id|o', tau, a) - log q_eta2(id|tau, a)

q_phi/q_phi2 are fixed-variance diagonal Gaussians over the next
observation; q_eta1/q_eta2/q_xi are softmax classifiers over identities.
All posteriors train by maximum likelihood on replayed transitions.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .agents import AgentNetwork, boltzmann_policy
from .envs.base import EnvSpec

MARGINAL_MODES = ("uniform", "variational")
OBS_MODES = ("forward", "backward")

# Default predictor variance 1/(2*pi) makes the Gaussian log-density exactly
# -pi * ||err||^2: the dimension-scaled normalization constant cancels, so the
# observation term is a pure scaled-error score with no additive offset.
DEFAULT_OBS_VAR = 1.0 / (2.0 * math.pi)


@dataclass(frozen=True)
class IntrinsicConfig:
    """Knobs for the diversity bonus; betas weight the terms, modes pick forms."""

    beta: float = 0.15
    beta1: float = 2.0
    beta2: float = 1.0
    marginal_mode: str = "uniform"
    obs_mode: str = "forward"
    use_obs_term: bool = True
    obs_var: float = DEFAULT_OBS_VAR
    log_floor: float = 1e-8

    def __post_init__(self) -> None:
        if self.beta < 0 or self.beta1 < 0 or self.beta2 < 0:
            raise ValueError("beta, beta1 and beta2 must be nonnegative")
        if self.marginal_mode not in MARGINAL_MODES:
            raise ValueError(f"marginal_mode must be one of {MARGINAL_MODES}, got {self.marginal_mode!r}")
        if self.obs_mode not in OBS_MODES:
            raise ValueError(f"obs_mode must be one of {OBS_MODES}, got {self.obs_mode!r}")
        if self.obs_var <= 0:
            raise ValueError("obs_var must be positive")
        if not 0 < self.log_floor < 1:
            raise ValueError("log_floor must lie in (0, 1)")


class GaussianObsPredictor(nn.Module):
    """Diagonal Gaussian over the next observation with fixed variance."""

    def __init__(self, in_dim: int, out_dim: int, hidden_dim: int = 64, var: float = DEFAULT_OBS_VAR) -> None:
        super().__init__()
        self.out_dim = out_dim
        self.var = float(var)
        self.net = nn.Sequential(
            nn.Linear(in_dim, hidden_dim),
            nn.ReLU(),
            nn.Linear(hidden_dim, out_dim),
        )

    def forward(self, *inputs: torch.Tensor) -> torch.Tensor:
        return self.net(torch.cat(inputs, dim=-1))

    def log_prob(self, target: torch.Tensor, *inputs: torch.Tensor) -> torch.Tensor:
        mean = self(*inputs)
        sq_err = (target - mean).pow(2).sum(dim=-1)
        log_norm = 0.5 * self.out_dim * math.log(2.0 * math.pi * self.var)
        return -0.5 * sq_err / self.var - log_norm


class IdentityClassifier(nn.Module):
    """Softmax posterior over agent identities."""

    def __init__(self, in_dim: int, n_ids: int, hidden_dim: int = 64) -> None:
        super().__init__()
        self.n_ids = n_ids
        self.net = nn.Sequential(
            nn.Linear(in_dim, hidden_dim),
            nn.ReLU(),
            nn.Linear(hidden_dim, n_ids),
        )

    def forward(self, *inputs: torch.Tensor) -> torch.Tensor:
        return self.net(torch.cat(inputs, dim=-1))

    def log_prob(self, ids: torch.Tensor, *inputs: torch.Tensor) -> torch.Tensor:
        logp = F.log_softmax(self(*inputs), dim=-1)
        return logp.gather(-1, ids.unsqueeze(-1)).squeeze(-1)

    def probs(self, *inputs: torch.Tensor) -> torch.Tensor:
        return F.softmax(self(*inputs), dim=-1)


class PosteriorModels(nn.Module):
    """Bundle of the five learned posteriors used by the bonus.

    Inputs are the recurrent summary tau [.., H], one-hot action [.., A],
    one-hot identity [.., n] and next observation [.., O].
    """

    def __init__(self, spec: EnvSpec, tau_dim: int, hidden_dim: int = 64, obs_var: float = DEFAULT_OBS_VAR) -> None:
        super().__init__()
        n, a, o = spec.n_agents, spec.n_actions, spec.obs_dim
        self.tau_dim = tau_dim
        self.hidden_dim = hidden_dim
        self.obs_given_id = GaussianObsPredictor(tau_dim + a + n, o, hidden_dim, obs_var)
        self.obs_marginal = GaussianObsPredictor(tau_dim + a, o, hidden_dim, obs_var)
        self.id_given_obs = IdentityClassifier(o + tau_dim + a, n, hidden_dim)
        self.id_given_tau = IdentityClassifier(tau_dim + a, n, hidden_dim)
        self.id_weight = IdentityClassifier(tau_dim, n, hidden_dim)


def marginal_policy(policies: torch.Tensor, weights: torch.Tensor | None = None) -> torch.Tensor:
    """Identity-marginalized policy from per-identity policies [.., n_ids, A].

    weights [.., n_ids] must form a distribution over the identity axis;
    None averages uniformly.
    """
    if weights is None:
        return policies.mean(dim=-2)
    return (weights.unsqueeze(-1) * policies).sum(dim=-2)


def kl_divergence(p: torch.Tensor, q: torch.Tensor, floor: float = 1e-8) -> torch.Tensor:
    """KL(p || q) along the last axis; q is floored so the value stays finite."""
    q = q.clamp(min=floor)
    return (torch.special.xlogy(p, p) - p * q.log()).sum(dim=-1)


def action_diversity_reward(
    agent_policy: torch.Tensor, marginal: torch.Tensor, beta2: float, floor: float = 1e-8
) -> torch.Tensor:
    return beta2 * kl_divergence(agent_policy, marginal, floor)


def _finite_or_floor(logp: torch.Tensor, floor: float) -> torch.Tensor:
    # Only non-finite values are replaced; legitimately small densities pass.
    return torch.where(torch.isfinite(logp), logp, torch.full_like(logp, math.log(floor)))


def forward_obs_reward(
    obs_next: torch.Tensor,
    tau: torch.Tensor,
    action_onehot: torch.Tensor,
    id_onehot: torch.Tensor,
    models: PosteriorModels,
    cfg: IntrinsicConfig,
) -> torch.Tensor:
    lp_id = models.obs_given_id.log_prob(obs_next, tau, action_onehot, id_onehot)
    lp_marg = models.obs_marginal.log_prob(obs_next, tau, action_onehot)
    lp_id = _finite_or_floor(lp_id, cfg.log_floor)
    lp_marg = _finite_or_floor(lp_marg, cfg.log_floor)
    return cfg.beta1 * lp_id - lp_marg


def backward_obs_reward(
    obs_next: torch.Tensor,
    tau: torch.Tensor,
    action_onehot: torch.Tensor,
    ids: torch.Tensor,
    models: PosteriorModels,
    cfg: IntrinsicConfig,
) -> torch.Tensor:
    log_floor = math.log(cfg.log_floor)
    lp_post = models.id_given_obs.log_prob(ids, obs_next, tau, action_onehot).clamp(min=log_floor)
    lp_prior = models.id_given_tau.log_prob(ids, tau, action_onehot).clamp(min=log_floor)
    return cfg.beta1 * lp_post - lp_prior


@dataclass
class IntrinsicOutput:
    """Per-step bonus [B, T] plus its two components for logging."""

    reward: torch.Tensor
    action_term: torch.Tensor
    obs_term: torch.Tensor
    per_agent_action: torch.Tensor | None = field(repr=False, default=None)
    per_agent_obs: torch.Tensor | None = field(repr=False, default=None)


def _cross_id_values(
    agent_net: AgentNetwork, obs_tf: torch.Tensor, prev_actions_tf: torch.Tensor
) -> tuple[torch.Tensor, torch.Tensor]:
    """Recurrent summaries and per-identity values along a sequence.

    obs_tf [T, B, n, O], prev_actions_tf [T, B, n, A] ->
    tau [T, B, n, H], q_cross [T, B, n, n_ids, A].
    """
    seq_len, batch, n_agents, _ = obs_tf.shape
    hidden = agent_net.init_hidden(batch)
    if not agent_net.id_in_input:
        tau = agent_net.encode_sequence(obs_tf, prev_actions_tf, hidden)
        return tau, agent_net.q_all_heads(tau)
    taus, values = [], []
    for t in range(seq_len):
        hidden, q_cross = agent_net.cross_id_step(obs_tf[t], prev_actions_tf[t], hidden)
        taus.append(hidden)
        values.append(q_cross)
    return torch.stack(taus), torch.stack(values)


def intrinsic_for_sequences(
    agent_net: AgentNetwork,
    models: PosteriorModels,
    cfg: IntrinsicConfig,
    obs: torch.Tensor,
    actions: torch.Tensor,
) -> IntrinsicOutput:
    """Diversity bonus for whole episodes.

    obs [B, T+1, n, O], actions [B, T, n] -> terms [B, T]. The per-step
    reward is the mean over agents of (action term + observation term).
    """
    batch, steps_plus, n_agents, obs_dim = obs.shape
    seq_len = steps_plus - 1
    n_actions = agent_net.n_actions

    action_onehot = F.one_hot(actions, n_actions).float()
    prev_actions = torch.zeros(batch, seq_len, n_agents, n_actions)
    prev_actions[:, 1:] = action_onehot[:, :-1]

    obs_tf = obs[:, :-1].permute(1, 0, 2, 3)
    prev_tf = prev_actions.permute(1, 0, 2, 3)
    tau, q_cross = _cross_id_values(agent_net, obs_tf, prev_tf)

    policies = boltzmann_policy(q_cross, cfg.beta1)
    if cfg.marginal_mode == "variational":
        weights = models.id_weight.probs(tau)
    else:
        weights = None
    marginal = marginal_policy(policies, weights)
    own = torch.diagonal(policies, dim1=2, dim2=3).movedim(-1, 2)
    per_agent_action = action_diversity_reward(own, marginal, cfg.beta2, cfg.log_floor)

    if cfg.use_obs_term:
        obs_next = obs[:, 1:].permute(1, 0, 2, 3)
        ids = torch.arange(n_agents).expand(seq_len, batch, n_agents)
        if cfg.obs_mode == "forward":
            id_onehot = torch.eye(n_agents).expand(seq_len, batch, n_agents, n_agents)
            per_agent_obs = forward_obs_reward(
                obs_next, tau, action_onehot.permute(1, 0, 2, 3), id_onehot, models, cfg
            )
        else:
            per_agent_obs = backward_obs_reward(
                obs_next, tau, action_onehot.permute(1, 0, 2, 3), ids, models, cfg
            )
    else:
        per_agent_obs = torch.zeros_like(per_agent_action)

    action_term = per_agent_action.mean(dim=-1).transpose(0, 1)
    obs_term = per_agent_obs.mean(dim=-1).transpose(0, 1)
    return IntrinsicOutput(
        reward=action_term + obs_term,
        action_term=action_term,
        obs_term=obs_term,
        per_agent_action=per_agent_action.permute(1, 0, 2),
        per_agent_obs=per_agent_obs.permute(1, 0, 2),
    )


def posterior_nlls(
    models: PosteriorModels,
    tau: torch.Tensor,
    action_onehot: torch.Tensor,
    ids: torch.Tensor,
    obs_next: torch.Tensor,
) -> dict[str, torch.Tensor]:
    """Mean negative log likelihood of each posterior on flat transitions [N, ..]."""
    id_onehot = F.one_hot(ids, models.id_weight.n_ids).float()
    return {
        "obs_given_id": -models.obs_given_id.log_prob(obs_next, tau, action_onehot, id_onehot).mean(),
        "obs_marginal": -models.obs_marginal.log_prob(obs_next, tau, action_onehot).mean(),
        "id_given_obs": -models.id_given_obs.log_prob(ids, obs_next, tau, action_onehot).mean(),
        "id_given_tau": -models.id_given_tau.log_prob(ids, tau, action_onehot).mean(),
        "id_weight": -models.id_weight.log_prob(ids, tau).mean(),
    }


def train_posteriors(
    models: PosteriorModels,
    optimizer: torch.optim.Optimizer,
    tau: torch.Tensor,
    action_onehot: torch.Tensor,
    ids: torch.Tensor,
    obs_next: torch.Tensor,
) -> dict[str, float]:
    """One maximum-likelihood step on all posteriors; empty input is a no-op."""
    if tau.shape[0] == 0:
        warnings.warn("posterior update skipped: no valid transitions in batch", stacklevel=2)
        return {}
    losses = posterior_nlls(models, tau, action_onehot, ids, obs_next)
    optimizer.zero_grad()
    total = sum(losses.values())
    total.backward()
    optimizer.step()
    return {name: float(loss.detach()) for name, loss in losses.items()}


@dataclass(frozen=True)
class MutualInformation:
    action_mi: float
    obs_mi: float


def mc_mutual_information(table, atol: float = 1e-9) -> MutualInformation:
    """Exact conditional mutual informations of a finite joint distribution.

    table [n_tau, n_act, n_obs, n_id] holds p(tau, a, o', id) and must be a
    normalized, nonnegative array. Returns I(a; id | tau) and
    I(o'; id | tau, a) in nats, computed by direct summation.
    """
    p = np.asarray(table, dtype=np.float64)
    if p.ndim != 4:
        raise ValueError(f"expected a 4-axis joint table, got shape {p.shape}")
    if np.any(p < 0):
        raise ValueError("joint table has negative entries")
    if abs(p.sum() - 1.0) > atol:
        raise ValueError(f"joint table sums to {p.sum()!r}, not 1")

    def _mi(joint: np.ndarray, left: np.ndarray, right: np.ndarray, cond: np.ndarray) -> float:
        # sum p * log(p * p_cond / (p_left * p_right)) over the support of p
        mask = joint > 0
        ratio = np.zeros_like(joint)
        ratio[mask] = (
            np.log(joint[mask]) + np.log(cond[mask]) - np.log(left[mask]) - np.log(right[mask])
        )
        return float((joint * ratio).sum())

    # I(a; id | tau)
    p_tai = p.sum(axis=2)
    p_t = p_tai.sum(axis=(1, 2), keepdims=True)
    p_ta = p_tai.sum(axis=2, keepdims=True)
    p_ti = p_tai.sum(axis=1, keepdims=True)
    action_mi = _mi(
        p_tai,
        np.broadcast_to(p_ta, p_tai.shape),
        np.broadcast_to(p_ti, p_tai.shape),
        np.broadcast_to(p_t, p_tai.shape),
    )

    # I(o'; id | tau, a)
    p_cond = p.sum(axis=(2, 3), keepdims=True)
    p_tao = p.sum(axis=3, keepdims=True)
    p_tai_full = p.sum(axis=2, keepdims=True)
    obs_mi = _mi(
        p,
        np.broadcast_to(p_tao, p.shape),
        np.broadcast_to(p_tai_full, p.shape),
        np.broadcast_to(p_cond, p.shape),
    )
    return MutualInformation(action_mi=action_mi, obs_mi=obs_mi)
