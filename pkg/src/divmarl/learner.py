"""Recurrent Q-learner: masked TD loss on the mixed joint value plus an L1
penalty on the individual value heads, with episode replay and target nets.
"""

from __future__ import annotations

import copy
import dataclasses
import time
from dataclasses import dataclass
from typing import Iterator

import numpy as np
import torch
import torch.nn.functional as F

from .agents import AgentNetwork, QOutputs, epsilon_schedule, select_action
from .config import RunConfig, apply_ablation
from .diversity import PosteriorModels, intrinsic_for_sequences, train_posteriors
from .envs.pacmen import PacMenEnv
from .mixer import build_mixer, greedy_joint_value
from .replay import Episode, EpisodeBatch, ReplayBuffer, collate
from .seeding import rng_from, seed_bundle


def sequence_q(agent: AgentNetwork, batch: EpisodeBatch) -> tuple[QOutputs, torch.Tensor]:
    """Per-agent values along whole episodes.

    Returns QOutputs with tensors [B, T+1, n, A] and the recurrent summaries
    [B, T+1, n, H] that produced them.
    """
    batch_size, steps_plus, n_agents, _ = batch.obs.shape
    n_actions = agent.n_actions
    action_onehot = F.one_hot(batch.actions, n_actions).float()
    prev = torch.zeros(batch_size, steps_plus, n_agents, n_actions)
    prev[:, 1:] = action_onehot

    hidden = agent.init_hidden(batch_size)
    h_seq = agent.encode_sequence(batch.obs.permute(1, 0, 2, 3), prev.permute(1, 0, 2, 3), hidden)
    q = agent.q_values(h_seq)
    return (
        QOutputs(q.q_shared.permute(1, 0, 2, 3), q.q_individual.permute(1, 0, 2, 3)),
        h_seq.permute(1, 0, 2, 3),
    )


def td_target(
    reward_env: torch.Tensor,
    reward_int: torch.Tensor,
    beta: float,
    gamma: float,
    terminal: torch.Tensor,
    next_value: torch.Tensor,
) -> torch.Tensor:
    """Bootstrap target r^e + beta * r^i + gamma * (1 - terminal) * V(s')."""
    return reward_env + beta * reward_int + gamma * (1.0 - terminal) * next_value


def masked_mse(pred: torch.Tensor, target: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
    """Mean squared error over real steps only; padded steps carry no weight."""
    return ((pred - target).pow(2) * mask).sum() / mask.sum().clamp(min=1.0)


def l1_penalty(q_individual: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
    """Per-agent masked mean |Q_i^I| over steps and actions.

    q_individual [B, T, n, A], mask [B, T] -> [n].
    """
    weights = mask[..., None, None]
    denom = mask.sum().clamp(min=1.0) * q_individual.shape[-1]
    return (q_individual.abs() * weights).sum(dim=(0, 1, 3)) / denom


def l1_weight_penalty(agent: AgentNetwork) -> torch.Tensor:
    """Per-agent mean |param| of each individual head; zeros without heads."""
    if agent.individual_heads is None:
        return torch.zeros(agent.n_agents)
    per_agent = []
    for head in agent.individual_heads:
        flat = torch.cat([p.reshape(-1) for p in head.parameters()])
        per_agent.append(flat.abs().mean())
    return torch.stack(per_agent)


@dataclass
class LossParts:
    """total = td + l1_lambda * l1_per_agent.sum(); l1 logs the agent mean."""

    total: torch.Tensor
    td: torch.Tensor
    l1_per_agent: torch.Tensor
    tau: torch.Tensor  # detached summaries [B, T+1, n, H] for posterior training

    @property
    def l1(self) -> torch.Tensor:
        return self.l1_per_agent.mean()


def compute_losses(
    batch: EpisodeBatch,
    agent: AgentNetwork,
    mixer: torch.nn.Module,
    target_agent: AgentNetwork,
    target_mixer: torch.nn.Module,
    gamma: float,
    beta: float,
    l1_lambda: float,
    l1_target: str = "outputs",
) -> LossParts:
    q, tau = sequence_q(agent, batch)
    q_total = q.q_total
    chosen = q_total[:, :-1].gather(-1, batch.actions.unsqueeze(-1)).squeeze(-1)
    q_max = q_total[:, :-1].max(dim=-1).values
    q_tot = mixer(chosen, q_max, batch.state[:, :-1])

    with torch.no_grad():
        target_q, _ = sequence_q(target_agent, batch)
        next_value = greedy_joint_value(target_q.q_total[:, 1:], batch.state[:, 1:], target_mixer)
        target = td_target(
            batch.reward_env, batch.reward_int, beta, gamma, batch.terminal, next_value
        )

    td = masked_mse(q_tot, target, batch.mask)

    if l1_target == "weights":
        l1_per_agent = l1_weight_penalty(agent)
    else:
        l1_per_agent = l1_penalty(q.q_individual[:, :-1], batch.mask)
    total = td + l1_lambda * l1_per_agent.sum()
    return LossParts(total=total, td=td, l1_per_agent=l1_per_agent, tau=tau.detach())


def td_loss(batch, agent, mixer, target_agent, target_mixer, gamma, beta) -> torch.Tensor:
    return compute_losses(batch, agent, mixer, target_agent, target_mixer, gamma, beta, 0.0).td


class Learner:
    """Owns the networks, replay, optimizers and per-run random streams.

    cfg must already have its ablation materialized (apply_ablation); the
    constructor refuses a config whose switches disagree with its tag.
    """

    def __init__(self, cfg: RunConfig, env: PacMenEnv, root_seed: int) -> None:
        if cfg.learner.ablation == "all_shared" and cfg.learner.individual_heads:
            raise ValueError("config not materialized: run apply_ablation first")
        self.cfg = cfg
        self.env = env
        self.root_seed = root_seed

        bundle = seed_bundle(root_seed)
        self.seeds = bundle
        torch.manual_seed(bundle.init)
        if cfg.deterministic:
            torch.set_num_threads(1)
        self.env_rng = rng_from(bundle.env)
        self.explore_rng = rng_from(bundle.exploration)
        self.sample_rng = rng_from(bundle.sampling)

        spec = env.spec
        lc = cfg.learner
        self.agent = AgentNetwork(
            spec,
            hidden_dim=cfg.hidden_dim,
            individual_heads=lc.individual_heads,
            id_in_input=lc.id_in_input,
        )
        self.mixer = build_mixer(lc.mixer, spec.n_agents, spec.state_dim)
        self.target_agent = copy.deepcopy(self.agent)
        self.target_mixer = copy.deepcopy(self.mixer)
        for p in self.target_agent.parameters():
            p.requires_grad_(False)
        for p in self.target_mixer.parameters():
            p.requires_grad_(False)

        self.posteriors = PosteriorModels(spec, cfg.hidden_dim, obs_var=cfg.intrinsic.obs_var)
        params = list(self.agent.parameters()) + list(self.mixer.parameters())
        self.optimizer = torch.optim.RMSprop(params, lr=lc.learning_rate, alpha=lc.rmsprop_alpha)
        self.posterior_optimizer = torch.optim.RMSprop(
            self.posteriors.parameters(), lr=lc.learning_rate, alpha=lc.rmsprop_alpha
        )

        self.buffer = ReplayBuffer(lc.buffer_capacity)
        self.env_steps = 0
        self.episodes = 0
        self.train_steps = 0

    # ------------------------------------------------------------------ rollout

    def collect_episode(self, epsilon: float) -> tuple[Episode, dict]:
        env = self.env
        spec = env.spec
        limit = spec.episode_limit
        env_seed = int(self.env_rng.integers(0, 2**31 - 1))
        result = env.reset(env_seed)

        obs = np.zeros((limit + 1, spec.n_agents, spec.obs_dim), dtype=np.float32)
        state = np.zeros((limit + 1, spec.state_dim), dtype=np.float32)
        actions = np.zeros((limit, spec.n_agents), dtype=np.int64)
        reward_env = np.zeros(limit, dtype=np.float32)
        terminal = np.zeros(limit, dtype=np.float32)
        mask = np.zeros(limit, dtype=np.float32)
        obs[0] = result.observations
        state[0] = result.global_state

        hidden = self.agent.init_hidden(1)
        prev_action = torch.zeros(1, spec.n_agents, spec.n_actions)
        steps = 0
        with torch.no_grad():
            for t in range(limit):
                obs_t = torch.from_numpy(obs[t]).unsqueeze(0)
                hidden = self.agent.encode_step(obs_t, prev_action, hidden)
                q = self.agent.q_values(hidden)
                acts = select_action(q.q_total[0].numpy(), epsilon, self.explore_rng)
                result = env.step(acts)

                actions[t] = acts
                reward_env[t] = result.reward
                obs[t + 1] = result.observations
                state[t + 1] = result.global_state
                mask[t] = 1.0
                steps = t + 1
                prev_action = F.one_hot(torch.from_numpy(acts), spec.n_actions).float().unsqueeze(0)
                if result.done:
                    terminal[t] = 1.0
                    break

        if steps < limit:
            # keep padded frames inert but well-formed
            obs[steps + 1 :] = obs[steps]
            state[steps + 1 :] = state[steps]

        episode = Episode(
            obs=obs,
            state=state,
            actions=actions,
            reward_env=reward_env,
            reward_int=np.zeros(limit, dtype=np.float32),
            int_action=np.zeros(limit, dtype=np.float32),
            int_obs=np.zeros(limit, dtype=np.float32),
            terminal=terminal,
            mask=mask,
            env_seed=env_seed,
        )
        self._attach_intrinsic(episode)
        self.env_steps += steps
        self.episodes += 1
        real = mask.astype(bool)
        stats = {
            "length": steps,
            "return": float(reward_env[real].sum()),
            "intrinsic_action_mean": float(episode.int_action[real].mean()) if steps else 0.0,
            "intrinsic_obs_mean": float(episode.int_obs[real].mean()) if steps else 0.0,
        }
        return episode, stats

    def _attach_intrinsic(self, episode: Episode) -> None:
        """Score the fresh rollout with the current nets and store the bonus."""
        with torch.no_grad():
            out = intrinsic_for_sequences(
                self.agent,
                self.posteriors,
                self.cfg.intrinsic,
                torch.from_numpy(episode.obs).unsqueeze(0),
                torch.from_numpy(episode.actions).unsqueeze(0),
            )
        mask = episode.mask
        episode.reward_int = out.reward[0].numpy() * mask
        episode.int_action = out.action_term[0].numpy() * mask
        episode.int_obs = out.obs_term[0].numpy() * mask

    # ------------------------------------------------------------------ updates

    def _posterior_step(self, batch: EpisodeBatch, tau: torch.Tensor) -> dict[str, float]:
        spec = self.env.spec
        flat_mask = batch.mask.reshape(-1).bool()
        tau_steps = tau[:, :-1].reshape(-1, spec.n_agents, tau.shape[-1])[flat_mask]
        obs_next = batch.obs[:, 1:].reshape(-1, spec.n_agents, spec.obs_dim)[flat_mask]
        act = F.one_hot(batch.actions, spec.n_actions).float()
        act = act.reshape(-1, spec.n_agents, spec.n_actions)[flat_mask]

        rows = tau_steps.shape[0]
        ids = torch.arange(spec.n_agents).repeat(rows)
        return train_posteriors(
            self.posteriors,
            self.posterior_optimizer,
            tau_steps.reshape(rows * spec.n_agents, -1),
            act.reshape(rows * spec.n_agents, -1),
            ids,
            obs_next.reshape(rows * spec.n_agents, -1),
        )

    def update(self) -> dict[str, float] | None:
        lc = self.cfg.learner
        if not self.buffer.can_sample(lc.batch_size):
            return None
        batch = collate(self.buffer.sample(self.sample_rng, lc.batch_size))

        if lc.intrinsic_recompute:
            with torch.no_grad():
                out = intrinsic_for_sequences(
                    self.agent, self.posteriors, self.cfg.intrinsic, batch.obs, batch.actions
                )
            batch = dataclasses.replace(batch, reward_int=out.reward * batch.mask)

        parts = compute_losses(
            batch,
            self.agent,
            self.mixer,
            self.target_agent,
            self.target_mixer,
            gamma=lc.gamma,
            beta=self.cfg.intrinsic.beta,
            l1_lambda=lc.l1_lambda,
            l1_target=lc.l1_target,
        )
        self.optimizer.zero_grad()
        parts.total.backward()
        if lc.grad_clip > 0:
            torch.nn.utils.clip_grad_norm_(
                [p for g in self.optimizer.param_groups for p in g["params"]], lc.grad_clip
            )
        self.optimizer.step()

        posterior_losses = self._posterior_step(batch, parts.tau)

        self.train_steps += 1
        if self.train_steps % lc.target_update_interval == 0:
            self.sync_targets()

        out = {
            "td_loss": float(parts.td.detach()),
            "l1_loss": float(parts.l1.detach()),
            "total_loss": float(parts.total.detach()),
        }
        out.update({f"nll_{k}": v for k, v in posterior_losses.items()})
        return out

    def sync_targets(self) -> None:
        self.target_agent.load_state_dict(self.agent.state_dict())
        self.target_mixer.load_state_dict(self.mixer.state_dict())


METRIC_COLUMNS = (
    "episode",
    "env_steps",
    "return",
    "td_loss",
    "l1_loss",
    "intrinsic_action_mean",
    "intrinsic_obs_mean",
    "epsilon",
    "wall_clock",
)


def train_run(cfg: RunConfig, root_seed: int, learner: Learner | None = None) -> Iterator[dict]:
    """Drive one training run, yielding a metrics row per episode.

    cfg may carry an unmaterialized ablation tag; it is applied here. Pass a
    prebuilt learner to keep a handle on it (checkpoints, evaluation).
    """
    cfg = apply_ablation(cfg)
    if learner is None:
        learner = Learner(cfg, PacMenEnv(), root_seed)
    start = time.perf_counter()

    while learner.env_steps < cfg.total_env_steps:
        epsilon = epsilon_schedule(
            learner.env_steps,
            start=cfg.explore.epsilon_start,
            end=cfg.explore.epsilon_end,
            anneal_steps=cfg.explore.anneal_steps,
        )
        episode, stats = learner.collect_episode(epsilon)
        learner.buffer.add(episode)

        losses: dict[str, float] | None = None
        for _ in range(cfg.learner.updates_per_episode):
            step_losses = learner.update()
            if step_losses is not None:
                losses = step_losses

        row = {
            "episode": learner.episodes,
            "env_steps": learner.env_steps,
            "return": stats["return"],
            "td_loss": losses["td_loss"] if losses else float("nan"),
            "l1_loss": losses["l1_loss"] if losses else float("nan"),
            "intrinsic_action_mean": stats["intrinsic_action_mean"],
            "intrinsic_obs_mean": stats["intrinsic_obs_mean"],
            "epsilon": epsilon,
            "wall_clock": 0.0 if cfg.deterministic else time.perf_counter() - start,
        }
        yield row
