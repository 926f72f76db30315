"""Run drivers: training with metric/checkpoint artifacts, greedy evaluation.

A run directory holds:
  config.cfg       effective configuration snapshot (reloadable)
  metrics.csv      one row per training episode
  eval.csv         periodic evaluation summaries (when enabled)
  checkpoint.npz   kept weights: the last ones, or with keep='best' the
                   weights of the best periodic eval (plus checkpoints/
                   ck_ep*.npz when periodic checkpoints are on)
  traces.jsonl     final-eval episode traces from the kept weights
  eval_report.json final-eval summary
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F

from .agents import AgentNetwork, select_action
from .checkpoint import save_checkpoint
from .config import RunConfig, apply_ablation, write_config_snapshot
from .envs.pacmen import PacMenEnv
from .learner import METRIC_COLUMNS, Learner, train_run
from .seeding import seed_bundle
from .traces import EpisodeTrace, TraceStep, write_traces


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_csv_row(handle, values) -> None:
    handle.write(",".join(_fmt(v) for v in values) + "\n")


@dataclass
class EvalResult:
    returns: np.ndarray
    traces: list[EpisodeTrace]

    @property
    def mean(self) -> float:
        return float(self.returns.mean())

    @property
    def sd(self) -> float:
        return float(self.returns.std())


def _eval_rng(eval_seed: int, index: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([eval_seed, index])))


def evaluate(
    agent: AgentNetwork,
    env: PacMenEnv,
    n_episodes: int,
    epsilon: float,
    eval_seed: int,
    eval_index: int = 0,
) -> EvalResult:
    """Roll out the greedy (or epsilon-softened) policy, collecting traces."""
    if n_episodes < 1:
        raise ValueError("n_episodes must be at least 1")
    rng = _eval_rng(eval_seed, eval_index)
    spec = env.spec
    returns = np.zeros(n_episodes, dtype=np.float64)
    traces: list[EpisodeTrace] = []

    with torch.no_grad():
        for ep in range(n_episodes):
            env_seed = int(rng.integers(0, 2**31 - 1))
            result = env.reset(env_seed)
            trace = EpisodeTrace(
                episode=ep, env_seed=env_seed, reset_positions=list(env.agent_positions)
            )
            hidden = agent.init_hidden(1)
            prev_action = torch.zeros(1, spec.n_agents, spec.n_actions)
            total = 0.0
            for t in range(spec.episode_limit):
                obs_t = torch.from_numpy(result.observations).unsqueeze(0)
                hidden = agent.encode_step(obs_t, prev_action, hidden)
                q = agent.q_values(hidden)
                acts = select_action(q.q_total[0].numpy(), epsilon, rng)
                result = env.step(acts)
                total += result.reward
                trace.steps.append(
                    TraceStep(
                        step=t,
                        positions=list(env.agent_positions),
                        actions=[int(a) for a in acts],
                        reward=float(result.reward),
                    )
                )
                prev_action = F.one_hot(torch.from_numpy(acts), spec.n_actions).float().unsqueeze(0)
                if result.done:
                    break
            returns[ep] = total
            traces.append(trace)
    return EvalResult(returns=returns, traces=traces)


def run_training(cfg: RunConfig, root_seed: int, out_dir: str | Path) -> dict:
    """One seed's full training run with all artifacts. Returns a summary dict."""
    cfg = apply_ablation(cfg)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_config_snapshot(out_dir / "config.cfg", cfg)

    env = PacMenEnv()
    learner = Learner(cfg, env, root_seed)
    eval_env = PacMenEnv()
    eval_seed = seed_bundle(root_seed).eval
    eval_count = 0

    eval_handle = None
    if cfg.eval_interval > 0:
        eval_handle = (out_dir / "eval.csv").open("w")
        write_csv_row(eval_handle, ("episode", "env_steps", "mean_return", "sd_return"))

    best_mean = -float("inf")
    best_state = None  # (episodes, env_steps, agent/mixer/posterior state dicts)

    try:
        with (out_dir / "metrics.csv").open("w") as metrics:
            write_csv_row(metrics, METRIC_COLUMNS)
            for row in train_run(cfg, root_seed, learner=learner):
                write_csv_row(metrics, tuple(row[c] for c in METRIC_COLUMNS))

                if cfg.eval_interval > 0 and learner.episodes % cfg.eval_interval == 0:
                    eval_count += 1
                    res = evaluate(
                        learner.agent,
                        eval_env,
                        cfg.eval_interval_episodes,
                        cfg.eval_epsilon,
                        eval_seed,
                        eval_index=eval_count,
                    )
                    write_csv_row(
                        eval_handle, (learner.episodes, learner.env_steps, res.mean, res.sd)
                    )
                    eval_handle.flush()
                    if cfg.keep == "best" and res.mean > best_mean:
                        best_mean = res.mean
                        best_state = (
                            learner.episodes,
                            learner.env_steps,
                            copy.deepcopy(learner.agent.state_dict()),
                            copy.deepcopy(learner.mixer.state_dict()),
                            copy.deepcopy(learner.posteriors.state_dict()),
                        )
                if cfg.checkpoint_interval > 0 and learner.episodes % cfg.checkpoint_interval == 0:
                    save_checkpoint(
                        out_dir / "checkpoints" / f"ck_ep{learner.episodes:06d}.npz",
                        learner.agent,
                        learner.mixer,
                        learner.posteriors,
                        meta=_meta(cfg, root_seed, learner.episodes, learner.env_steps),
                    )
    finally:
        if eval_handle is not None:
            eval_handle.close()

    kept_episodes, kept_steps = learner.episodes, learner.env_steps
    if best_state is not None:
        kept_episodes, kept_steps, agent_sd, mixer_sd, posterior_sd = best_state
        learner.agent.load_state_dict(agent_sd)
        learner.mixer.load_state_dict(mixer_sd)
        learner.posteriors.load_state_dict(posterior_sd)

    save_checkpoint(
        out_dir / "checkpoint.npz",
        learner.agent,
        learner.mixer,
        learner.posteriors,
        meta=_meta(cfg, root_seed, kept_episodes, kept_steps),
    )

    final = evaluate(
        learner.agent, eval_env, cfg.eval_episodes, cfg.eval_epsilon, eval_seed, eval_index=0
    )
    write_traces(out_dir / "traces.jsonl", final.traces)
    report = {
        "root_seed": root_seed,
        "episodes": learner.episodes,
        "env_steps": learner.env_steps,
        "keep": cfg.keep,
        "kept_episodes": kept_episodes,
        "eval_episodes": cfg.eval_episodes,
        "eval_epsilon": cfg.eval_epsilon,
        "mean_return": final.mean,
        "sd_return": final.sd,
        "min_return": float(final.returns.min()),
        "max_return": float(final.returns.max()),
    }
    (out_dir / "eval_report.json").write_text(json.dumps(report, indent=2) + "\n")
    return report


def _meta(cfg: RunConfig, root_seed: int, episodes: int, env_steps: int) -> dict:
    return {
        "env_name": cfg.env_name,
        "root_seed": root_seed,
        "episodes": episodes,
        "env_steps": env_steps,
        "ablation": cfg.learner.ablation,
    }
