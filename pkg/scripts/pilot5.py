"""Probe longer budgets for room specialization: 150k steps, two anneal schedules."""

import dataclasses
import sys
import time

from divmarl.config import ExploreConfig, LearnerConfig, RunConfig
from divmarl.diversity import IntrinsicConfig
from divmarl.runner import run_training

BASE = RunConfig(
    total_env_steps=150_000,
    eval_interval=100,
    eval_interval_episodes=10,
    eval_episodes=100,
    learner=LearnerConfig(
        batch_size=32,
        updates_per_episode=2,
        target_update_interval=40,
        buffer_capacity=500,
        intrinsic_recompute=False,
    ),
    explore=ExploreConfig(anneal_steps=30_000),
    intrinsic=IntrinsicConfig(),
)


def main() -> None:
    slow = dataclasses.replace(BASE, explore=ExploreConfig(anneal_steps=75_000))
    jobs = [(f"a150_s{s}", s, BASE) for s in (0, 1)]
    jobs += [(f"b150_s{s}", s, slow) for s in (0, 1)]

    for name, seed, cfg in jobs:
        t0 = time.time()
        report = run_training(cfg, seed, f"/tmp/pilot5/{name}")
        report["minutes"] = round((time.time() - t0) / 60, 2)
        print(name, report, flush=True)


if __name__ == "__main__":
    sys.exit(main())
