"""Probe full-retention and middle-ground regimes at 300k steps."""

import dataclasses
import sys
import time

from divmarl.config import ExploreConfig, LearnerConfig, RunConfig
from divmarl.diversity import IntrinsicConfig
from divmarl.runner import run_training

FULL = RunConfig(
    total_env_steps=300_000,
    eval_interval=200,
    eval_interval_episodes=10,
    eval_episodes=100,
    learner=LearnerConfig(
        batch_size=32,
        updates_per_episode=2,
        target_update_interval=200,
        buffer_capacity=5000,
        intrinsic_recompute=False,
    ),
    explore=ExploreConfig(anneal_steps=50_000),
    intrinsic=IntrinsicConfig(),
)

MID = dataclasses.replace(
    FULL,
    learner=dataclasses.replace(FULL.learner, buffer_capacity=2000, target_update_interval=100),
    explore=ExploreConfig(anneal_steps=100_000),
)


def main() -> None:
    jobs = [("full_s0", 0, FULL), ("full_s1", 1, FULL), ("mid_s0", 0, MID)]
    for name, seed, cfg in jobs:
        t0 = time.time()
        report = run_training(cfg, seed, f"/tmp/pilot6/{name}")
        report["minutes"] = round((time.time() - t0) / 60, 2)
        print(name, report, flush=True)


if __name__ == "__main__":
    sys.exit(main())
