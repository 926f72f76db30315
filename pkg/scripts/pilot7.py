"""Probe scatter levers at 300k: moderate retention vs a higher epsilon floor."""

import dataclasses
import sys
import time

from divmarl.config import ExploreConfig, LearnerConfig, RunConfig
from divmarl.diversity import IntrinsicConfig
from divmarl.runner import run_training

MID = RunConfig(
    total_env_steps=300_000,
    eval_interval=100,
    eval_interval_episodes=10,
    eval_episodes=100,
    keep="best",
    learner=LearnerConfig(
        batch_size=32,
        updates_per_episode=2,
        target_update_interval=100,
        buffer_capacity=2000,
        intrinsic_recompute=False,
    ),
    explore=ExploreConfig(anneal_steps=100_000),
    intrinsic=IntrinsicConfig(),
)

EPS = dataclasses.replace(
    MID,
    learner=dataclasses.replace(MID.learner, buffer_capacity=500, target_update_interval=40),
    explore=ExploreConfig(epsilon_end=0.15, anneal_steps=75_000),
)


def main() -> None:
    jobs = [("mid_s0", 0, MID), ("eps_s0", 0, EPS), ("eps_s1", 1, EPS)]
    for name, seed, cfg in jobs:
        t0 = time.time()
        report = run_training(cfg, seed, f"/tmp/pilot7/{name}")
        report["minutes"] = round((time.time() - t0) / 60, 2)
        print(name, report, flush=True)


if __name__ == "__main__":
    sys.exit(main())
