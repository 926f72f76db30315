"""Desk-scale pilot: gentle update regime at 150k steps with full replay retention."""

import dataclasses
import sys
import time

from divmarl.config import ExploreConfig, LearnerConfig, RunConfig
from divmarl.diversity import IntrinsicConfig
from divmarl.runner import run_training

TOTAL = 150_000
ANNEAL = 75_000

BASE = RunConfig(
    total_env_steps=TOTAL,
    eval_interval=100,
    eval_interval_episodes=10,
    eval_episodes=50,
    learner=LearnerConfig(
        batch_size=32,
        updates_per_episode=2,
        target_update_interval=40,
        buffer_capacity=5000,
        intrinsic_recompute=False,
    ),
    explore=ExploreConfig(anneal_steps=ANNEAL),
    intrinsic=IntrinsicConfig(),
)


def main() -> None:
    jobs = []
    for seed in (0, 1):
        jobs.append((f"cds_s{seed}", seed, BASE))
    as_cfg = dataclasses.replace(
        BASE, learner=dataclasses.replace(BASE.learner, ablation="all_shared")
    )
    jobs.append(("as_s0", 0, as_cfg))

    for name, seed, cfg in jobs:
        t0 = time.time()
        report = run_training(cfg, seed, f"/tmp/pilot3/{name}")
        report["minutes"] = round((time.time() - t0) / 60, 2)
        print(name, report, flush=True)


if __name__ == "__main__":
    sys.exit(main())
