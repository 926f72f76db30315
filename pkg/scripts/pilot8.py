"""Pilot 8: recomputed intrinsic rewards at update time, moderate retention.

Arms (all keep=best, 300k steps, eval every 100 episodes x 10):
  rc   buffer 2000, target 100, anneal 30k, 2 updates/episode, recompute on
  rc4  same but 4 updates/episode
"""
import dataclasses
import json
import sys
import time
from pathlib import Path

sys.path.insert(0, "/root/pkg/src")

from divmarl.config import ExploreConfig, LearnerConfig, RunConfig
from divmarl.runner import run_training

RC = RunConfig(
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
        intrinsic_recompute=True,
    ),
    explore=ExploreConfig(anneal_steps=30_000),
)
RC4 = dataclasses.replace(
    RC, learner=dataclasses.replace(RC.learner, updates_per_episode=4)
)

JOBS = [
    ("rc_s0", RC, 0),
    ("rc4_s0", RC4, 0),
    ("rc_s1", RC, 1),
]

out_root = Path("/tmp/pilot8")
out_root.mkdir(exist_ok=True)
log = (out_root / "pilot8.log").open("a")
for name, cfg, seed in JOBS:
    t0 = time.time()
    report = run_training(cfg, seed, out_root / name)
    report["minutes"] = round((time.time() - t0) / 60, 2)
    line = f"{name} {json.dumps(report)}"
    print(line)
    log.write(line + "\n")
    log.flush()
log.close()
