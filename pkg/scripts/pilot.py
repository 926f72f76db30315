"""Desk-scale pilot: one run per ablation tag, printing progress and summary.

Usage: python3 scripts/pilot.py <tag> <root_seed> <out_dir> [total_steps]
"""

import sys
import time

import divmarl as dm


def main() -> None:
    tag, root_seed, out_dir = sys.argv[1], int(sys.argv[2]), sys.argv[3]
    total = int(sys.argv[4]) if len(sys.argv) > 4 else 60_000
    cfg = dm.RunConfig(
        seeds=(root_seed,),
        out_dir=out_dir,
        total_env_steps=total,
        eval_interval=100,
        eval_interval_episodes=6,
        eval_episodes=30,
        checkpoint_interval=0,
        learner=dm.LearnerConfig(
            batch_size=32,
            buffer_capacity=500,
            updates_per_episode=2,
            target_update_interval=40,
            ablation=tag,
        ),
        explore=dm.ExploreConfig(anneal_steps=total // 2),
    )
    t0 = time.time()
    report = dm.run_training(cfg, root_seed, out_dir)
    report["minutes"] = round((time.time() - t0) / 60, 2)
    print(tag, root_seed, report)


if __name__ == "__main__":
    main()
