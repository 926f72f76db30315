"""Tuned desk-scale pilot with explicit knobs.

Usage: python3 scripts/pilot2.py <tag> <seed> <out> <steps> <recompute:0|1>
"""

import sys
import time

import divmarl as dm


def main() -> None:
    tag, seed, out = sys.argv[1], int(sys.argv[2]), sys.argv[3]
    total = int(sys.argv[4])
    recompute = bool(int(sys.argv[5]))
    cfg = dm.RunConfig(
        seeds=(seed,),
        out_dir=out,
        total_env_steps=total,
        eval_interval=100,
        eval_interval_episodes=6,
        eval_episodes=50,
        checkpoint_interval=0,
        learner=dm.LearnerConfig(
            batch_size=16,
            buffer_capacity=300,
            updates_per_episode=4,
            target_update_interval=25,
            intrinsic_recompute=recompute,
            ablation=tag,
        ),
        explore=dm.ExploreConfig(anneal_steps=max(total * 2 // 5, 1)),
    )
    t0 = time.time()
    report = dm.run_training(cfg, seed, out)
    report["minutes"] = round((time.time() - t0) / 60, 2)
    print(tag, seed, "recompute" if recompute else "stored", report, flush=True)


if __name__ == "__main__":
    main()
