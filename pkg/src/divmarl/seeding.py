"""Root-seed expansion into named, independent random substreams.

Every source of randomness in a run (environment resets, parameter init,
exploration noise, replay sampling, evaluation) draws from its own substream
so that e.g. changing the number of eval episodes never perturbs training.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

SUBSTREAMS = ("env", "init", "exploration", "sampling", "eval")


@dataclass(frozen=True)
class SeedBundle:
    root: int
    env: int
    init: int
    exploration: int
    sampling: int
    eval: int


def seed_bundle(root: int) -> SeedBundle:
    """Expand a root seed into one stable 32-bit seed per named substream."""
    children = np.random.SeedSequence(root).spawn(len(SUBSTREAMS))
    seeds = {
        name: int(child.generate_state(1, np.uint32)[0])
        for name, child in zip(SUBSTREAMS, children)
    }
    return SeedBundle(root=root, **seeds)


def rng_from(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))
