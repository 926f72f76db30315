"""Episode traces as JSON lines: a reset record, then one record per step.

Traces carry enough to replay an episode exactly against the environment
(reset seed and chosen actions); positions and rewards are stored too so
consumers can stream without replaying.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path


@dataclass
class TraceStep:
    step: int
    positions: list[tuple[int, int]]  # post-step agent cells
    actions: list[int]
    reward: float


@dataclass
class EpisodeTrace:
    episode: int
    env_seed: int
    reset_positions: list[tuple[int, int]]
    steps: list[TraceStep] = field(default_factory=list)


class TraceError(ValueError):
    """Malformed trace file or record."""


def write_traces(path: str | Path, traces: list[EpisodeTrace]) -> None:
    lines = []
    for trace in traces:
        lines.append(
            json.dumps(
                {
                    "kind": "reset",
                    "episode": trace.episode,
                    "env_seed": trace.env_seed,
                    "positions": [list(p) for p in trace.reset_positions],
                }
            )
        )
        for step in trace.steps:
            lines.append(
                json.dumps(
                    {
                        "kind": "step",
                        "episode": trace.episode,
                        "step": step.step,
                        "positions": [list(p) for p in step.positions],
                        "actions": list(step.actions),
                        "reward": step.reward,
                    }
                )
            )
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""))


def read_traces(path: str | Path) -> list[EpisodeTrace]:
    path = Path(path)
    traces: list[EpisodeTrace] = []
    current: EpisodeTrace | None = None
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            raise TraceError(f"{path}:{lineno}: not valid JSON: {exc}") from None
        kind = record.get("kind")
        if kind == "reset":
            current = EpisodeTrace(
                episode=int(record["episode"]),
                env_seed=int(record["env_seed"]),
                reset_positions=[tuple(p) for p in record["positions"]],
            )
            traces.append(current)
        elif kind == "step":
            if current is None or int(record["episode"]) != current.episode:
                raise TraceError(f"{path}:{lineno}: step record without a matching reset")
            current.steps.append(
                TraceStep(
                    step=int(record["step"]),
                    positions=[tuple(p) for p in record["positions"]],
                    actions=[int(a) for a in record["actions"]],
                    reward=float(record["reward"]),
                )
            )
        else:
            raise TraceError(f"{path}:{lineno}: unknown record kind {kind!r}")
    return traces
