"""Post-hoc behavioral analysis: visitation maps, role assignment, and the
spatial profile of the shared/individual value decomposition.

The per-agent specialization signal at a state is the ratio of the standard
deviation of the individual head's action values to that of the shared
head's: high where an agent deviates from common knowledge, low where the
shared head alone decides.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F

from .checkpoint import LoadedCheckpoint, load_checkpoint
from .envs.pacmen import PacMenEnv, PacMenLayout, build_pacmen_layout
from .traces import EpisodeTrace, read_traces

EDGE_ROOM_REGIONS = ("room_up", "room_down", "room_left", "room_right")
CORRIDOR_CENTER_REGIONS = ("center", "corridor_up", "corridor_down", "corridor_left", "corridor_right")


class AnalysisError(RuntimeError):
    """Missing inputs or traces that do not replay against the environment."""


def sd_ratio(q_individual, q_shared, floor: float = 1e-8):
    """SD of individual action values over SD of shared ones, along the last axis.

    The shared SD is floored so a constant shared head yields a large finite
    ratio instead of a division error.
    """
    q_individual = np.asarray(q_individual, dtype=np.float64)
    q_shared = np.asarray(q_shared, dtype=np.float64)
    num = q_individual.std(axis=-1)
    den = np.maximum(q_shared.std(axis=-1), floor)
    return num / den


def visitation_heatmap(traces: list[EpisodeTrace], layout: PacMenLayout) -> np.ndarray:
    """Per-agent post-step visit counts [n_agents, H, W].

    Reset cells are not counted, so the counts total steps * n_agents; reset
    positions still gate replay validity elsewhere.
    """
    height, width = layout.shape
    n_agents = len(layout.start_positions)
    counts = np.zeros((n_agents, height, width), dtype=np.int64)

    def bump(positions) -> None:
        for agent, (r, c) in enumerate(positions):
            if not (0 <= r < height and 0 <= c < width) or layout.walls[r, c]:
                raise AnalysisError(f"trace places agent {agent} on a wall or outside: {(r, c)}")
            counts[agent, r, c] += 1

    for trace in traces:
        for step in trace.steps:
            bump(step.positions)
    return counts


def room_visit_counts(traces: list[EpisodeTrace], layout: PacMenLayout) -> dict[str, np.ndarray]:
    """Per-room per-agent visit counts for the four edge rooms."""
    heat = visitation_heatmap(traces, layout)
    out: dict[str, np.ndarray] = {}
    for name in EDGE_ROOM_REGIONS:
        cells = layout.regions()[name]
        rows = np.array([c[0] for c in cells])
        cols = np.array([c[1] for c in cells])
        out[name] = heat[:, rows, cols].sum(axis=1)
    return out


def room_assignment(traces: list[EpisodeTrace], layout: PacMenLayout) -> dict[str, int | None]:
    """Most frequent visitor of each edge room; None for unvisited rooms."""
    visits = room_visit_counts(traces, layout)
    out: dict[str, int | None] = {}
    for name, counts in visits.items():
        out[name] = int(counts.argmax()) if counts.sum() > 0 else None
    return out


def distinct_room_visitors(assignment: dict[str, int | None]) -> int:
    return len({agent for agent in assignment.values() if agent is not None})


@dataclass
class SDRatioMap:
    """Spatial aggregate of the specialization ratio over replayed traces."""

    ratio_sum: np.ndarray  # [H, W] float64
    visits: np.ndarray     # [H, W] int64
    region_sums: dict[str, float]
    region_visits: dict[str, int]

    @property
    def per_cell_mean(self) -> np.ndarray:
        with np.errstate(invalid="ignore"):
            return np.where(self.visits > 0, self.ratio_sum / np.maximum(self.visits, 1), np.nan)

    @property
    def region_means(self) -> dict[str, float]:
        return {
            name: (self.region_sums[name] / self.region_visits[name]) if self.region_visits[name] else float("nan")
            for name in self.region_sums
        }

    def grouped_mean(self, regions: tuple[str, ...]) -> float:
        visits = sum(self.region_visits[r] for r in regions)
        if visits == 0:
            return float("nan")
        return sum(self.region_sums[r] for r in regions) / visits

    @property
    def corridor_center_mean(self) -> float:
        return self.grouped_mean(CORRIDOR_CENTER_REGIONS)

    @property
    def edge_room_mean(self) -> float:
        return self.grouped_mean(EDGE_ROOM_REGIONS)


def replay_sd_map(
    loaded: LoadedCheckpoint, traces: list[EpisodeTrace], env: PacMenEnv | None = None
) -> SDRatioMap:
    """Replay traces through the checkpointed network, attributing each agent's
    specialization ratio to the cell where that decision was taken.

    The environment must reproduce the trace exactly; any position mismatch
    aborts with an error rather than aggregating silently wrong data.
    """
    env = env or PacMenEnv()
    if loaded.env_name and loaded.env_name != "pacmen":
        raise AnalysisError(f"checkpoint was trained on {loaded.env_name!r}, not pacmen")
    agent_net = loaded.agent
    spec = env.spec
    layout = env.layout
    height, width = layout.shape
    cell_region = {}
    for name, cells in layout.regions().items():
        for cell in cells:
            cell_region[cell] = name

    ratio_sum = np.zeros((height, width), dtype=np.float64)
    visit_count = np.zeros((height, width), dtype=np.int64)
    region_sums = {name: 0.0 for name in layout.regions()}
    region_visits = {name: 0 for name in layout.regions()}

    with torch.no_grad():
        for trace in traces:
            result = env.reset(trace.env_seed)
            if list(env.agent_positions) != [tuple(p) for p in trace.reset_positions]:
                raise AnalysisError(
                    f"episode {trace.episode}: reset positions diverge, trace does not match this grid"
                )
            hidden = agent_net.init_hidden(1)
            prev_action = torch.zeros(1, spec.n_agents, spec.n_actions)
            for step in trace.steps:
                decision_cells = list(env.agent_positions)
                obs_t = torch.from_numpy(result.observations).unsqueeze(0)
                hidden = agent_net.encode_step(obs_t, prev_action, hidden)
                q = agent_net.q_values(hidden)
                ratios = sd_ratio(q.q_individual[0].numpy(), q.q_shared[0].numpy())
                for agent, cell in enumerate(decision_cells):
                    ratio_sum[cell] += ratios[agent]
                    visit_count[cell] += 1
                    region = cell_region[cell]
                    region_sums[region] += ratios[agent]
                    region_visits[region] += 1

                acts = np.asarray(step.actions, dtype=np.int64)
                result = env.step(acts)
                if list(env.agent_positions) != [tuple(p) for p in step.positions]:
                    raise AnalysisError(
                        f"episode {trace.episode} step {step.step}: replay diverges from trace"
                    )
                prev_action = F.one_hot(torch.from_numpy(acts), spec.n_actions).float().unsqueeze(0)

    return SDRatioMap(
        ratio_sum=ratio_sum,
        visits=visit_count,
        region_sums=region_sums,
        region_visits=region_visits,
    )


def load_metrics_csv(path: str | Path) -> dict[str, np.ndarray]:
    path = Path(path)
    lines = path.read_text().splitlines()
    if not lines:
        raise AnalysisError(f"{path} is empty")
    header = lines[0].split(",")
    rows = [line.split(",") for line in lines[1:] if line]
    if any(len(r) != len(header) for r in rows):
        raise AnalysisError(f"{path} has ragged rows")
    data = np.array(rows, dtype=np.float64) if rows else np.zeros((0, len(header)))
    return {name: data[:, i] for i, name in enumerate(header)}


def returns_curve(per_seed_metrics: list[dict[str, np.ndarray]]) -> dict[str, np.ndarray]:
    """Align per-seed episode returns and aggregate to mean and SD bands."""
    if not per_seed_metrics:
        raise AnalysisError("no metrics to aggregate")
    n_rows = min(m["return"].shape[0] for m in per_seed_metrics)
    if n_rows == 0:
        raise AnalysisError("metrics files contain no episodes")
    stacked = np.stack([m["return"][:n_rows] for m in per_seed_metrics])
    return {
        "episode": per_seed_metrics[0]["episode"][:n_rows],
        "env_steps": per_seed_metrics[0]["env_steps"][:n_rows],
        "mean_return": stacked.mean(axis=0),
        "sd_return": stacked.std(axis=0),
    }


# ---------------------------------------------------------------- run directory


@dataclass
class SeedArtifacts:
    seed_dir: Path
    metrics: dict[str, np.ndarray]
    checkpoint: LoadedCheckpoint
    traces: list[EpisodeTrace]
    report: dict = field(default_factory=dict)


def discover_seed_dirs(run_dir: str | Path) -> list[Path]:
    run_dir = Path(run_dir)
    if not run_dir.is_dir():
        raise AnalysisError(f"{run_dir} is not a directory")
    seed_dirs = sorted(p for p in run_dir.iterdir() if p.is_dir() and p.name.startswith("seed_"))
    if not seed_dirs:
        # a bare single-run directory is accepted too
        if (run_dir / "metrics.csv").exists():
            return [run_dir]
        raise AnalysisError(f"{run_dir} holds no seed_* run directories")
    return seed_dirs


def load_seed_artifacts(seed_dir: Path) -> SeedArtifacts:
    missing = [
        name
        for name in ("metrics.csv", "checkpoint.npz", "traces.jsonl")
        if not (seed_dir / name).exists()
    ]
    if missing:
        raise AnalysisError(f"{seed_dir} is missing required artifacts: {', '.join(missing)}")
    report_path = seed_dir / "eval_report.json"
    report = json.loads(report_path.read_text()) if report_path.exists() else {}
    return SeedArtifacts(
        seed_dir=seed_dir,
        metrics=load_metrics_csv(seed_dir / "metrics.csv"),
        checkpoint=load_checkpoint(seed_dir / "checkpoint.npz"),
        traces=read_traces(seed_dir / "traces.jsonl"),
        report=report,
    )


def analyze_run_dir(run_dir: str | Path, out_dir: str | Path | None = None) -> dict:
    """Aggregate a multi-seed run directory into tables, figures and a summary.

    Writes returns_curve.csv/png, per-seed visitation and specialization maps,
    sd_regions.csv and summary.json under <run_dir>/analysis (or out_dir).
    """
    from . import plotting

    run_dir = Path(run_dir)
    out_dir = Path(out_dir) if out_dir is not None else run_dir / "analysis"
    out_dir.mkdir(parents=True, exist_ok=True)
    layout = build_pacmen_layout()

    seeds = [load_seed_artifacts(p) for p in discover_seed_dirs(run_dir)]
    curve = returns_curve([s.metrics for s in seeds])

    with (out_dir / "returns_curve.csv").open("w") as handle:
        handle.write("episode,env_steps,mean_return,sd_return\n")
        for i in range(curve["episode"].shape[0]):
            handle.write(
                f'{int(curve["episode"][i])},{int(curve["env_steps"][i])},'
                f'{curve["mean_return"][i]!r},{curve["sd_return"][i]!r}\n'
            )
    plotting.save_learning_curve(
        out_dir / "returns_curve.png",
        curve["env_steps"],
        curve["mean_return"],
        curve["sd_return"],
        title=f"{run_dir.name}: evaluation of training returns",
    )

    summary: dict = {"run_dir": str(run_dir), "n_seeds": len(seeds), "seeds": []}
    sd_rows = ["seed,region,visits,mean_ratio"]
    for artifacts in seeds:
        name = artifacts.seed_dir.name
        heat = visitation_heatmap(artifacts.traces, layout)
        plotting.save_heatmap(out_dir / f"visitation_{name}.png", heat, layout.walls)

        sd_map = replay_sd_map(artifacts.checkpoint, artifacts.traces)
        plotting.save_sd_map(out_dir / f"sd_ratio_{name}.png", sd_map.per_cell_mean, layout.walls)
        for region, mean in sd_map.region_means.items():
            sd_rows.append(f"{name},{region},{sd_map.region_visits[region]},{mean!r}")

        assignment = room_assignment(artifacts.traces, layout)
        summary["seeds"].append(
            {
                "seed_dir": name,
                "mean_return": artifacts.report.get("mean_return"),
                "sd_return": artifacts.report.get("sd_return"),
                "room_assignment": assignment,
                "distinct_room_visitors": distinct_room_visitors(assignment),
                "corridor_center_sd_ratio": sd_map.corridor_center_mean,
                "edge_room_sd_ratio": sd_map.edge_room_mean,
            }
        )
    (out_dir / "sd_regions.csv").write_text("\n".join(sd_rows) + "\n")

    finals = [s["mean_return"] for s in summary["seeds"] if s["mean_return"] is not None]
    if finals:
        summary["mean_return_over_seeds"] = float(np.mean(finals))
        summary["sd_return_over_seeds"] = float(np.std(finals))
    (out_dir / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    return summary
