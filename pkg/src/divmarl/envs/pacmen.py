"""Multi-room foraging gridworld: four foragers, four dot rooms, unequal paths.

A 3x3 center room is connected to four 3x3 edge rooms by one-cell-wide
corridors whose lengths follow the ratio down:left:up:right = 4:8:12:8.
Three dots sit in each edge room; eating is rewarded, idling costs -0.1,
and all dots refresh once the last one is eaten. Agents see only a 5x5
window around themselves and episodes truncate after 100 steps.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .base import EnvContractError, EnvSpec, StepResult

Cell = tuple[int, int]

N_AGENTS = 4
ROOM = 3  # rooms are ROOM x ROOM
CORRIDOR_LEN = {"down": 4, "left": 8, "up": 12, "right": 8}
DOTS_PER_ROOM = 3
EPISODE_LIMIT = 100
VIEW = 5  # local window side length
OBS_CHANNELS = 3  # wall, dot, other-agent

ACTIONS = ("up", "down", "left", "right", "stay")
ACTION_DELTAS = ((-1, 0), (1, 0), (0, -1), (0, 1), (0, 0))

NO_EAT_PENALTY = -0.1


@dataclass(frozen=True)
class PacMenLayout:
    """Static grid geometry plus the region partition used by analysis."""

    walls: np.ndarray  # bool [H, W], True = wall
    center_cells: tuple[Cell, ...]
    room_cells: dict[str, tuple[Cell, ...]]  # edge rooms by direction
    corridor_cells: dict[str, tuple[Cell, ...]]
    start_positions: tuple[Cell, ...]  # one per agent, inside the center room

    @property
    def shape(self) -> tuple[int, int]:
        return self.walls.shape

    @property
    def floor_cells(self) -> tuple[Cell, ...]:
        rows, cols = np.nonzero(~self.walls)
        return tuple((int(r), int(c)) for r, c in zip(rows, cols))

    def regions(self) -> dict[str, tuple[Cell, ...]]:
        """Partition of all non-wall cells: center, 4 corridors, 4 edge rooms."""
        out: dict[str, tuple[Cell, ...]] = {"center": self.center_cells}
        for name, cells in self.corridor_cells.items():
            out[f"corridor_{name}"] = cells
        for name, cells in self.room_cells.items():
            out[f"room_{name}"] = cells
        return out


def _block(r0: int, c0: int, h: int, w: int) -> tuple[Cell, ...]:
    return tuple((r, c) for r in range(r0, r0 + h) for c in range(c0, c0 + w))


def build_pacmen_layout() -> PacMenLayout:
    """Deterministically build the five-room grid with 4:8:12:8 corridors."""
    up, down, left, right = (CORRIDOR_LEN[k] for k in ("up", "down", "left", "right"))
    height = 1 + ROOM + up + ROOM + down + ROOM + 1
    width = 1 + ROOM + left + ROOM + right + ROOM + 1

    center_r0 = 1 + ROOM + up
    center_c0 = 1 + ROOM + left
    mid_r = center_r0 + ROOM // 2
    mid_c = center_c0 + ROOM // 2

    center = _block(center_r0, center_c0, ROOM, ROOM)
    rooms = {
        "up": _block(1, center_c0, ROOM, ROOM),
        "down": _block(center_r0 + ROOM + down, center_c0, ROOM, ROOM),
        "left": _block(center_r0, 1, ROOM, ROOM),
        "right": _block(center_r0, center_c0 + ROOM + right, ROOM, ROOM),
    }
    corridors = {
        "up": tuple((r, mid_c) for r in range(1 + ROOM, 1 + ROOM + up)),
        "down": tuple((r, mid_c) for r in range(center_r0 + ROOM, center_r0 + ROOM + down)),
        "left": tuple((mid_r, c) for c in range(1 + ROOM, 1 + ROOM + left)),
        "right": tuple((mid_r, c) for c in range(center_c0 + ROOM, center_c0 + ROOM + right)),
    }

    walls = np.ones((height, width), dtype=bool)
    for cells in (center, *rooms.values(), *corridors.values()):
        for r, c in cells:
            walls[r, c] = False

    starts = (
        (center_r0, center_c0),
        (center_r0, center_c0 + ROOM - 1),
        (center_r0 + ROOM - 1, center_c0),
        (center_r0 + ROOM - 1, center_c0 + ROOM - 1),
    )
    return PacMenLayout(
        walls=walls,
        center_cells=center,
        room_cells=rooms,
        corridor_cells=corridors,
        start_positions=starts,
    )


@dataclass
class PacMenState:
    grid: np.ndarray  # bool wall mask, shared with the layout
    agent_positions: list[Cell]
    dot_positions: set[Cell]
    step_count: int = 0
    done: bool = False
    rng_state: dict = field(default_factory=dict)  # bit-exact refresh reproducibility


class PacMenEnv:
    """Foraging gridworld with shared team reward and partial observability."""

    def __init__(self) -> None:
        self.layout = build_pacmen_layout()
        floor = self.layout.floor_cells
        self._floor_index = {cell: i for i, cell in enumerate(floor)}
        n_floor = len(floor)
        self.spec = EnvSpec(
            n_agents=N_AGENTS,
            n_actions=len(ACTIONS),
            obs_dim=OBS_CHANNELS * VIEW * VIEW,
            state_dim=N_AGENTS * n_floor + n_floor,
            episode_limit=EPISODE_LIMIT,
        )
        self._rng: np.random.Generator | None = None
        self._positions: list[Cell] = []
        self._dots: set[Cell] = set()
        self._step_count = 0
        self._done = True

    # -- lifecycle ---------------------------------------------------------

    def reset(self, seed: int) -> StepResult:
        self._rng = np.random.Generator(np.random.PCG64(seed))
        self._positions = list(self.layout.start_positions)
        self._dots = set()
        self._spawn_dots()
        self._step_count = 0
        self._done = False
        return StepResult(
            observations=self._all_observations(),
            global_state=self.global_state(),
            reward=0.0,
            terminated=False,
            truncated=False,
        )

    def step(self, joint_action) -> StepResult:
        if self._done:
            raise EnvContractError("step() called on a finished episode; call reset() first")
        actions = [int(a) for a in joint_action]
        if len(actions) != N_AGENTS:
            raise ValueError(f"expected {N_AGENTS} actions, got {len(actions)}")
        walls = self.layout.walls
        for i, a in enumerate(actions):
            if not 0 <= a < len(ACTIONS):
                raise ValueError(f"action {a} for agent {i} outside [0, {len(ACTIONS)})")
            dr, dc = ACTION_DELTAS[a]
            r, c = self._positions[i]
            nr, nc = r + dr, c + dc
            if not walls[nr, nc]:
                self._positions[i] = (nr, nc)

        eaten = self._dots & set(self._positions)
        self._dots -= eaten
        reward = float(len(eaten)) if eaten else NO_EAT_PENALTY
        if not self._dots:
            self._spawn_dots()

        self._step_count += 1
        truncated = self._step_count >= EPISODE_LIMIT
        self._done = truncated
        return StepResult(
            observations=self._all_observations(),
            global_state=self.global_state(),
            reward=reward,
            terminated=False,
            truncated=truncated,
        )

    def _spawn_dots(self) -> None:
        assert self._rng is not None
        for cells in self.layout.room_cells.values():
            picks = self._rng.choice(len(cells), size=DOTS_PER_ROOM, replace=False)
            self._dots.update(cells[i] for i in picks)

    # -- views -------------------------------------------------------------

    def local_observation(self, agent: int) -> np.ndarray:
        """5x5 window around the agent: wall/dot/other-agent channels, flattened.

        Out-of-bounds cells read as walls. No identity feature is included.
        """
        if not 0 <= agent < N_AGENTS:
            raise IndexError(f"agent index {agent} outside [0, {N_AGENTS})")
        walls = self.layout.walls
        h, w = walls.shape
        r0, c0 = self._positions[agent]
        half = VIEW // 2
        window = np.zeros((OBS_CHANNELS, VIEW, VIEW), dtype=np.float32)
        for dr in range(-half, half + 1):
            for dc in range(-half, half + 1):
                r, c = r0 + dr, c0 + dc
                wr, wc = dr + half, dc + half
                if not (0 <= r < h and 0 <= c < w) or walls[r, c]:
                    window[0, wr, wc] = 1.0
                    continue
                if (r, c) in self._dots:
                    window[1, wr, wc] = 1.0
        for j, pos in enumerate(self._positions):
            if j == agent:
                continue
            dr, dc = pos[0] - r0, pos[1] - c0
            if abs(dr) <= half and abs(dc) <= half:
                window[2, dr + half, dc + half] = 1.0
        return window.reshape(-1)

    def _all_observations(self) -> np.ndarray:
        return np.stack([self.local_observation(i) for i in range(N_AGENTS)])

    def global_state(self) -> np.ndarray:
        """Training-time full state: per-agent one-hot positions + dot bitmap."""
        n_floor = len(self._floor_index)
        state = np.zeros(self.spec.state_dim, dtype=np.float32)
        for i, pos in enumerate(self._positions):
            state[i * n_floor + self._floor_index[pos]] = 1.0
        for dot in self._dots:
            state[N_AGENTS * n_floor + self._floor_index[dot]] = 1.0
        return state

    # -- state access (inspection, tests, trace replay) ---------------------

    @property
    def state(self) -> PacMenState:
        assert self._rng is not None, "reset() before reading state"
        return PacMenState(
            grid=self.layout.walls,
            agent_positions=list(self._positions),
            dot_positions=set(self._dots),
            step_count=self._step_count,
            done=self._done,
            rng_state=self._rng.bit_generator.state,
        )

    def set_state(self, state: PacMenState) -> None:
        self._positions = list(state.agent_positions)
        self._dots = set(state.dot_positions)
        self._step_count = state.step_count
        self._done = state.done
        if self._rng is None:
            self._rng = np.random.Generator(np.random.PCG64(0))
        if state.rng_state:
            self._rng.bit_generator.state = state.rng_state

    @property
    def agent_positions(self) -> list[Cell]:
        return list(self._positions)

    @property
    def dot_positions(self) -> set[Cell]:
        return set(self._dots)

    @property
    def step_count(self) -> int:
        return self._step_count

    def ascii_render(self) -> str:
        """Debug view: '#' wall, '.' dot, 0-3 agents (lowest index shown on overlap)."""
        walls = self.layout.walls
        chars = [["#" if walls[r, c] else " " for c in range(walls.shape[1])] for r in range(walls.shape[0])]
        for r, c in self._dots:
            chars[r][c] = "."
        for i in reversed(range(N_AGENTS)):
            r, c = self._positions[i]
            chars[r][c] = str(i)
        return "\n".join("".join(row) for row in chars)
