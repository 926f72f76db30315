"""Run configuration: typed key registry, file/override parsing, snapshots.

Config files are flat `key = value` lines (# comments, blank lines allowed).
Every key lives in a central registry with a type, default and one-line doc;
unknown keys and malformed values are fatal with file/line context. The same
keys are accepted by the CLI as --set key=value overrides.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from pathlib import Path

from .diversity import MARGINAL_MODES, OBS_MODES, IntrinsicConfig
from .mixer import MIXER_KINDS

ABLATIONS = ("none", "raw", "no_identity", "no_action", "no_obs", "all_shared", "no_l1")
L1_TARGETS = ("outputs", "weights")
KEEP_MODES = ("last", "best")


class ConfigError(ValueError):
    """Malformed config file, unknown key, or invalid value."""


@dataclass(frozen=True)
class LearnerConfig:
    """Optimization and replay settings for the recurrent Q-learner."""

    gamma: float = 0.99
    l1_lambda: float = 0.01
    learning_rate: float = 5e-4
    rmsprop_alpha: float = 0.99
    grad_clip: float = 10.0
    target_update_interval: int = 200
    buffer_capacity: int = 5000
    batch_size: int = 32
    updates_per_episode: int = 1
    l1_target: str = "outputs"
    intrinsic_recompute: bool = False
    mixer: str = "dueling"
    ablation: str = "none"
    # Architecture switches; apply_ablation flips them for all_shared.
    individual_heads: bool = True
    id_in_input: bool = False

    def __post_init__(self) -> None:
        if not 0 <= self.gamma <= 1:
            raise ValueError("gamma must lie in [0, 1]")
        if self.l1_lambda < 0:
            raise ValueError("l1_lambda must be nonnegative")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.target_update_interval < 1 or self.buffer_capacity < 1 or self.batch_size < 1:
            raise ValueError("intervals and sizes must be at least 1")
        if self.updates_per_episode < 0:
            raise ValueError("updates_per_episode must be nonnegative")
        if self.l1_target not in L1_TARGETS:
            raise ValueError(f"l1_target must be one of {L1_TARGETS}")
        if self.mixer not in MIXER_KINDS:
            raise ValueError(f"mixer must be one of {MIXER_KINDS}")
        if self.ablation not in ABLATIONS:
            raise ValueError(f"ablation must be one of {ABLATIONS}")


@dataclass(frozen=True)
class ExploreConfig:
    """Linear epsilon-greedy schedule over environment steps."""

    epsilon_start: float = 1.0
    epsilon_end: float = 0.05
    anneal_steps: int = 500_000

    def __post_init__(self) -> None:
        if not 0 <= self.epsilon_end <= self.epsilon_start <= 1:
            raise ValueError("need 0 <= epsilon_end <= epsilon_start <= 1")
        if self.anneal_steps < 1:
            raise ValueError("anneal_steps must be at least 1")


@dataclass(frozen=True)
class RunConfig:
    """Everything a training run needs, grouped by subsystem."""

    env_name: str = "pacmen"
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4)
    out_dir: str = "runs/pacmen"
    total_env_steps: int = 1_000_000
    eval_interval: int = 0
    eval_interval_episodes: int = 8
    eval_episodes: int = 100
    eval_epsilon: float = 0.0
    checkpoint_interval: int = 0
    deterministic: bool = True
    keep: str = "last"
    hidden_dim: int = 64
    learner: LearnerConfig = field(default_factory=LearnerConfig)
    explore: ExploreConfig = field(default_factory=ExploreConfig)
    intrinsic: IntrinsicConfig = field(default_factory=IntrinsicConfig)

    def __post_init__(self) -> None:
        if self.env_name != "pacmen":
            raise ValueError(f"unknown environment {self.env_name!r}; only 'pacmen' is available")
        if not self.seeds:
            raise ValueError("seeds must not be empty")
        if self.total_env_steps < 1:
            raise ValueError("total_env_steps must be at least 1")
        if self.eval_episodes < 0 or self.eval_interval_episodes < 0:
            raise ValueError("eval episode counts must be nonnegative")
        if self.eval_interval < 0 or self.checkpoint_interval < 0:
            raise ValueError("intervals must be nonnegative (0 disables)")
        if not 0 <= self.eval_epsilon <= 1:
            raise ValueError("eval_epsilon must lie in [0, 1]")
        if self.keep not in KEEP_MODES:
            raise ValueError(f"keep must be one of {KEEP_MODES}")
        if self.keep == "best" and self.eval_interval == 0:
            raise ValueError("keep='best' needs periodic evals: set eval_interval > 0")
        if self.hidden_dim < 1:
            raise ValueError("hidden_dim must be at least 1")


@dataclass(frozen=True)
class _Key:
    name: str
    path: tuple[str, ...]
    kind: str   # int | float | bool | str | int_list | choice
    doc: str
    choices: tuple[str, ...] | None = None


def _registry() -> tuple[_Key, ...]:
    return (
        _Key("env.name", ("env_name",), "str", "environment id (only 'pacmen')"),
        _Key("run.seeds", ("seeds",), "int_list", "comma-separated root seeds, one run per seed"),
        _Key("run.out_dir", ("out_dir",), "str", "directory for run artifacts"),
        _Key("run.total_env_steps", ("total_env_steps",), "int", "environment steps per run"),
        _Key("run.eval_interval", ("eval_interval",), "int", "episodes between periodic evals (0 = off)"),
        _Key("run.eval_interval_episodes", ("eval_interval_episodes",), "int", "episodes per periodic eval"),
        _Key("run.eval_episodes", ("eval_episodes",), "int", "episodes in the final greedy eval"),
        _Key("run.eval_epsilon", ("eval_epsilon",), "float", "epsilon used during evaluation"),
        _Key("run.checkpoint_interval", ("checkpoint_interval",), "int", "episodes between checkpoints (0 = final only)"),
        _Key("run.deterministic", ("deterministic",), "bool", "single-thread torch and zeroed wall_clock for replayable logs"),
        _Key("run.keep", ("keep",), "choice", "weights kept for checkpoint.npz and the final eval: the last ones or the best periodic-eval ones", KEEP_MODES),
        _Key("net.hidden_dim", ("hidden_dim",), "int", "width of the recurrent encoder"),
        _Key("learner.gamma", ("learner", "gamma"), "float", "discount factor"),
        _Key("learner.l1_lambda", ("learner", "l1_lambda"), "float", "weight of the individual-head L1 penalty"),
        _Key("learner.learning_rate", ("learner", "learning_rate"), "float", "RMSprop learning rate"),
        _Key("learner.rmsprop_alpha", ("learner", "rmsprop_alpha"), "float", "RMSprop smoothing constant"),
        _Key("learner.grad_clip", ("learner", "grad_clip"), "float", "global gradient-norm clip (0 = off)"),
        _Key("learner.target_update_interval", ("learner", "target_update_interval"), "int", "learner steps between target syncs"),
        _Key("learner.buffer_capacity", ("learner", "buffer_capacity"), "int", "replay capacity in episodes"),
        _Key("learner.batch_size", ("learner", "batch_size"), "int", "episodes per learner step"),
        _Key("learner.updates_per_episode", ("learner", "updates_per_episode"), "int", "learner steps after each collected episode"),
        _Key("learner.l1_target", ("learner", "l1_target"), "choice", "penalize individual-head 'outputs' or 'weights'", L1_TARGETS),
        _Key("learner.intrinsic_recompute", ("learner", "intrinsic_recompute"), "bool", "recompute the bonus at sampling time instead of reusing stored values"),
        _Key("learner.mixer", ("learner", "mixer"), "choice", "joint-value mixer", MIXER_KINDS),
        _Key("learner.ablation", ("learner", "ablation"), "choice", "named ablation switch", ABLATIONS),
        _Key("explore.epsilon_start", ("explore", "epsilon_start"), "float", "initial exploration rate"),
        _Key("explore.epsilon_end", ("explore", "epsilon_end"), "float", "final exploration rate"),
        _Key("explore.anneal_steps", ("explore", "anneal_steps"), "int", "env steps over which epsilon anneals"),
        _Key("intrinsic.beta", ("intrinsic", "beta"), "float", "weight of the bonus in the TD target"),
        _Key("intrinsic.beta1", ("intrinsic", "beta1"), "float", "identity-term weight and Boltzmann inverse temperature"),
        _Key("intrinsic.beta2", ("intrinsic", "beta2"), "float", "weight of the action-divergence term"),
        _Key("intrinsic.marginal_mode", ("intrinsic", "marginal_mode"), "choice", "identity marginalization of the policy", MARGINAL_MODES),
        _Key("intrinsic.obs_mode", ("intrinsic", "obs_mode"), "choice", "observation-term form", OBS_MODES),
        _Key("intrinsic.obs_var", ("intrinsic", "obs_var"), "float", "variance of the Gaussian observation predictors"),
        _Key("intrinsic.log_floor", ("intrinsic", "log_floor"), "float", "probability floor guarding log terms"),
    )


KEY_REGISTRY: dict[str, _Key] = {k.name: k for k in _registry()}


def _parse_value(key: _Key, raw: str):
    raw = raw.strip()
    try:
        if key.kind == "int":
            return int(raw)
        if key.kind == "float":
            value = float(raw)
            if math.isnan(value):
                raise ValueError("nan is not allowed")
            return value
        if key.kind == "bool":
            low = raw.lower()
            if low in ("true", "1", "yes"):
                return True
            if low in ("false", "0", "no"):
                return False
            raise ValueError(f"expected a boolean, got {raw!r}")
        if key.kind == "int_list":
            if not raw:
                raise ValueError("expected at least one integer")
            return tuple(int(part.strip()) for part in raw.split(","))
        if key.kind == "choice":
            if raw not in key.choices:
                raise ValueError(f"expected one of {key.choices}, got {raw!r}")
            return raw
        return raw
    except ValueError as exc:
        raise ConfigError(f"invalid value for {key.name}: {exc}") from None


def parse_assignment(text: str) -> tuple[str, str]:
    """Split one `key = value` (or `key=value`) assignment."""
    if "=" not in text:
        raise ConfigError(f"expected key=value, got {text!r}")
    name, raw = text.split("=", 1)
    name = name.strip()
    if not name:
        raise ConfigError(f"missing key in assignment {text!r}")
    return name, raw.strip()


def read_config_file(path: str | Path) -> dict[str, str]:
    """Raw key/value pairs from a flat config file; duplicate keys are fatal."""
    path = Path(path)
    try:
        lines = path.read_text().splitlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from None
    pairs: dict[str, str] = {}
    for lineno, line in enumerate(lines, start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        try:
            name, raw = parse_assignment(stripped)
        except ConfigError as exc:
            raise ConfigError(f"{path}:{lineno}: {exc}") from None
        if name not in KEY_REGISTRY:
            raise ConfigError(f"{path}:{lineno}: unknown config key {name!r}")
        if name in pairs:
            raise ConfigError(f"{path}:{lineno}: duplicate config key {name!r}")
        pairs[name] = raw
    return pairs


def build_run_config(pairs: dict[str, str]) -> RunConfig:
    """RunConfig from raw string pairs layered over the defaults."""
    values: dict[tuple[str, ...], object] = {}
    for name, raw in pairs.items():
        key = KEY_REGISTRY.get(name)
        if key is None:
            raise ConfigError(f"unknown config key {name!r}")
        values[key.path] = _parse_value(key, raw)

    def group(prefix: str, cls):
        kwargs = {path[1]: v for path, v in values.items() if len(path) == 2 and path[0] == prefix}
        try:
            return cls(**kwargs)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    top = {path[0]: v for path, v in values.items() if len(path) == 1}
    try:
        return RunConfig(
            learner=group("learner", LearnerConfig),
            explore=group("explore", ExploreConfig),
            intrinsic=group("intrinsic", IntrinsicConfig),
            **top,
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def config_to_pairs(cfg: RunConfig) -> dict[str, str]:
    """Every registry key with its current value, formatted to round-trip."""
    pairs: dict[str, str] = {}
    for key in KEY_REGISTRY.values():
        obj = cfg
        for part in key.path[:-1]:
            obj = getattr(obj, part)
        value = getattr(obj, key.path[-1])
        if key.kind == "bool":
            pairs[key.name] = "true" if value else "false"
        elif key.kind == "int_list":
            pairs[key.name] = ",".join(str(v) for v in value)
        elif key.kind == "float":
            pairs[key.name] = repr(float(value))
        else:
            pairs[key.name] = str(value)
    return pairs


def write_config_snapshot(path: str | Path, cfg: RunConfig) -> None:
    """Full effective config, one key per line, reloadable by read_config_file."""
    pairs = config_to_pairs(cfg)
    lines = ["# effective configuration snapshot"]
    lines.extend(f"{key.name} = {pairs[key.name]}" for key in _registry())
    Path(path).write_text("\n".join(lines) + "\n")


def describe_keys() -> str:
    """Human-readable key table for --help-config style output."""
    width = max(len(k.name) for k in _registry())
    rows = []
    for key in _registry():
        extra = f" (one of {', '.join(key.choices)})" if key.choices else ""
        rows.append(f"{key.name.ljust(width)}  {key.doc}{extra}")
    return "\n".join(rows)


def apply_ablation(cfg: RunConfig) -> RunConfig:
    """Materialize the named ablation into the affected fields.

    raw         : beta = 0 (no bonus in the TD target)
    no_identity : beta1 = 0 (identity-free policies and observation term)
    no_action   : beta2 = 0 (drop the action-divergence term)
    no_obs      : drop the observation term entirely
    all_shared  : no individual heads, identity fed to the encoder, l1 off
    no_l1       : l1_lambda = 0
    """
    tag = cfg.learner.ablation
    if tag == "none":
        return cfg
    if tag == "raw":
        return dataclasses.replace(cfg, intrinsic=dataclasses.replace(cfg.intrinsic, beta=0.0))
    if tag == "no_identity":
        return dataclasses.replace(cfg, intrinsic=dataclasses.replace(cfg.intrinsic, beta1=0.0))
    if tag == "no_action":
        return dataclasses.replace(cfg, intrinsic=dataclasses.replace(cfg.intrinsic, beta2=0.0))
    if tag == "no_obs":
        return dataclasses.replace(cfg, intrinsic=dataclasses.replace(cfg.intrinsic, use_obs_term=False))
    if tag == "all_shared":
        learner = dataclasses.replace(
            cfg.learner, individual_heads=False, id_in_input=True, l1_lambda=0.0
        )
        return dataclasses.replace(cfg, learner=learner)
    if tag == "no_l1":
        return dataclasses.replace(cfg, learner=dataclasses.replace(cfg.learner, l1_lambda=0.0))
    raise ConfigError(f"unknown ablation {tag!r}")
