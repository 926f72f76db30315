"""Versioned checkpoints: a JSON header plus flat float arrays in one npz.

The header pins the format version and every shape-determining switch, so a
load rebuilds identical modules and restores bit-exact weights. A version
mismatch is an error, never a silent reinterpretation.
"""

from __future__ import annotations

import io
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from .agents import AgentNetwork
from .diversity import PosteriorModels
from .envs.base import EnvSpec
from .mixer import build_mixer

FORMAT_VERSION = 1
_HEADER_KEY = "__header__"


class CheckpointError(RuntimeError):
    """Unreadable, incompatible or corrupt checkpoint file."""


@dataclass
class LoadedCheckpoint:
    agent: AgentNetwork
    mixer: torch.nn.Module
    posteriors: PosteriorModels
    spec: EnvSpec
    meta: dict

    @property
    def env_name(self) -> str:
        return self.meta.get("env_name", "")


def _collect_arrays(prefix: str, module: torch.nn.Module, arrays: dict[str, np.ndarray]) -> None:
    for name, tensor in module.state_dict().items():
        arrays[f"{prefix}.{name}"] = tensor.detach().cpu().numpy()


def save_checkpoint(
    path: str | Path,
    agent: AgentNetwork,
    mixer: torch.nn.Module,
    posteriors: PosteriorModels,
    meta: dict | None = None,
) -> None:
    spec = agent.spec
    header = {
        "format_version": FORMAT_VERSION,
        "spec": {
            "n_agents": spec.n_agents,
            "n_actions": spec.n_actions,
            "obs_dim": spec.obs_dim,
            "state_dim": spec.state_dim,
            "episode_limit": spec.episode_limit,
        },
        "hidden_dim": agent.hidden_dim,
        "individual_heads": agent.individual_heads is not None,
        "id_in_input": agent.id_in_input,
        "mixer": mixer.kind,
        "posterior_tau_dim": posteriors.tau_dim,
        "posterior_hidden_dim": posteriors.hidden_dim,
        "obs_var": posteriors.obs_given_id.var,
        "meta": meta or {},
    }
    arrays: dict[str, np.ndarray] = {}
    _collect_arrays("agent", agent, arrays)
    _collect_arrays("mixer", mixer, arrays)
    _collect_arrays("posteriors", posteriors, arrays)

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    buffer = io.BytesIO()
    np.savez(buffer, **{_HEADER_KEY: np.frombuffer(json.dumps(header).encode(), dtype=np.uint8)}, **arrays)
    path.write_bytes(buffer.getvalue())


def _load_state(prefix: str, module: torch.nn.Module, data: dict[str, np.ndarray]) -> None:
    state = {}
    skip = len(prefix) + 1
    for key, array in data.items():
        if key.startswith(prefix + "."):
            state[key[skip:]] = torch.from_numpy(np.array(array))
    module.load_state_dict(state, strict=True)


def load_checkpoint(path: str | Path) -> LoadedCheckpoint:
    path = Path(path)
    try:
        with np.load(path) as data:
            arrays = {key: data[key] for key in data.files}
    except (OSError, ValueError) as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from None
    if _HEADER_KEY not in arrays:
        raise CheckpointError(f"checkpoint {path} has no header block")
    try:
        header = json.loads(arrays.pop(_HEADER_KEY).tobytes().decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"checkpoint {path} has a corrupt header: {exc}") from None

    version = header.get("format_version")
    if version != FORMAT_VERSION:
        raise CheckpointError(
            f"checkpoint {path} has format version {version!r}, this build reads {FORMAT_VERSION}"
        )

    spec = EnvSpec(**header["spec"])
    agent = AgentNetwork(
        spec,
        hidden_dim=header["hidden_dim"],
        individual_heads=header["individual_heads"],
        id_in_input=header["id_in_input"],
    )
    mixer = build_mixer(header["mixer"], spec.n_agents, spec.state_dim)
    posteriors = PosteriorModels(
        spec,
        header["posterior_tau_dim"],
        hidden_dim=header["posterior_hidden_dim"],
        obs_var=header["obs_var"],
    )
    try:
        _load_state("agent", agent, arrays)
        _load_state("mixer", mixer, arrays)
        _load_state("posteriors", posteriors, arrays)
    except RuntimeError as exc:
        raise CheckpointError(f"checkpoint {path} does not match its own header: {exc}") from None

    agent.eval()
    mixer.eval()
    posteriors.eval()
    return LoadedCheckpoint(agent=agent, mixer=mixer, posteriors=posteriors, spec=spec, meta=header["meta"])
