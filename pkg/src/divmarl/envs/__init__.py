from .base import EnvContractError, EnvSpec, StepResult
from .pacmen import (
    ACTIONS,
    PacMenEnv,
    PacMenLayout,
    PacMenState,
    build_pacmen_layout,
)

__all__ = [
    "ACTIONS",
    "EnvContractError",
    "EnvSpec",
    "StepResult",
    "PacMenEnv",
    "PacMenLayout",
    "PacMenState",
    "build_pacmen_layout",
]
