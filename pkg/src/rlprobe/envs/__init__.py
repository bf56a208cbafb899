"""Deterministic toy pixel environments: MiniPong and GridDrive."""

from .base import BaseEnv, EnvConfig, EnvKind, PedMode, StepResult
from .griddrive import GridDrive
from .minipong import MiniPong
from .scripted import always_accelerate, run_episode, scripted_policy


def make_env(config: EnvConfig) -> BaseEnv:
    if config.kind is EnvKind.MINIPONG:
        return MiniPong(config)
    return GridDrive(config)


__all__ = [
    "BaseEnv", "EnvConfig", "EnvKind", "GridDrive", "MiniPong", "PedMode",
    "StepResult", "always_accelerate", "make_env", "run_episode", "scripted_policy",
]
