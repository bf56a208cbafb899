"""Environment configuration and the step protocol shared by all toy envs."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from ..errors import ConfigError, InputError, StateError


class EnvKind(Enum):
    MINIPONG = "minipong"
    GRIDDRIVE = "griddrive"


class PedMode(Enum):
    REASONABLE = "reasonable"
    DISTRACTED = "distracted"


@dataclass
class EnvConfig:
    kind: EnvKind = EnvKind.MINIPONG
    resolution: int = 32
    seed: int = 0
    ped_mode: PedMode | None = None
    max_steps: int = 500
    c_speed: float = 0.02
    collision_penalty: float = -10.0
    steer_penalty: float = -0.01

    def __post_init__(self):
        if isinstance(self.kind, str):
            self.kind = EnvKind(self.kind)
        if isinstance(self.ped_mode, str):
            self.ped_mode = PedMode(self.ped_mode)
        r = self.resolution
        if r < 16 or (r & (r - 1)) != 0:
            raise ConfigError(f"resolution must be a power of two >= 16, got {r}")
        if self.ped_mode is not None and self.kind is not EnvKind.GRIDDRIVE:
            raise ConfigError("pedestrian mode is only valid for the griddrive environment")
        if self.kind is EnvKind.GRIDDRIVE and self.ped_mode is None:
            self.ped_mode = PedMode.REASONABLE
        if self.max_steps < 1:
            raise ConfigError("max episode length must be >= 1")


@dataclass
class StepResult:
    observation: np.ndarray  # (k, H, W) float32 in [0, 1]
    reward: float
    terminal: bool


class BaseEnv:
    """Deterministic, seedable pixel environment.

    Subclasses set ``n_actions`` and ``frame_stack`` and implement
    ``_reset_state``, ``_step_state`` and ``_render``.
    """

    n_actions = 0
    frame_stack = 1

    def __init__(self, config: EnvConfig):
        self.config = config
        self.size = config.resolution
        self._rng = np.random.default_rng(config.seed)
        self._frames = None
        self._terminal = True
        self.steps = 0

    @property
    def obs_shape(self):
        return (self.frame_stack, self.size, self.size)

    def reset(self, seed=None):
        if seed is not None:
            self._rng = np.random.default_rng(seed)
        self._terminal = False
        self.steps = 0
        self._reset_state()
        frame = self._render()
        self._frames = [frame.copy() for _ in range(self.frame_stack)]
        return self._observation()

    def step(self, action) -> StepResult:
        if self._frames is None or self._terminal:
            raise StateError("step called on a terminal or unreset environment; call reset first")
        if not isinstance(action, (int, np.integer)) or not 0 <= action < self.n_actions:
            raise InputError(f"unknown action {action!r}; expected 0..{self.n_actions - 1}")
        reward, terminal = self._step_state(int(action))
        self.steps += 1
        if self.steps >= self.config.max_steps:
            terminal = True
        self._terminal = terminal
        self._frames.pop(0)
        self._frames.append(self._render())
        return StepResult(self._observation(), float(reward), bool(terminal))

    def _observation(self):
        return np.stack(self._frames).astype(np.float32)

    # subclass hooks -------------------------------------------------------
    def _reset_state(self):
        raise NotImplementedError

    def _step_state(self, action):
        raise NotImplementedError

    def _render(self):
        raise NotImplementedError
