"""Hand-coded near-optimal policies, used as oracles for agent-quality checks."""

from __future__ import annotations

from .base import EnvKind
from .griddrive import GridDrive
from .minipong import MiniPong, PADDLE_WIDTH


def _pong_policy(env: MiniPong) -> int:
    ball_center = env.ball_x + 0.5
    paddle_center = env.paddle_x + PADDLE_WIDTH / 2
    if ball_center < paddle_center - 1:
        return 0
    if ball_center > paddle_center + 1:
        return 2
    return 1


def _drive_policy(env: GridDrive) -> int:
    if env.threat_ahead():
        return 1  # brake
    return 0      # accelerate


def always_accelerate(env) -> int:
    return 0


def scripted_policy(kind):
    """Return a policy function ``env -> action`` for the given env kind."""
    if isinstance(kind, str):
        kind = EnvKind(kind)
    return {EnvKind.MINIPONG: _pong_policy, EnvKind.GRIDDRIVE: _drive_policy}[kind]


def run_episode(env, policy, seed=None, max_steps=None):
    """Roll one episode; returns (total_reward, steps, terminated_by_env)."""
    env.reset(seed=seed)
    total, steps = 0.0, 0
    cap = max_steps if max_steps is not None else env.config.max_steps
    while steps < cap:
        res = env.step(policy(env))
        total += res.reward
        steps += 1
        if res.terminal:
            break
    return total, steps, steps < cap or env._terminal
