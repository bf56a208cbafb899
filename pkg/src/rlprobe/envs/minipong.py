"""MiniPong: catch a falling 2x2 ball with a paddle.

Actions: 0 = left, 1 = stay, 2 = right (paddle moves 2 px). Reward +1 when
the ball reaches the paddle row over the paddle, -1 (terminal) on a miss.
The ball occupies at most 4 pixels, a deliberately small salient object.
"""

from __future__ import annotations

import numpy as np

from .base import BaseEnv

BALL_VALUE = 1.0
PADDLE_VALUE = 0.5
PADDLE_WIDTH = 6
PADDLE_SPEED = 2


class MiniPong(BaseEnv):
    n_actions = 3
    frame_stack = 2

    def __init__(self, config):
        super().__init__(config)
        self.paddle_row = self.size - 3
        self.spawn_row = 1
        # spawn window keeps every drop reachable by a tracking paddle
        self.spawn_lo = self.size // 8
        self.spawn_hi = self.size - self.size // 8 - 2

    def _spawn_ball(self):
        self.ball_x = int(self._rng.integers(self.spawn_lo, self.spawn_hi + 1))
        self.ball_y = self.spawn_row
        self.ball_dx = int(self._rng.choice((-1, 1)))

    def _reset_state(self):
        self.paddle_x = (self.size - PADDLE_WIDTH) // 2
        self._spawn_ball()

    def _step_state(self, action):
        self.paddle_x = int(np.clip(self.paddle_x + PADDLE_SPEED * (action - 1),
                                    0, self.size - PADDLE_WIDTH))
        self.ball_y += 1
        self.ball_x += self.ball_dx
        if self.ball_x < 0:
            self.ball_x = -self.ball_x
            self.ball_dx = -self.ball_dx
        elif self.ball_x > self.size - 2:
            self.ball_x = 2 * (self.size - 2) - self.ball_x
            self.ball_dx = -self.ball_dx

        reward, terminal = 0.0, False
        if self.ball_y + 1 == self.paddle_row:
            caught = (self.ball_x + 1 >= self.paddle_x
                      and self.ball_x <= self.paddle_x + PADDLE_WIDTH - 1)
            if caught:
                reward = 1.0
                self._spawn_ball()
            else:
                reward = -1.0
                terminal = True
        return reward, terminal

    def _render(self):
        f = np.zeros((self.size, self.size), dtype=np.float32)
        f[self.ball_y:self.ball_y + 2, self.ball_x:self.ball_x + 2] = BALL_VALUE
        f[self.paddle_row, self.paddle_x:self.paddle_x + PADDLE_WIDTH] = PADDLE_VALUE
        return f

    # oracle helpers -------------------------------------------------------
    def ball_box(self):
        """(top, left, height, width) of the ball in the current frame."""
        return (self.ball_y, self.ball_x, 2, 2)

    def drop_length(self):
        return self.paddle_row - 1 - self.spawn_row

    def max_score(self):
        """Catches a perfect player completes within the episode cap."""
        return self.config.max_steps // self.drop_length()
