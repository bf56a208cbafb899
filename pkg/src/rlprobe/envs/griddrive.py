"""GridDrive: top-down driving strip with crossing pedestrians.

Semantic classes render as fixed gray codes on a single channel per frame:
road 0.2, car 0.5, pedestrian 0.8, traffic light 1.0. The ego car sits at a
fixed screen row; the world scrolls down by the current speed each step.

Actions: 0 = accelerate, 1 = brake, 2 = steer left, 3 = steer right.
Reward: +speed * c_speed per step, small steering penalty, collision penalty
(terminal) when the scrolling world moves a pedestrian into the car.

Pedestrian modes: REASONABLE pedestrians enter the road only while the car is
far beyond its stopping distance (so collisions cannot occur); DISTRACTED
pedestrians start crossing at random regardless of the car.
"""

from __future__ import annotations

import numpy as np

from .base import BaseEnv, PedMode

ROAD_VALUE = 0.2
CAR_VALUE = 0.5
PED_VALUE = 0.8
LIGHT_VALUE = 1.0

MAX_SPEED = 3
PED_HEIGHT = 2
CAR_HEIGHT = 3
CAR_WIDTH = 2


class _Ped:
    __slots__ = ("row", "col", "direction", "crossing", "done")

    def __init__(self, row, col, direction, crossing=False):
        self.row = row
        self.col = col
        self.direction = direction
        self.crossing = crossing
        self.done = False


class GridDrive(BaseEnv):
    n_actions = 4
    frame_stack = 4

    def __init__(self, config):
        super().__init__(config)
        s = self.size
        self.road_left = s * 13 // 32
        self.road_right = s * 19 // 32 - 1          # inclusive
        self.curb_left = self.road_left - 1
        self.curb_right = self.road_right + 1
        self.light_col = self.curb_right + 1
        self.car_row = s - 8                        # top row of the car
        # entry gate: crossing at full scroll speed still clears the car row
        road_width = self.road_right - self.road_left + 1
        self.entry_gap = MAX_SPEED * (road_width + 1) + 1
        self.spawn_interval = 8                     # rows of progress between spawns
        self.cross_prob = 0.2                       # distracted per-step start chance

    # -- helpers ------------------------------------------------------------
    def _car_cols(self):
        return range(self.car_x, self.car_x + CAR_WIDTH)

    def _car_cells(self):
        return {(r, c) for r in range(self.car_row, self.car_row + CAR_HEIGHT)
                for c in self._car_cols()}

    def _gap(self, ped):
        """Rows between the pedestrian's feet and the car's front."""
        return self.car_row - (ped.row + PED_HEIGHT - 1)

    def stopping_distance(self):
        v = self.speed
        return v * (v - 1) // 2

    def _may_enter(self, ped):
        if self.config.ped_mode is PedMode.DISTRACTED:
            return True
        # reasonable: only far ahead of the car, or already behind it
        return self._gap(ped) > self.entry_gap or ped.row > self.car_row + CAR_HEIGHT

    def _spawn_ped(self, row=0):
        side = int(self._rng.integers(0, 2))
        if side == 0:
            ped = _Ped(row, self.curb_left, +1)
        else:
            ped = _Ped(row, self.curb_right, -1)
        self.peds.append(ped)

    # -- BaseEnv hooks -------------------------------------------------------
    def _reset_state(self):
        self.speed = 1
        self.car_x = (self.road_left + self.road_right) // 2
        self.peds = []
        self.lights = []
        self._progress = 0
        self._next_spawn = self.spawn_interval
        self._next_light = self.spawn_interval * 3
        self._spawn_ped(row=int(self._rng.integers(2, 10)))
        self._spawn_ped(row=int(self._rng.integers(12, 20)))
        self.collided = False

    def _step_state(self, action):
        reward = 0.0
        if action == 0:
            self.speed = min(self.speed + 1, MAX_SPEED)
        elif action == 1:
            self.speed = max(self.speed - 1, 0)
        elif action == 2:
            self.car_x = max(self.car_x - 1, self.road_left)
            reward += self.config.steer_penalty
        elif action == 3:
            self.car_x = min(self.car_x + 1, self.road_right - CAR_WIDTH + 1)
            reward += self.config.steer_penalty

        # world scroll
        for ped in self.peds:
            ped.row += self.speed
        for light in self.lights:
            light[0] += self.speed
        self._progress += self.speed

        # pedestrian walking
        car_cells = self._car_cells()
        for ped in self.peds:
            if not ped.crossing and not ped.done:
                if self._wants_to_cross(ped) and self._may_enter(ped):
                    ped.crossing = True
            if ped.crossing:
                nxt = ped.col + ped.direction
                blocked = any((r, nxt) in car_cells
                              for r in range(ped.row, ped.row + PED_HEIGHT))
                if not blocked:
                    ped.col = nxt
                if ped.col == self.curb_left or ped.col == self.curb_right:
                    ped.crossing = False
                    ped.done = True

        # spawns tied to forward progress
        while self._progress >= self._next_spawn:
            self._spawn_ped()
            self._next_spawn += self.spawn_interval + int(self._rng.integers(0, 4))
        while self._progress >= self._next_light:
            self.lights.append([0, self.light_col])
            self._next_light += self.spawn_interval * 3

        self.peds = [p for p in self.peds if p.row < self.size]
        self.lights = [l for l in self.lights if l[0] < self.size]

        # collision: scroll moved a pedestrian into the car footprint
        terminal = False
        if self.speed > 0:
            for ped in self.peds:
                cells = {(ped.row + dr, ped.col) for dr in range(PED_HEIGHT)}
                if cells & car_cells:
                    reward += self.config.collision_penalty
                    terminal = True
                    self.collided = True
                    break
        reward += self.speed * self.config.c_speed
        return reward, terminal

    def _wants_to_cross(self, ped):
        if self.config.ped_mode is PedMode.DISTRACTED:
            return self._rng.random() < self.cross_prob
        return True

    def _render(self):
        f = np.zeros((self.size, self.size), dtype=np.float32)
        f[:, self.road_left:self.road_right + 1] = ROAD_VALUE
        for row, col in self.lights:
            f[row:row + 2, col:col + 2] = LIGHT_VALUE
        for ped in self.peds:
            top = max(ped.row, 0)
            f[top:ped.row + PED_HEIGHT, ped.col] = PED_VALUE
        f[self.car_row:self.car_row + CAR_HEIGHT, self.car_x:self.car_x + CAR_WIDTH] = CAR_VALUE
        return f

    # oracle helpers ---------------------------------------------------------
    def ped_cells(self):
        out = set()
        for ped in self.peds:
            for dr in range(PED_HEIGHT):
                if 0 <= ped.row + dr < self.size:
                    out.add((ped.row + dr, ped.col))
        return out

    def threat_ahead(self, trigger=12):
        """A pedestrian on or beside the road within ``trigger`` rows of the car."""
        for ped in self.peds:
            on_road = self.road_left <= ped.col <= self.road_right
            near_road = ped.col in (self.curb_left, self.curb_right)
            gap = self._gap(ped)
            if (on_road or (near_road and ped.crossing)) and -CAR_HEIGHT <= gap <= trigger:
                return True
        return False
