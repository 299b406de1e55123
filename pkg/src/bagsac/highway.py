"""Kinematic multi-lane highway with constant-speed traffic.

The ego vehicle is a point-kinematic body with speed and heading; traffic
vehicles keep their lane and their reset speed. State is exposed as the
5x5 kinematics matrix (ego + four nearest neighbours), flattened to 25.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from . import kernels
from .errors import ConfigError, ContractViolation

N_NEIGHBORS = 4
N_FEATURES = 5
STATE_DIM = (N_NEIGHBORS + 1) * N_FEATURES
ACTION_DIM = 2


@dataclass(frozen=True)
class EnvConfig:
    lanes: int = 4
    lane_width: float = 4.0
    traffic_count: int = 10
    dt: float = 0.1
    horizon: int = 200
    accel_max: float = 5.0
    steer_rate_max: float = 0.3
    v_min: float = 0.0
    v_max: float = 30.0
    ego_speed: float = 25.0
    reward_speed_low: float = 20.0
    w_speed: float = 0.7
    w_lane: float = 0.3
    w_coll: float = 5.0
    lane_sigma: float = 1.0
    traffic_speed_low: float = 15.0
    traffic_speed_high: float = 25.0
    spawn_gap_min: float = 15.0
    spawn_range: float = 250.0
    vehicle_length: float = 5.0
    vehicle_width: float = 2.0
    placement_retries: int = 100

    def validate(self) -> "EnvConfig":
        if self.lanes < 2:
            raise ConfigError("env.lanes must be >= 2")
        if self.traffic_count < 4:
            raise ConfigError("env.traffic_count must be >= 4")
        if self.dt <= 0 or self.horizon <= 0:
            raise ConfigError("env.dt and env.horizon must be positive")
        if not self.v_min <= self.ego_speed <= self.v_max:
            raise ConfigError("env.ego_speed must lie in [v_min, v_max]")
        if self.reward_speed_low >= self.v_max:
            raise ConfigError("env.reward_speed_low must be below v_max")
        if self.traffic_speed_low > self.traffic_speed_high:
            raise ConfigError("traffic speed range is inverted")
        if min(self.vehicle_length, self.vehicle_width, self.lane_sigma) <= 0:
            raise ConfigError("vehicle extents and lane_sigma must be positive")
        return self

    def lane_center(self, lane: int) -> float:
        return lane * self.lane_width

    @property
    def road_bounds(self) -> tuple[float, float]:
        half = 0.5 * self.lane_width
        return -half, (self.lanes - 1) * self.lane_width + half


@dataclass
class VehicleState:
    x: float
    y: float
    vx: float
    vy: float
    heading: float = 0.0
    length: float = 5.0
    width: float = 2.0
    alive: bool = True

    @property
    def speed(self) -> float:
        return math.hypot(self.vx, self.vy)


@dataclass
class StepResult:
    next_state: np.ndarray
    reward: float
    terminated: bool
    truncated: bool
    collision: bool


def nearest_neighbors(ego: VehicleState, traffic: list[VehicleState]) -> np.ndarray:
    """Build the flattened 25-dim kinematics matrix.

    Row 0 is the ego ``(1, 0, y, vx, vy)``; rows 1-4 hold the nearest
    vehicles by centre distance (ties: lower index first) as
    ``(1, dx, dy, dvx, dvy)`` relative to the ego. Missing rows stay zero.
    """
    feats = np.zeros((N_NEIGHBORS + 1, N_FEATURES))
    feats[0] = (1.0, 0.0, ego.y, ego.vx, ego.vy)
    if traffic:
        arr = np.array([(v.x, v.y, v.vx, v.vy) for v in traffic], dtype=np.float64)
        _fill_neighbors(feats, ego, arr)
    return feats.reshape(-1)


def _fill_neighbors(feats, ego, arr):
    dx = arr[:, 0] - ego.x
    dy = arr[:, 1] - ego.y
    order = kernels.nearest_order(dx, dy)[:N_NEIGHBORS]
    k = len(order)
    feats[1 : k + 1, 0] = 1.0
    feats[1 : k + 1, 1] = dx[order]
    feats[1 : k + 1, 2] = dy[order]
    feats[1 : k + 1, 3] = arr[order, 2] - ego.vx
    feats[1 : k + 1, 4] = arr[order, 3] - ego.vy


class HighwayEnv:
    """Seeded highway episode. One instance is not thread-safe."""

    def __init__(self, config: EnvConfig | None = None):
        self.config = (config or EnvConfig()).validate()
        self.ego: VehicleState | None = None
        self._traffic = np.zeros((0, 6))  # x, y, vx, vy, length, width
        self.t = 0
        self._active = False

    # -- construction -------------------------------------------------
    def reset(self, seed: int) -> np.ndarray:
        cfg = self.config
        rng = np.random.default_rng(seed)
        lane = int(rng.integers(cfg.lanes))
        self.ego = VehicleState(
            x=0.0,
            y=cfg.lane_center(lane),
            vx=cfg.ego_speed,
            vy=0.0,
            heading=0.0,
            length=cfg.vehicle_length,
            width=cfg.vehicle_width,
        )
        placed: list[tuple[float, float]] = [(0.0, self.ego.y)]
        rows = []
        for _ in range(cfg.traffic_count):
            for _attempt in range(cfg.placement_retries):
                tl = int(rng.integers(cfg.lanes))
                tx = cfg.spawn_gap_min + rng.uniform(0.0, cfg.spawn_range)
                ty = cfg.lane_center(tl)
                if all(abs(px - tx) >= cfg.vehicle_length + 1.0 or abs(py - ty) >= cfg.vehicle_width + 1.0 for px, py in placed):
                    break
            else:
                raise ConfigError(
                    f"could not place {cfg.traffic_count} vehicles without overlap; "
                    "increase env.spawn_range or reduce env.traffic_count"
                )
            speed = rng.uniform(cfg.traffic_speed_low, cfg.traffic_speed_high)
            placed.append((tx, ty))
            rows.append((tx, ty, speed, 0.0, cfg.vehicle_length, cfg.vehicle_width))
        self._traffic = np.array(rows, dtype=np.float64).reshape(-1, 6)
        self.t = 0
        self._active = True
        return self.full_state()

    def place(self, ego: VehicleState, traffic: list[VehicleState]) -> np.ndarray:
        """Start an episode from an explicit layout (tests, scripted scenarios)."""
        self.ego = replace(ego)
        self._traffic = np.array(
            [(v.x, v.y, v.vx, v.vy, v.length, v.width) for v in traffic], dtype=np.float64
        ).reshape(-1, 6)
        self.t = 0
        self._active = True
        return self.full_state()

    @property
    def traffic(self) -> list[VehicleState]:
        return [VehicleState(x, y, vx, vy, 0.0, ln, wd) for x, y, vx, vy, ln, wd in self._traffic]

    @property
    def active(self) -> bool:
        return self._active

    def full_state(self) -> np.ndarray:
        feats = np.zeros((N_NEIGHBORS + 1, N_FEATURES))
        ego = self.ego
        feats[0] = (1.0, 0.0, ego.y, ego.vx, ego.vy)
        if len(self._traffic):
            _fill_neighbors(feats, ego, self._traffic)
        return feats.reshape(-1)

    # -- dynamics -----------------------------------------------------
    def collided(self) -> bool:
        ego = self.ego
        lo, hi = self.config.road_bounds
        if ego.y < lo or ego.y > hi:
            return True
        if not len(self._traffic):
            return False
        tr = self._traffic
        hits = kernels.box_overlaps(
            ego.x, ego.y, ego.heading, ego.length, ego.width, tr[:, 0], tr[:, 1], tr[:, 4], tr[:, 5]
        )
        return bool(hits.any())

    def reward(self, collision: bool) -> float:
        cfg = self.config
        speed = self.ego.speed
        speed_term = min(max((speed - cfg.reward_speed_low) / (cfg.v_max - cfg.reward_speed_low), 0.0), 1.0)
        lane = min(max(round(self.ego.y / cfg.lane_width), 0), cfg.lanes - 1)
        offset = self.ego.y - cfg.lane_center(lane)
        lane_term = math.exp(-(offset * offset) / (cfg.lane_sigma * cfg.lane_sigma))
        return cfg.w_speed * speed_term + cfg.w_lane * lane_term - cfg.w_coll * float(collision)

    def step(self, action) -> StepResult:
        if not self._active:
            raise ContractViolation("step() called on a finished episode; call reset() first")
        cfg = self.config
        accel = min(max(float(action[0]), -1.0), 1.0)
        steer = min(max(float(action[1]), -1.0), 1.0)
        ego = self.ego
        speed = ego.speed
        # explicit Euler: advance with current velocity, then update controls
        ego.x += speed * math.cos(ego.heading) * cfg.dt
        ego.y += speed * math.sin(ego.heading) * cfg.dt
        speed = min(max(speed + accel * cfg.accel_max * cfg.dt, cfg.v_min), cfg.v_max)
        ego.heading += steer * cfg.steer_rate_max * cfg.dt
        ego.vx = speed * math.cos(ego.heading)
        ego.vy = speed * math.sin(ego.heading)
        if len(self._traffic):
            self._traffic[:, 0] += self._traffic[:, 2] * cfg.dt
            self._traffic[:, 1] += self._traffic[:, 3] * cfg.dt
        self.t += 1
        collision = self.collided()
        reward = self.reward(collision)
        truncated = (not collision) and self.t >= cfg.horizon
        if collision or truncated:
            self._active = False
        return StepResult(self.full_state(), reward, collision, truncated, collision)


def env_reset(seed: int, config: EnvConfig | None = None) -> tuple[HighwayEnv, np.ndarray]:
    env = HighwayEnv(config)
    return env, env.reset(seed)
