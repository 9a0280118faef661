"""World configuration, scripted agents and world state."""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import List, Optional, Tuple

import numpy as np

from .geometry import Polyline, RoadMap

# Command ids; the order is part of the dataset format.
COMMANDS = ("left", "right", "straight", "lane_left", "lane_right", "follow")
CMD_LEFT, CMD_RIGHT, CMD_STRAIGHT, CMD_LANE_LEFT, CMD_LANE_RIGHT, CMD_FOLLOW = range(6)

VEHICLE_EXTENTS = (1.9, 0.9)
PEDESTRIAN_EXTENTS = (0.4, 0.4)
EGO_EXTENTS = VEHICLE_EXTENTS


@dataclass(frozen=True)
class WorldConfig:
    horizon: int = 6  # F, number of future waypoints / frames
    dt: float = 0.5  # waypoint spacing and simulation step [s]
    meters_per_pixel: float = 0.5
    front_size: int = 32
    bev_size: int = 48
    bev_ahead: float = 18.0  # BEV extends this far in front of the ego [m]
    history: int = 2
    v_max: float = 10.0
    a_max: float = 6.0
    lookahead: float = 2.0
    lane_half_width: float = 2.0
    lane_spacing: float = 3.5
    num_commands: int = 6
    max_lanes: int = 8
    lane_points: int = 16
    max_agents: int = 6
    turn_heading_threshold: float = 0.6  # [rad] terminal heading separating turn from straight classes
    # per-step pose noise injected into the expert before the snapshot, so episodes include recoveries
    demo_noise_lateral: float = 0.3  # [m] std, clipped at 2 std
    demo_noise_heading: float = 0.05  # [rad] std, clipped at 2 std

    @property
    def bev_channels(self) -> int:
        return 5

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}

    @classmethod
    def from_dict(cls, d: dict) -> "WorldConfig":
        return cls(**{k: type(getattr(cls(), k))(v) for k, v in d.items() if k in cls.__dataclass_fields__})


class ScriptedAgent:
    """Agent moving along a fixed path at constant speed once ``t_start`` is reached.

    Position is a pure function of time; the agent parks at the path end.
    """

    def __init__(self, path, speed: float, t_start: float = 0.0, s0: float = 0.0,
                 half_extents: Tuple[float, float] = VEHICLE_EXTENTS, kind: str = "vehicle"):
        self.path = Polyline(path)
        self.speed = float(speed)
        self.t_start = float(t_start)
        self.s0 = float(s0)
        self.half_extents = tuple(float(e) for e in half_extents)
        self.kind = kind

    def arc_length(self, t):
        t = np.asarray(t, dtype=np.float64)
        return np.clip(self.s0 + self.speed * np.clip(t - self.t_start, 0.0, None), 0.0, self.path.length)

    def pose(self, t) -> np.ndarray:
        s = self.arc_length(t)
        xy = self.path.position(s)
        h = self.path.heading(s)
        return np.concatenate([xy, np.asarray(h)[..., None]], axis=-1)

    def speed_at(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=np.float64)
        moving = (t >= self.t_start) & (self.arc_length(t) < self.path.length)
        return np.where(moving, self.speed, 0.0)


@dataclass
class Scene:
    """Static description of one scenario instance."""

    scenario: str
    seed: int
    road: RoadMap
    agents: List[ScriptedAgent]
    route: Polyline
    command: int
    cruise_speed: float
    goal_length: float = 30.0
    trigger_time: Optional[float] = None


@dataclass(frozen=True)
class AgentSnapshot:
    pose: Tuple[float, float, float]
    speed: float
    half_extents: Tuple[float, float]


@dataclass
class WorldState:
    scene: Scene
    ego_pose: Tuple[float, float, float]
    ego_speed: float
    time: float

    @property
    def agents(self) -> List[AgentSnapshot]:
        out = []
        for a in self.scene.agents:
            p = a.pose(self.time)
            out.append(AgentSnapshot(tuple(float(v) for v in p), float(a.speed_at(self.time)), a.half_extents))
        return out

    @property
    def map(self) -> RoadMap:
        return self.scene.road

    def with_ego(self, pose, speed: float, time: float) -> "WorldState":
        return replace(self, ego_pose=tuple(float(v) for v in pose), ego_speed=float(speed), time=float(time))


@dataclass
class ClosedLoopMetrics:
    route_completion: float
    collided: bool
    off_road: bool
    success: bool
    toy_driving_score: float
    steps: int
    valid: bool = True

    @staticmethod
    def score(route_completion: float, collided: bool, off_road: bool) -> float:
        return 100.0 * route_completion * (0.5 if collided else 1.0) * (0.7 if off_road else 1.0)

    @classmethod
    def build(cls, route_completion: float, collided: bool, off_road: bool, steps: int,
              valid: bool = True) -> "ClosedLoopMetrics":
        rc = float(np.clip(route_completion, 0.0, 1.0))
        success = valid and rc >= 1.0 and not collided and not off_road
        return cls(rc, bool(collided), bool(off_road), bool(success),
                   cls.score(rc, collided, off_road), int(steps), bool(valid))

    def to_dict(self) -> dict:
        return dict(self.__dict__)
