"""Scenario registry.

Every scenario builder is a deterministic function of ``(seed, cfg, overrides)``
returning a :class:`Scene` plus the ego's initial state. The ego always
starts at the origin heading along +x; lanes are ``cfg.lane_spacing`` apart.
"""

from __future__ import annotations

from typing import Callable, Dict, Tuple

import numpy as np

from .core import (
    CMD_FOLLOW, CMD_LANE_LEFT, CMD_LANE_RIGHT, CMD_LEFT, CMD_RIGHT, CMD_STRAIGHT,
    PEDESTRIAN_EXTENTS, Scene, ScriptedAgent, WorldConfig, WorldState,
)
from .geometry import Lane, Polyline, RoadMap, arc, concat_paths, smooth_lane_change, straight

ROAD_START, ROAD_END = -60.0, 200.0
LANE_CHANGE_LENGTH = 15.0
TURN_RADIUS = 9.0


class UnknownScenarioError(KeyError):
    pass


def _rng(seed: int, scenario: str, attempt: int = 0) -> np.random.Generator:
    key = sum((i + 1) * ord(c) for i, c in enumerate(scenario))
    return np.random.default_rng([int(seed) & 0xFFFFFFFF, key, int(attempt)])


def _two_way_road(cfg: WorldConfig, end: float = ROAD_END) -> RoadMap:
    w = cfg.lane_half_width
    return RoadMap([
        Lane(straight((ROAD_START, 0.0), (end, 0.0)), w),
        Lane(straight((end, cfg.lane_spacing), (ROAD_START, cfg.lane_spacing)), w),
    ])


def _initial(scene: Scene, speed: float) -> WorldState:
    return WorldState(scene=scene, ego_pose=(0.0, 0.0, 0.0), ego_speed=float(speed), time=0.0)


def straight_follow(seed: int, cfg: WorldConfig, attempt: int = 0, snapshot_step: int = 2,
                    ego_speed=None, lead=None, oncoming=None):
    rng = _rng(seed, "straight-follow", attempt)
    v0 = float(rng.uniform(3.0, 7.0))
    has_lead = bool(rng.random() < 0.7)
    lead_gap, lead_speed = float(rng.uniform(10.0, 20.0)), float(rng.uniform(2.0, 7.0))
    has_oncoming = bool(rng.random() < 0.5)
    on_x, on_v = float(rng.uniform(20.0, 60.0)), float(rng.uniform(4.0, 8.0))
    v0 = v0 if ego_speed is None else float(ego_speed)
    has_lead = has_lead if lead is None else bool(lead)
    has_oncoming = has_oncoming if oncoming is None else bool(oncoming)

    road = _two_way_road(cfg)
    agents = []
    if has_lead:
        agents.append(ScriptedAgent(straight((lead_gap, 0.0), (ROAD_END, 0.0)), lead_speed))
    if has_oncoming:
        agents.append(ScriptedAgent(straight((on_x, cfg.lane_spacing), (ROAD_START, cfg.lane_spacing)), on_v))
    route = Polyline(straight((ROAD_START, 0.0), (ROAD_END, 0.0)))
    scene = Scene("straight-follow", seed, road, agents, route,
                  CMD_FOLLOW if has_lead else CMD_STRAIGHT, v0)
    return scene, _initial(scene, v0)


def static_obstacle_overtake(seed: int, cfg: WorldConfig, attempt: int = 0, snapshot_step: int = 2):
    rng = _rng(seed, "static-obstacle-overtake", attempt)
    v0 = float(rng.uniform(3.0, 7.0))
    gap = float(rng.uniform(24.0, 34.0))
    y1 = cfg.lane_spacing
    w = cfg.lane_half_width
    road = RoadMap([
        Lane(straight((ROAD_START, 0.0), (ROAD_END, 0.0)), w),
        Lane(straight((ROAD_START, y1), (ROAD_END, y1)), w),
    ])
    x_change = gap - 3.0 - LANE_CHANGE_LENGTH
    route = Polyline(concat_paths(
        straight((ROAD_START, 0.0), (x_change, 0.0)),
        smooth_lane_change(x_change, 0.0, y1, LANE_CHANGE_LENGTH),
        straight((x_change + LANE_CHANGE_LENGTH, y1), (ROAD_END, y1)),
    ))
    agents = [ScriptedAgent(straight((gap, 0.0), (gap + 1.0, 0.0)), 0.0)]
    if rng.random() < 0.3:
        agents.append(ScriptedAgent(straight((gap + float(rng.uniform(25.0, 40.0)), y1), (ROAD_END, y1)),
                                    float(rng.uniform(6.0, 8.0))))
    scene = Scene("static-obstacle-overtake", seed, road, agents, route, CMD_LANE_LEFT, v0)
    return scene, _initial(scene, v0)


def merge(seed: int, cfg: WorldConfig, attempt: int = 0, snapshot_step: int = 2):
    rng = _rng(seed, "merge", attempt)
    v0 = float(rng.uniform(4.0, 7.0))
    lane_end = float(rng.uniform(28.0, 40.0))
    y1 = cfg.lane_spacing
    w = cfg.lane_half_width
    road = RoadMap([
        Lane(straight((ROAD_START, 0.0), (ROAD_END, 0.0)), w),
        Lane(straight((ROAD_START, y1), (lane_end, y1)), w),
    ])
    x_change = lane_end - 2.0 - LANE_CHANGE_LENGTH
    # the ego drives in the left lane, which ends
    route = Polyline(concat_paths(
        straight((ROAD_START, y1), (x_change, y1)),
        smooth_lane_change(x_change, y1, 0.0, LANE_CHANGE_LENGTH),
        straight((x_change + LANE_CHANGE_LENGTH, 0.0), (ROAD_END, 0.0)),
    ))
    agents = [ScriptedAgent(straight((float(rng.uniform(6.0, 22.0)), 0.0), (ROAD_END, 0.0)),
                            float(rng.uniform(3.0, 6.0)))]
    if rng.random() < 0.5:
        agents.append(ScriptedAgent(straight((float(rng.uniform(32.0, 50.0)), 0.0), (ROAD_END, 0.0)),
                                    float(rng.uniform(4.0, 7.0))))
    scene = Scene("merge", seed, road, agents, route, CMD_LANE_RIGHT, v0)
    state = WorldState(scene=scene, ego_pose=(0.0, y1, 0.0), ego_speed=v0, time=0.0)
    return scene, state


def unprotected_turn(seed: int, cfg: WorldConfig, attempt: int = 0, snapshot_step: int = 2):
    rng = _rng(seed, "unprotected-turn", attempt)
    v0 = float(rng.uniform(4.0, 6.0))
    xc = float(rng.uniform(12.0, 22.0))
    left = bool(rng.random() < 0.5)
    has_oncoming = bool(rng.random() < 0.6)
    on_x, on_v = float(rng.uniform(xc + 10.0, xc + 40.0)), float(rng.uniform(4.0, 7.0))
    r = TURN_RADIUS
    w = cfg.lane_half_width
    y1 = cfg.lane_spacing
    x_exit = xc + r
    left_arc = arc((xc, r), r, -np.pi / 2, 0.0)
    right_arc = arc((xc, -r), r, np.pi / 2, 0.0)
    road = RoadMap([
        Lane(straight((ROAD_START, 0.0), (xc + 40.0, 0.0)), w),
        Lane(straight((xc + 40.0, y1), (ROAD_START, y1)), w),
        Lane(straight((x_exit, -60.0), (x_exit, 60.0)), w),
        Lane(straight((x_exit + y1, 60.0), (x_exit + y1, -60.0)), w),
        Lane(left_arc, w),
        Lane(right_arc, w),
    ])
    if left:
        tail = straight((x_exit, r), (x_exit, 60.0))
        turn = left_arc
    else:
        tail = straight((x_exit, -r), (x_exit, -60.0))
        turn = right_arc
    route = Polyline(concat_paths(straight((ROAD_START, 0.0), (xc, 0.0)), turn, tail))
    agents = []
    if has_oncoming:
        agents.append(ScriptedAgent(straight((on_x, y1), (ROAD_START, y1)), on_v))
    scene = Scene("unprotected-turn", seed, road, agents, route, CMD_LEFT if left else CMD_RIGHT, v0,
                  goal_length=35.0)
    return scene, _initial(scene, v0)


def emergency_brake(seed: int, cfg: WorldConfig, attempt: int = 0, snapshot_step: int = 2,
                    trigger_offset=None):
    """A pedestrian waits at the kerb and starts crossing ``trigger_offset`` steps after the snapshot."""
    rng = _rng(seed, "emergency-brake", attempt)
    v0 = float(rng.uniform(4.0, 7.0))
    k = int(rng.integers(1, 5)) if trigger_offset is None else int(trigger_offset)
    ahead = float(rng.uniform(12.0, 18.0))
    ped_speed = float(rng.uniform(1.2, 1.8))
    t_snap = snapshot_step * cfg.dt
    t_trig = t_snap + k * cfg.dt
    x_p = v0 * t_snap + ahead
    road = _two_way_road(cfg)
    ped = ScriptedAgent(straight((x_p, -3.5), (x_p, cfg.lane_spacing + 3.5)), ped_speed,
                        t_start=t_trig, half_extents=PEDESTRIAN_EXTENTS, kind="pedestrian")
    route = Polyline(straight((ROAD_START, 0.0), (ROAD_END, 0.0)))
    scene = Scene("emergency-brake", seed, road, [ped], route, CMD_STRAIGHT, v0, trigger_time=t_trig)
    return scene, _initial(scene, v0)


SCENARIOS: Dict[str, Callable[..., Tuple[Scene, WorldState]]] = {
    "straight-follow": straight_follow,
    "static-obstacle-overtake": static_obstacle_overtake,
    "merge": merge,
    "unprotected-turn": unprotected_turn,
    "emergency-brake": emergency_brake,
}

# scenarios without a hidden-timing hazard; the expert always completes them
HAZARD_FREE = ("straight-follow", "static-obstacle-overtake", "merge", "unprotected-turn")


def get_builder(scenario: str):
    try:
        return SCENARIOS[scenario]
    except KeyError:
        raise UnknownScenarioError(f"unknown scenario {scenario!r}; known: {sorted(SCENARIOS)}") from None
