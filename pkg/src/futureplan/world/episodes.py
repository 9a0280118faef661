"""Supervised episodes sampled from expert rollouts."""

from __future__ import annotations

from dataclasses import dataclass
from typing import List

import numpy as np

from .core import CMD_LEFT, CMD_RIGHT, EGO_EXTENTS, WorldConfig, WorldState
from .dynamics import expert_step
from .geometry import Lane, Polyline, RoadMap, boxes_overlap, to_ego_frame
from .render import render_bev, render_front
from .scenarios import get_builder

MAX_ATTEMPTS = 50


@dataclass
class Episode:
    obs_bev: np.ndarray  # (1 + history, 4, Hb, Wb) float32
    future_front: np.ndarray  # (F, Hf, Wf) float32
    gt_traj: np.ndarray  # (F, 2) meters, ego frame
    command: int
    lanes: np.ndarray  # (max_lanes, lane_points, 2) ego frame
    lane_mask: np.ndarray  # (max_lanes,) bool
    lane_half_width: np.ndarray  # (max_lanes,)
    agent_futures: np.ndarray  # (max_agents, F, 2) ego frame
    agent_mask: np.ndarray  # (max_agents,) bool
    seed: int
    scenario: str
    trigger_offset: int = -100  # steps from t until a hazard starts moving (<= 0: already moving), NO_TRIGGER if none

    @property
    def road(self) -> RoadMap:
        return RoadMap([Lane(c, float(w)) for c, w, m in zip(self.lanes, self.lane_half_width, self.lane_mask) if m])


def heading_class(traj: np.ndarray, threshold: float, min_step: float = 0.05) -> int:
    """-1 right, 0 straight, +1 left, from the last non-degenerate segment of ``traj``."""
    pts = np.concatenate([np.zeros((1, 2)), np.asarray(traj, dtype=np.float64)], axis=0)
    seg = np.diff(pts, axis=0)
    for d in seg[::-1]:
        if np.hypot(*d) > min_step:
            h = np.arctan2(d[1], d[0])
            if h > threshold:
                return 1
            if h < -threshold:
                return -1
            return 0
    return 0


def command_heading_class(command: int) -> int:
    return {CMD_LEFT: 1, CMD_RIGHT: -1}.get(int(command), 0)


def episode_violations(ep: Episode, cfg: WorldConfig = WorldConfig()) -> List[str]:
    out = []
    pts = np.concatenate([np.zeros((1, 2)), ep.gt_traj], axis=0)
    steps = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    if np.any(steps > cfg.v_max * cfg.dt + 1e-9):
        out.append(f"infeasible step {steps.max():.3f} m")
    sd = ep.road.signed_distance(ep.gt_traj)
    if np.any(sd < 0.0):
        out.append(f"waypoint outside drivable region (sd={sd.min():.3f})")
    if heading_class(ep.gt_traj, cfg.turn_heading_threshold) != command_heading_class(ep.command):
        out.append("command inconsistent with terminal heading")
    if not (0 <= ep.command < cfg.num_commands):
        out.append("command out of range")
    return out


def _map_local(road: RoadMap, pose, cfg: WorldConfig):
    lanes = np.zeros((cfg.max_lanes, cfg.lane_points, 2))
    mask = np.zeros(cfg.max_lanes, dtype=bool)
    hw = np.zeros(cfg.max_lanes)
    for i, lane in enumerate(road.lanes[: cfg.max_lanes]):
        lanes[i] = to_ego_frame(Polyline(lane.centerline).resample(cfg.lane_points), pose)
        mask[i] = True
        hw[i] = lane.half_width
    return lanes, mask, hw


def _collides(states: List[WorldState]) -> bool:
    for st in states:
        for a in st.agents:
            if boxes_overlap(st.ego_pose, EGO_EXTENTS, a.pose, a.half_extents):
                return True
    return False


NO_TRIGGER = -100
LATE_SNAPSHOT_MAX = 4  # hazard scenes in coverage rollouts snapshot up to this many steps late


def snapshot_step_for(seed: int, scenario: str, cfg: WorldConfig, attempt: int = 0) -> int:
    if scenario == "emergency-brake":
        return cfg.history
    rng = np.random.default_rng([int(seed) & 0xFFFFFFFF, 17, attempt])
    return cfg.history + int(rng.integers(0, 4))


def _nudge(state: WorldState, rng: np.random.Generator, cfg: WorldConfig) -> WorldState:
    """Shift the ego sideways and rotate it by clipped Gaussian noise."""
    dy = float(np.clip(rng.normal(), -2.0, 2.0)) * cfg.demo_noise_lateral
    dh = float(np.clip(rng.normal(), -2.0, 2.0)) * cfg.demo_noise_heading
    x, y, h = state.ego_pose
    return state.with_ego((x - np.sin(h) * dy, y + np.cos(h) * dy, h + dh), state.ego_speed, state.time)


def rollout_scene(seed: int, scenario: str, cfg: WorldConfig = WorldConfig(), attempt: int = 0,
                  perturb: bool = False, **overrides):
    """Build a scene and run the expert up to the snapshot plus the horizon.

    With ``perturb`` the rollout is meant for training coverage. Every executed
    step before the snapshot is followed by a small pose disturbance, so the
    snapshot (and its history) sit off the expert's line and the ground truth
    shows the expert's recovery. Hazard scenes are also snapshotted up to
    ``LATE_SNAPSHOT_MAX`` steps after the scene's nominal snapshot, so some
    episodes show the hazard already moving, as re-planning in closed loop
    does. Steps after the snapshot are clean. Returns (states, snapshot_index).
    """
    builder = get_builder(scenario)
    snap = snapshot_step_for(seed, scenario, cfg, attempt)
    scene, s0 = builder(seed, cfg, attempt=attempt, snapshot_step=snap, **overrides)
    rng = np.random.default_rng([int(seed) & 0xFFFFFFFF, 29, attempt])
    if perturb and scene.trigger_time is not None:
        snap += int(rng.integers(0, LATE_SNAPSHOT_MAX + 1))
    states = [s0]
    for i in range(snap + cfg.horizon):
        st = expert_step(states[-1], cfg)
        if perturb and i < snap:
            st = _nudge(st, rng, cfg)
        states.append(st)
    return states, snap


def episode_from_states(states: List[WorldState], snap: int, cfg: WorldConfig) -> Episode:
    cur = states[snap]
    history = [states[max(snap - k, 0)] for k in range(1, cfg.history + 1)]
    future = states[snap + 1: snap + 1 + cfg.horizon]
    scene = cur.scene
    gt = to_ego_frame(np.array([s.ego_pose[:2] for s in future]), cur.ego_pose)
    lanes, lane_mask, hw = _map_local(scene.road, cur.ego_pose, cfg)
    agent_futures = np.zeros((cfg.max_agents, cfg.horizon, 2))
    agent_mask = np.zeros(cfg.max_agents, dtype=bool)
    for i, agent in enumerate(scene.agents[: cfg.max_agents]):
        times = cur.time + np.arange(1, cfg.horizon + 1) * cfg.dt
        agent_futures[i] = to_ego_frame(agent.pose(times)[:, :2], cur.ego_pose)
        agent_mask[i] = True
    trigger = NO_TRIGGER
    if scene.trigger_time is not None:
        trigger = int(round((scene.trigger_time - cur.time) / cfg.dt))
    return Episode(
        obs_bev=render_bev(cur, history, cfg),
        future_front=np.stack([render_front(s, cfg) for s in future]).astype(np.float32),
        gt_traj=gt,
        command=int(scene.command),
        lanes=lanes,
        lane_mask=lane_mask,
        lane_half_width=hw,
        agent_futures=agent_futures,
        agent_mask=agent_mask,
        seed=int(scene.seed),
        scenario=scene.scenario,
        trigger_offset=trigger,
    )


def generate_episode(seed: int, scenario: str, cfg: WorldConfig = WorldConfig(), perturb: bool = False,
                     **overrides) -> Episode:
    """Deterministic episode for ``(seed, scenario)``.

    Scene parameters are redrawn (deterministically) until the episode passes
    :func:`episode_violations` and the expert future is collision free.
    ``perturb=True`` disturbs the ego before the snapshot (see :func:`rollout_scene`);
    training datasets use it so that they contain recovery examples.
    """
    get_builder(scenario)
    for attempt in range(MAX_ATTEMPTS):
        states, snap = rollout_scene(seed, scenario, cfg, attempt, perturb, **overrides)
        ep = episode_from_states(states, snap, cfg)
        if not episode_violations(ep, cfg) and not _collides(states[snap:]):
            return ep
    raise RuntimeError(f"could not generate a valid {scenario} episode for seed {seed}")
