"""Ego tracking controller and the privileged expert planner."""

from __future__ import annotations

from typing import List

import numpy as np

from .core import EGO_EXTENTS, WorldConfig, WorldState
from .geometry import to_ego_frame, wrap_angle

MAX_CURVATURE = 0.5  # [1/m]
BRAKE_DECEL = 5.0  # continuation braking used in the expert's safety check [m/s^2]
ACCEL_CANDIDATES = np.arange(-6.0, 2.0 + 1e-9, 0.25)
CHECK_STEP = 0.1  # [s]
CHECK_EXTRA = 2.0  # [s] safety window beyond the planning horizon
SAFETY_MARGIN = 0.3  # [m]
RECOVERY_TIME = 2.0  # [s] the expert rejoins its route over this much travel time
RECOVERY_MIN = 8.0  # [m] and at least this distance
MAX_RECOVERY_HEADING = 0.6  # [rad]


def _point_along(traj: np.ndarray, dist: float) -> np.ndarray:
    """Point at arc length ``dist`` along origin -> traj[0] -> ... (extrapolated)."""
    pts = np.concatenate([np.zeros((1, 2)), traj], axis=0)
    seg = np.diff(pts, axis=0)
    seg_len = np.linalg.norm(seg, axis=1)
    acc = 0.0
    last_dir = None
    for k in range(len(seg)):
        if seg_len[k] < 1e-9:
            continue
        last_dir = seg[k] / seg_len[k]
        if acc + seg_len[k] >= dist:
            return pts[k] + (dist - acc) * last_dir
        acc += seg_len[k]
    if last_dir is None:
        return None
    return pts[-1] + (dist - acc) * last_dir


def arc_step(pose, curvature: float, distance: float):
    """Advance ``pose`` by ``distance`` along a constant-curvature arc."""
    x, y, h = pose
    ks = curvature * distance
    if abs(curvature) < 1e-9:
        dx, dy = distance, 0.0
    else:
        dx, dy = np.sin(ks) / curvature, (1.0 - np.cos(ks)) / curvature
    c, s = np.cos(h), np.sin(h)
    return (x + c * dx - s * dy, y + s * dx + c * dy, float(wrap_angle(h + ks)))


def pursuit_command(traj: np.ndarray, speed: float, cfg: WorldConfig):
    """Pure-pursuit step toward a planned trajectory (ego frame).

    Returns (curvature, new speed). The commanded displacement is the arc
    length to the first waypoint; only acceleration is bounded by ``a_max``
    so a zero plan stops the vehicle.
    """
    traj = np.asarray(traj, dtype=np.float64).reshape(-1, 2)
    p1 = traj[0]
    d1 = float(np.hypot(*p1))
    if d1 >= cfg.lookahead:
        target = p1
    else:
        target = _point_along(traj, cfg.lookahead)
    if target is None or not np.all(np.isfinite(target)):
        return 0.0, 0.0
    r2 = float(target @ target)
    curvature = float(np.clip(2.0 * target[1] / max(r2, 1e-9), -MAX_CURVATURE, MAX_CURVATURE))
    # arc length on that circle to reach the first waypoint's range
    half = curvature * d1 / 2.0
    if abs(curvature) < 1e-9:
        s_cmd = d1
    elif abs(half) < 1.0:
        s_cmd = 2.0 * np.arcsin(half) / curvature
    else:
        s_cmd = np.pi / abs(curvature)
    v_cmd = s_cmd / cfg.dt
    v_new = float(min(v_cmd, speed + cfg.a_max * cfg.dt, cfg.v_max))
    return curvature, max(v_new, 0.0)


def track_step(state: WorldState, traj_ego: np.ndarray, cfg: WorldConfig) -> WorldState:
    curvature, v_new = pursuit_command(traj_ego, state.ego_speed, cfg)
    pose = arc_step(state.ego_pose, curvature, v_new * cfg.dt)
    return state.with_ego(pose, v_new, state.time + cfg.dt)


def substep_poses(state: WorldState, traj_ego: np.ndarray, cfg: WorldConfig, n: int = 5):
    """Intermediate ego poses over one tracking step (for tunnelling-free collision checks)."""
    curvature, v_new = pursuit_command(traj_ego, state.ego_speed, cfg)
    fr = np.arange(1, n + 1) / n
    return [arc_step(state.ego_pose, curvature, f * v_new * cfg.dt) for f in fr], fr * cfg.dt


def _circles(half_extents):
    l, w = half_extents
    if l <= w:
        return np.zeros(1), max(l, w)
    n = int(np.ceil(l / w))
    return np.linspace(-(l - w), l - w, n + 1), w * 1.15


def _circle_centres(poses: np.ndarray, offsets: np.ndarray) -> np.ndarray:
    c, s = np.cos(poses[..., 2]), np.sin(poses[..., 2])
    x = poses[..., 0, None] + c[..., None] * offsets
    y = poses[..., 1, None] + s[..., None] * offsets
    return np.stack([x, y], axis=-1)


def expert_accel(state: WorldState, cfg: WorldConfig) -> tuple:
    """Pick a constant acceleration for the horizon that is collision free.

    Returns ``(accel, s0)`` with ``s0`` the ego's route arc length.
    """
    scene = state.scene
    route = scene.route
    s0, _ = route.project(state.ego_pose[:2])
    v0 = state.ego_speed
    horizon = cfg.horizon * cfg.dt
    tau = np.arange(1, int(round((horizon + CHECK_EXTRA) / CHECK_STEP)) + 1) * CHECK_STEP
    s = _distance_profile(v0, ACCEL_CANDIDATES, scene.cruise_speed, horizon, tau, cfg) + s0
    xy = route.position(s)
    hd = route.heading(s)
    ego = np.concatenate([xy, hd[..., None]], axis=-1)  # (C, T, 3)
    e_off, e_r = _circles(EGO_EXTENTS)
    ego_c = _circle_centres(ego, e_off)  # (C, T, E, 2)
    safe = np.ones(len(ACCEL_CANDIDATES), dtype=bool)
    for agent in scene.agents:
        ap = agent.pose(state.time + tau)  # (T, 3)
        a_off, a_r = _circles(agent.half_extents)
        ac = _circle_centres(ap, a_off)  # (T, A, 2)
        d = np.linalg.norm(ego_c[:, :, :, None, :] - ac[None, :, None, :, :], axis=-1)
        hit = (d < e_r + a_r + SAFETY_MARGIN).any(axis=(2, 3))
        safe &= ~hit.any(axis=1)
    a_des = float(np.clip(scene.cruise_speed - v0, -2.0, 2.0))
    if safe.any():
        accel = min(a_des, float(ACCEL_CANDIDATES[safe].max()))
    else:
        accel = float(ACCEL_CANDIDATES[0])
    return accel, s0


def _distance_profile(v0, accels, v_cap, horizon, tau, cfg: WorldConfig) -> np.ndarray:
    """Travelled distance at times ``tau`` for each constant acceleration, then braking."""
    fine = np.arange(0.0, tau[-1] + 1e-9, 0.01)
    a = np.asarray(accels)[:, None]
    v = np.clip(v0 + a * np.minimum(fine, horizon), 0.0, min(v_cap, cfg.v_max))
    v_h = np.clip(v0 + a[:, 0] * horizon, 0.0, min(v_cap, cfg.v_max))
    after = fine > horizon
    v = np.where(after, np.maximum(v_h[:, None] - BRAKE_DECEL * (fine - horizon), 0.0), v)
    dist = np.concatenate([np.zeros((len(accels), 1)), np.cumsum(0.5 * (v[:, 1:] + v[:, :-1]) * 0.01, axis=1)], axis=1)
    idx = np.clip(np.round(tau / 0.01).astype(int), 0, len(fine) - 1)
    return dist[:, idx]


def recovery_offset(ds: np.ndarray, e0: float, psi0: float, length: float) -> np.ndarray:
    """Lateral offset from the route after travelling ``ds`` along it.

    Cubic Hermite blend from offset ``e0`` and heading error ``psi0`` down to
    zero offset and zero slope at ``length``; zero beyond.
    """
    u = np.clip(np.asarray(ds, dtype=np.float64) / length, 0.0, 1.0)
    return e0 * (2 * u ** 3 - 3 * u ** 2 + 1) + length * np.tan(psi0) * (u ** 3 - 2 * u ** 2 + u)


def expert_plan(state: WorldState, cfg: WorldConfig) -> np.ndarray:
    """Expert's F-step plan in the ego frame.

    Waypoints follow the route's arc-length profile. An ego that is off the
    route (offset or misaligned) is led back along a smooth blend instead of
    being pointed straight at the route, which would make the one-step
    pursuit tracker overshoot and oscillate.
    """
    accel, s0 = expert_accel(state, cfg)
    route = state.scene.route
    tau = np.arange(1, cfg.horizon + 1) * cfg.dt
    horizon = cfg.horizon * cfg.dt
    s = _distance_profile(state.ego_speed, [accel], state.scene.cruise_speed, horizon, tau, cfg)[0] + s0
    pts = route.position(s)
    _, e0 = route.project(state.ego_pose[:2])
    psi0 = float(np.clip(wrap_angle(state.ego_pose[2] - float(route.heading(s0))),
                         -MAX_RECOVERY_HEADING, MAX_RECOVERY_HEADING))
    if e0 != 0.0 or psi0 != 0.0:
        length = max(RECOVERY_MIN, RECOVERY_TIME * state.ego_speed)
        e = recovery_offset(s - s0, e0, psi0, length)
        h = route.heading(s)
        pts = pts + e[:, None] * np.stack([-np.sin(h), np.cos(h)], axis=-1)
    return to_ego_frame(pts, state.ego_pose)


def expert_step(state: WorldState, cfg: WorldConfig) -> WorldState:
    return track_step(state, expert_plan(state, cfg), cfg)


def expert_rollout(state: WorldState, cfg: WorldConfig, n_steps: int) -> List[WorldState]:
    out = []
    for _ in range(n_steps):
        state = expert_step(state, cfg)
        out.append(state)
    return out


def expert_future(state: WorldState, cfg: WorldConfig) -> np.ndarray:
    """Ground-truth trajectory: the expert's own F future positions in the current ego frame."""
    fut = expert_rollout(state, cfg, cfg.horizon)
    pts = np.array([s.ego_pose[:2] for s in fut])
    return to_ego_frame(pts, state.ego_pose)

