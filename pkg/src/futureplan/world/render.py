"""Ego-centric rasterisers.

Rows run from far (row 0) to near, columns from left (+y) to right. Cell
values are sampled at cell centres. The drivable edge is anti-aliased with a
one-cell linear ramp on signed distance, so sub-cell ego offsets stay visible.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .core import WorldConfig, WorldState
from .geometry import point_segment_distance, points_in_box, to_world_frame

DRIVABLE_VALUE = 0.25


def grid_centres(rows: int, cols: int, x_far: float, mpp: float) -> np.ndarray:
    """Ego-frame (x, y) of every cell centre, shape (rows, cols, 2)."""
    x = x_far - (np.arange(rows) + 0.5) * mpp
    y = cols * mpp / 2.0 - (np.arange(cols) + 0.5) * mpp
    xx, yy = np.meshgrid(x, y, indexing="ij")
    return np.stack([xx, yy], axis=-1)


def front_grid(cfg: WorldConfig) -> np.ndarray:
    return grid_centres(cfg.front_size, cfg.front_size, cfg.front_size * cfg.meters_per_pixel, cfg.meters_per_pixel)


def bev_grid(cfg: WorldConfig) -> np.ndarray:
    return grid_centres(cfg.bev_size, cfg.bev_size, cfg.bev_ahead, cfg.meters_per_pixel)


def _drivable(state: WorldState, world_pts: np.ndarray, mpp: float) -> np.ndarray:
    return np.clip(0.5 + state.map.signed_distance(world_pts) / mpp, 0.0, 1.0).astype(np.float32)


def _route_line(state: WorldState, world_pts: np.ndarray, mpp: float) -> np.ndarray:
    pts = state.scene.route.points
    d = point_segment_distance(world_pts, pts[:-1], pts[1:]).min(-1)
    return np.clip(1.0 - d / mpp, 0.0, 1.0).astype(np.float32)


def _occupancy(world_pts: np.ndarray, state: WorldState, with_speed: bool = False, v_max: float = 1.0):
    occ = np.zeros(world_pts.shape[:-1], dtype=np.float32)
    spd = np.zeros_like(occ)
    for agent in state.agents:
        inside = points_in_box(world_pts, agent.pose, agent.half_extents)
        occ[inside] = 1.0
        if with_speed:
            spd[inside] = np.maximum(spd[inside], min(agent.speed / v_max, 1.0))
    return occ, spd


def render_front(state: WorldState, cfg: WorldConfig = WorldConfig()) -> np.ndarray:
    """Forward-looking raster in the state's own ego frame, values in [0, 1]."""
    pts = to_world_frame(front_grid(cfg), state.ego_pose)
    drivable = _drivable(state, pts, cfg.meters_per_pixel) * DRIVABLE_VALUE
    occ, _ = _occupancy(pts, state)
    return np.maximum(drivable, occ).astype(np.float32)


def render_bev(state: WorldState, history: Sequence[WorldState] = (), cfg: WorldConfig = WorldConfig()) -> np.ndarray:
    """BEV stack of shape (1 + history, 5, H, W), all frames in the current ego frame.

    Channels: drivable area, agent occupancy, agent speed / v_max, ego speed / v_max,
    route centreline (one-cell tent on either side).
    ``history`` is ordered most recent first; missing entries repeat the oldest available state.
    """
    pts = to_world_frame(bev_grid(cfg), state.ego_pose)
    drivable = _drivable(state, pts, cfg.meters_per_pixel)
    route = _route_line(state, pts, cfg.meters_per_pixel)
    frames = [state] + list(history)[: cfg.history]
    while len(frames) < cfg.history + 1:
        frames.append(frames[-1])
    out = np.zeros((cfg.history + 1, cfg.bev_channels, cfg.bev_size, cfg.bev_size), dtype=np.float32)
    for k, st in enumerate(frames):
        occ, spd = _occupancy(pts, st, with_speed=True, v_max=cfg.v_max)
        out[k, 0] = drivable
        out[k, 1] = occ
        out[k, 2] = spd
        out[k, 3] = min(max(st.ego_speed / cfg.v_max, 0.0), 1.0)
        out[k, 4] = route
    return out
