"""Planar geometry helpers: polylines, lanes, signed distance, frame transforms."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Sequence

import numpy as np


def wrap_angle(a):
    return (np.asarray(a) + np.pi) % (2 * np.pi) - np.pi


def to_ego_frame(points: np.ndarray, pose: Sequence[float]) -> np.ndarray:
    """Express world points (..., 2) in the frame of ``pose`` = (x, y, heading)."""
    x, y, h = pose
    c, s = np.cos(h), np.sin(h)
    d = np.asarray(points, dtype=np.float64) - np.array([x, y])
    return np.stack([c * d[..., 0] + s * d[..., 1], -s * d[..., 0] + c * d[..., 1]], axis=-1)


def to_world_frame(points: np.ndarray, pose: Sequence[float]) -> np.ndarray:
    x, y, h = pose
    c, s = np.cos(h), np.sin(h)
    p = np.asarray(points, dtype=np.float64)
    return np.stack([c * p[..., 0] - s * p[..., 1] + x, s * p[..., 0] + c * p[..., 1] + y], axis=-1)


def point_segment_distance(points: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Distance from points (..., 2) to every segment a[k]-b[k]; returns (..., K)."""
    p = np.asarray(points, dtype=np.float64)[..., None, :]
    ab = b - a
    denom = np.maximum((ab * ab).sum(-1), 1e-12)
    t = np.clip(((p - a) * ab).sum(-1) / denom, 0.0, 1.0)
    closest = a + t[..., None] * ab
    return np.linalg.norm(p - closest, axis=-1)


class Polyline:
    """Arc-length parameterised polyline with linear extrapolation past both ends."""

    def __init__(self, points: np.ndarray):
        pts = np.asarray(points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[0] < 2 or pts.shape[1] != 2:
            raise ValueError(f"polyline needs at least two 2D points, got shape {pts.shape}")
        seg = np.diff(pts, axis=0)
        seg_len = np.linalg.norm(seg, axis=1)
        keep = np.concatenate([[True], seg_len > 1e-9])
        self.points = pts[keep]
        seg = np.diff(self.points, axis=0)
        self.seg_len = np.linalg.norm(seg, axis=1)
        self.tangents = seg / self.seg_len[:, None]
        self.cum = np.concatenate([[0.0], np.cumsum(self.seg_len)])

    @property
    def length(self) -> float:
        return float(self.cum[-1])

    def _locate(self, s):
        s = np.asarray(s, dtype=np.float64)
        idx = np.clip(np.searchsorted(self.cum, s, side="right") - 1, 0, len(self.seg_len) - 1)
        return s, idx

    def position(self, s) -> np.ndarray:
        s, idx = self._locate(s)
        return self.points[idx] + (s - self.cum[idx])[..., None] * self.tangents[idx]

    def heading(self, s) -> np.ndarray:
        _, idx = self._locate(s)
        t = self.tangents[idx]
        return np.arctan2(t[..., 1], t[..., 0])

    def project(self, point, s_min: float = -np.inf, s_max: float = np.inf) -> tuple:
        """Arc length and signed lateral offset (left positive) of the closest point.

        Only segments overlapping ``[s_min, s_max]`` are searched.
        """
        p = np.asarray(point, dtype=np.float64)
        a, b = self.points[:-1], self.points[1:]
        d = p - a
        t = np.clip((d * self.tangents).sum(-1), 0.0, self.seg_len)
        dist = np.linalg.norm(d - t[:, None] * self.tangents, axis=1)
        s = self.cum[:-1] + t
        ok = (self.cum[1:] >= s_min) & (self.cum[:-1] <= s_max)
        dist = np.where(ok, dist, np.inf)
        k = int(np.argmin(dist))
        s_k = float(np.clip(s[k], s_min, s_max))
        foot = self.position(s_k)
        tan = self.tangents[min(max(np.searchsorted(self.cum, s_k, side="right") - 1, 0), len(self.seg_len) - 1)]
        r = p - foot
        lateral = float(tan[0] * r[1] - tan[1] * r[0])
        return s_k, lateral

    def resample(self, n: int) -> np.ndarray:
        return self.position(np.linspace(0.0, self.length, n))


def straight(p0, p1, n: int = 2) -> np.ndarray:
    return np.linspace(np.asarray(p0, float), np.asarray(p1, float), n)


def arc(center, radius: float, theta0: float, theta1: float, n: int = 24) -> np.ndarray:
    th = np.linspace(theta0, theta1, n)
    return np.stack([center[0] + radius * np.cos(th), center[1] + radius * np.sin(th)], axis=1)


def smooth_lane_change(x0: float, y0: float, y1: float, length: float, n: int = 40) -> np.ndarray:
    """Quintic smoothstep lateral transition from ``y0`` to ``y1`` over ``length`` meters."""
    u = np.linspace(0.0, 1.0, n)
    blend = u**3 * (10 - 15 * u + 6 * u**2)
    return np.stack([x0 + length * u, y0 + (y1 - y0) * blend], axis=1)


def concat_paths(*parts: np.ndarray) -> np.ndarray:
    out = [parts[0]]
    for p in parts[1:]:
        if np.allclose(out[-1][-1], p[0]):
            p = p[1:]
        out.append(p)
    return np.concatenate(out, axis=0)


@dataclass
class Lane:
    centerline: np.ndarray
    half_width: float


@dataclass
class RoadMap:
    lanes: List[Lane] = field(default_factory=list)

    def segments(self):
        a, b, hw = [], [], []
        for lane in self.lanes:
            c = np.asarray(lane.centerline, dtype=np.float64)
            a.append(c[:-1])
            b.append(c[1:])
            hw.append(np.full(len(c) - 1, lane.half_width))
        if not a:
            return np.zeros((0, 2)), np.zeros((0, 2)), np.zeros(0)
        return np.concatenate(a), np.concatenate(b), np.concatenate(hw)

    def signed_distance(self, points: np.ndarray) -> np.ndarray:
        """Positive inside the drivable region (union of lane tubes), negative outside."""
        p = np.asarray(points, dtype=np.float64)
        a, b, hw = self.segments()
        if len(a) == 0:
            return np.full(p.shape[:-1], -np.inf)
        d = point_segment_distance(p, a, b)
        return (hw - d).max(axis=-1)

    def max_half_width(self) -> float:
        return max((lane.half_width for lane in self.lanes), default=0.0)


def box_corners(pose, half_extents) -> np.ndarray:
    l, w = half_extents
    local = np.array([[l, w], [l, -w], [-l, -w], [-l, w]], dtype=np.float64)
    return to_world_frame(local, pose)


def boxes_overlap(pose_a, ext_a, pose_b, ext_b) -> bool:
    """Separating-axis test for two oriented rectangles."""
    ca, cb = box_corners(pose_a, ext_a), box_corners(pose_b, ext_b)
    for h in (pose_a[2], pose_b[2]):
        for axis in (np.array([np.cos(h), np.sin(h)]), np.array([-np.sin(h), np.cos(h)])):
            pa, pb = ca @ axis, cb @ axis
            if pa.max() < pb.min() or pb.max() < pa.min():
                return False
    return True


def points_in_box(points: np.ndarray, pose, half_extents) -> np.ndarray:
    local = to_ego_frame(points, pose)
    return (np.abs(local[..., 0]) <= half_extents[0]) & (np.abs(local[..., 1]) <= half_extents[1])
