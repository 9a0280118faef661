"""Closed-loop rollouts with a trajectory policy in the loop."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, List

import numpy as np

from .core import EGO_EXTENTS, ClosedLoopMetrics, WorldConfig, WorldState
from .dynamics import expert_future, substep_poses, track_step
from .episodes import MAX_ATTEMPTS, episode_from_states, episode_violations, rollout_scene, _collides
from .geometry import boxes_overlap
from .render import render_bev
from .scenarios import get_builder


@dataclass
class Observation:
    obs_bev: np.ndarray
    command: int
    state: WorldState
    cfg: WorldConfig

    def expert_trajectory(self) -> np.ndarray:
        """Privileged expert plan for the current state (used by the oracle policy)."""
        return expert_future(self.state, self.cfg)


Policy = Callable[[Observation], np.ndarray]


def oracle_policy(obs: Observation) -> np.ndarray:
    return obs.expert_trajectory()


def zero_policy(obs: Observation) -> np.ndarray:
    return np.zeros((obs.cfg.horizon, 2))


def initial_states(seed: int, scenario: str, cfg: WorldConfig = WorldConfig()):
    """The snapshot state and its history for the accepted episode of ``(seed, scenario)``."""
    get_builder(scenario)
    for attempt in range(MAX_ATTEMPTS):
        states, snap = rollout_scene(seed, scenario, cfg, attempt)
        ep = episode_from_states(states, snap, cfg)
        if not episode_violations(ep, cfg) and not _collides(states[snap:]):
            history = [states[max(snap - k, 0)] for k in range(1, cfg.history + 1)]
            return states[snap], history
    raise RuntimeError(f"no valid start state for {scenario} seed {seed}")


def _hits(state: WorldState, pose, t: float) -> bool:
    for agent in state.scene.agents:
        if boxes_overlap(pose, EGO_EXTENTS, tuple(agent.pose(t)), agent.half_extents):
            return True
    return False


def closed_loop_run(policy: Policy, scenario: str, seed: int, max_steps: int = 40,
                    cfg: WorldConfig = WorldConfig()) -> ClosedLoopMetrics:
    """Re-plan every step and track the plan's first waypoint.

    The run stops on collision, leaving the road, reaching the goal, or after
    ``max_steps``. A non-finite plan aborts the run and marks it invalid.
    """
    cur, history = initial_states(seed, scenario, cfg)
    route = cur.scene.route
    goal = cur.scene.goal_length
    s_start, _ = route.project(cur.ego_pose[:2])
    s_best = s_start
    collided = off_road = False
    steps = 0
    for _ in range(max_steps):
        obs = Observation(render_bev(cur, history, cfg), cur.scene.command, cur, cfg)
        traj = np.asarray(policy(obs), dtype=np.float64)
        if traj.size == 0 or not np.all(np.isfinite(traj)):
            return ClosedLoopMetrics.build((s_best - s_start) / goal, False, False, steps, valid=False)
        traj = traj.reshape(-1, 2)
        poses, offsets = substep_poses(cur, traj, cfg)
        for pose, dt in zip(poses, offsets):
            if _hits(cur, pose, cur.time + dt):
                collided = True
            if cur.map.signed_distance(np.array(pose[:2])) < 0.0:
                off_road = True
        nxt = track_step(cur, traj, cfg)
        history = [cur] + history[: cfg.history - 1]
        cur = nxt
        steps += 1
        s_now, _ = route.project(cur.ego_pose[:2], s_min=s_best - 2.0, s_max=s_best + 15.0)
        s_best = max(s_best, s_now)
        if collided or off_road or s_best - s_start >= goal:
            break
    return ClosedLoopMetrics.build((s_best - s_start) / goal, collided, off_road, steps)


def run_suite(policy: Policy, scenarios: List[str], seeds: List[int], max_steps: int = 40,
              cfg: WorldConfig = WorldConfig()) -> List[dict]:
    rows = []
    for sc in scenarios:
        for seed in seeds:
            m = closed_loop_run(policy, sc, seed, max_steps, cfg)
            rows.append({"scenario": sc, "seed": int(seed), **m.to_dict()})
    return rows
