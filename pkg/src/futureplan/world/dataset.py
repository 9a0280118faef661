"""Episode datasets: generation, stacking and on-disk archives."""

from __future__ import annotations

from dataclasses import dataclass, fields
from multiprocessing import get_context
from typing import Dict, List, Mapping, Sequence, Tuple

import numpy as np

from ..archive import ArchiveError, load_archive, save_archive
from .core import WorldConfig
from .episodes import Episode, generate_episode
from .scenarios import SCENARIOS, get_builder

DATASET_KIND = "episodes"
DATASET_SCHEMA = 1

_ARRAY_FIELDS = (
    "obs_bev", "future_front", "gt_traj", "command", "lanes", "lane_mask", "lane_half_width",
    "agent_futures", "agent_mask", "seed", "trigger_offset",
)


@dataclass
class Dataset:
    obs_bev: np.ndarray
    future_front: np.ndarray
    gt_traj: np.ndarray
    command: np.ndarray
    lanes: np.ndarray
    lane_mask: np.ndarray
    lane_half_width: np.ndarray
    agent_futures: np.ndarray
    agent_mask: np.ndarray
    seed: np.ndarray
    trigger_offset: np.ndarray
    scenario_id: np.ndarray
    scenario_names: Tuple[str, ...]
    world: WorldConfig

    def __len__(self) -> int:
        return int(self.command.shape[0])

    def __getitem__(self, i: int) -> Episode:
        kw = {f: getattr(self, f)[i] for f in _ARRAY_FIELDS}
        kw["command"] = int(kw["command"])
        kw["seed"] = int(kw["seed"])
        kw["trigger_offset"] = int(kw["trigger_offset"])
        return Episode(scenario=self.scenario_names[int(self.scenario_id[i])], **kw)

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx, dtype=np.int64)
        kw = {f.name: getattr(self, f.name) for f in fields(self)}
        for name in _ARRAY_FIELDS + ("scenario_id",):
            kw[name] = kw[name][idx]
        return Dataset(**kw)

    def split(self, holdout: float, seed: int = 0) -> Tuple["Dataset", "Dataset"]:
        perm = np.random.default_rng(seed).permutation(len(self))
        n_hold = int(round(holdout * len(self)))
        return self.subset(np.sort(perm[n_hold:])), self.subset(np.sort(perm[:n_hold]))

    def scenario_counts(self) -> Dict[str, int]:
        counts = np.bincount(self.scenario_id, minlength=len(self.scenario_names))
        return {n: int(c) for n, c in zip(self.scenario_names, counts)}

    @classmethod
    def from_episodes(cls, episodes: Sequence[Episode], world: WorldConfig = WorldConfig(),
                      scenario_names: Sequence[str] = tuple(SCENARIOS)) -> "Dataset":
        names = tuple(scenario_names)
        if episodes:
            stacked = {f: np.stack([np.asarray(getattr(e, f)) for e in episodes]) for f in _ARRAY_FIELDS}
        else:
            stacked = _empty_arrays(world)
        stacked["obs_bev"] = stacked["obs_bev"].astype(np.float32)
        stacked["future_front"] = stacked["future_front"].astype(np.float32)
        for f in ("gt_traj", "lanes", "lane_half_width", "agent_futures"):
            stacked[f] = stacked[f].astype(np.float64)
        for f in ("command", "seed", "trigger_offset"):
            stacked[f] = stacked[f].astype(np.int64)
        for f in ("lane_mask", "agent_mask"):
            stacked[f] = stacked[f].astype(bool)
        sid = np.array([names.index(e.scenario) for e in episodes], dtype=np.int64)
        return cls(scenario_id=sid, scenario_names=names, world=world, **stacked)


def _empty_arrays(w: WorldConfig) -> Dict[str, np.ndarray]:
    F = w.horizon
    return {
        "obs_bev": np.zeros((0, w.history + 1, w.bev_channels, w.bev_size, w.bev_size)),
        "future_front": np.zeros((0, F, w.front_size, w.front_size)),
        "gt_traj": np.zeros((0, F, 2)),
        "command": np.zeros(0),
        "lanes": np.zeros((0, w.max_lanes, w.lane_points, 2)),
        "lane_mask": np.zeros((0, w.max_lanes)),
        "lane_half_width": np.zeros((0, w.max_lanes)),
        "agent_futures": np.zeros((0, w.max_agents, F, 2)),
        "agent_mask": np.zeros((0, w.max_agents)),
        "seed": np.zeros(0),
        "trigger_offset": np.zeros(0),
    }


def parse_scenario_mix(spec: str) -> Dict[str, float]:
    """``"merge:2,emergency-brake"`` -> ``{"merge": 2.0, "emergency-brake": 1.0}``; ``"all"`` selects every scenario."""
    spec = spec.strip()
    if spec in ("", "all"):
        return {name: 1.0 for name in SCENARIOS}
    mix: Dict[str, float] = {}
    for item in spec.split(","):
        name, _, weight = item.strip().partition(":")
        get_builder(name)
        w = float(weight) if weight else 1.0
        if w < 0:
            raise ValueError(f"negative weight for {name}")
        mix[name] = mix.get(name, 0.0) + w
    return mix


def allocate_counts(mix: Mapping[str, float], total: int) -> Dict[str, int]:
    """Largest-remainder split of ``total`` episodes by weight."""
    names = list(mix)
    w = np.array([mix[n] for n in names], dtype=np.float64)
    if total == 0 or w.sum() <= 0:
        return {n: 0 for n in names}
    exact = w / w.sum() * total
    base = np.floor(exact).astype(int)
    order = np.argsort(-(exact - base), kind="stable")
    base[order[: total - base.sum()]] += 1
    return {n: int(c) for n, c in zip(names, base)}


def episode_jobs(mix: Mapping[str, float], total: int, seed: int) -> List[Tuple[int, str]]:
    counts = allocate_counts(mix, total)
    jobs = []
    for name in SCENARIOS:
        for _ in range(counts.get(name, 0)):
            jobs.append((int(seed) * 100_000 + len(jobs), name))
    return jobs


def _job(args):
    ep_seed, name, world, perturb = args
    return generate_episode(ep_seed, name, world, perturb)


def generate_dataset(mix: Mapping[str, float], total: int, seed: int, world: WorldConfig = WorldConfig(),
                     workers: int = 1, perturb: bool = True) -> Dataset:
    """Episodes for ``mix``; ``perturb`` adds pre-snapshot ego noise (recovery examples)."""
    jobs = [(s, n, world, perturb) for s, n in episode_jobs(mix, total, seed)]
    if workers > 1 and len(jobs) > 1:
        with get_context("spawn").Pool(workers) as pool:
            episodes = pool.map(_job, jobs, chunksize=8)
    else:
        episodes = [_job(j) for j in jobs]
    return Dataset.from_episodes(episodes, world)


def save_dataset(path, ds: Dataset, extra: Mapping = ()) -> None:
    arrays = {f: getattr(ds, f) for f in _ARRAY_FIELDS}
    arrays["scenario_id"] = ds.scenario_id
    manifest = {
        "kind": DATASET_KIND,
        "schema_version": DATASET_SCHEMA,
        "num_episodes": len(ds),
        "scenario_names": list(ds.scenario_names),
        "scenario_counts": ds.scenario_counts(),
        "world": ds.world.to_dict(),
        "waypoint_spacing_s": ds.world.dt,
        "meters_per_pixel": ds.world.meters_per_pixel,
        **dict(extra),
    }
    save_archive(path, arrays, manifest)


def load_dataset(path) -> Dataset:
    arrays, manifest = load_archive(path)
    if manifest.get("kind") != DATASET_KIND:
        raise ArchiveError(f"{path}: not an episode dataset (kind={manifest.get('kind')!r})")
    if manifest.get("schema_version") != DATASET_SCHEMA:
        raise ArchiveError(f"{path}: dataset schema {manifest.get('schema_version')} != {DATASET_SCHEMA}")
    world = WorldConfig.from_dict(manifest["world"])
    return Dataset(scenario_names=tuple(manifest["scenario_names"]), world=world,
                   **{k: arrays[k] for k in _ARRAY_FIELDS + ("scenario_id",)})
