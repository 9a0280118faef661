"""Open-loop metrics, template-emission checks and a closed-loop policy wrapper."""

from __future__ import annotations

from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import torch

from .model import FuturePlanner, select_command
from .training import TensorData
from .world.closed_loop import Observation, closed_loop_run
from .world.core import WorldConfig
from .world.dataset import Dataset, allocate_counts


def open_loop_errors(pred: np.ndarray, gt: np.ndarray) -> Dict[str, object]:
    """L2 error per horizon (mean over episodes), their mean (avg L2 / ADE) and the final-step error."""
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape:
        raise ValueError(f"shape mismatch {pred.shape} vs {gt.shape}")
    if pred.shape[0] == 0:
        nan = float("nan")
        return {"l2": [nan] * pred.shape[1], "avg_l2": nan, "ade": nan, "fde": nan}
    err = np.linalg.norm(pred - gt, axis=-1)  # (E, F)
    per_h = err.mean(0)
    return {"l2": per_h.tolist(), "avg_l2": float(per_h.mean()), "ade": float(err.mean()), "fde": float(per_h[-1])}


@torch.no_grad()
def predict(model: FuturePlanner, ds: Dataset, batch_size: int = 256):
    """Inference-mode (z = mu) command-selected (coarse, final) trajectories, each (E, F, 2)."""
    was_training = model.training
    model.eval()
    dtype = next(model.parameters()).dtype
    data = TensorData(ds, dtype)
    coarse, final = [], []
    for i in range(0, data.n, batch_size):
        b = data.batch(torch.arange(i, min(i + batch_size, data.n)))
        out = model(b["obs_bev"], b["command"])
        coarse.append(select_command(out.tau_c, b["command"]).double().numpy())
        final.append(select_command(out.tau_final, b["command"]).double().numpy())
    model.train(was_training)
    shape = (0, model.cfg.num_frames, 2)
    return (np.concatenate(coarse) if coarse else np.zeros(shape),
            np.concatenate(final) if final else np.zeros(shape))


def evaluate_open_loop(model: FuturePlanner, ds: Dataset, batch_size: int = 256) -> Dict[str, object]:
    coarse, final = predict(model, ds, batch_size)
    return {
        "episodes": len(ds),
        "variant": model.cfg.variant,
        "coarse": open_loop_errors(coarse, ds.gt_traj),
        "final": open_loop_errors(final, ds.gt_traj),
    }


@torch.no_grad()
def template_emission_rate(model: FuturePlanner, ds: Dataset, batch_size: int = 64) -> float:
    """Fraction of episodes for which greedy decoding emits exactly the template."""
    if len(ds) == 0:
        return float("nan")
    model.eval()
    dtype = next(model.parameters()).dtype
    data = TensorData(ds, dtype)
    ids = torch.as_tensor(model.template.token_ids)
    hits = 0
    for i in range(0, data.n, batch_size):
        b = data.batch(torch.arange(i, min(i + batch_size, data.n)))
        ctx = model.context(b["obs_bev"], b["command"])
        res = model.backbone.forward_autoregressive(ctx, model.vocab, len(ids))
        gen = res.token_ids
        if gen.shape[1] < len(ids):
            gen = torch.cat([gen, gen.new_full((gen.shape[0], len(ids) - gen.shape[1]), -1)], 1)
        hits += int((gen == ids).all(1).sum())
    return hits / data.n


def model_policy(model: FuturePlanner):
    """Closed-loop policy returning the command-selected final trajectory."""
    model.eval()
    dtype = next(model.parameters()).dtype

    def policy(obs: Observation) -> np.ndarray:
        bev = torch.from_numpy(np.asarray(obs.obs_bev)).to(dtype).unsqueeze(0)
        cmd = torch.tensor([int(obs.command)])
        return model.plan(bev, cmd)[0].double().numpy()

    return policy


def suite_jobs(scenarios: Sequence[str], seeds: Sequence[int]) -> List[Tuple[str, int]]:
    return [(sc, int(seed)) for sc in scenarios for seed in seeds]


def mix_jobs(mix: Mapping[str, float], total: int, seed_base: int) -> List[Tuple[str, int]]:
    """Closed-loop (scenario, seed) pairs with scenario counts proportional to ``mix``."""
    counts = allocate_counts(mix, total)
    return [(sc, seed_base + i) for sc, n in counts.items() for i in range(n)]


def evaluate_closed_loop(model: Optional[FuturePlanner], jobs: Sequence[Tuple[str, int]], max_steps: int = 40,
                         policy=None, world: Optional[WorldConfig] = None) -> Dict[str, object]:
    """Run every (scenario, seed) job with the model (or an explicit ``policy``) and aggregate."""
    pol = policy if policy is not None else model_policy(model)
    world = world or (model.world if model is not None else WorldConfig())
    rows = []
    for sc, seed in jobs:
        m = closed_loop_run(pol, sc, seed, max_steps, world)
        rows.append({"scenario": sc, "seed": int(seed), **m.to_dict()})
    per_scenario = {sc: summarize_runs([r for r in rows if r["scenario"] == sc])
                    for sc in dict.fromkeys(r["scenario"] for r in rows)}
    return {"runs": rows, **summarize_runs(rows), "per_scenario": per_scenario}


def summarize_runs(rows: List[dict]) -> Dict[str, float]:
    if not rows:
        return {"success_rate": float("nan"), "collision_rate": float("nan"),
                "route_completion": float("nan"), "driving_score": float("nan")}
    return {
        "success_rate": float(np.mean([r["success"] for r in rows])),
        "collision_rate": float(np.mean([r["collided"] for r in rows])),
        "route_completion": float(np.mean([r["route_completion"] for r in rows])),
        "driving_score": float(np.mean([r["toy_driving_score"] for r in rows])),
    }
