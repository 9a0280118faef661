"""Variant x seed grid: train, evaluate open and closed loop, and tabulate."""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .config import VARIANTS, Config
from .evaluation import evaluate_closed_loop, evaluate_open_loop
from .model import FuturePlanner
from .training import train
from .world.dataset import Dataset

CLOSED_LOOP_SEED_BASE = 900_000  # keeps closed-loop scenes disjoint from training episode seeds


def closed_loop_seeds(n: int, offset: int = 0) -> List[int]:
    return [CLOSED_LOOP_SEED_BASE + offset + i for i in range(n)]


def variant_metrics(model: FuturePlanner, holdout: Dataset,
                    jobs: Sequence[Tuple[str, int]] = ()) -> Dict[str, float]:
    ol = evaluate_open_loop(model, holdout)
    m = {
        "ade_coarse": ol["coarse"]["ade"], "fde_coarse": ol["coarse"]["fde"],
        "ade_final": ol["final"]["ade"], "fde_final": ol["final"]["fde"],
    }
    if jobs:
        cl = evaluate_closed_loop(model, jobs)
        m.update({k: cl[k] for k in ("success_rate", "collision_rate", "route_completion", "driving_score")})
    return m


def run_ablation(train_set: Dataset, holdout: Dataset, base: Config = Config(), variants: Iterable[str] = VARIANTS,
                 seeds: Sequence[int] = (0, 1, 2, 3, 4), jobs: Sequence[Tuple[str, int]] = (),
                 steps: Optional[int] = None, out_csv=None) -> List[dict]:
    """Rows ``{variant, seed, metric, value}`` plus ``mean``/``std`` rows per variant and metric.

    Variants differ only in ``Config.variant``; everything else is shared.
    ``jobs`` lists closed-loop (scenario, seed) runs; empty skips closed loop.
    """
    rows: List[dict] = []
    for variant in variants:
        if variant not in VARIANTS:
            raise ValueError(f"unknown variant {variant!r}")
        for seed in seeds:
            cfg = base.replace(variant=variant, seed=int(seed))
            model = train(train_set, cfg, steps=steps).model
            m = variant_metrics(model, holdout, jobs)
            rows.extend({"variant": variant, "seed": str(seed), "metric": k, "value": v} for k, v in m.items())
    rows.extend(summarize(rows))
    if out_csv is not None:
        write_table(out_csv, rows)
    return rows


def summarize(rows: List[dict]) -> List[dict]:
    groups: Dict[tuple, List[float]] = {}
    for r in rows:
        if r["seed"] not in ("mean", "std"):
            groups.setdefault((r["variant"], r["metric"]), []).append(float(r["value"]))
    out = []
    for (variant, metric), vals in groups.items():
        out.append({"variant": variant, "seed": "mean", "metric": metric, "value": float(np.mean(vals))})
        out.append({"variant": variant, "seed": "std", "metric": metric, "value": float(np.std(vals))})
    return out


def write_table(path, rows: List[dict]) -> None:
    with open(Path(path), "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=["variant", "seed", "metric", "value"])
        w.writeheader()
        for r in rows:
            w.writerow({**r, "value": repr(float(r["value"]))})


def read_table(path) -> List[dict]:
    with open(Path(path), newline="") as fh:
        return [{**r, "value": float(r["value"])} for r in csv.DictReader(fh)]
