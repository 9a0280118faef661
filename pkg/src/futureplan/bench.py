"""Decoding-speed comparison: prefilled template vs token-by-token decoding vs planning token only."""

from __future__ import annotations

import platform
import statistics
import time
from typing import Callable, Dict

import torch

from .model import FuturePlanner
from .tokens import build_planning_template

REPORT_SCHEMA = 1

# seconds per sample for baseline / autoregressive / prefilled at full model scale
REFERENCE_SECONDS = {"baseline": 0.93, "autoregressive": 36.62, "prefilled": 2.03}


def _median_time(fn: Callable[[], object], reps: int, warmup: int = 2) -> float:
    for _ in range(warmup):
        fn()
    times = []
    for _ in range(reps):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return statistics.median(times)


def machine_info() -> Dict[str, object]:
    return {
        "platform": platform.platform(),
        "processor": platform.processor() or platform.machine(),
        "python": platform.python_version(),
        "torch": torch.__version__,
        "torch_threads": torch.get_num_threads(),
    }


@torch.no_grad()
def bench_decode(model: FuturePlanner, reps: int = 30, seed: int = 0) -> Dict[str, object]:
    """Median wall-clock of one single-sample forward for each decoding mode.

    Every mode includes encoding the context. The autoregressive loop feeds
    the template ids one at a time through the key/value cache.
    """
    if reps < 1:
        raise ValueError("reps must be >= 1")
    model.eval()
    w = model.world
    dtype = next(model.parameters()).dtype
    g = torch.Generator().manual_seed(seed)
    obs = torch.rand(1, w.history + 1, w.bev_channels, w.bev_size, w.bev_size, generator=g).to(dtype)
    cmd = torch.tensor([0])
    tmpl = model.template
    plan_tmpl = build_planning_template(model.vocab)
    bb = model.backbone

    def prefill():
        return bb.forward_prefilled(model.context(obs, cmd), tmpl)

    def autoregressive():
        return bb.forward_autoregressive(model.context(obs, cmd), model.vocab, len(tmpl.token_ids),
                                         forced_ids=tmpl.token_ids)

    def baseline():
        return bb.forward_prefilled(model.context(obs, cmd), plan_tmpl)

    pre = _median_time(prefill, reps)
    ar = _median_time(autoregressive, reps)
    base = _median_time(baseline, reps)
    ref = REFERENCE_SECONDS
    return {
        "schema_version": REPORT_SCHEMA,
        "reps": reps,
        "template_tokens": len(tmpl.token_ids),
        "d_model": model.cfg.d_model,
        "prefill_median_s": pre,
        "autoregressive_median_s": ar,
        "baseline_median_s": base,
        "ar_over_prefill": ar / pre,
        "reference_full_scale": {**ref, "ar_over_prefill": ref["autoregressive"] / ref["prefilled"]},
        "machine": machine_info(),
    }
