"""End-to-end training loop.

All randomness is derived from ``cfg.seed`` and the step counter: batch
order comes from a per-epoch permutation, ground-truth dropout and latent
noise from a per-step generator. A run resumed from a checkpoint therefore
continues exactly as the uninterrupted run would have.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional

import numpy as np
import torch

from .checkpoint import load_checkpoint, save_checkpoint
from .config import Config
from .losses import AuxHook, LossBreakdown, total_loss
from .model import FuturePlanner
from .world.dataset import Dataset

BATCH_FIELDS = ("obs_bev", "command", "gt_traj", "lanes", "lane_mask", "lane_half_width",
                "agent_futures", "agent_mask")
LOG_NAME = "train_log.jsonl"
CKPT_NAME = "model.ckpt"


class NumericalAbort(RuntimeError):
    def __init__(self, term: str, step: int, value: float):
        super().__init__(f"non-finite {term} ({value}) at step {step}")
        self.term = term
        self.step = step


class TensorData:
    """Dataset arrays as torch tensors, plus teacher targets once computed."""

    def __init__(self, ds: Dataset, dtype: torch.dtype = torch.float32):
        self.n = len(ds)
        self.tensors: Dict[str, torch.Tensor] = {}
        for name in BATCH_FIELDS + ("future_front",):
            arr = np.asarray(getattr(ds, name))
            if name == "command":
                self.tensors[name] = torch.from_numpy(arr.astype(np.int64))
            elif name in ("lane_mask", "agent_mask"):
                self.tensors[name] = torch.from_numpy(arr.astype(bool))
            else:
                self.tensors[name] = torch.from_numpy(np.ascontiguousarray(arr)).to(dtype)

    def attach_targets(self, teacher, chunk: int = 256) -> None:
        front = self.tensors["future_front"]
        parts = [teacher(front[i:i + chunk]) for i in range(0, self.n, chunk)]
        self.tensors["targets"] = torch.cat(parts) if parts else front.new_zeros(0)

    def batch(self, idx) -> Dict[str, torch.Tensor]:
        idx = torch.as_tensor(idx, dtype=torch.long)
        out = {k: v[idx] for k, v in self.tensors.items() if k != "future_front" or "targets" not in self.tensors}
        return out


def lr_at(step: int, cfg: Config) -> float:
    """Linear warmup, then cosine decay to ``min_lr`` at ``cfg.steps``."""
    if cfg.warmup_steps > 0 and step < cfg.warmup_steps:
        return cfg.lr * (step + 1) / cfg.warmup_steps
    span = max(cfg.steps - cfg.warmup_steps, 1)
    frac = min(max(step - cfg.warmup_steps, 0) / span, 1.0)
    return cfg.min_lr + 0.5 * (cfg.lr - cfg.min_lr) * (1.0 + math.cos(math.pi * frac))


class BatchSchedule:
    """Deterministic batch indices: a stream of per-epoch permutations cut into batches."""

    def __init__(self, n: int, batch_size: int, seed: int):
        if n <= 0:
            raise ValueError("cannot train on an empty dataset")
        self.n, self.bs, self.seed = n, batch_size, seed
        self._perms: Dict[int, torch.Tensor] = {}

    def _perm(self, epoch: int) -> torch.Tensor:
        if epoch not in self._perms:
            g = torch.Generator().manual_seed(self.seed * 1_000_003 + epoch)
            self._perms[epoch] = torch.randperm(self.n, generator=g)
        return self._perms[epoch]

    def indices(self, step: int) -> torch.Tensor:
        pos = range(step * self.bs, (step + 1) * self.bs)
        return torch.stack([self._perm(p // self.n)[p % self.n] for p in pos])


def step_generator(seed: int, step: int) -> torch.Generator:
    return torch.Generator().manual_seed((seed * 2_654_435_761 + step * 40_503 + 17) % (2 ** 63))


def build_model(cfg: Config, world, dtype: torch.dtype = torch.float32) -> FuturePlanner:
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(cfg.seed)
        model = FuturePlanner(cfg, world)
    return model.to(dtype)


def make_optimizer(model: FuturePlanner, cfg: Config) -> torch.optim.AdamW:
    params = [p for p in model.parameters() if p.requires_grad]
    return torch.optim.AdamW(params, lr=cfg.lr, weight_decay=cfg.weight_decay)


def check_finite(bd: LossBreakdown, step: int) -> None:
    for name, val in {**bd.terms(), "total": bd.total}.items():
        v = float(val.detach())
        if not math.isfinite(v):
            raise NumericalAbort(name, step, v)


@dataclass
class TrainResult:
    model: FuturePlanner
    optimizer: torch.optim.Optimizer
    step: int
    log: List[dict] = field(default_factory=list)
    checkpoint: Optional[Path] = None


def train(dataset: Dataset, cfg: Optional[Config], out_dir=None, resume=None, steps: Optional[int] = None,
          aux_hook: Optional[AuxHook] = None, callback: Optional[Callable[[dict], None]] = None,
          dtype: torch.dtype = torch.float32) -> TrainResult:
    """Train from scratch (or from ``resume``) up to ``steps`` (default ``cfg.steps``).

    With ``out_dir`` the per-step records are appended to ``train_log.jsonl``
    and checkpoints are written every ``cfg.checkpoint_every`` steps and at the end.
    """
    if resume is not None:
        ck = load_checkpoint(resume)
        model, start = ck.model.to(dtype), ck.step
        cfg = model.cfg if cfg is None else cfg
        opt = make_optimizer(model, cfg)
        if ck.optimizer_state is not None:
            opt.load_state_dict(ck.optimizer_state)
    else:
        model, start = build_model(cfg, dataset.world, dtype), 0
        opt = make_optimizer(model, cfg)
    end = cfg.steps if steps is None else steps
    data = TensorData(dataset, dtype)
    if cfg.uses_frames:
        data.attach_targets(model.teacher)
    sched = BatchSchedule(data.n, cfg.batch_size, cfg.seed)

    out = Path(out_dir) if out_dir is not None else None
    log_fh = None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        log_fh = open(out / LOG_NAME, "a" if resume is not None else "w")
    records: List[dict] = []
    ckpt_path = None
    model.train()
    try:
        for step in range(start, end):
            lr = lr_at(step, cfg)
            for g in opt.param_groups:
                g["lr"] = lr
            batch = data.batch(sched.indices(step))
            bd, _ = total_loss(model, batch, step_generator(cfg.seed, step), aux_hook)
            check_finite(bd, step)
            opt.zero_grad(set_to_none=True)
            bd.total.backward()
            gnorm = torch.nn.utils.clip_grad_norm_(model.parameters(), cfg.grad_clip)
            opt.step()
            rec = {"step": step + 1, "lr": lr, "grad_norm": float(gnorm), **bd.as_floats()}
            records.append(rec)
            if log_fh is not None:
                log_fh.write(json.dumps(rec) + "\n")
            if callback is not None:
                callback(rec)
            if out is not None and cfg.checkpoint_every and (step + 1) % cfg.checkpoint_every == 0 and step + 1 < end:
                save_checkpoint(out / f"model_step{step + 1}.ckpt", model, opt, step + 1)
    finally:
        if log_fh is not None:
            log_fh.close()
    if out is not None:
        ckpt_path = out / CKPT_NAME
        save_checkpoint(ckpt_path, model, opt, max(end, start))
    model.eval()
    return TrainResult(model, opt, max(end, start), records, ckpt_path)


def read_log(path) -> List[dict]:
    return [json.loads(line) for line in Path(path).read_text().splitlines() if line.strip()]
