"""Checkpoints: model parameters, optimiser state and rebuild metadata in one archive."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np
import torch

from . import __version__
from .archive import ArchiveError, load_archive, save_archive
from .config import Config
from .model import FuturePlanner
from .tokens import OutputTemplate, SpecialVocab
from .world.core import WorldConfig

CHECKPOINT_KIND = "checkpoint"
CHECKPOINT_SCHEMA = 1


class CheckpointError(ArchiveError):
    pass


@dataclass
class Checkpoint:
    model: FuturePlanner
    optimizer_state: Optional[dict]
    step: int
    meta: dict


def _np(t: torch.Tensor) -> np.ndarray:
    return t.detach().cpu().contiguous().numpy().copy()


def save_checkpoint(path, model: FuturePlanner, optimizer: Optional[torch.optim.Optimizer] = None,
                    step: int = 0, extra: Optional[dict] = None) -> None:
    arrays = {f"param/{k}": _np(v) for k, v in model.state_dict().items()}
    groups = None
    if optimizer is not None:
        sd = optimizer.state_dict()
        for idx, st in sd["state"].items():
            for key, val in st.items():
                arrays[f"optim/{idx}/{key}"] = _np(torch.as_tensor(val))
        groups = [{k: (list(v) if isinstance(v, tuple) else v) for k, v in g.items()} for g in sd["param_groups"]]
    meta = {
        "kind": CHECKPOINT_KIND,
        "schema_version": CHECKPOINT_SCHEMA,
        "code_version": __version__,
        "config": model.cfg.to_dict(),
        "world": model.world.to_dict(),
        **model.metadata(),
        "step": int(step),
        "rng": {"seed": model.cfg.seed, "step": int(step)},
        "optimizer_param_groups": groups,
        "extra": dict(extra or {}),
    }
    save_archive(path, arrays, meta)


def read_checkpoint_meta(path) -> dict:
    _, meta = _load(path)
    return meta


def _load(path):
    arrays, meta = load_archive(path)
    if meta.get("kind") != CHECKPOINT_KIND:
        raise CheckpointError(f"{path}: not a checkpoint (kind={meta.get('kind')!r})")
    if meta.get("schema_version") != CHECKPOINT_SCHEMA:
        raise CheckpointError(f"{path}: checkpoint schema {meta.get('schema_version')} "
                              f"(written by version {meta.get('code_version')}) is not supported by "
                              f"version {__version__}, which reads schema {CHECKPOINT_SCHEMA}")
    return arrays, meta


def load_checkpoint(path) -> Checkpoint:
    """Rebuild the model from the stored metadata and restore every array bit-exactly."""
    arrays, meta = _load(path)
    try:
        cfg = Config.from_dict(meta["config"])
        world = WorldConfig.from_dict(meta["world"])
    except (KeyError, TypeError, ValueError) as exc:
        raise CheckpointError(f"{path}: invalid config in checkpoint ({exc})") from exc
    model = FuturePlanner(cfg, world)
    if SpecialVocab.from_dict(meta["vocab"]) != model.vocab:
        raise CheckpointError(f"{path}: special-token ids differ from the rebuilt model")
    if OutputTemplate.from_dict(meta["template"]).token_ids != model.template.token_ids:
        raise CheckpointError(f"{path}: template layout differs from the rebuilt model")
    if meta["teacher_hash"] != model.teacher.architecture_hash():
        raise CheckpointError(f"{path}: teacher encoder hash mismatch")
    params = {k[len("param/"):]: v for k, v in arrays.items() if k.startswith("param/")}
    expected = model.state_dict()
    if set(params) != set(expected):
        missing = sorted(set(expected) ^ set(params))
        raise CheckpointError(f"{path}: parameter names differ from the rebuilt model: {missing[:5]}")
    if any(v.dtype == np.float64 for v in params.values()):
        model = model.double()
    model.load_state_dict({k: torch.from_numpy(v.copy()) for k, v in params.items()})

    opt_state = None
    if meta.get("optimizer_param_groups") is not None:
        state: dict = {}
        for name, val in arrays.items():
            if name.startswith("optim/"):
                _, idx, key = name.split("/", 2)
                state.setdefault(int(idx), {})[key] = torch.from_numpy(val.copy())
        groups = [{k: (tuple(v) if k == "betas" else v) for k, v in g.items()}
                  for g in meta["optimizer_param_groups"]]
        opt_state = {"state": state, "param_groups": groups}
    return Checkpoint(model, opt_state, int(meta["step"]), meta)


def same_parameters(a: FuturePlanner, b: FuturePlanner) -> bool:
    sa, sb = a.state_dict(), b.state_dict()
    return set(sa) == set(sb) and all(
        sa[k].dtype == sb[k].dtype and sa[k].shape == sb[k].shape and torch.equal(sa[k], sb[k]) for k in sa)
