"""Frozen teacher targets, the linear latent decoder and the vision loss."""

from __future__ import annotations

import hashlib
import math
from typing import Dict, Tuple

import torch
import torch.nn as nn
import torch.nn.functional as F

NORM_EPS = 1e-8  # norm floor in the cosine term
LN_EPS = 1e-10


def token_grid(num_tokens: int) -> Tuple[int, int]:
    """Most square (rows, cols) factorisation of ``num_tokens``."""
    rows = max(r for r in range(1, int(math.isqrt(num_tokens)) + 1) if num_tokens % r == 0)
    return rows, num_tokens // rows


class TeacherEncoder(nn.Module):
    """Frozen, randomly initialised 2-layer conv encoder with per-token layer norm.

    Weights are drawn from a dedicated generator seeded with ``seed`` and held
    as buffers, so no optimiser ever sees them.
    """

    def __init__(self, raster_size: int, num_tokens: int, latent_dim: int, seed: int = 1234, channels: int = 16):
        super().__init__()
        self.raster_size = raster_size
        self.num_tokens = num_tokens
        self.latent_dim = latent_dim
        self.seed = int(seed)
        self.channels = channels
        g = torch.Generator().manual_seed(self.seed)
        self.register_buffer("w1", torch.randn(channels, 1, 4, 4, generator=g) / 4.0)
        self.register_buffer("b1", torch.randn(channels, generator=g) * 0.1)
        self.register_buffer("w2", torch.randn(latent_dim, channels, 4, 4, generator=g) / math.sqrt(16 * channels))
        self.register_buffer("b2", torch.randn(latent_dim, generator=g) * 0.1)
        self.grid = token_grid(num_tokens)

    def architecture_hash(self) -> str:
        desc = f"teacher-v1:conv4s2({self.channels})-gelu-conv4s2({self.latent_dim})-pool{self.grid}-ln:{self.raster_size}"
        h = hashlib.sha256(desc.encode())
        for name in ("w1", "b1", "w2", "b2"):
            h.update(getattr(self, name).detach().to(torch.float64).cpu().numpy().tobytes())
        return h.hexdigest()[:16]

    @torch.no_grad()
    def forward(self, front: torch.Tensor) -> torch.Tensor:
        """(..., H, W) rasters -> (..., N, C_v) layer-normalised latents."""
        if front.shape[-2:] != (self.raster_size, self.raster_size):
            raise ValueError(f"teacher expects {self.raster_size}x{self.raster_size} rasters, got {tuple(front.shape[-2:])}")
        lead = front.shape[:-2]
        x = front.reshape(-1, 1, *front.shape[-2:]).to(self.w1.dtype)
        x = F.gelu(F.conv2d(x, self.w1, self.b1, stride=2, padding=1))
        x = F.conv2d(x, self.w2, self.b2, stride=2, padding=1)
        x = F.adaptive_avg_pool2d(x, self.grid)  # (M, C_v, r, c)
        x = x.flatten(2).transpose(1, 2)  # (M, N, C_v)
        x = F.layer_norm(x, (self.latent_dim,), eps=LN_EPS)
        return x.reshape(*lead, self.num_tokens, self.latent_dim)


class LatentDecoder(nn.Module):
    """Single linear map from backbone width to latent width, no activation."""

    def __init__(self, dim: int, latent_dim: int):
        super().__init__()
        self.proj = nn.Linear(dim, latent_dim)

    def forward(self, frames: torch.Tensor) -> torch.Tensor:
        return self.proj(frames)


def vision_loss(pred: torch.Tensor, target: torch.Tensor, w_cos: float = 1.0, w_reg: float = 1.0
                ) -> Tuple[torch.Tensor, Dict[str, torch.Tensor]]:
    """Weighted cosine + L1 loss over (..., F, N, C_v) latents.

    The cosine term is ``1 - cos`` averaged over every (frame, token) row;
    the L1 term is the mean absolute elementwise error.
    """
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch {tuple(pred.shape)} vs {tuple(target.shape)}")
    dot = (pred * target).sum(-1)
    denom = pred.norm(dim=-1).clamp_min(NORM_EPS) * target.norm(dim=-1).clamp_min(NORM_EPS)
    cos_rows = (1.0 - dot / denom).clamp(0.0, 2.0)  # (..., F, N); clamp removes rounding below 0
    abs_err = (pred - target).abs()
    l_cos = cos_rows.mean()
    l_reg = abs_err.mean()
    per_frame_cos = cos_rows.mean(-1)
    per_frame_reg = abs_err.mean(-1).mean(-1)
    while per_frame_cos.dim() > 1:
        per_frame_cos = per_frame_cos.mean(0)
        per_frame_reg = per_frame_reg.mean(0)
    total = w_cos * l_cos + w_reg * l_reg
    return total, {"cosine": l_cos, "reg": l_reg, "per_frame_cosine": per_frame_cos, "per_frame_reg": per_frame_reg}
