"""Second decoding stage: cross-attention from ego-state queries to future-frame embeddings."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Tuple

import torch
import torch.nn as nn


def projector(in_dim: int, out_dim: int) -> nn.Sequential:
    return nn.Sequential(nn.Linear(in_dim, out_dim), nn.LayerNorm(out_dim), nn.GELU())


class FrameProjector(nn.Module):
    """Mean-pool each frame's N token rows, then linear + norm + GELU: (B, F, N, D) -> (B, F, C_r)."""

    def __init__(self, dim: int, out_dim: int):
        super().__init__()
        self.proj = projector(dim, out_dim)

    def forward(self, frames: torch.Tensor) -> torch.Tensor:
        return self.proj(frames.mean(dim=-2))


class CrossAttention(nn.Module):
    """Single-head cross-attention; also returns the attention weights."""

    def __init__(self, dim: int):
        super().__init__()
        self.q = nn.Linear(dim, dim)
        self.k = nn.Linear(dim, dim)
        self.v = nn.Linear(dim, dim)
        self.o = nn.Linear(dim, dim)

    def forward(self, x, keys, values) -> Tuple[torch.Tensor, torch.Tensor]:
        q, k, v = self.q(x), self.k(keys), self.v(values)
        w = (q @ k.transpose(-2, -1) / math.sqrt(q.shape[-1])).softmax(-1)
        return self.o(w @ v), w


class RefinerBlock(nn.Module):
    def __init__(self, dim: int, ff_mult: int = 4):
        super().__init__()
        self.ln1 = nn.LayerNorm(dim)
        self.attn = CrossAttention(dim)
        self.ln2 = nn.LayerNorm(dim)
        self.mlp = nn.Sequential(nn.Linear(dim, ff_mult * dim), nn.GELU(), nn.Linear(ff_mult * dim, dim))

    def forward(self, x, keys, values):
        a, w = self.attn(self.ln1(x), keys, values)
        x = x + a
        return x + self.mlp(self.ln2(x)), w


class TrajRefiner(nn.Module):
    def __init__(self, dim: int, layers: int = 2):
        super().__init__()
        self.blocks = nn.ModuleList(RefinerBlock(dim) for _ in range(layers))

    def forward(self, queries, keys, values) -> Tuple[torch.Tensor, List[torch.Tensor]]:
        weights = []
        x = queries
        for blk in self.blocks:
            x, w = blk(x, keys, values)
            weights.append(w)
        return x, weights


class TrajectoryHead(nn.Module):
    """Linear + norm + GELU + linear, applied per timestep: (B, F, C_r) -> (B, K, F, 2)."""

    def __init__(self, dim: int, num_modes: int, scale: float = 1.0, zero_init: bool = False):
        super().__init__()
        self.num_modes = num_modes
        self.scale = scale
        self.body = projector(dim, dim)
        self.out = nn.Linear(dim, num_modes * 2)
        if zero_init:
            nn.init.zeros_(self.out.weight)
            nn.init.zeros_(self.out.bias)

    def forward(self, x):
        b, f, _ = x.shape
        return (self.out(self.body(x)).view(b, f, self.num_modes, 2) * self.scale).permute(0, 2, 1, 3)


@dataclass
class FinalTrajectory:
    base: torch.Tensor
    offset: torch.Tensor
    tau_f: torch.Tensor


class FinalDecoder(nn.Module):
    def __init__(self, dim: int, num_modes: int, scale: float = 1.0):
        super().__init__()
        self.base = TrajectoryHead(dim, num_modes, scale)
        self.offset = TrajectoryHead(dim, num_modes, scale, zero_init=True)

    def forward(self, s_ref: torch.Tensor) -> FinalTrajectory:
        base, offset = self.base(s_ref), self.offset(s_ref)
        return FinalTrajectory(base, offset, base + offset)


class TwoStageRefinement(nn.Module):
    """Query projection, frame key/value projection, refiner blocks and base+offset heads."""

    def __init__(self, state_dim: int, dim: int, refine_dim: int, num_modes: int, layers: int = 2,
                 scale: float = 1.0):
        super().__init__()
        self.query_proj = projector(state_dim, refine_dim)
        self.key_proj = FrameProjector(dim, refine_dim)
        self.value_proj = FrameProjector(dim, refine_dim)
        self.refiner = TrajRefiner(refine_dim, layers)
        self.decoder = FinalDecoder(refine_dim, num_modes, scale)

    def forward(self, s_ego: torch.Tensor, frames: torch.Tensor):
        q = self.query_proj(s_ego)
        k, v = self.key_proj(frames), self.value_proj(frames)
        s_ref, weights = self.refiner(q, k, v)
        return self.decoder(s_ref), s_ref, weights


class OneStageFusion(nn.Module):
    """Planning embedding attends the future frames before the VAE planner (ablation variant)."""

    def __init__(self, dim: int, refine_dim: int, layers: int = 2):
        super().__init__()
        self.query_proj = projector(dim, refine_dim)
        self.key_proj = FrameProjector(dim, refine_dim)
        self.value_proj = FrameProjector(dim, refine_dim)
        self.refiner = TrajRefiner(refine_dim, layers)
        self.back = nn.Linear(refine_dim, dim)

    def forward(self, h_p: torch.Tensor, frames: torch.Tensor):
        q = self.query_proj(h_p).unsqueeze(1)
        out, weights = self.refiner(q, self.key_proj(frames), self.value_proj(frames))
        return h_p + self.back(out[:, 0]), weights
