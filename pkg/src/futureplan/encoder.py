"""Scene encoder: BEV rasters -> scene/history tokens, command -> prompt tokens."""

from __future__ import annotations

from typing import Tuple

import torch
import torch.nn as nn


def _conv_out(size: int, n: int = 3) -> int:
    for _ in range(n):
        size = (size + 2 - 3) // 2 + 1
    return size


class QueryPool(nn.Module):
    """Learned queries cross-attending a feature set, followed by a residual MLP.

    Queries start at unit scale so the initial attention is already spread
    unevenly across the grid; near-zero queries pool every token to the same
    grid average, and training then sits on a plateau before it discovers
    position-dependent cues such as the ego's offset from the route.
    """

    def __init__(self, num_queries: int, dim: int, heads: int):
        super().__init__()
        self.queries = nn.Parameter(torch.randn(num_queries, dim))
        self.norm_kv = nn.LayerNorm(dim)
        self.attn = nn.MultiheadAttention(dim, heads, batch_first=True)
        self.norm = nn.LayerNorm(dim)
        self.mlp = nn.Sequential(nn.Linear(dim, 2 * dim), nn.GELU(), nn.Linear(2 * dim, dim))

    def forward(self, feats: torch.Tensor) -> torch.Tensor:
        q = self.queries.unsqueeze(0).expand(feats.shape[0], -1, -1)
        kv = self.norm_kv(feats)
        x = q + self.attn(q, kv, kv, need_weights=False)[0]
        return x + self.mlp(self.norm(x))


class SceneEncoder(nn.Module):
    def __init__(self, in_channels: int, frames: int, raster_size: int, dim: int,
                 scene_tokens: int = 8, history_tokens: int = 4, channels: int = 32, heads: int = 4):
        super().__init__()
        self.in_channels = in_channels
        self.frames = frames
        self.raster_size = raster_size
        self.stem = nn.Sequential(
            nn.Conv2d(in_channels, channels // 2, 3, stride=2, padding=1), nn.GELU(),
            nn.Conv2d(channels // 2, channels, 3, stride=2, padding=1), nn.GELU(),
            nn.Conv2d(channels, channels, 3, stride=2, padding=1), nn.GELU(),
        )
        grid = _conv_out(raster_size)
        self.to_tokens = nn.Linear(channels, dim)
        self.pos = nn.Parameter(torch.randn(grid * grid, dim))  # unit scale, see QueryPool
        self.frame_emb = nn.Parameter(torch.randn(frames, dim) * 0.02)
        self.scene_pool = QueryPool(scene_tokens, dim, heads)
        self.history_pool = QueryPool(history_tokens, dim, heads) if frames > 1 else None
        self.history_tokens = history_tokens

    def forward(self, obs_bev: torch.Tensor) -> Tuple[torch.Tensor, torch.Tensor]:
        """(B, T, C, H, W) -> x_s (B, M_s, D), x_h (B, M_h, D)."""
        if obs_bev.dim() != 5 or tuple(obs_bev.shape[1:3]) != (self.frames, self.in_channels) \
                or obs_bev.shape[-1] != self.raster_size or obs_bev.shape[-2] != self.raster_size:
            raise ValueError(
                f"expected BEV of shape (B, {self.frames}, {self.in_channels}, {self.raster_size}, "
                f"{self.raster_size}), got {tuple(obs_bev.shape)}")
        b, t = obs_bev.shape[:2]
        f = self.stem(obs_bev.flatten(0, 1))  # (B*T, C, g, g)
        f = self.to_tokens(f.flatten(2).transpose(1, 2)) + self.pos
        f = f.view(b, t, -1, f.shape[-1]) + self.frame_emb[None, :, None, :]
        x_s = self.scene_pool(f[:, 0])
        if self.history_pool is None:
            x_h = x_s.new_zeros(b, self.history_tokens, x_s.shape[-1])
        else:
            x_h = self.history_pool(f[:, 1:].flatten(1, 2))
        return x_s, x_h


class CommandEmbedding(nn.Module):
    def __init__(self, num_commands: int, dim: int, tokens: int = 1):
        super().__init__()
        self.num_commands = num_commands
        self.tokens = tokens
        self.table = nn.Embedding(num_commands, tokens * dim)

    def forward(self, command: torch.Tensor) -> torch.Tensor:
        command = torch.as_tensor(command, dtype=torch.long, device=self.table.weight.device)
        if command.numel() and (int(command.min()) < 0 or int(command.max()) >= self.num_commands):
            raise ValueError(f"command ids must lie in [0, {self.num_commands}), got {command.tolist()}")
        out = self.table(command)
        return out.view(*command.shape, self.tokens, -1)
