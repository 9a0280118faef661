"""First decoding stage: Gaussian latent, GRU state decoder, coarse trajectory head."""

from __future__ import annotations

from typing import Optional, Tuple

import torch
import torch.nn as nn

GT_SCALE = 0.1  # ground-truth waypoints are fed to the distribution generator in units of 10 m


class DistributionGenerator(nn.Module):
    """Maps the planning embedding (optionally with the ground-truth trajectory) to (mu, log_std).

    Each of the F positions sees ``[H_p, waypoint_j, present_flag]``; three
    pointwise linear+ReLU layers are followed by a mean over positions and a
    final linear layer.
    """

    def __init__(self, dim: int, horizon: int, z_dim: int, hidden: Optional[int] = None):
        super().__init__()
        hidden = hidden or dim
        self.horizon = horizon
        self.z_dim = z_dim
        self.pointwise = nn.Sequential(
            nn.Linear(dim + 3, hidden), nn.ReLU(),
            nn.Linear(hidden, hidden), nn.ReLU(),
            nn.Linear(hidden, hidden), nn.ReLU(),
        )
        self.head = nn.Linear(hidden, 2 * z_dim)

    def forward(self, h_p: torch.Tensor, gt_traj: Optional[torch.Tensor] = None,
                present: Optional[torch.Tensor] = None) -> Tuple[torch.Tensor, torch.Tensor]:
        """``present`` (B,) masks which samples actually receive their ground truth."""
        b = h_p.shape[0]
        if gt_traj is None:
            wp = h_p.new_zeros(b, self.horizon, 2)
            flag = h_p.new_zeros(b, self.horizon, 1)
        else:
            m = h_p.new_ones(b) if present is None else present.to(h_p.dtype)
            wp = gt_traj.to(h_p.dtype) * GT_SCALE * m[:, None, None]
            flag = m[:, None, None].expand(b, self.horizon, 1)
        x = torch.cat([h_p.unsqueeze(1).expand(b, self.horizon, -1), wp, flag], dim=-1)
        pooled = self.pointwise(x).mean(1)
        mu, log_std = self.head(pooled).chunk(2, dim=-1)
        return mu, log_std


def sample_latent(mu: torch.Tensor, log_std: torch.Tensor, generator: Optional[torch.Generator] = None,
                  eps: Optional[torch.Tensor] = None) -> Tuple[torch.Tensor, torch.Tensor]:
    """Reparameterised draw; returns (z, eps)."""
    if eps is None:
        eps = torch.randn(mu.shape, generator=generator, dtype=mu.dtype, device=mu.device)
    return mu + log_std.exp() * eps, eps


class StateDecoder(nn.Module):
    """GRU over the latent repeated F times, MLP to width D, then concatenation with H_p."""

    def __init__(self, z_dim: int, dim: int, horizon: int, layers: int = 2):
        super().__init__()
        self.horizon = horizon
        self.gru = nn.GRU(z_dim, dim, num_layers=layers, batch_first=True)
        self.mlp = nn.Sequential(nn.Linear(dim, dim), nn.ReLU(), nn.Linear(dim, dim))

    def forward(self, z: torch.Tensor, h_p: torch.Tensor) -> torch.Tensor:
        seq = z.unsqueeze(1).expand(-1, self.horizon, -1).contiguous()
        out, _ = self.gru(seq)
        motion = self.mlp(out)
        return torch.cat([motion, h_p.unsqueeze(1).expand(-1, self.horizon, -1)], dim=-1)


class CoarseHead(nn.Module):
    """Per-timestep MLP from ego states (B, F, 2D) to K trajectories (B, K, F, 2)."""

    def __init__(self, in_dim: int, hidden: int, num_modes: int, scale: float = 1.0):
        super().__init__()
        self.num_modes = num_modes
        self.scale = scale
        self.mlp = nn.Sequential(
            nn.Linear(in_dim, hidden), nn.ReLU(),
            nn.Linear(hidden, hidden), nn.ReLU(),
            nn.Linear(hidden, num_modes * 2),
        )

    def forward(self, s_ego: torch.Tensor) -> torch.Tensor:
        b, f, _ = s_ego.shape
        out = self.mlp(s_ego).view(b, f, self.num_modes, 2) * self.scale
        return out.permute(0, 2, 1, 3)
