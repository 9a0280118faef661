"""Training objective: vision, planning (coarse and refined), template cross-entropy and an auxiliary hook.

There is deliberately no KL term on the latent distribution.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Dict, Mapping, Optional, Tuple

import torch
import torch.nn.functional as F

from .backbone import template_logits
from .config import Config
from .latent_vision import vision_loss
from .model import FuturePlanner, ModelOutput, select_command
from .tokens import OutputTemplate

DIST_EPS = 1e-12  # inside square roots, keeps gradients finite at zero distance

AuxHook = Callable[[FuturePlanner, Mapping[str, torch.Tensor], ModelOutput], torch.Tensor]


@dataclass(frozen=True)
class PlanLossConfig:
    margin_bd: float = 0.2
    margin_col: float = 1.0
    w_mse: float = 1.0
    w_bd: float = 0.1
    w_col: float = 0.1

    def __post_init__(self):
        for k, v in vars(self).items():
            if v < 0:
                raise ValueError(f"{k} must be non-negative, got {v}")

    @classmethod
    def from_config(cls, cfg: Config) -> "PlanLossConfig":
        return cls(cfg.margin_bd, cfg.margin_col, cfg.w_mse, cfg.w_bd, cfg.w_col)


def lane_signed_distance(points: torch.Tensor, lanes: torch.Tensor, lane_mask: torch.Tensor,
                         half_width: torch.Tensor) -> torch.Tensor:
    """Signed distance of (B, M, 2) points to the union of lane tubes, positive inside.

    ``lanes`` is (B, L, P, 2) centrelines; masked lanes are ignored. Samples
    without any lane get a large negative distance.
    """
    a = lanes[:, :, :-1]  # (B, L, S, 2)
    ab = lanes[:, :, 1:] - a
    p = points[:, :, None, None, :]  # (B, M, 1, 1, 2)
    ap = p - a[:, None]
    denom = (ab * ab).sum(-1).clamp_min(1e-12)[:, None]
    t = ((ap * ab[:, None]).sum(-1) / denom).clamp(0.0, 1.0)
    diff = ap - t[..., None] * ab[:, None]
    d = torch.sqrt((diff * diff).sum(-1) + DIST_EPS)  # (B, M, L, S)
    sd = half_width[:, None, :, None].to(d.dtype) - d
    sd = sd.masked_fill(~lane_mask.bool()[:, None, :, None], -1e6)
    return sd.flatten(2).max(-1).values


def plan_loss(traj_set: torch.Tensor, gt_traj: torch.Tensor, command: torch.Tensor, lanes: torch.Tensor,
              lane_mask: torch.Tensor, lane_half_width: torch.Tensor, agent_futures: torch.Tensor,
              agent_mask: torch.Tensor, cfg: PlanLossConfig = PlanLossConfig()
              ) -> Tuple[torch.Tensor, Dict[str, torch.Tensor]]:
    """Regression + boundary + collision loss on each sample's command-selected trajectory.

    ``traj_set`` is (B, K, F, 2). Terms are averaged per sample and then over
    the batch; the other K-1 trajectories receive no gradient.
    """
    command = torch.as_tensor(command, device=traj_set.device).long().view(-1)
    k = traj_set.shape[1]
    if bool(((command < 0) | (command >= k)).any()):
        raise ValueError(f"command out of range [0, {k})")
    tau = select_command(traj_set, command)  # (B, F, 2)
    gt = gt_traj.to(tau.dtype)
    mse = ((tau - gt) ** 2).sum(-1).mean(-1)

    sd = lane_signed_distance(tau, lanes.to(tau.dtype), lane_mask, lane_half_width)
    bd = F.relu(cfg.margin_bd - sd).mean(-1)

    diff = tau[:, None] - agent_futures.to(tau.dtype)  # (B, A, F, 2)
    dist = torch.sqrt((diff * diff).sum(-1) + DIST_EPS)
    m = agent_mask.to(tau.dtype)
    hinge = F.relu(cfg.margin_col - dist) * m[..., None]
    col = hinge.sum((1, 2)) / (m.sum(-1).clamp_min(1.0) * tau.shape[1])

    parts = {"mse": mse.mean(), "bd": bd.mean(), "col": col.mean()}
    total = cfg.w_mse * parts["mse"] + cfg.w_bd * parts["bd"] + cfg.w_col * parts["col"]
    return total, parts


def ce_loss(logits: torch.Tensor, template: OutputTemplate) -> torch.Tensor:
    """Mean teacher-forced cross-entropy of the template ids; ``logits`` is (B, T, V)."""
    ids = torch.as_tensor(template.token_ids, dtype=torch.long, device=logits.device)
    if logits.shape[-2] != len(ids):
        raise ValueError(f"expected logits for {len(ids)} template positions, got {logits.shape[-2]}")
    return F.cross_entropy(logits.reshape(-1, logits.shape[-1]), ids.repeat(logits.shape[0]))


@dataclass
class LossBreakdown:
    """Absent terms (variant without latent frames or without refinement) are ``None``."""

    l_vis: Optional[torch.Tensor]
    l_plan: torch.Tensor
    l_plan_r: Optional[torch.Tensor]
    l_ce: torch.Tensor
    l_aux: torch.Tensor
    total: torch.Tensor
    details: Dict[str, torch.Tensor]

    def terms(self) -> Dict[str, torch.Tensor]:
        names = ("l_vis", "l_plan", "l_plan_r", "l_ce", "l_aux")
        return {n: getattr(self, n) for n in names if getattr(self, n) is not None}

    def as_floats(self) -> Dict[str, float]:
        out = {k: float(v.detach()) for k, v in self.terms().items()}
        out["total"] = float(self.total.detach())
        for k, v in self.details.items():
            if v.dim() == 0:
                out[k] = float(v.detach())
        return out


def zero_aux(model, batch, out) -> torch.Tensor:
    return out.h_p.new_zeros(())


def total_loss(model: FuturePlanner, batch: Mapping[str, torch.Tensor], generator: Optional[torch.Generator] = None,
               aux_hook: Optional[AuxHook] = None) -> Tuple[LossBreakdown, ModelOutput]:
    """Training-mode forward pass and the summed objective.

    ``batch`` holds ``obs_bev, command, gt_traj, lanes, lane_mask,
    lane_half_width, agent_futures, agent_mask`` and either precomputed
    teacher ``targets`` (B, F, N, C_v) or the ``future_front`` rasters.
    Ground-truth dropout for the distribution generator and the latent noise
    are both drawn from ``generator``.
    """
    cfg = model.cfg
    obs = batch["obs_bev"]
    b = obs.shape[0]
    present = torch.rand(b, generator=generator) >= cfg.dis_gt_dropout
    out = model(obs, batch["command"], gt_traj=batch["gt_traj"], gt_present=present, generator=generator)
    plan_cfg = PlanLossConfig.from_config(cfg)
    geo = (batch["gt_traj"], batch["command"], batch["lanes"], batch["lane_mask"], batch["lane_half_width"],
           batch["agent_futures"], batch["agent_mask"])
    details: Dict[str, torch.Tensor] = {}

    l_vis = None
    if cfg.uses_frames:
        targets = batch.get("targets")
        if targets is None:
            targets = model.teacher(batch["future_front"])
        l_vis, vparts = vision_loss(out.latents, targets.to(out.latents.dtype), cfg.w_cos, cfg.w_reg)
        details.update({f"vis_{k}": v for k, v in vparts.items()})

    l_plan, pparts = plan_loss(out.tau_c, *geo, plan_cfg)
    details.update({f"plan_{k}": v for k, v in pparts.items()})
    l_plan_r = None
    if out.final is not None:
        l_plan_r, rparts = plan_loss(out.final.tau_f, *geo, plan_cfg)
        details.update({f"plan_r_{k}": v for k, v in rparts.items()})

    l_ce = ce_loss(template_logits(out.states, model.template), model.template)
    l_aux = (aux_hook or zero_aux)(model, batch, out)

    total = l_plan + l_ce + l_aux
    if l_vis is not None:
        total = total + l_vis
    if l_plan_r is not None:
        total = total + l_plan_r
    return LossBreakdown(l_vis, l_plan, l_plan_r, l_ce, l_aux, total, details), out
