"""Full planner: scene encoder -> causal backbone -> latent vision + two-stage trajectory decoding.

Ablation variants share this code path and differ only by config flags:

* ``m_base``: planning token only, no latent frames, coarse trajectories only.
* ``m_vis``: latent frame prediction, coarse trajectories only.
* ``m_one``: the planning embedding attends the frame embeddings before the VAE planner.
* ``full``: latent frame prediction with coarse proposals refined by cross-attention.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional

import torch
import torch.nn as nn

from .backbone import (CausalBackbone, HiddenStates, extract_frame_embeddings,
                       extract_planning_embedding)
from .config import Config
from .encoder import CommandEmbedding, SceneEncoder
from .latent_vision import LatentDecoder, TeacherEncoder
from .planner import CoarseHead, DistributionGenerator, StateDecoder, sample_latent
from .refiner import FinalTrajectory, OneStageFusion, TwoStageRefinement
from .tokens import OutputTemplate, SpecialVocab, build_output_template, build_planning_template
from .world.core import WorldConfig


@dataclass
class ModelOutput:
    states: HiddenStates
    frames: Optional[torch.Tensor]  # (B, F, N, D)
    h_p: torch.Tensor  # (B, D), as fed to the planner
    latents: Optional[torch.Tensor]  # (B, F, N, C_v)
    mu: torch.Tensor
    log_std: torch.Tensor
    z: torch.Tensor
    s_ego: torch.Tensor  # (B, F, 2D)
    tau_c: torch.Tensor  # (B, K, F, 2)
    final: Optional[FinalTrajectory]
    s_ref: Optional[torch.Tensor]
    attention: List[torch.Tensor]

    @property
    def tau_final(self) -> torch.Tensor:
        return self.final.tau_f if self.final is not None else self.tau_c


def select_command(traj: torch.Tensor, command: torch.Tensor) -> torch.Tensor:
    """(B, K, F, 2) -> (B, F, 2) trajectory of each sample's command."""
    idx = command.long().view(-1, 1, 1, 1).expand(-1, 1, *traj.shape[2:])
    return traj.gather(1, idx)[:, 0]


class FuturePlanner(nn.Module):
    def __init__(self, cfg: Config = Config(), world: WorldConfig = WorldConfig()):
        super().__init__()
        if cfg.num_frames != world.horizon:
            raise ValueError(f"num_frames ({cfg.num_frames}) must equal the world horizon ({world.horizon})")
        if cfg.num_modes != world.num_commands:
            raise ValueError(f"num_modes ({cfg.num_modes}) must equal the number of commands ({world.num_commands})")
        self.cfg = cfg
        self.world = world
        d = cfg.d_model
        self.vocab = SpecialVocab.create(cfg.num_tokens, cfg.base_vocab_size)
        if cfg.uses_frames:
            self.template: OutputTemplate = build_output_template(cfg.num_frames, cfg.num_tokens, self.vocab)
        else:
            self.template = build_planning_template(self.vocab)
        self.encoder = SceneEncoder(world.bev_channels, world.history + 1, world.bev_size, d,
                                    cfg.scene_tokens, cfg.history_tokens, cfg.encoder_channels, cfg.n_heads)
        self.command_embedding = CommandEmbedding(cfg.num_modes, d, cfg.command_tokens)
        self.backbone = CausalBackbone(self.vocab.size, d, cfg.n_layers, cfg.n_heads, cfg.ff_mult, cfg.max_seq_len)
        self.teacher = TeacherEncoder(world.front_size, cfg.num_tokens, cfg.latent_dim, cfg.teacher_seed,
                                      cfg.teacher_channels)
        self.latent_decoder = LatentDecoder(d, cfg.latent_dim) if cfg.uses_frames else None
        self.distribution = DistributionGenerator(d, cfg.num_frames, cfg.z_dim)
        self.state_decoder = StateDecoder(cfg.z_dim, d, cfg.num_frames)
        self.coarse_head = CoarseHead(2 * d, d, cfg.num_modes, cfg.traj_scale)
        self.refinement = (TwoStageRefinement(2 * d, d, cfg.refine_dim, cfg.num_modes, cfg.refine_layers,
                                              cfg.traj_scale) if cfg.uses_refiner else None)
        self.fusion = OneStageFusion(d, cfg.refine_dim, cfg.refine_layers) if cfg.variant == "m_one" else None

    def context(self, obs_bev: torch.Tensor, command: torch.Tensor) -> torch.Tensor:
        x_s, x_h = self.encoder(obs_bev)
        x_q = self.command_embedding(command).to(x_s.dtype)
        return torch.cat([x_q, x_s, x_h], dim=1)

    def forward(self, obs_bev: torch.Tensor, command: torch.Tensor, gt_traj: Optional[torch.Tensor] = None,
                gt_present: Optional[torch.Tensor] = None, generator: Optional[torch.Generator] = None,
                eps: Optional[torch.Tensor] = None) -> ModelOutput:
        """Training mode when ``gt_traj`` is given (ground-truth conditioned, sampled latent);
        otherwise inference mode with ``z = mu`` unless ``cfg.sample_latent``."""
        ctx = self.context(obs_bev, command)
        states = self.backbone.forward_prefilled(ctx, self.template)
        return self.decode(states, gt_traj, gt_present, generator, eps)

    def decode(self, states: HiddenStates, gt_traj=None, gt_present=None, generator=None, eps=None) -> ModelOutput:
        cfg = self.cfg
        h_p = extract_planning_embedding(states, self.template)
        frames = latents = None
        attention: List[torch.Tensor] = []
        if cfg.uses_frames:
            frames = extract_frame_embeddings(states, self.template)
            latents = self.latent_decoder(frames)
        frames_for_plan = frames.detach() if (frames is not None and cfg.detach_frames) else frames
        if self.fusion is not None:
            h_p, attention = self.fusion(h_p, frames_for_plan)
        mu, log_std = self.distribution(h_p, gt_traj, gt_present)
        if gt_traj is not None or cfg.sample_latent:
            z, _ = sample_latent(mu, log_std, generator, eps)
        else:
            z = mu
        s_ego = self.state_decoder(z, h_p)
        tau_c = self.coarse_head(s_ego)
        final = s_ref = None
        if self.refinement is not None:
            final, s_ref, attention = self.refinement(s_ego, frames_for_plan)
        return ModelOutput(states, frames, h_p, latents, mu, log_std, z, s_ego, tau_c, final, s_ref, attention)

    @torch.no_grad()
    def plan(self, obs_bev: torch.Tensor, command: torch.Tensor) -> torch.Tensor:
        """Inference: command-selected final trajectory (B, F, 2)."""
        out = self.forward(obs_bev, command)
        return select_command(out.tau_final, torch.as_tensor(command))

    def metadata(self) -> dict:
        return {
            "vocab": self.vocab.to_dict(),
            "template": self.template.to_dict(),
            "teacher_seed": self.teacher.seed,
            "teacher_hash": self.teacher.architecture_hash(),
        }
