"""Flat ``key = value`` configuration.

Config files hold one assignment per line; ``#`` starts a comment. Every key
is a field of :class:`Config`; unknown keys are rejected so typos fail loudly.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

VARIANTS = ("full", "m_base", "m_vis", "m_one")


@dataclass(frozen=True)
class Config:
    # backbone
    d_model: int = 128
    n_layers: int = 4
    n_heads: int = 4
    ff_mult: int = 4
    max_seq_len: int = 256
    base_vocab_size: int = 8
    # template
    num_frames: int = 6  # F
    num_tokens: int = 16  # N placeholders per frame
    # scene encoder
    scene_tokens: int = 8  # M_s
    history_tokens: int = 4  # M_h
    command_tokens: int = 1  # M_q
    encoder_channels: int = 32
    # latent vision
    latent_dim: int = 32  # C_v
    teacher_seed: int = 1234
    teacher_channels: int = 16
    # planner / refiner
    num_modes: int = 6  # K, one trajectory per command
    z_dim: int = 8  # C_z
    refine_dim: int = 64  # C_r
    refine_layers: int = 2
    traj_scale: float = 5.0  # head outputs are multiplied by this [m]
    # variant and flags
    variant: str = "full"
    detach_frames: bool = False
    dis_gt_dropout: float = 0.5  # fraction of training samples whose distribution generator sees no ground truth
    sample_latent: bool = False  # inference uses z = mu unless set
    # loss weights and margins
    w_cos: float = 1.0
    w_reg: float = 1.0
    w_mse: float = 1.0
    w_bd: float = 0.1
    w_col: float = 0.1
    margin_bd: float = 0.2  # [m]
    margin_col: float = 1.0  # [m]
    # optimisation
    seed: int = 0
    steps: int = 1500
    batch_size: int = 32
    lr: float = 1e-3
    min_lr: float = 5e-5
    warmup_steps: int = 100
    weight_decay: float = 0.01
    grad_clip: float = 1.0
    checkpoint_every: int = 0  # 0 writes only the final checkpoint
    holdout: float = 0.1

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if self.d_model % self.n_heads:
            raise ValueError("d_model must be divisible by n_heads")
        for name in ("w_cos", "w_reg", "w_mse", "w_bd", "w_col", "margin_bd", "margin_col"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if not 0.0 <= self.dis_gt_dropout <= 1.0:
            raise ValueError("dis_gt_dropout must be in [0, 1]")

    @property
    def uses_frames(self) -> bool:
        return self.variant != "m_base"

    @property
    def uses_refiner(self) -> bool:
        return self.variant == "full"

    @property
    def context_len(self) -> int:
        return self.command_tokens + self.scene_tokens + self.history_tokens

    def replace(self, **kw) -> "Config":
        return replace(self, **kw)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "Config":
        known = {f.name: f for f in fields(cls)}
        unknown = set(d) - set(known)
        if unknown:
            raise KeyError(f"unknown config keys: {sorted(unknown)}")
        return cls(**{k: _coerce(v, type(getattr(cls(), k))) for k, v in d.items()})


def _coerce(value, kind):
    if isinstance(value, kind) and not (kind is int and isinstance(value, bool)):
        return value
    if kind is bool:
        if isinstance(value, str):
            v = value.strip().lower()
            if v in ("1", "true", "yes", "on"):
                return True
            if v in ("0", "false", "no", "off"):
                return False
            raise ValueError(f"not a boolean: {value!r}")
        return bool(value)
    if kind is int:
        return int(str(value).strip()) if isinstance(value, str) else int(value)
    if kind is float:
        return float(value)
    return str(value).strip()


def parse_config_text(text: str) -> Config:
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ValueError(f"line {lineno}: expected 'key = value', got {raw!r}")
        values[key.strip()] = value.strip()
    return Config.from_dict(values)


def load_config(path) -> Config:
    return parse_config_text(Path(path).read_text())


def dump_config(cfg: Config) -> str:
    return "".join(f"{k} = {v}\n" for k, v in cfg.to_dict().items())
