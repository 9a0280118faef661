"""Special vocabulary and the fixed output template.

The output template is what the backbone is asked to produce after the scene
context: ``F`` frames of ``<img_start> <img_0> ... <img_{N-1}> <img_end>``
followed by a single ``<waypoint_ego>`` planning token.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Sequence, Tuple


class TemplateError(ValueError):
    """Raised for a malformed placeholder sequence.

    ``position`` is the index of the first offending token.
    """

    def __init__(self, message: str, position: int):
        super().__init__(f"{message} (position {position})")
        self.position = position


@dataclass(frozen=True)
class SpecialVocab:
    base_vocab_size: int
    img_placeholder_ids: Tuple[int, ...]
    img_start_id: int
    img_end_id: int
    waypoint_ego_id: int

    @classmethod
    def create(cls, num_tokens: int, base_vocab_size: int = 8) -> "SpecialVocab":
        if num_tokens < 1:
            raise ValueError(f"need at least one placeholder token, got {num_tokens}")
        if base_vocab_size < 0:
            raise ValueError("base_vocab_size must be non-negative")
        b = base_vocab_size
        return cls(
            base_vocab_size=b,
            img_placeholder_ids=tuple(range(b, b + num_tokens)),
            img_start_id=b + num_tokens,
            img_end_id=b + num_tokens + 1,
            waypoint_ego_id=b + num_tokens + 2,
        )

    def __post_init__(self):
        ids = list(self.img_placeholder_ids) + [self.img_start_id, self.img_end_id, self.waypoint_ego_id]
        if len(set(ids)) != len(ids):
            raise ValueError("special token ids must be distinct")
        if min(ids) < self.base_vocab_size:
            raise ValueError("special token ids must not overlap the base vocabulary")

    @property
    def num_tokens(self) -> int:
        return len(self.img_placeholder_ids)

    @property
    def size(self) -> int:
        """Total vocabulary size (base + special)."""
        return max(self.waypoint_ego_id, self.img_start_id, self.img_end_id, *self.img_placeholder_ids) + 1

    def to_dict(self) -> dict:
        return {
            "base_vocab_size": self.base_vocab_size,
            "img_placeholder_ids": list(self.img_placeholder_ids),
            "img_start_id": self.img_start_id,
            "img_end_id": self.img_end_id,
            "waypoint_ego_id": self.waypoint_ego_id,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SpecialVocab":
        return cls(
            base_vocab_size=int(d["base_vocab_size"]),
            img_placeholder_ids=tuple(int(i) for i in d["img_placeholder_ids"]),
            img_start_id=int(d["img_start_id"]),
            img_end_id=int(d["img_end_id"]),
            waypoint_ego_id=int(d["waypoint_ego_id"]),
        )


@dataclass(frozen=True)
class OutputTemplate:
    token_ids: Tuple[int, ...]
    frame_spans: Tuple[Tuple[int, int], ...]  # half-open (start, end) of placeholder runs
    planning_pos: int

    def __len__(self) -> int:
        return len(self.token_ids)

    @property
    def num_frames(self) -> int:
        return len(self.frame_spans)

    @property
    def tokens_per_frame(self) -> int:
        return self.frame_spans[0][1] - self.frame_spans[0][0] if self.frame_spans else 0

    def to_dict(self) -> dict:
        return {
            "token_ids": list(self.token_ids),
            "frame_spans": [list(s) for s in self.frame_spans],
            "planning_pos": self.planning_pos,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "OutputTemplate":
        return cls(
            token_ids=tuple(int(i) for i in d["token_ids"]),
            frame_spans=tuple((int(a), int(b)) for a, b in d["frame_spans"]),
            planning_pos=int(d["planning_pos"]),
        )


def build_output_template(num_frames: int, num_tokens: int, vocab: SpecialVocab) -> OutputTemplate:
    if num_frames <= 0 or num_tokens <= 0:
        raise ValueError(f"num_frames and num_tokens must be positive, got F={num_frames}, N={num_tokens}")
    if num_tokens != vocab.num_tokens:
        raise ValueError(f"vocab has {vocab.num_tokens} placeholder ids, template needs {num_tokens}")
    ids: List[int] = []
    spans = []
    for _ in range(num_frames):
        ids.append(vocab.img_start_id)
        start = len(ids)
        ids.extend(vocab.img_placeholder_ids)
        spans.append((start, len(ids)))
        ids.append(vocab.img_end_id)
    ids.append(vocab.waypoint_ego_id)
    return OutputTemplate(tuple(ids), tuple(spans), len(ids) - 1)


def build_planning_template(vocab: SpecialVocab) -> OutputTemplate:
    """Template with no future frames, only the planning token."""
    return OutputTemplate((vocab.waypoint_ego_id,), (), 0)


def locate_spans(token_ids: Sequence[int], vocab: SpecialVocab) -> Tuple[List[Tuple[int, int]], int]:
    """Recover frame spans and the planning position from a token sequence.

    Every frame must be exactly ``<img_start>``, the N placeholder ids in
    order, ``<img_end>``; exactly one planning token must follow the frames.
    """
    ids = [int(t) for t in token_ids]
    n = vocab.num_tokens
    spans: List[Tuple[int, int]] = []
    planning_pos = -1
    i = 0
    while i < len(ids):
        tok = ids[i]
        if tok == vocab.img_start_id:
            if planning_pos >= 0:
                raise TemplateError("frame after planning token", i)
            start = i + 1
            for k in range(n):
                p = start + k
                if p >= len(ids):
                    raise TemplateError("frame does not close: sequence ends inside frame", i)
                if ids[p] != vocab.img_placeholder_ids[k]:
                    if ids[p] == vocab.img_end_id:
                        raise TemplateError(f"frame closed after {k} placeholders, expected {n}", i)
                    raise TemplateError(f"frame does not close: unexpected token {ids[p]}", i)
            end = start + n
            if end >= len(ids) or ids[end] != vocab.img_end_id:
                raise TemplateError("frame does not close: missing end marker", i)
            spans.append((start, end))
            i = end + 1
        elif tok == vocab.waypoint_ego_id:
            if planning_pos >= 0:
                raise TemplateError("multiple planning tokens", i)
            planning_pos = i
            i += 1
        elif tok == vocab.img_end_id:
            raise TemplateError("end marker without matching start", i)
        elif tok in vocab.img_placeholder_ids:
            raise TemplateError("placeholder outside a frame", i)
        else:
            i += 1
    if planning_pos < 0:
        raise TemplateError("no planning token", len(ids))
    return spans, planning_pos
