"""Tiny causal decoder-only transformer over [prompt | scene | history | template]."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import torch
import torch.nn as nn
import torch.nn.functional as F

from .tokens import OutputTemplate, SpecialVocab


class SequenceTooLongError(ValueError):
    pass


@dataclass
class HiddenStates:
    H: torch.Tensor  # (B, L, D), after the final layer norm
    logits: torch.Tensor  # (B, L, V)
    context_len: int


@dataclass
class DecodeResult:
    token_ids: torch.Tensor  # (B, steps) generated ids
    states: HiddenStates
    complete: bool


class SelfAttention(nn.Module):
    def __init__(self, dim: int, heads: int):
        super().__init__()
        self.heads = heads
        self.qkv = nn.Linear(dim, 3 * dim)
        self.out = nn.Linear(dim, dim)

    def forward(self, x, cache: Optional[list] = None):
        b, l, d = x.shape
        q, k, v = self.qkv(x).view(b, l, 3, self.heads, d // self.heads).permute(2, 0, 3, 1, 4)
        if cache is not None:
            if cache:
                k = torch.cat([cache[0], k], dim=2)
                v = torch.cat([cache[1], v], dim=2)
            cache[:] = [k, v]
        past = k.shape[2] - l
        att = (q @ k.transpose(-2, -1)) / math.sqrt(q.shape[-1])
        mask = torch.ones(l, k.shape[2], dtype=torch.bool, device=x.device).tril(diagonal=past)
        att = att.masked_fill(~mask, float("-inf")).softmax(-1)
        y = (att @ v).transpose(1, 2).reshape(b, l, d)
        return self.out(y)


class Block(nn.Module):
    def __init__(self, dim: int, heads: int, ff_mult: int):
        super().__init__()
        self.ln1 = nn.LayerNorm(dim)
        self.attn = SelfAttention(dim, heads)
        self.ln2 = nn.LayerNorm(dim)
        self.mlp = nn.Sequential(nn.Linear(dim, ff_mult * dim), nn.GELU(), nn.Linear(ff_mult * dim, dim))

    def forward(self, x, cache=None):
        x = x + self.attn(self.ln1(x), cache)
        return x + self.mlp(self.ln2(x))


class CausalBackbone(nn.Module):
    def __init__(self, vocab_size: int, dim: int = 128, layers: int = 4, heads: int = 4,
                 ff_mult: int = 4, max_seq_len: int = 256):
        super().__init__()
        self.max_seq_len = max_seq_len
        self.tok_emb = nn.Embedding(vocab_size, dim)
        self.pos_emb = nn.Parameter(torch.randn(max_seq_len, dim) * 0.02)
        self.blocks = nn.ModuleList(Block(dim, heads, ff_mult) for _ in range(layers))
        self.ln_f = nn.LayerNorm(dim)
        self.lm_head = nn.Linear(dim, vocab_size, bias=False)
        nn.init.normal_(self.tok_emb.weight, std=0.02)

    def _run(self, x: torch.Tensor, start: int, caches=None):
        if start + x.shape[1] > self.max_seq_len:
            raise SequenceTooLongError(
                f"sequence length {start + x.shape[1]} exceeds max_seq_len {self.max_seq_len}")
        x = x + self.pos_emb[start:start + x.shape[1]]
        for i, blk in enumerate(self.blocks):
            x = blk(x, None if caches is None else caches[i])
        h = self.ln_f(x)
        return h, self.lm_head(h)

    def embed_ids(self, ids: Sequence[int], batch: int, like: torch.Tensor) -> torch.Tensor:
        t = torch.as_tensor(list(ids), dtype=torch.long, device=like.device)
        return self.tok_emb(t).to(like.dtype).unsqueeze(0).expand(batch, -1, -1)

    def forward_prefilled(self, context: torch.Tensor, template: OutputTemplate,
                          input_embeds: Optional[torch.Tensor] = None) -> HiddenStates:
        """Single causal pass over ``context`` (B, Lc, D) followed by the template ids.

        ``input_embeds`` replaces the template token embeddings (used for perturbation checks).
        """
        b = context.shape[0]
        tmpl = self.embed_ids(template.token_ids, b, context) if input_embeds is None else input_embeds
        h, logits = self._run(torch.cat([context, tmpl], dim=1), 0)
        return HiddenStates(h, logits, context.shape[1])

    @torch.no_grad()
    def forward_autoregressive(self, context: torch.Tensor, vocab: SpecialVocab, max_steps: int,
                               forced_ids: Optional[Sequence[int]] = None) -> DecodeResult:
        """Greedy token-by-token decoding with a key/value cache.

        Stops once the planning token has been emitted and fed back (so its
        hidden state exists) or after ``max_steps`` generated tokens. With
        ``forced_ids`` the given ids are fed instead of the argmax.
        """
        b, lc, _ = context.shape
        caches: List[list] = [[] for _ in self.blocks]
        h, logits = self._run(context, 0, caches)
        hs, ls = [h], [logits]
        generated = []
        complete = False
        pos = lc
        for step in range(max_steps):
            if forced_ids is not None:
                if step >= len(forced_ids):
                    break
                nxt = torch.full((b,), int(forced_ids[step]), dtype=torch.long, device=context.device)
            else:
                nxt = ls[-1][:, -1].argmax(-1)
            generated.append(nxt)
            x = self.tok_emb(nxt).to(context.dtype).unsqueeze(1)
            h, logits = self._run(x, pos, caches)
            hs.append(h)
            ls.append(logits)
            pos += 1
            if bool((nxt == vocab.waypoint_ego_id).all()):
                complete = True
                break
        ids = torch.stack(generated, dim=1) if generated else torch.zeros(b, 0, dtype=torch.long)
        return DecodeResult(ids, HiddenStates(torch.cat(hs, 1), torch.cat(ls, 1), lc), complete)


def extract_frame_embeddings(states: HiddenStates, template: OutputTemplate) -> torch.Tensor:
    """(B, F, N, D) hidden states at the placeholder spans."""
    off = states.context_len
    idx = [torch.arange(off + s, off + e) for s, e in template.frame_spans]
    if not idx:
        return states.H[:, :0].unsqueeze(2)
    return states.H[:, torch.stack(idx).to(states.H.device)]


def extract_planning_embedding(states: HiddenStates, template: OutputTemplate) -> torch.Tensor:
    """(B, D) hidden state at the planning token."""
    return states.H[:, states.context_len + template.planning_pos]


def template_logits(states: HiddenStates, template: OutputTemplate) -> torch.Tensor:
    """Logits that predict each template token (teacher forced): positions Lc-1 .. Lc+T-2."""
    off = states.context_len
    return states.logits[:, off - 1: off - 1 + len(template)]
