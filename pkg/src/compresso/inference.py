"""Length-controlled greedy compression."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import torch

from .corpus import EOS_ID, PAD_ID, SOS_ID, UNK_ID, FIRST_OOV_ID, OovTable, Vocabulary, decode_with_oov, encode_with_oov
from .model import Seq2Seq

F8W_LENGTH = 8


@dataclass(frozen=True)
class DecodeSpec:
    """Either an absolute ``target_len`` or a ``ratio`` of the input length."""

    target_len: int | None = None
    ratio: float = 0.5
    max_steps: int | None = None

    def resolve(self, input_len: int) -> tuple[int, int]:
        """Return ``(target_len, max_steps)`` for an input of ``input_len`` tokens."""
        if self.target_len is not None:
            target = self.target_len
        else:
            target = math.floor(self.ratio * input_len)
        target = max(1, target)
        cap = self.max_steps if self.max_steps is not None else target + 5
        if cap < target:
            raise ValueError(f"max_steps {cap} < target_len {target}")
        return target, cap


@dataclass
class GreedyTrace:
    ids: list[int]          # decoded ids, EOS excluded
    countdowns: list[int]   # scalar fed at each step
    stopped_at_eos: bool


def blocked_ids(model: Seq2Seq, table: OovTable) -> list[int]:
    """Ids never emitted at inference: PAD, SOS, UNK and OOV slots the input did not fill."""
    unfilled = range(FIRST_OOV_ID + len(table), FIRST_OOV_ID + model.cfg.num_oov)
    return [PAD_ID, SOS_ID, UNK_ID, *unfilled]


@torch.no_grad()
def greedy_decode(model: Seq2Seq, input_ids: Sequence[int], t_dec: int, max_steps: int,
                  sent_emb=None, blocked: Sequence[int] = (PAD_ID, SOS_ID)) -> GreedyTrace:
    """Argmax decode feeding countdown ``t_dec - t`` at step ``t = 1, 2, ...``."""
    if not input_ids:
        raise ValueError("empty input")
    model.eval()
    dtype = next(model.parameters()).dtype
    src = torch.tensor([list(input_ids)])
    enc_outputs, enc_final = model.encode(src, torch.tensor([len(input_ids)]))
    s = None
    if sent_emb is not None:
        s = torch.as_tensor(np.asarray(sent_emb), dtype=dtype).reshape(1, -1)
    state = model.init_decoder(enc_final, s)
    keys = model.att_key(enc_outputs) if model.cfg.use_attention else None
    mask = torch.zeros(model.cfg.vocab_size, dtype=torch.bool)
    mask[list(blocked)] = True
    prev = torch.tensor([SOS_ID])
    ids, countdowns = [], []
    for t in range(1, max_steps + 1):
        countdown = t_dec - t
        countdowns.append(countdown)
        logits, state, _ = model.decode_step(state, prev, torch.tensor([countdown]), enc_outputs, keys)
        logits = logits[0].masked_fill(mask, float("-inf"))
        nxt = int(torch.argmax(logits))
        if nxt == EOS_ID:
            return GreedyTrace(ids, countdowns, True)
        ids.append(nxt)
        prev = torch.tensor([nxt])
    return GreedyTrace(ids, countdowns, False)


def compress(sentence: Sequence[str], spec: DecodeSpec, model: Seq2Seq, vocab: Vocabulary,
             embedder=None) -> list[str]:
    """Compress one raw (un-noised) sentence to roughly ``spec``'s length."""
    return compress_trace(sentence, spec, model, vocab, embedder)[0]


def compress_trace(sentence: Sequence[str], spec: DecodeSpec, model: Seq2Seq, vocab: Vocabulary,
                   embedder=None) -> tuple[list[str], GreedyTrace]:
    if not sentence:
        raise ValueError("empty input")
    ids, table = encode_with_oov(sentence, vocab)
    target, cap = spec.resolve(len(sentence))
    sent_emb = None
    if model.cfg.use_conditioning:
        if embedder is None:
            raise ValueError("model uses conditioning; an embedder is required")
        sent_emb = embedder.embed(sentence)
    # +1: the EOS slot receives countdown 0
    trace = greedy_decode(model, ids, target + 1, cap, sent_emb, blocked_ids(model, table))
    return decode_with_oov(trace.ids, vocab, table), trace


def compress_sweep(sentence: Sequence[str], lengths: Sequence[int], model: Seq2Seq, vocab: Vocabulary,
                   embedder=None) -> list[tuple[int, list[str]]]:
    return [(n, compress(sentence, DecodeSpec(target_len=n), model, vocab, embedder)) for n in lengths]


def baseline_f8w(sentence: Sequence[str]) -> list[str]:
    return list(sentence[:F8W_LENGTH])
