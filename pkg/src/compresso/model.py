"""Attentional LSTM encoder-decoder with a per-step length countdown input.

The decoder input at step ``t`` is ``[embedding(prev token); T_dec - t; context]``
where the countdown scalar is fed raw. Decoder states are initialised from
the bidirectional encoder's final states through one affine map per state
kind (hidden, cell), optionally concatenated with a sentence embedding.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Protocol, Sequence

import numpy as np
import torch
from torch import nn
from torch.nn.utils.rnn import pack_padded_sequence, pad_packed_sequence

from .corpus import (
    FIRST_OOV_ID,
    PAD_ID,
    SOS_ID,
    EmbeddingMatrix,
    Vocabulary,
)
from .noising import NoisedExample


@dataclass(frozen=True)
class ModelConfig:
    vocab_size: int
    emb_dim: int = 300
    hidden: int = 512
    layers: int = 3
    num_oov: int = 10
    use_attention: bool = True
    use_conditioning: bool = False
    sent_emb_dim: int = 300

    def __post_init__(self):
        for name in ("vocab_size", "emb_dim", "hidden", "layers", "num_oov", "sent_emb_dim"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")

    @property
    def num_special(self) -> int:
        return FIRST_OOV_ID + self.num_oov

    def to_dict(self) -> dict:
        return asdict(self)


class SentenceEmbedder(Protocol):
    dim: int

    def embed(self, tokens: Sequence[str]) -> np.ndarray: ...


class MeanEmbedder:
    """Baseline sentence embedder: L2-normalised mean of frozen word vectors.

    Words without a content-vocabulary row are ignored; a sentence with no
    known words maps to the first basis vector.
    """

    def __init__(self, vocab: Vocabulary, embeddings: np.ndarray):
        self.vocab = vocab
        self.vectors = np.asarray(embeddings, dtype=np.float64)
        self.dim = self.vectors.shape[1]

    def embed(self, tokens: Sequence[str]) -> np.ndarray:
        rows = [self.vocab.id_of[t] for t in tokens if t in self.vocab.id_of]
        rows = [i for i in rows if self.vocab.is_content(i)]
        vec = self.vectors[rows].mean(axis=0) if rows else np.zeros(self.dim)
        norm = np.linalg.norm(vec)
        if norm == 0.0:
            vec = np.zeros(self.dim)
            vec[0] = 1.0
            return vec
        return vec / norm


@dataclass
class Batch:
    src: torch.Tensor          # (B, S) input ids, PAD_ID padded
    src_len: torch.Tensor      # (B,)
    tgt: torch.Tensor          # (B, T) target ids (ends with EOS), PAD_ID padded
    tgt_len: torch.Tensor      # (B,)
    countdown_len: torch.Tensor  # (B,) declared T_dec per example
    sent_emb: torch.Tensor | None = None  # (B, sent_emb_dim)

    @property
    def size(self) -> int:
        return self.src.shape[0]


def collate(examples: Sequence[NoisedExample], sent_embs: Sequence[np.ndarray] | None = None,
            dtype: torch.dtype = torch.float32) -> Batch:
    b = len(examples)
    s_max = max(len(e.input_ids) for e in examples)
    t_max = max(len(e.target_ids) for e in examples)
    src = torch.full((b, s_max), PAD_ID, dtype=torch.long)
    tgt = torch.full((b, t_max), PAD_ID, dtype=torch.long)
    for i, e in enumerate(examples):
        if not e.input_ids:
            raise ValueError("empty input sequence")
        src[i, : len(e.input_ids)] = torch.tensor(e.input_ids)
        tgt[i, : len(e.target_ids)] = torch.tensor(e.target_ids)
    emb = None
    if sent_embs is not None:
        emb = torch.tensor(np.stack(sent_embs), dtype=dtype)
    return Batch(
        src=src,
        src_len=torch.tensor([len(e.input_ids) for e in examples]),
        tgt=tgt,
        tgt_len=torch.tensor([len(e.target_ids) for e in examples]),
        countdown_len=torch.tensor([e.countdown_len for e in examples]),
        sent_emb=emb,
    )


class Seq2Seq(nn.Module):
    def __init__(self, cfg: ModelConfig, word_vectors: np.ndarray | EmbeddingMatrix | None = None, seed: int = 0):
        super().__init__()
        self.cfg = cfg
        h, e = cfg.hidden, cfg.emb_dim
        if isinstance(word_vectors, EmbeddingMatrix):
            word_vectors = word_vectors.vectors
        if word_vectors is None:
            word_vectors = np.zeros((cfg.vocab_size, e))
        word_vectors = np.array(word_vectors, dtype=np.float32)
        if word_vectors.shape != (cfg.vocab_size, e):
            raise ValueError(f"word vectors have shape {word_vectors.shape}, expected {(cfg.vocab_size, e)}")
        word_vectors[: cfg.num_special] = 0.0
        # frozen: a buffer, so it is never handed to the optimizer
        self.register_buffer("word_emb", torch.from_numpy(word_vectors))
        self.special_emb = nn.Parameter(torch.empty(cfg.num_special, e))

        self.encoder = nn.LSTM(e, h, num_layers=cfg.layers, bidirectional=True, batch_first=True)
        state_in = 2 * h + (cfg.sent_emb_dim if cfg.use_conditioning else 0)
        self.init_h = nn.Linear(state_in, h)
        self.init_c = nn.Linear(state_in, h)

        ctx = 2 * h if cfg.use_attention else 0
        self.decoder = nn.ModuleList(
            nn.LSTMCell((e + 1 + ctx) if i == 0 else h, h) for i in range(cfg.layers)
        )
        if cfg.use_attention:
            self.att_query = nn.Linear(h, h, bias=False)
            self.att_key = nn.Linear(2 * h, h)
            self.att_v = nn.Linear(h, 1, bias=False)
        self.out = nn.Linear(h + ctx, cfg.vocab_size)
        self.reset_parameters(seed)

    def reset_parameters(self, seed: int = 0) -> None:
        gen = torch.Generator().manual_seed(seed)
        bound = 1.0 / math.sqrt(self.cfg.hidden)
        with torch.no_grad():
            for p in self.parameters():
                p.copy_(torch.rand(p.shape, generator=gen, dtype=torch.float64) * 2 * bound - bound)

    def named_trainable(self) -> list[tuple[str, nn.Parameter]]:
        return [(n, p) for n, p in self.named_parameters() if p.requires_grad]

    # -- building blocks -------------------------------------------------

    def embed(self, ids: torch.Tensor) -> torch.Tensor:
        special = ids < self.cfg.num_special
        rows = self.word_emb[ids]
        spec_rows = self.special_emb[ids.clamp(max=self.cfg.num_special - 1)]
        return torch.where(special.unsqueeze(-1), spec_rows, rows)

    def encode(self, src: torch.Tensor, src_len: torch.Tensor):
        """Run the bidirectional encoder.

        Returns ``enc_outputs`` of shape (B, S, 2H) and the final states as a
        pair of (layers, B, 2H) tensors (forward and backward concatenated).
        """
        if src.shape[1] == 0 or int(src_len.min()) < 1:
            raise ValueError("empty input sequence")
        x = self.embed(src)
        packed = pack_padded_sequence(x, src_len.cpu(), batch_first=True, enforce_sorted=False)
        out, (h_n, c_n) = self.encoder(packed)
        out, _ = pad_packed_sequence(out, batch_first=True, total_length=src.shape[1])
        b = src.shape[0]
        h_n = h_n.view(self.cfg.layers, 2, b, self.cfg.hidden)
        c_n = c_n.view(self.cfg.layers, 2, b, self.cfg.hidden)
        h_fin = torch.cat([h_n[:, 0], h_n[:, 1]], dim=-1)
        c_fin = torch.cat([c_n[:, 0], c_n[:, 1]], dim=-1)
        return out, (h_fin, c_fin)

    def init_decoder(self, enc_final, sent_emb: torch.Tensor | None = None):
        """Map encoder final states (and the sentence embedding) to decoder states, layer by layer."""
        h_fin, c_fin = enc_final
        if self.cfg.use_conditioning:
            if sent_emb is None:
                raise ValueError("model uses conditioning but no sentence embedding was given")
            if sent_emb.shape[-1] != self.cfg.sent_emb_dim:
                raise ValueError(
                    f"sentence embedding has dim {sent_emb.shape[-1]}, expected {self.cfg.sent_emb_dim}"
                )
            s = sent_emb.unsqueeze(0).expand(h_fin.shape[0], -1, -1)
            h_fin = torch.cat([h_fin, s], dim=-1)
            c_fin = torch.cat([c_fin, s], dim=-1)
        elif sent_emb is not None:
            raise ValueError("sentence embedding given to a model without conditioning")
        hs = self.init_h(h_fin)
        cs = self.init_c(c_fin)
        return [(hs[i], cs[i]) for i in range(self.cfg.layers)]

    def attend(self, query: torch.Tensor, enc_outputs: torch.Tensor, keys: torch.Tensor,
               src_mask: torch.Tensor | None):
        scores = self.att_v(torch.tanh(keys + self.att_query(query).unsqueeze(1))).squeeze(-1)
        if src_mask is not None:
            scores = scores.masked_fill(~src_mask, float("-inf"))
        weights = torch.softmax(scores, dim=-1)
        context = torch.bmm(weights.unsqueeze(1), enc_outputs).squeeze(1)
        return context, weights

    def decode_step(self, state, prev_ids: torch.Tensor, countdown: torch.Tensor,
                    enc_outputs: torch.Tensor, keys: torch.Tensor | None = None,
                    src_mask: torch.Tensor | None = None):
        """One decoder step. Returns ``(logits, new_state, attn_weights)``.

        ``keys`` is the precomputed ``att_key(enc_outputs)``; it is derived on
        the fly if omitted. ``attn_weights`` is ``None`` without attention.
        """
        x = torch.cat([self.embed(prev_ids), countdown.to(enc_outputs.dtype).unsqueeze(-1)], dim=-1)
        context = weights = None
        if self.cfg.use_attention:
            if keys is None:
                keys = self.att_key(enc_outputs)
            context, weights = self.attend(state[-1][0], enc_outputs, keys, src_mask)
            x = torch.cat([x, context], dim=-1)
        new_state = []
        for cell, (h, c) in zip(self.decoder, state):
            h, c = cell(x, (h, c))
            new_state.append((h, c))
            x = h
        feats = torch.cat([x, context], dim=-1) if context is not None else x
        return self.out(feats), new_state, weights

    # -- training objective ----------------------------------------------

    def forward(self, batch: Batch):
        """Teacher-forced decode of a batch.

        Returns ``(loss, logits)``: ``loss`` is the mean over examples of each
        example's mean per-token NLL; ``logits`` has shape (B, T, V).
        """
        enc_outputs, enc_final = self.encode(batch.src, batch.src_len)
        state = self.init_decoder(enc_final, batch.sent_emb)
        src_mask = torch.arange(batch.src.shape[1]).unsqueeze(0) < batch.src_len.unsqueeze(1)
        keys = self.att_key(enc_outputs) if self.cfg.use_attention else None
        b, t_max = batch.tgt.shape
        prev = torch.full((b,), SOS_ID, dtype=torch.long)
        all_logits = []
        for t in range(1, t_max + 1):
            countdown = batch.countdown_len - t
            logits, state, _ = self.decode_step(state, prev, countdown, enc_outputs, keys, src_mask)
            all_logits.append(logits)
            prev = batch.tgt[:, t - 1]
        logits = torch.stack(all_logits, dim=1)
        nll = nn.functional.cross_entropy(
            logits.reshape(b * t_max, -1), batch.tgt.reshape(-1), reduction="none"
        ).view(b, t_max)
        tgt_mask = torch.arange(t_max).unsqueeze(0) < batch.tgt_len.unsqueeze(1)
        per_example = (nll * tgt_mask).sum(dim=1) / batch.tgt_len.to(nll.dtype)
        return per_example.mean(), logits


def _sent_tensor(model: Seq2Seq, sent_emb) -> torch.Tensor | None:
    if sent_emb is None:
        return None
    dtype = next(model.parameters()).dtype
    return torch.as_tensor(np.asarray(sent_emb), dtype=dtype).reshape(1, -1)


def forward_nll(example: NoisedExample, sent_emb, model: Seq2Seq):
    """Teacher-forced NLL of a single example; returns ``(loss, logits (T, V))``."""
    batch = collate([example])
    batch.sent_emb = _sent_tensor(model, sent_emb)
    loss, logits = model(batch)
    return loss, logits[0]


def analytic_gradients(model: Seq2Seq, example: NoisedExample, sent_emb=None) -> dict[str, torch.Tensor]:
    """Backprop gradients of :func:`forward_nll` for every parameter and buffer.

    Frozen tensors (the word embedding buffer) are not part of the graph and
    are reported as exact zeros.
    """
    model.zero_grad(set_to_none=True)
    loss, _ = forward_nll(example, sent_emb, model)
    loss.backward()
    grads = {}
    for name, p in model.named_parameters():
        grads[name] = p.grad.detach().clone() if p.grad is not None else torch.zeros_like(p)
    for name, buf in model.named_buffers():
        grads[name] = torch.zeros_like(buf)
    model.zero_grad(set_to_none=True)
    return grads


def check_gradients(model: Seq2Seq, example: NoisedExample, sent_emb=None, eps: float = 1e-5,
                    samples: int | None = 200, seed: int = 0) -> float:
    """Max relative error between backprop and central finite differences.

    Compares ``samples`` randomly chosen trainable coordinates (all of them if
    ``samples`` is None). Requires a float64 model.
    """
    if next(model.parameters()).dtype != torch.float64:
        raise ValueError("gradient check needs a float64 model (call model.double())")
    grads = analytic_gradients(model, example, sent_emb)
    params = model.named_trainable()
    coords = [(name, p, i) for name, p in params for i in range(p.numel())]
    if samples is not None and samples < len(coords):
        rng = np.random.default_rng(seed)
        coords = [coords[int(j)] for j in np.sort(rng.choice(len(coords), samples, replace=False))]
    worst = 0.0
    with torch.no_grad():
        for name, p, i in coords:
            flat = p.view(-1)
            orig = flat[i].item()
            flat[i] = orig + eps
            f_plus = forward_nll(example, sent_emb, model)[0].item()
            flat[i] = orig - eps
            f_minus = forward_nll(example, sent_emb, model)[0].item()
            flat[i] = orig
            g_fd = (f_plus - f_minus) / (2 * eps)
            g_an = grads[name].view(-1)[i].item()
            worst = max(worst, abs(g_an - g_fd) / max(abs(g_fd), 1e-8))
    return worst


def parameter_count(cfg: ModelConfig) -> int:
    """Closed-form count of trainable parameters for ``cfg``."""
    h, e, v = cfg.hidden, cfg.emb_dim, cfg.vocab_size
    ctx = 2 * h if cfg.use_attention else 0
    total = cfg.num_special * e
    for layer in range(cfg.layers):
        inp = e if layer == 0 else 2 * h
        total += 2 * (4 * h * inp + 4 * h * h + 8 * h)
    state_in = 2 * h + (cfg.sent_emb_dim if cfg.use_conditioning else 0)
    total += 2 * (state_in * h + h)
    for layer in range(cfg.layers):
        inp = (e + 1 + ctx) if layer == 0 else h
        total += 4 * h * inp + 4 * h * h + 8 * h
    if cfg.use_attention:
        total += h * h + (2 * h * h + h) + h
    total += (h + ctx) * v + v
    return total
