"""Training loop (denoising or supervised), learning-rate schedule and checkpoints."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import os
import struct
from dataclasses import asdict, dataclass, field, fields, replace
from decimal import Decimal
from typing import Sequence

import numpy as np
import torch

from .corpus import (
    EOS_ID,
    CorpusError,
    EmbeddingMatrix,
    Vocabulary,
    atomic_write_bytes,
    atomic_write_text,
    encode_with_oov,
)
from .model import MeanEmbedder, ModelConfig, Seq2Seq, collate
from .noising import CorpusSampler, NoiseConfig, NoisedExample, example_rng, make_training_example

logger = logging.getLogger(__name__)

DENOISE = "denoise"
SUPERVISED = "supervised"

CKPT_MAGIC = b"compresso-ckpt v1\n"
# sentences sorted by length inside windows of this many batches
_BUCKET_BATCHES = 20


class CheckpointError(ValueError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 128
    lr_init: float = 0.0005
    anneal_factor: float = 0.9
    anneal_every: int = 10000
    clip_norm: float = 2.0
    epochs: int = 4
    mode: str = DENOISE
    seed: int = 0
    checkpoint_every: int = 10000
    max_steps: int | None = None

    def __post_init__(self):
        for name in ("batch_size", "lr_init", "anneal_every", "clip_norm", "epochs", "checkpoint_every"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if not 0 < self.anneal_factor <= 1:
            raise ValueError("anneal_factor must be in (0, 1]")
        if self.mode not in (DENOISE, SUPERVISED):
            raise ValueError(f"unknown mode {self.mode!r}")


def learning_rate(step: int, cfg: TrainConfig) -> float:
    """``lr_init * anneal_factor ** (step // anneal_every)``.

    Evaluated in decimal so that e.g. 0.0005 * 0.9 gives the float 0.00045.
    """
    k = step // cfg.anneal_every
    return float(Decimal(repr(cfg.lr_init)) * Decimal(repr(cfg.anneal_factor)) ** k)


def clip_gradients(params: Sequence[torch.nn.Parameter], max_norm: float) -> tuple[float, float]:
    """Rescale gradients in place so their global L2 norm is at most ``max_norm``.

    Returns ``(norm_before, scale)``.
    """
    grads = [p.grad for p in params if p.grad is not None]
    if not grads:
        return 0.0, 1.0
    norm = math.sqrt(sum(float(torch.sum(g.double() * g.double())) for g in grads))
    scale = 1.0
    if norm > max_norm:
        scale = max_norm / norm
        for g in grads:
            g.mul_(scale)
    return norm, scale


@dataclass
class TrainState:
    step: int = 0
    lr: float = 0.0
    seed: int = 0
    # per trainable parameter name: (adam step count, first moment, second moment)
    moments: dict[str, tuple[float, torch.Tensor, torch.Tensor]] = field(default_factory=dict)


# -- checkpoints -----------------------------------------------------------
#
# Layout (all integers little-endian):
#   b"compresso-ckpt v1\n"
#   u32 n, then n bytes of UTF-8 JSON metadata:
#     {"model": ModelConfig fields, "dtype": "float32"|"float64", "vocab": [...],
#      "train": {"step", "lr", "seed"}, "tensors": [[name, shape], ...]}
#   raw little-endian floats for each entry of "tensors", in order:
#     every trainable parameter (module registration order), then "word_emb",
#     then for each parameter with optimizer state "adam_m/<name>" and
#     "adam_v/<name>"; adam step counts live in metadata "train"."adam_steps".

def _to_bytes(t: torch.Tensor, dtype: str) -> bytes:
    arr = t.detach().cpu().numpy().astype("<f8" if dtype == "float64" else "<f4", copy=False)
    return np.ascontiguousarray(arr).tobytes()


def save_checkpoint(path: str | os.PathLike, model: Seq2Seq, vocab: Vocabulary,
                    state: TrainState | None = None) -> None:
    state = state or TrainState()
    dtype = "float64" if next(model.parameters()).dtype == torch.float64 else "float32"
    tensors: list[tuple[str, torch.Tensor]] = list(model.named_trainable())
    tensors.append(("word_emb", model.word_emb))
    adam_steps = {}
    for name, _ in model.named_trainable():
        if name in state.moments:
            n, m, v = state.moments[name]
            adam_steps[name] = n
            tensors.append((f"adam_m/{name}", m))
            tensors.append((f"adam_v/{name}", v))
    meta = {
        "model": model.cfg.to_dict(),
        "dtype": dtype,
        "vocab": list(vocab.tokens),
        "num_oov": vocab.num_oov,
        "train": {"step": state.step, "lr": state.lr, "seed": state.seed, "adam_steps": adam_steps},
        "tensors": [[name, list(t.shape)] for name, t in tensors],
    }
    header = json.dumps(meta, sort_keys=True).encode("utf-8")
    parts = [CKPT_MAGIC, struct.pack("<I", len(header)), header]
    parts.extend(_to_bytes(t, dtype) for _, t in tensors)
    atomic_write_bytes(path, b"".join(parts))


@dataclass
class Checkpoint:
    model: Seq2Seq
    vocab: Vocabulary
    state: TrainState


def load_checkpoint(path: str | os.PathLike) -> Checkpoint:
    try:
        with open(path, "rb") as f:
            data = f.read()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    first_line = data.split(b"\n", 1)[0] + b"\n"
    if first_line != CKPT_MAGIC:
        if first_line.startswith(b"compresso-ckpt"):
            raise CheckpointError(f"{path}: unsupported checkpoint version {first_line.strip().decode(errors='replace')!r}")
        raise CheckpointError(f"{path}: not a compresso checkpoint")
    off = len(CKPT_MAGIC)
    if len(data) < off + 4:
        raise CheckpointError(f"{path}: truncated checkpoint")
    (n,) = struct.unpack_from("<I", data, off)
    off += 4
    if len(data) < off + n:
        raise CheckpointError(f"{path}: truncated checkpoint")
    meta = json.loads(data[off : off + n].decode("utf-8"))
    off += n
    dtype = meta["dtype"]
    np_dtype = np.dtype("<f8" if dtype == "float64" else "<f4")
    torch_dtype = torch.float64 if dtype == "float64" else torch.float32
    tensors = {}
    for name, shape in meta["tensors"]:
        count = int(np.prod(shape)) if shape else 1
        nbytes = count * np_dtype.itemsize
        if len(data) < off + nbytes:
            raise CheckpointError(f"{path}: truncated checkpoint (tensor {name})")
        arr = np.frombuffer(data, dtype=np_dtype, count=count, offset=off).reshape(shape)
        tensors[name] = torch.from_numpy(arr.astype(np_dtype.newbyteorder("="), copy=True))
        off += nbytes
    if off != len(data):
        raise CheckpointError(f"{path}: {len(data) - off} trailing bytes")

    cfg = ModelConfig(**meta["model"])
    vocab = Vocabulary(tuple(meta["vocab"]), meta["num_oov"])
    model = Seq2Seq(cfg, tensors["word_emb"].numpy())
    model.to(torch_dtype)
    with torch.no_grad():
        model.word_emb.copy_(tensors["word_emb"])
        for name, p in model.named_trainable():
            if name not in tensors:
                raise CheckpointError(f"{path}: missing parameter {name}")
            p.copy_(tensors[name])
    tr = meta["train"]
    moments = {
        name: (float(steps), tensors[f"adam_m/{name}"], tensors[f"adam_v/{name}"])
        for name, steps in tr["adam_steps"].items()
    }
    return Checkpoint(model, vocab, TrainState(tr["step"], tr["lr"], tr["seed"], moments))


# -- training --------------------------------------------------------------

class Trainer:
    """Single-optimizer-thread trainer.

    Every minibatch is a pure function of ``(seed, step)``: the epoch order,
    the length-bucketed batches and each example's noise are all derived from
    seeded generators, so a resumed run replays the same trajectory.
    """

    def __init__(
        self,
        model: Seq2Seq,
        vocab: Vocabulary,
        cfg: TrainConfig,
        noise_cfg: NoiseConfig | None = None,
        corpus: Sequence[Sequence[str]] | None = None,
        pairs: Sequence[tuple[Sequence[str], Sequence[str]]] | None = None,
        embedder=None,
        state: TrainState | None = None,
    ):
        self.model = model
        self.vocab = vocab
        self.cfg = cfg
        self.noise_cfg = noise_cfg or NoiseConfig()
        if cfg.mode == DENOISE:
            if not corpus:
                raise CorpusError("empty corpus")
            self.references = list(corpus)
            self.sampler = CorpusSampler(self.references)
        else:
            if not pairs:
                raise CorpusError("empty corpus")
            self.references = [p[0] for p in pairs]
            self.pairs = list(pairs)
        if model.cfg.use_conditioning and embedder is None:
            embedder = MeanEmbedder(vocab, model.word_emb.double().numpy())
        self.embedder = embedder if model.cfg.use_conditioning else None
        self.params = [p for _, p in model.named_trainable()]
        self.optimizer = torch.optim.Adam(self.params, lr=cfg.lr_init, foreach=False)
        self.state = state or TrainState(seed=cfg.seed)
        self.state.seed = cfg.seed
        if self.state.moments:
            self._restore_moments(self.state.moments)
        self._epoch_cache: dict[int, list[list[int]]] = {}
        self.dtype = next(model.parameters()).dtype

    @property
    def steps_per_epoch(self) -> int:
        return math.ceil(len(self.references) / self.cfg.batch_size)

    @property
    def total_steps(self) -> int:
        if self.cfg.max_steps is not None:
            return self.cfg.max_steps
        return self.cfg.epochs * self.steps_per_epoch

    def epoch_batches(self, epoch: int) -> list[list[int]]:
        """Batches of corpus indices for ``epoch``, grouped by similar length."""
        if epoch not in self._epoch_cache:
            rng = np.random.default_rng([self.cfg.seed, epoch, 0x5EED])
            order = rng.permutation(len(self.references))
            bs = self.cfg.batch_size
            window = bs * _BUCKET_BATCHES
            batches = []
            for start in range(0, len(order), window):
                chunk = sorted(order[start : start + window].tolist(), key=lambda i: len(self.references[i]))
                batches.extend(chunk[j : j + bs] for j in range(0, len(chunk), bs))
            batches = [batches[int(i)] for i in rng.permutation(len(batches))]
            self._epoch_cache = {epoch: batches}
        return self._epoch_cache[epoch]

    def example(self, index: int, epoch: int) -> NoisedExample:
        if self.cfg.mode == DENOISE:
            rng = example_rng(self.cfg.seed, epoch, index)
            return make_training_example(self.references[index], self.sampler, self.vocab,
                                         self.noise_cfg, rng, exclude=index)
        return supervised_example(*self.pairs[index], self.vocab)

    def batch_for_step(self, step: int):
        epoch, b = divmod(step, self.steps_per_epoch)
        indices = self.epoch_batches(epoch)[b]
        examples = [self.example(i, epoch) for i in indices]
        embs = None
        if self.embedder is not None:
            embs = [self.embedder.embed(self.references[i]) for i in indices]
        return collate(examples, embs, dtype=self.dtype)

    def train_step(self) -> tuple[float, float]:
        """One minibatch update. Returns ``(loss, grad_norm_before_clip)``."""
        step = self.state.step
        lr = learning_rate(step, self.cfg)
        batch = self.batch_for_step(step)
        self.model.train()
        self.optimizer.zero_grad(set_to_none=True)
        loss, _ = self.model(batch)
        loss.backward()
        norm, _ = clip_gradients(self.params, self.cfg.clip_norm)
        for group in self.optimizer.param_groups:
            group["lr"] = lr
        self.optimizer.step()
        self.state.step = step + 1
        self.state.lr = lr
        return float(loss.detach()), norm

    def run(self, steps: int | None = None, checkpoint_dir: str | None = None,
            loss_log: str | None = None, log_every: int = 100) -> list[tuple[int, float, float]]:
        """Train for ``steps`` more minibatches (default: until ``total_steps``).

        Returns the loss log rows ``(step, lr, loss)``; also written as CSV to
        ``loss_log`` if given.
        """
        end = self.total_steps if steps is None else self.state.step + steps
        rows = []
        while self.state.step < end:
            loss, _ = self.train_step()
            rows.append((self.state.step, self.state.lr, loss))
            if log_every and self.state.step % log_every == 0:
                logger.info("step %d lr %.6g loss %.4f", self.state.step, self.state.lr, loss)
            if checkpoint_dir and self.state.step % self.cfg.checkpoint_every == 0:
                self.save(os.path.join(checkpoint_dir, f"step{self.state.step:08d}.ckpt"))
        if loss_log:
            write_loss_log(loss_log, rows)
        return rows

    def snapshot(self) -> TrainState:
        moments = {}
        name_of = {id(p): n for n, p in self.model.named_trainable()}
        for p, st in self.optimizer.state.items():
            if st:
                moments[name_of[id(p)]] = (float(st["step"]), st["exp_avg"].detach().clone(),
                                           st["exp_avg_sq"].detach().clone())
        return TrainState(self.state.step, self.state.lr, self.state.seed, moments)

    def save(self, path: str) -> None:
        save_checkpoint(path, self.model, self.vocab, self.snapshot())

    def _restore_moments(self, moments) -> None:
        for name, p in self.model.named_trainable():
            if name in moments:
                n, m, v = moments[name]
                self.optimizer.state[p] = {
                    "step": torch.tensor(float(n)),
                    "exp_avg": m.to(p.dtype).clone(),
                    "exp_avg_sq": v.to(p.dtype).clone(),
                }


def supervised_example(reference: Sequence[str], summary: Sequence[str], vocab: Vocabulary) -> NoisedExample:
    """Paired example: the unmodified reference in, summary + EOS out.

    The summary is numbered against the reference's OOV table, so a copied
    rare word keeps its input slot.
    """
    src, table = encode_with_oov(reference, vocab)
    tgt, table = encode_with_oov(summary, vocab, table=table)
    tgt = tgt + [EOS_ID]
    return NoisedExample(src, tgt, len(tgt), table)


def write_loss_log(path: str, rows: Sequence[tuple[int, float, float]]) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["step", "lr", "loss"])
    for step, lr, loss in rows:
        w.writerow([step, repr(lr), f"{loss:.6f}"])
    atomic_write_text(path, buf.getvalue())


# -- config files ------------------------------------------------------------

def _coerce(value: str, current):
    if isinstance(current, bool):
        if value.lower() in ("1", "true", "yes", "on"):
            return True
        if value.lower() in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {value!r}")
    if isinstance(current, int):
        return int(value)
    if isinstance(current, float):
        return float(value)
    return value


def read_config(path: str) -> dict[str, str]:
    """Parse a flat ``key=value`` file; ``#`` starts a comment."""
    out = {}
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key=value")
            key, value = (s.strip() for s in line.split("=", 1))
            out[key] = value
    return out


def apply_overrides(obj, values: dict[str, str]):
    """Return a copy of dataclass ``obj`` with matching string ``values`` coerced in."""
    changes = {}
    for f in fields(obj):
        if f.name in values and f.init:
            current = getattr(obj, f.name)
            if current is None:
                changes[f.name] = int(values[f.name])
            else:
                changes[f.name] = _coerce(values[f.name], current)
    return replace(obj, **changes)


def config_dict(*objs) -> dict:
    out = {}
    for obj in objs:
        out.update(asdict(obj))
    return out


def build_model(vocab: Vocabulary, model_cfg: ModelConfig, embeddings: EmbeddingMatrix, seed: int) -> Seq2Seq:
    model_cfg = replace(model_cfg, vocab_size=len(vocab), emb_dim=embeddings.dim, num_oov=vocab.num_oov)
    if model_cfg.use_conditioning:
        model_cfg = replace(model_cfg, sent_emb_dim=embeddings.dim)
    return Seq2Seq(model_cfg, embeddings.vectors, seed=seed)
