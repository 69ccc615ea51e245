"""Random tiny model + example for finite-difference gradient checks."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from .corpus import DEFAULT_NUM_OOV, Vocabulary, random_embeddings
from .model import MeanEmbedder, ModelConfig, Seq2Seq, check_gradients
from .noising import CorpusSampler, NoiseConfig, NoisedExample, make_training_example


@dataclass
class GradCheckSetup:
    model: Seq2Seq
    example: NoisedExample
    sent_emb: np.ndarray | None


def tiny_setup(hidden: int = 8, vocab_size: int = 50, seed: int = 0, use_attention: bool = True,
               use_conditioning: bool = False, emb_dim: int = 8, num_oov: int = DEFAULT_NUM_OOV) -> GradCheckSetup:
    """Float64 single-layer model over a synthetic vocabulary of ``vocab_size`` ids."""
    rng = np.random.default_rng(seed)
    n_content = vocab_size - 4 - num_oov
    if n_content < 1:
        raise ValueError(f"vocab_size must exceed {4 + num_oov}")
    vocab = Vocabulary.from_content([f"w{i}" for i in range(n_content)], num_oov)
    # a few words outside the vocabulary exercise the OOV rows
    words = list(vocab.content) + [f"rare{i}" for i in range(4)]
    corpus = [[words[int(i)] for i in rng.integers(len(words), size=int(rng.integers(5, 12)))]
              for _ in range(20)]
    emb = random_embeddings(vocab, emb_dim, seed=seed)
    cfg = ModelConfig(vocab_size=len(vocab), emb_dim=emb_dim, hidden=hidden, layers=1, num_oov=num_oov,
                      use_attention=use_attention, use_conditioning=use_conditioning, sent_emb_dim=emb_dim)
    model = Seq2Seq(cfg, emb.vectors, seed=seed).to(torch.float64)
    example = make_training_example(corpus[0], CorpusSampler(corpus), vocab, NoiseConfig(), rng, exclude=0)
    sent_emb = MeanEmbedder(vocab, emb.vectors).embed(corpus[0]) if use_conditioning else None
    return GradCheckSetup(model, example, sent_emb)


def run(hidden: int = 8, vocab_size: int = 50, seed: int = 0, use_attention: bool = True,
        use_conditioning: bool = False, eps: float = 1e-5, samples: int | None = 200) -> float:
    s = tiny_setup(hidden, vocab_size, seed, use_attention, use_conditioning)
    return check_gradients(s.model, s.example, s.sent_emb, eps=eps, samples=samples, seed=seed)
