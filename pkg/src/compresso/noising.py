"""Additive noising: extend a reference with words from other sentences, then shuffle."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .corpus import EOS_ID, OovTable, Vocabulary, encode_with_oov

UNIGRAM = "unigram"
BIGRAM = "bigram"


@dataclass(frozen=True)
class NoiseConfig:
    extension_min: float = 0.40
    extension_max: float = 0.60
    donors: int = 2
    shuffle_mode: str = BIGRAM

    def __post_init__(self):
        if not 0 < self.extension_min <= self.extension_max:
            raise ValueError("need 0 < extension_min <= extension_max")
        if self.donors < 1:
            raise ValueError("donors must be >= 1")
        if self.shuffle_mode not in (UNIGRAM, BIGRAM):
            raise ValueError(f"unknown shuffle_mode {self.shuffle_mode!r}")

    def extra_range(self, length: int) -> tuple[int, int]:
        """Inclusive bounds on the number of noise words for a reference of ``length``."""
        # round() guards against 0.6 * 5 == 3.0000000000000004 style drift
        lo = max(1, math.ceil(round(self.extension_min * length, 9)))
        hi = max(lo, math.floor(round(self.extension_max * length, 9)))
        return lo, hi


@dataclass(frozen=True)
class NoisedExample:
    input_ids: list[int]
    target_ids: list[int]
    countdown_len: int
    oov_table: OovTable


class CorpusSampler:
    """Uniform donor-sentence sampler over an in-memory corpus."""

    def __init__(self, sentences: Sequence[Sequence[str]]):
        self.sentences = sentences

    def __len__(self) -> int:
        return len(self.sentences)

    def donors(self, rng: np.random.Generator, n: int, exclude: int | None = None) -> list[Sequence[str]]:
        """Draw ``n`` distinct sentences, never the one at index ``exclude``."""
        pool = len(self.sentences) - (exclude is not None)
        n = min(n, pool)
        picks = rng.choice(pool, size=n, replace=False) if n > 0 else []
        out = []
        for p in picks:
            p = int(p)
            if exclude is not None and p >= exclude:
                p += 1
            out.append(self.sentences[p])
        return out


def split_quota(k: int, parts: int) -> list[int]:
    base, rem = divmod(k, parts)
    return [base + (i < rem) for i in range(parts)]


def sample_noise_words(
    reference: Sequence[str],
    corpus: CorpusSampler,
    cfg: NoiseConfig,
    rng: np.random.Generator,
    exclude: int | None = None,
) -> list[str]:
    """Subsample roughly 40-60% extra words from ``cfg.donors`` other sentences.

    The total is split evenly over the donors, earlier donors taking the
    remainder. A donor shorter than its quota gives all of its words and the
    shortfall moves on to the next donor.
    """
    lo, hi = cfg.extra_range(len(reference))
    k = int(rng.integers(lo, hi + 1))
    donors = corpus.donors(rng, cfg.donors, exclude=exclude)
    if not donors:
        return []
    quotas = split_quota(k, cfg.donors)[: len(donors)]
    words: list[str] = []
    carry = 0
    for donor, quota in zip(donors, quotas):
        want = quota + carry
        take = min(want, len(donor))
        carry = want - take
        positions = np.sort(rng.choice(len(donor), size=take, replace=False))
        words.extend(donor[int(p)] for p in positions)
    return words


def shuffle_unigram(seq: Sequence, rng: np.random.Generator) -> list:
    return [seq[int(i)] for i in rng.permutation(len(seq))]


def shuffle_bigram(seq: Sequence, rng: np.random.Generator) -> list:
    """Permute left-to-right pairs of tokens; an odd tail stays a singleton unit."""
    units = [seq[i : i + 2] for i in range(0, len(seq), 2)]
    out: list = []
    for i in rng.permutation(len(units)):
        out.extend(units[int(i)])
    return out


def make_training_example(
    reference: Sequence[str],
    corpus: CorpusSampler,
    vocab: Vocabulary,
    cfg: NoiseConfig,
    rng: np.random.Generator,
    exclude: int | None = None,
) -> NoisedExample:
    """Build one denoising example from ``reference``.

    The reference is OOV-numbered first; noise words extend the same table in
    a second pass, so reference OOVs always hold the lowest indices.
    """
    if not reference:
        raise ValueError("empty reference")
    ref_ids, table = encode_with_oov(reference, vocab)
    noise = sample_noise_words(reference, corpus, cfg, rng, exclude=exclude)
    noise_ids, table = encode_with_oov(noise, vocab, table=table)
    shuffle = shuffle_bigram if cfg.shuffle_mode == BIGRAM else shuffle_unigram
    input_ids = shuffle(ref_ids + noise_ids, rng)
    target = ref_ids + [EOS_ID]
    return NoisedExample(input_ids, target, len(target), table)


def example_rng(seed: int, *keys: int) -> np.random.Generator:
    """Independent generator for one example, keyed by (seed, epoch, index, ...)."""
    return np.random.default_rng([seed, *keys])
