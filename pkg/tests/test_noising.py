import itertools
import math
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import chisquare

from compresso.corpus import EOS_ID, Vocabulary, build_vocabulary
from compresso.noising import (
    CorpusSampler,
    NoiseConfig,
    example_rng,
    make_training_example,
    sample_noise_words,
    shuffle_bigram,
    shuffle_unigram,
    split_quota,
)


class FixedDonors:
    """Sampler stub that always hands out the same donor sentences."""

    def __init__(self, donors):
        self._donors = donors

    def donors(self, rng, n, exclude=None):
        return self._donors[:n]


def test_extra_range_for_length_ten():
    assert NoiseConfig().extra_range(10) == (4, 6)


def test_extra_range_clamps_short_references():
    assert NoiseConfig().extra_range(1) == (1, 1)
    lo, hi = NoiseConfig().extra_range(3)
    assert lo == hi == 2


def test_quota_split():
    assert split_quota(5, 2) == [3, 2]
    assert split_quota(4, 2) == [2, 2]
    assert split_quota(7, 3) == [3, 2, 2]


def test_quotas_always_sum_to_k_over_seeds():
    cfg = NoiseConfig()
    donors = FixedDonors([[f"d{i}" for i in range(20)], [f"e{i}" for i in range(20)]])
    ref = [f"r{i}" for i in range(10)]
    seen = set()
    for seed in range(500):
        words = sample_noise_words(ref, donors, cfg, np.random.default_rng(seed))
        assert len(words) in (4, 5, 6)
        seen.add(len(words))
        if len(words) == 5:
            assert sum(w.startswith("d") for w in words) == 3
            assert sum(w.startswith("e") for w in words) == 2
    assert seen == {4, 5, 6}


def test_short_donor_shortfall_moves_to_next():
    # reference of length 10 with k forced to 6 -> quotas (3, 3); donor 1 has 1 word
    cfg = NoiseConfig(extension_min=0.6, extension_max=0.6)
    donors = FixedDonors([["x"], [f"e{i}" for i in range(10)]])
    words = sample_noise_words([f"r{i}" for i in range(10)], donors, cfg, np.random.default_rng(0))
    assert words.count("x") == 1
    assert sum(w.startswith("e") for w in words) == 5


def test_all_donors_exhausted_returns_fewer():
    cfg = NoiseConfig(extension_min=0.6, extension_max=0.6)
    donors = FixedDonors([["x"], ["y"]])
    words = sample_noise_words([f"r{i}" for i in range(10)], donors, cfg, np.random.default_rng(0))
    assert sorted(words) == ["x", "y"]


def test_noise_words_sampled_without_replacement():
    donors = FixedDonors([[f"d{i}" for i in range(6)], [f"e{i}" for i in range(6)]])
    for seed in range(50):
        words = sample_noise_words([f"r{i}" for i in range(20)], donors, NoiseConfig(), np.random.default_rng(seed))
        assert len(set(words)) == len(words)


def test_sampler_excludes_reference():
    corpus = [["a"], ["b"], ["c"]]
    sampler = CorpusSampler(corpus)
    for seed in range(100):
        picks = sampler.donors(np.random.default_rng(seed), 2, exclude=1)
        assert ["b"] not in picks
        assert len(picks) == 2 and picks[0] != picks[1]


def test_shuffle_unigram_edge_cases():
    rng = np.random.default_rng(0)
    assert shuffle_unigram([], rng) == []
    assert shuffle_unigram(["a"], rng) == ["a"]


def test_shuffle_unigram_uniform():
    rng = np.random.default_rng(123)
    trials = 100_000
    counts = Counter(tuple(shuffle_unigram("abc", rng)) for _ in range(trials))
    perms = list(itertools.permutations("abc"))
    assert set(counts) == set(perms)
    for p in perms:
        assert abs(counts[p] / trials - 1 / 6) < 0.01
    assert chisquare([counts[p] for p in perms]).pvalue > 0.001


def test_shuffle_bigram_four_tokens():
    rng = np.random.default_rng(5)
    outs = Counter(tuple(shuffle_bigram("abcd", rng)) for _ in range(4000))
    assert set(outs) == {tuple("abcd"), tuple("cdab")}
    assert abs(outs[tuple("abcd")] / 4000 - 0.5) < 0.03


def test_shuffle_bigram_odd_tail():
    rng = np.random.default_rng(5)
    outs = {tuple(shuffle_bigram("abc", rng)) for _ in range(200)}
    assert outs == {tuple("abc"), tuple("cab")}


def pairs_adjacent(seq, out):
    for i in range(0, len(seq) - 1, 2):
        a, b = seq[i], seq[i + 1]
        if not any(out[j] == a and out[j + 1] == b for j in range(len(out) - 1)):
            return False
    return True


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 30), st.integers(0, 2**32 - 1))
def test_bigram_pairs_survive(n, seed):
    seq = list(range(n))
    out = shuffle_bigram(seq, np.random.default_rng(seed))
    assert sorted(out) == seq
    assert pairs_adjacent(seq, out)


@pytest.fixture(scope="module")
def setup(toy_corpus):
    vocab = build_vocabulary(toy_corpus, size=40)
    return toy_corpus, CorpusSampler(toy_corpus), vocab


def test_training_example_lengths(setup):
    corpus, sampler, vocab = setup
    ref = [f"t{i}" for i in range(10)]
    ex = make_training_example(ref, sampler, vocab, NoiseConfig(), np.random.default_rng(1))
    assert 14 <= len(ex.input_ids) <= 16
    assert len(ex.target_ids) == 11 and ex.countdown_len == 11
    assert ex.target_ids[-1] == EOS_ID


def test_two_pass_oov_numbering():
    vocab = Vocabulary.from_content(["shares", "rose", "on"])
    donors = FixedDonors([["nasdaq"], ["nasdaq"]])
    cfg = NoiseConfig(donors=1)
    for seed in range(20):
        ex = make_training_example(["volvo", "shares", "rose"], donors, vocab, cfg, np.random.default_rng(seed))
        assert ex.oov_table.as_dict() == {1: "volvo", 2: "nasdaq"}
        assert ex.target_ids[0] == vocab.oov_id(1)


def test_training_example_deterministic(setup):
    corpus, sampler, vocab = setup
    a = make_training_example(corpus[3], sampler, vocab, NoiseConfig(), example_rng(9, 0, 3), exclude=3)
    b = make_training_example(corpus[3], sampler, vocab, NoiseConfig(), example_rng(9, 0, 3), exclude=3)
    assert a == b


def test_one_word_reference(setup):
    corpus, sampler, vocab = setup
    ex = make_training_example(["alone"], sampler, vocab, NoiseConfig(), np.random.default_rng(0))
    assert len(ex.input_ids) == 2 and ex.countdown_len == 2


def test_containment_and_band_over_many(setup):
    corpus, sampler, vocab = setup
    cfg = NoiseConfig(shuffle_mode="unigram")
    for i in range(500):
        ref = corpus[i % len(corpus)]
        ex = make_training_example(ref, sampler, vocab, cfg, example_rng(0, 0, i), exclude=i % len(corpus))
        assert not Counter(ex.target_ids[:-1]) - Counter(ex.input_ids)
        lo, hi = cfg.extra_range(len(ref))
        assert len(ref) + lo <= len(ex.input_ids) <= len(ref) + hi
        assert math.ceil(1.4 * len(ref) - 1e-9) <= len(ex.input_ids) or len(ex.input_ids) == len(ref) + lo


def test_empty_reference_rejected(setup):
    _, sampler, vocab = setup
    with pytest.raises(ValueError):
        make_training_example([], sampler, vocab, NoiseConfig(), np.random.default_rng(0))


def test_config_validation():
    with pytest.raises(ValueError):
        NoiseConfig(extension_min=0.7, extension_max=0.6)
    with pytest.raises(ValueError):
        NoiseConfig(donors=0)
