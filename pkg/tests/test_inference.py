import pytest
import torch

from compresso.corpus import EOS_ID, FIRST_OOV_ID, PAD_ID, SOS_ID, UNK_ID, build_vocabulary, random_embeddings
from compresso.inference import DecodeSpec, baseline_f8w, compress, compress_sweep, compress_trace, greedy_decode
from compresso.model import MeanEmbedder, ModelConfig
from compresso.training import build_model


@pytest.fixture(scope="module")
def setup(toy_corpus):
    vocab = build_vocabulary(toy_corpus, size=200)
    emb = random_embeddings(vocab, 8, seed=0)
    model = build_model(vocab, ModelConfig(vocab_size=1, hidden=8, layers=1), emb, seed=0)
    return model, vocab, emb


def sentence(n, vocab):
    words = list(vocab.content)
    return [words[i % len(words)] for i in range(n)]


def with_bias(model, token_id, value=1e4):
    clone = type(model)(model.cfg, model.word_emb.numpy(), seed=0)
    clone.load_state_dict(model.state_dict())
    with torch.no_grad():
        clone.out.bias[token_id] = value
    return clone


def test_resolve():
    assert DecodeSpec(ratio=0.5).resolve(30) == (15, 20)
    assert DecodeSpec(ratio=0.5).resolve(31) == (15, 20)
    assert DecodeSpec(ratio=0.5).resolve(1) == (1, 6)
    assert DecodeSpec(target_len=4, max_steps=4).resolve(30) == (4, 4)
    with pytest.raises(ValueError):
        DecodeSpec(target_len=5, max_steps=3).resolve(10)


def test_half_length_countdown(setup):
    model, vocab, _ = setup
    _, trace = compress_trace(sentence(30, vocab), DecodeSpec(ratio=0.5), model, vocab)
    # declared length 15 + EOS slot = 16; step t is fed 16 - t
    t_dec = trace.countdowns[0] + 1
    assert t_dec == 16
    assert trace.countdowns == [16 - t for t in range(1, len(trace.countdowns) + 1)]
    if len(trace.countdowns) >= 16:
        assert trace.countdowns[15] == 0


def test_countdown_strictly_decreasing_past_zero(setup):
    model, vocab, _ = setup
    trace = greedy_decode(model, [14, 15, 16], t_dec=2, max_steps=6, blocked=[PAD_ID, SOS_ID, EOS_ID])
    assert trace.countdowns == [1, 0, -1, -2, -3, -4]
    assert len(trace.ids) == 6 and not trace.stopped_at_eos


def test_early_eos_stops(setup):
    model, vocab, _ = setup
    eager = with_bias(model, EOS_ID)
    out, trace = compress_trace(sentence(10, vocab), DecodeSpec(target_len=5), eager, vocab)
    assert out == [] and trace.stopped_at_eos and trace.countdowns == [5]


def test_max_steps_cap(setup):
    model, vocab, _ = setup
    never = with_bias(model, EOS_ID, -1e4)
    out = compress(sentence(10, vocab), DecodeSpec(target_len=3), never, vocab)
    assert len(out) == 8
    out = compress(sentence(10, vocab), DecodeSpec(target_len=3, max_steps=4), never, vocab)
    assert len(out) == 4


def test_oov_restored(setup):
    model, vocab, _ = setup
    copier = with_bias(model, FIRST_OOV_ID)
    out = compress(["officials", "xylophonic", "said"], DecodeSpec(target_len=2, max_steps=2), copier, vocab)
    assert out == ["xylophonic", "xylophonic"]


def test_specials_and_unfilled_slots_never_emitted(setup):
    model, vocab, _ = setup
    for bad in (PAD_ID, SOS_ID, UNK_ID, FIRST_OOV_ID + 1):
        m = with_bias(model, bad)
        out = compress(["officials", "xylophonic", "said", "monday"], DecodeSpec(target_len=3), m, vocab)
        assert not any(tok.startswith("<") for tok in out)


def test_empty_input(setup):
    model, vocab, _ = setup
    with pytest.raises(ValueError, match="empty"):
        compress([], DecodeSpec(), model, vocab)


def test_sweep_deterministic_and_capped(setup):
    model, vocab, _ = setup
    sent = sentence(20, vocab)
    a = compress_sweep(sent, [7, 9, 11], model, vocab)
    b = compress_sweep(sent, [7, 9, 11], model, vocab)
    assert a == b
    assert [n for n, _ in a] == [7, 9, 11]
    assert all(len(out) <= n + 5 for n, out in a)


def test_conditioned_model_needs_embedder(setup):
    _, vocab, emb = setup
    model = build_model(vocab, ModelConfig(vocab_size=1, hidden=8, layers=1, use_conditioning=True), emb, seed=0)
    with pytest.raises(ValueError, match="embedder"):
        compress(["officials", "said"], DecodeSpec(), model, vocab)
    out = compress(["officials", "said"], DecodeSpec(), model, vocab, MeanEmbedder(vocab, emb.vectors))
    assert isinstance(out, list)


@pytest.mark.parametrize("n", [0, 1, 7, 8, 9, 40])
def test_first_eight_words(n):
    sent = [f"t{i}" for i in range(n)]
    assert baseline_f8w(sent) == sent[:8]
    assert len(baseline_f8w(sent)) == min(n, 8)
