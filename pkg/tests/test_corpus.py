import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from compresso.corpus import (
    EOS_ID,
    SOS_ID,
    UNK,
    UNK_ID,
    CorpusError,
    OovTable,
    Vocabulary,
    build_vocabulary,
    decode_with_oov,
    encode_with_oov,
    load_embeddings,
    read_pairs,
)


def brute_force_ranking(corpus):
    """Frequency order with first-occurrence tie-break, by explicit scanning."""
    first_seen, counts = {}, {}
    pos = 0
    for sent in corpus:
        for tok in sent:
            counts[tok] = counts.get(tok, 0) + 1
            first_seen.setdefault(tok, pos)
            pos += 1
    return sorted(counts, key=lambda t: (-counts[t], first_seen[t]))


def test_build_vocabulary_tie_break_and_truncation():
    vocab = build_vocabulary([["a", "b", "a"], ["b", "c"]], size=2)
    assert vocab.content == ("a", "b")
    assert "c" not in vocab.id_of


def test_build_vocabulary_fewer_distinct_than_size():
    vocab = build_vocabulary([["x"]], size=20000)
    assert vocab.content == ("x",)


def test_build_vocabulary_empty_corpus():
    with pytest.raises(CorpusError, match="empty corpus"):
        build_vocabulary([], size=5)


def test_specials_are_contiguous_prefix():
    vocab = build_vocabulary([["a", "b"]], size=10)
    assert vocab.tokens[: vocab.num_special] == ("<pad>", "<s>", "</s>", "<unk>") + tuple(
        f"<oov{k}>" for k in range(1, 11)
    )
    assert vocab.num_special == 14
    assert vocab.id_of["a"] == 14


@settings(max_examples=60, deadline=None)
@given(st.lists(st.lists(st.sampled_from("abcdefgh"), min_size=1, max_size=8), min_size=1, max_size=10),
       st.integers(1, 10))
def test_vocabulary_order_matches_brute_force(corpus, size):
    vocab = build_vocabulary(corpus, size=size)
    expected = brute_force_ranking(corpus)[:size]
    assert list(vocab.content) == expected
    for i, tok in enumerate(vocab.tokens):
        assert vocab.id_of[tok] == i


def test_encode_numbers_oov_in_order():
    vocab = Vocabulary.from_content(["bought", "from"])
    ids, table = encode_with_oov("volvo bought gigaword from volvo".split(), vocab)
    assert ids == [vocab.oov_id(1), vocab.id_of["bought"], vocab.oov_id(2), vocab.id_of["from"], vocab.oov_id(1)]
    assert table.as_dict() == {1: "volvo", 2: "gigaword"}
    assert decode_with_oov(ids, vocab, table) == "volvo bought gigaword from volvo".split()


def test_encode_all_in_vocab():
    vocab = Vocabulary.from_content(["a", "b"])
    ids, table = encode_with_oov(["b", "a"], vocab)
    assert ids == [15, 14]
    assert len(table) == 0


def test_encode_overflow_to_unk():
    vocab = Vocabulary.from_content(["a"])
    words = [f"n{i}" for i in range(11)]
    ids, table = encode_with_oov(words, vocab, max_oov=10)
    assert ids[:10] == [vocab.oov_id(k) for k in range(1, 11)]
    assert ids[10] == UNK_ID
    assert len(table) == 10


def test_encode_extends_existing_table():
    vocab = Vocabulary.from_content(["a"])
    _, table = encode_with_oov(["x", "a"], vocab)
    ids, table = encode_with_oov(["y", "x"], vocab, table=table)
    assert table.as_dict() == {1: "x", 2: "y"}
    assert ids == [vocab.oov_id(2), vocab.oov_id(1)]


def test_decode_missing_slot_is_unk():
    vocab = Vocabulary.from_content(["a"])
    out = decode_with_oov([vocab.oov_id(3), vocab.id_of["a"]], vocab, OovTable(("p", "q")))
    assert out == [UNK, "a"]


def test_decode_plain_lookup():
    vocab = Vocabulary.from_content(["a", "b"])
    assert decode_with_oov([14, 15, 14], vocab, OovTable()) == ["a", "b", "a"]
    assert decode_with_oov([SOS_ID, EOS_ID], vocab, OovTable()) == ["<s>", "</s>"]


def test_literal_unk_in_input_maps_to_unk_id():
    vocab = build_vocabulary([["a", "<unk>", "b"]], size=10)
    assert "<unk>" not in vocab.content
    ids, table = encode_with_oov(["a", "<unk>"], vocab)
    assert ids[1] == UNK_ID and len(table) == 0


@settings(max_examples=100, deadline=None)
@given(st.lists(st.sampled_from([f"v{i}" for i in range(5)] + [f"o{i}" for i in range(10)]), min_size=1, max_size=25))
def test_round_trip_property(sentence):
    vocab = Vocabulary.from_content([f"v{i}" for i in range(5)])
    ids, table = encode_with_oov(sentence, vocab)
    assert decode_with_oov(ids, vocab, table) == sentence
    assert encode_with_oov(sentence, vocab) == (ids, table)


def test_vocab_file_round_trip(tmp_path):
    vocab = build_vocabulary([["a", "b", "a"], ["c"]], size=10, num_oov=3)
    path = tmp_path / "v.txt"
    vocab.save(path)
    assert path.read_text().splitlines()[0] == f"compresso-vocab v1 {len(vocab)}"
    assert Vocabulary.load(path) == vocab
    assert Vocabulary.load(path).num_oov == 3


def _write_embeddings(path, rows):
    path.write_text("".join(w + " " + " ".join(f"{x:.4f}" for x in v) + "\n" for w, v in rows))


def test_load_embeddings_all_found(tmp_path):
    vocab = Vocabulary.from_content(["a", "b"])
    path = tmp_path / "e.txt"
    _write_embeddings(path, [("a", [1, 2, 3]), ("zzz", [0, 0, 0]), ("b", [4, 5, 6])])
    emb = load_embeddings(path, vocab)
    assert emb.dim == 3
    np.testing.assert_array_equal(emb.vectors[vocab.id_of["a"]], [1, 2, 3])
    np.testing.assert_array_equal(emb.vectors[vocab.id_of["b"]], [4, 5, 6])
    assert not emb.vectors[: vocab.num_special].any()
    assert emb.found[vocab.id_of["a"]] and emb.found[vocab.id_of["b"]]


def test_load_embeddings_missing_word_is_seeded(tmp_path):
    vocab = Vocabulary.from_content(["a", "w"])
    path = tmp_path / "e.txt"
    _write_embeddings(path, [("a", [1, -1]), ("x", [3, 1]), ("y", [-1, 3])])
    first = load_embeddings(path, vocab, seed=7)
    second = load_embeddings(path, vocab, seed=7)
    w = vocab.id_of["w"]
    assert not first.found[w]
    assert first.vectors[w].any()
    np.testing.assert_array_equal(first.vectors[w], second.vectors[w])


def test_load_embeddings_dimension_mismatch(tmp_path):
    vocab = Vocabulary.from_content(["a"])
    path = tmp_path / "e.txt"
    _write_embeddings(path, [("a", np.zeros(50)), ("b", np.zeros(51))])
    with pytest.raises(CorpusError, match="dimension mismatch"):
        load_embeddings(path, vocab)


def test_load_embeddings_unreadable(tmp_path):
    with pytest.raises(CorpusError):
        load_embeddings(tmp_path / "missing.txt", Vocabulary.from_content(["a"]))


def test_read_pairs_reports_malformed_lines(tmp_path):
    path = tmp_path / "p.tsv"
    path.write_text("a b\tc\nno tab here\nx\t\n\nd e\tf g\n")
    pairs, errors = read_pairs(path)
    assert pairs == [(["a", "b"], ["c"]), (["d", "e"], ["f", "g"])]
    assert [lineno for lineno, _ in errors] == [2, 3]
