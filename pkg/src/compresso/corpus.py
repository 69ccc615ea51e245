"""Corpus ingestion, vocabulary construction and numbered-OOV encoding.

Sentences are pre-tokenized and whitespace separated; tokens are used
verbatim (no lowercasing, no internal tokenizer).
"""

from __future__ import annotations

import logging
import os
import re
import tempfile
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

logger = logging.getLogger(__name__)

PAD = "<pad>"
SOS = "<s>"
EOS = "</s>"
UNK = "<unk>"
DEFAULT_NUM_OOV = 10
DEFAULT_VOCAB_SIZE = 20000
VOCAB_HEADER = "compresso-vocab v1"

PAD_ID, SOS_ID, EOS_ID, UNK_ID = 0, 1, 2, 3
FIRST_OOV_ID = 4

_OOV_LITERAL = re.compile(r"^<oov\d+>$")

TokenSeq = list  # list[str]; a whitespace-tokenized sentence


class CorpusError(ValueError):
    pass


def oov_literal(k: int) -> str:
    return f"<oov{k}>"


def is_reserved(token: str) -> bool:
    return token in (PAD, SOS, EOS, UNK) or bool(_OOV_LITERAL.match(token))


def tokenize(line: str) -> list[str]:
    return line.split()


def read_corpus(path: str | os.PathLike) -> list[list[str]]:
    """Read a one-sentence-per-line corpus, skipping blank lines."""
    with open(path, encoding="utf-8") as f:
        return [toks for toks in (tokenize(line) for line in f) if toks]


def read_pairs(path: str | os.PathLike) -> tuple[list[tuple[list[str], list[str]]], list[tuple[int, str]]]:
    """Read ``reference<TAB>summary`` lines.

    Returns the well-formed pairs and a list of ``(line_number, reason)`` for
    the lines that were skipped.
    """
    pairs, errors = [], []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.rstrip("\n").rstrip("\r")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                errors.append((lineno, f"expected 2 tab-separated fields, got {len(parts)}"))
                continue
            ref, summ = tokenize(parts[0]), tokenize(parts[1])
            if not ref or not summ:
                errors.append((lineno, "empty reference or summary"))
                continue
            pairs.append((ref, summ))
    for lineno, reason in errors:
        logger.warning("%s:%d: skipped malformed line (%s)", path, lineno, reason)
    return pairs, errors


@dataclass(frozen=True)
class Vocabulary:
    """Frozen id space: specials first, then content words by frequency.

    Layout: ``<pad> <s> </s> <unk> <oov1> .. <oovM>`` followed by the content
    words.
    """

    tokens: tuple[str, ...]
    num_oov: int = DEFAULT_NUM_OOV
    id_of: dict[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        expected = specials(self.num_oov)
        if tuple(self.tokens[: len(expected)]) != expected:
            raise CorpusError("vocabulary does not start with the reserved specials")
        id_of = {tok: i for i, tok in enumerate(self.tokens)}
        if len(id_of) != len(self.tokens):
            raise CorpusError("duplicate token in vocabulary")
        object.__setattr__(self, "id_of", id_of)

    @classmethod
    def from_content(cls, content: Sequence[str], num_oov: int = DEFAULT_NUM_OOV) -> "Vocabulary":
        return cls(specials(num_oov) + tuple(content), num_oov)

    def __len__(self) -> int:
        return len(self.tokens)

    @property
    def num_special(self) -> int:
        return FIRST_OOV_ID + self.num_oov

    @property
    def size_content(self) -> int:
        return len(self.tokens) - self.num_special

    @property
    def content(self) -> tuple[str, ...]:
        return self.tokens[self.num_special:]

    def token_of(self, idx: int) -> str:
        return self.tokens[idx]

    def oov_id(self, k: int) -> int:
        """Id of the k-th numbered OOV token (1-based)."""
        if not 1 <= k <= self.num_oov:
            raise IndexError(f"OOV index {k} outside 1..{self.num_oov}")
        return FIRST_OOV_ID + k - 1

    def oov_index(self, idx: int) -> int | None:
        """Inverse of :meth:`oov_id`; ``None`` for non-OOV ids."""
        if FIRST_OOV_ID <= idx < FIRST_OOV_ID + self.num_oov:
            return idx - FIRST_OOV_ID + 1
        return None

    def is_content(self, idx: int) -> bool:
        return idx >= self.num_special

    def save(self, path: str | os.PathLike) -> None:
        lines = [f"{VOCAB_HEADER} {len(self.tokens)}", *self.tokens]
        atomic_write_text(path, "\n".join(lines) + "\n")

    @classmethod
    def load(cls, path: str | os.PathLike) -> "Vocabulary":
        with open(path, encoding="utf-8") as f:
            lines = f.read().split("\n")
        header = lines[0].rsplit(" ", 1)
        if len(header) != 2 or header[0] != VOCAB_HEADER:
            raise CorpusError(f"{path}: not a vocabulary file (header {lines[0]!r})")
        size = int(header[1])
        tokens = lines[1 : 1 + size]
        if len(tokens) != size:
            raise CorpusError(f"{path}: truncated vocabulary ({len(tokens)} of {size} tokens)")
        num_oov = sum(1 for t in tokens if _OOV_LITERAL.match(t))
        return cls(tuple(tokens), num_oov)


def specials(num_oov: int = DEFAULT_NUM_OOV) -> tuple[str, ...]:
    return (PAD, SOS, EOS, UNK) + tuple(oov_literal(k) for k in range(1, num_oov + 1))


def build_vocabulary(
    corpus: Iterable[Sequence[str]],
    size: int = DEFAULT_VOCAB_SIZE,
    num_oov: int = DEFAULT_NUM_OOV,
) -> Vocabulary:
    """Keep the ``size`` most frequent tokens; ties go to the earlier-seen token.

    Reserved literals occurring in the corpus (e.g. ``<unk>`` left by upstream
    preprocessing) are never counted as content words.
    """
    if size < 1:
        raise ValueError("vocabulary size must be >= 1")
    counts: Counter[str] = Counter()
    n_sentences = 0
    for sent in corpus:
        n_sentences += 1
        counts.update(tok for tok in sent if not is_reserved(tok))
    if n_sentences == 0 or not counts:
        raise CorpusError("empty corpus")
    # Counter preserves insertion order, and sorted() is stable, so equal
    # counts keep first-occurrence order.
    ranked = sorted(counts, key=counts.__getitem__, reverse=True)
    return Vocabulary.from_content(ranked[:size], num_oov)


@dataclass(frozen=True)
class OovTable:
    """Numbered OOV slots for one sentence; ``slots[k - 1]`` is the word of OOV_k."""

    slots: tuple[str, ...] = ()

    def __len__(self) -> int:
        return len(self.slots)

    def word(self, k: int) -> str | None:
        return self.slots[k - 1] if 1 <= k <= len(self.slots) else None

    def index(self, word: str) -> int | None:
        try:
            return self.slots.index(word) + 1
        except ValueError:
            return None

    def as_dict(self) -> dict[int, str]:
        return {k: w for k, w in enumerate(self.slots, start=1)}


def encode_with_oov(
    sentence: Sequence[str],
    vocab: Vocabulary,
    max_oov: int | None = None,
    table: OovTable | None = None,
) -> tuple[list[int], OovTable]:
    """Map tokens to ids, numbering OOV words in order of first appearance.

    Passing an existing ``table`` extends it (a second numbering pass); its
    slots keep their indices. OOV words beyond ``max_oov`` distinct slots
    encode as ``<unk>``, as does a literal ``<unk>`` token in the input.
    """
    max_oov = vocab.num_oov if max_oov is None else min(max_oov, vocab.num_oov)
    slots = list(table.slots) if table is not None else []
    slot_of = {w: k for k, w in enumerate(slots, start=1)}
    ids = []
    for tok in sentence:
        idx = vocab.id_of.get(tok)
        if idx is not None and vocab.is_content(idx):
            ids.append(idx)
            continue
        if tok == UNK or is_reserved(tok):
            ids.append(UNK_ID)
            continue
        k = slot_of.get(tok)
        if k is None and len(slots) < max_oov:
            slots.append(tok)
            k = slot_of[tok] = len(slots)
        ids.append(vocab.oov_id(k) if k is not None else UNK_ID)
    return ids, OovTable(tuple(slots))


def decode_with_oov(ids: Iterable[int], vocab: Vocabulary, table: OovTable) -> list[str]:
    out = []
    for idx in ids:
        k = vocab.oov_index(idx)
        if k is None:
            out.append(vocab.tokens[idx])
        else:
            word = table.word(k)
            out.append(word if word is not None else UNK)
    return out


@dataclass(frozen=True)
class EmbeddingMatrix:
    """Frozen word vectors, one row per vocabulary id.

    Special rows are zero here; the model keeps trainable vectors for them.
    """

    vectors: np.ndarray
    found: np.ndarray  # bool per id: row came from the embedding file

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]


def random_embeddings(vocab: Vocabulary, dim: int, seed: int = 0, scale: float | np.ndarray | None = None) -> EmbeddingMatrix:
    """Seeded Gaussian rows for every content id (used when no file is given)."""
    if scale is None:
        scale = 1.0 / np.sqrt(dim)
    rng = np.random.default_rng(seed)
    vectors = rng.standard_normal((len(vocab), dim)) * scale
    vectors[: vocab.num_special] = 0.0
    return EmbeddingMatrix(vectors, np.zeros(len(vocab), dtype=bool))


def load_embeddings(path: str | os.PathLike, vocab: Vocabulary, seed: int = 0) -> EmbeddingMatrix:
    """Load a textual ``word v1 .. vD`` file (GloVe format) for ``vocab``.

    Content words missing from the file get seeded Gaussian rows scaled to the
    per-dimension standard deviation of the file vectors.
    """
    dim = None
    total = total_sq = None
    n = 0
    rows: dict[int, np.ndarray] = {}
    try:
        f = open(path, encoding="utf-8")
    except OSError as exc:
        raise CorpusError(f"cannot read embedding file {path}: {exc}") from exc
    with f:
        for lineno, line in enumerate(f, start=1):
            parts = line.rstrip().split(" ")
            if len(parts) == 1 and not parts[0]:
                continue
            if dim is None:
                dim = len(parts) - 1
                if dim < 1:
                    raise CorpusError(f"{path}:{lineno}: no vector components")
                total, total_sq = np.zeros(dim), np.zeros(dim)
            elif len(parts) - 1 != dim:
                raise CorpusError(
                    f"{path}:{lineno}: dimension mismatch ({len(parts) - 1} components, expected {dim})"
                )
            try:
                vec = np.asarray(parts[1:], dtype=np.float64)
            except ValueError as exc:
                raise CorpusError(f"{path}:{lineno}: malformed vector") from exc
            total += vec
            total_sq += vec * vec
            n += 1
            idx = vocab.id_of.get(parts[0])
            if idx is not None and vocab.is_content(idx) and idx not in rows:
                rows[idx] = vec
    if dim is None:
        raise CorpusError(f"{path}: empty embedding file")
    mean = total / n
    std = np.sqrt(np.maximum(total_sq / n - mean * mean, 0.0))
    std[std == 0] = 1.0 / np.sqrt(dim)
    matrix = random_embeddings(vocab, dim, seed=seed, scale=std)
    found = np.zeros(len(vocab), dtype=bool)
    for idx, vec in rows.items():
        matrix.vectors[idx] = vec
        found[idx] = True
    missing = vocab.size_content - len(rows)
    if missing:
        logger.info("%d of %d vocabulary words missing from %s; using seeded random rows",
                    missing, vocab.size_content, path)
    return EmbeddingMatrix(matrix.vectors, found)


def atomic_write_text(path: str | os.PathLike, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def atomic_write_bytes(path: str | os.PathLike, data: bytes) -> None:
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
