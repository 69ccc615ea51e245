"""Deterministic toy news-like corpora for smoke tests and demos."""

from __future__ import annotations

import numpy as np

SUBJECTS = [
    ["officials"], ["police"], ["the", "company"], ["the", "minister"], ["rebels"],
    ["the", "president"], ["investors"], ["the", "bank"], ["workers"], ["the", "court"],
]
VERBS = ["said", "reported", "rejected", "announced", "approved", "criticized", "denied", "welcomed"]
OBJECTS = [
    ["the", "plan"], ["a", "new", "deal"], ["the", "budget"], ["higher", "taxes"], ["the", "talks"],
    ["the", "report"], ["a", "ceasefire"], ["the", "merger"], ["strong", "profits"], ["the", "election"],
]
PLACES = ["in", "paris"], ["in", "tokyo"], ["in", "moscow"], ["near", "the", "border"], ["at", "the", "summit"]
DAYS = ["monday", "tuesday", "wednesday", "thursday", "friday", "saturday", "sunday"]
FILLERS = [
    ["after", "weeks", "of", "debate"], ["despite", "strong", "opposition"], ["according", "to", "sources"],
    ["amid", "growing", "concern"], ["for", "the", "first", "time"], ["as", "expected"],
]
NAMES = ["zorvath", "quelling", "brastow", "ilmaren", "dovrik", "yastrel", "kenmoor", "faluchi"]


def toy_sentence(rng: np.random.Generator, long: bool = False) -> list[str]:
    def pick(options):
        return list(options[int(rng.integers(len(options)))])

    sent = pick(SUBJECTS)
    if rng.random() < 0.3:
        sent = [NAMES[int(rng.integers(len(NAMES)))]]
    sent += [VERBS[int(rng.integers(len(VERBS)))]]
    sent += pick(OBJECTS)
    if rng.random() < 0.6:
        sent += pick(PLACES)
    sent += ["on", DAYS[int(rng.integers(len(DAYS)))]]
    extra = int(rng.integers(2, 6)) if long else int(rng.random() < 0.4)
    for _ in range(extra):
        sent += pick(FILLERS)
    return sent + ["."]


def toy_corpus(n: int, seed: int = 0, long: bool = False) -> list[list[str]]:
    rng = np.random.default_rng(seed)
    return [toy_sentence(rng, long) for _ in range(n)]


def toy_pairs(n: int, seed: int = 0) -> list[tuple[list[str], list[str]]]:
    """Reference / headline pairs; references span roughly 10 to 45 tokens."""
    rng = np.random.default_rng(seed)
    pairs = []
    for i in range(n):
        ref = toy_sentence(rng, long=i % 3 != 0)
        if i % 2:
            ref = ref[:-1] + [","] + toy_sentence(rng)
        # headline: subject, verb and object words without function words
        headline = [w for w in ref[: min(len(ref), 8)] if w not in ("the", "a", "on", "in", ".")]
        pairs.append((ref, headline))
    return pairs
