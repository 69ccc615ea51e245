"""Slow reference implementations used to cross-check the scorers."""

from itertools import combinations


def brute_overlap(cand, ref, n):
    cgrams = [tuple(cand[i:i + n]) for i in range(len(cand) - n + 1)]
    rgrams = [tuple(ref[i:i + n]) for i in range(len(ref) - n + 1)]
    # greedy one-to-one matching; for multisets this equals the clipped count
    pool = list(rgrams)
    hits = 0
    for g in cgrams:
        if g in pool:
            pool.remove(g)
            hits += 1
    return hits, len(cgrams), len(rgrams)


def is_subsequence(sub, seq):
    it = iter(seq)
    return all(tok in it for tok in sub)


def brute_lcs(a, b):
    for k in range(min(len(a), len(b)), 0, -1):
        if any(is_subsequence([a[i] for i in idx], b) for idx in combinations(range(len(a)), k)):
            return k
    return 0


def f1(overlap, c_total, r_total):
    p = overlap / c_total if c_total else 0.0
    r = overlap / r_total if r_total else 0.0
    return (p, r, 2 * p * r / (p + r) if p + r else 0.0)


def random_pair(rng, alphabet="abcde", max_len=8):
    def sent():
        return [alphabet[int(i)] for i in rng.integers(len(alphabet), size=int(rng.integers(0, max_len + 1)))]
    return sent(), sent()
