"""ROUGE-1/2/L scoring, corpus reports with length bins, and the ablation grid.

Scoring is case-sensitive over raw tokens: no stemming, no stopword removal,
plain LCS for ROUGE-L with beta = 1.
"""

from __future__ import annotations

import csv
import io
import logging
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

logger = logging.getLogger(__name__)

LENGTH_BINS: tuple[tuple[int, int], ...] = ((16, 30), (31, 45))

System = Callable[[Sequence[str]], list[str]]


@dataclass(frozen=True)
class RougeScore:
    precision: float
    recall: float
    f1: float

    @classmethod
    def from_counts(cls, overlap: int, cand_total: int, ref_total: int) -> "RougeScore":
        p = overlap / cand_total if cand_total else 0.0
        r = overlap / ref_total if ref_total else 0.0
        f1 = 2 * p * r / (p + r) if p + r > 0 else 0.0
        return cls(p, r, f1)


def ngrams(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def rouge_n(candidate: Sequence[str], reference: Sequence[str], n: int) -> RougeScore:
    if n < 1:
        raise ValueError("n must be >= 1")
    cand, ref = ngrams(candidate, n), ngrams(reference, n)
    overlap = sum((cand & ref).values())
    return RougeScore.from_counts(overlap, sum(cand.values()), sum(ref.values()))


def lcs_length(a: Sequence[str], b: Sequence[str]) -> int:
    if len(a) < len(b):
        a, b = b, a
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b, start=1):
            cur.append(prev[j - 1] + 1 if x == y else max(prev[j], cur[j - 1]))
        prev = cur
    return prev[-1]


def rouge_l(candidate: Sequence[str], reference: Sequence[str]) -> RougeScore:
    return RougeScore.from_counts(lcs_length(candidate, reference), len(candidate), len(reference))


@dataclass(frozen=True)
class PairScore:
    r1: RougeScore
    r2: RougeScore
    rl: RougeScore
    ref_len: int
    out_len: int


def score_pair(candidate: Sequence[str], summary: Sequence[str], ref_len: int) -> PairScore:
    return PairScore(
        rouge_n(candidate, summary, 1),
        rouge_n(candidate, summary, 2),
        rouge_l(candidate, summary),
        ref_len,
        len(candidate),
    )


@dataclass(frozen=True)
class Aggregate:
    r1: float
    r2: float
    rl: float
    avg_len: float
    count: int

    @classmethod
    def of(cls, scores: Sequence[PairScore]) -> "Aggregate":
        n = len(scores)
        if n == 0:
            return cls(0.0, 0.0, 0.0, 0.0, 0)
        return cls(
            sum(s.r1.f1 for s in scores) / n,
            sum(s.r2.f1 for s in scores) / n,
            sum(s.rl.f1 for s in scores) / n,
            sum(s.out_len for s in scores) / n,
            n,
        )


@dataclass
class RougeReport:
    system: str
    pairs: list[PairScore]
    outputs: list[list[str]]
    corpus: Aggregate
    bins: dict[tuple[int, int], Aggregate]
    skipped: list[tuple[int, str]] = field(default_factory=list)

    def rows(self) -> list[tuple[str, Aggregate]]:
        out = [(self.system, self.corpus)]
        out += [(f"{self.system}[{lo}-{hi}]", agg) for (lo, hi), agg in self.bins.items()]
        return out


def evaluate(system: System, pairs: Sequence[tuple[Sequence[str], Sequence[str]]], name: str = "system",
             jobs: int = 1, skipped: Sequence[tuple[int, str]] = ()) -> RougeReport:
    """Run ``system`` on each reference and score its output against the summary.

    Pairs whose reference length falls in a length bin also count toward that
    bin; every pair counts toward the corpus aggregate.
    """
    refs = [list(ref) for ref, _ in pairs]
    if jobs > 1:
        with ThreadPoolExecutor(jobs) as pool:
            outputs = list(pool.map(system, refs))
    else:
        outputs = [system(ref) for ref in refs]
    outputs = [list(o) for o in outputs]
    scores = [score_pair(out, summ, len(ref)) for out, (ref, summ) in zip(outputs, pairs)]
    bins = {
        (lo, hi): Aggregate.of([s for s in scores if lo <= s.ref_len <= hi]) for lo, hi in LENGTH_BINS
    }
    return RougeReport(name, scores, outputs, Aggregate.of(scores), bins, list(skipped))


def all_text_system(reference: Sequence[str]) -> list[str]:
    return list(reference)


def report_csv(reports: Sequence[RougeReport]) -> str:
    """CSV with header ``system,r1,r2,rl,avg_len``; scores are F1 x 100."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["system", "r1", "r2", "rl", "avg_len"])
    for rep in reports:
        for label, agg in rep.rows():
            w.writerow([label, f"{100 * agg.r1:.4f}", f"{100 * agg.r2:.4f}", f"{100 * agg.rl:.4f}",
                        f"{agg.avg_len:.4f}"])
    return buf.getvalue()


def report_table(reports: Sequence[RougeReport]) -> str:
    lines = [f"{'system':<32} {'R-1':>7} {'R-2':>7} {'R-L':>7} {'len':>6} {'n':>6}"]
    for rep in reports:
        for label, agg in rep.rows():
            lines.append(
                f"{label:<32} {100 * agg.r1:7.2f} {100 * agg.r2:7.2f} {100 * agg.rl:7.2f} "
                f"{agg.avg_len:6.1f} {agg.count:6d}"
            )
    return "\n".join(lines)


# -- ablation grid --------------------------------------------------------

@dataclass(frozen=True)
class AblationCell:
    shuffle_mode: str
    use_attention: bool
    use_conditioning: bool

    @property
    def label(self) -> str:
        label = "1-g shuf" if self.shuffle_mode == "unigram" else "2-g shuf"
        if self.use_conditioning:
            label += " + sent-emb"
        if not self.use_attention:
            label += " (w/o attn)"
        return label


ABLATION_GRID: tuple[AblationCell, ...] = (
    AblationCell("unigram", False, False),
    AblationCell("bigram", False, False),
    AblationCell("unigram", True, False),
    AblationCell("bigram", True, False),
    AblationCell("unigram", True, True),
    AblationCell("bigram", True, True),
)


@dataclass
class AblationRow:
    cell: AblationCell
    report: RougeReport | None
    error: str | None = None


def run_ablation(cells: Sequence[AblationCell], build_system: Callable[[AblationCell], System],
                 pairs: Sequence[tuple[Sequence[str], Sequence[str]]]) -> list[AblationRow]:
    """Train (via ``build_system``) and evaluate one model per cell.

    A cell whose training or evaluation raises is recorded as an error row;
    the remaining cells still run.
    """
    rows = []
    for cell in cells:
        try:
            system = build_system(cell)
            rows.append(AblationRow(cell, evaluate(system, pairs, name=cell.label)))
        except Exception as exc:  # isolate failures per cell
            logger.exception("ablation cell %s failed", cell.label)
            rows.append(AblationRow(cell, None, f"{type(exc).__name__}: {exc}"))
    return rows


def ablation_csv(rows: Sequence[AblationRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["model", "shuffle", "attention", "conditioning", "r1", "r2", "rl", "avg_len", "status"])
    for row in rows:
        c = row.cell
        head = [c.label, c.shuffle_mode, int(c.use_attention), int(c.use_conditioning)]
        if row.report is None:
            w.writerow(head + ["", "", "", "", f"error: {row.error}"])
        else:
            a = row.report.corpus
            w.writerow(head + [f"{100 * a.r1:.4f}", f"{100 * a.r2:.4f}", f"{100 * a.rl:.4f}",
                               f"{a.avg_len:.4f}", "ok"])
    return buf.getvalue()
