"""Sentence-level BLEU with best-of-references selection.

Modified n-gram precisions are kept as exact fractions until the final
root, so hand-derivable fixtures (identity -> 100, the classic
"a b x d" BLEU-2 -> 50) come out exact rather than within-epsilon.
Smoothing: a zero precision becomes 1/(2 * candidate n-gram count).
A candidate shorter than n has no n-grams at all and scores 0.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from fractions import Fraction

from .errors import DataError


def _ngrams(tokens: list[str], n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def bleu_n(candidate: list[str], reference: list[str], n: int) -> float:
    """BLEU-n of one candidate against one reference, on the 0-100 scale."""
    if n < 1:
        raise DataError(f"n must be >= 1, got {n}")
    cand = list(candidate)
    ref = list(reference)
    if not cand or len(cand) < n:
        return 0.0

    product = Fraction(1)
    for order in range(1, n + 1):
        cand_counts = _ngrams(cand, order)
        ref_counts = _ngrams(ref, order)
        total = sum(cand_counts.values())
        clipped = sum(min(c, ref_counts[g]) for g, c in cand_counts.items())
        if clipped == 0:
            product *= Fraction(1, 2 * total)
        else:
            product *= Fraction(clipped, total)

    c, r = len(cand), len(ref)
    bp = 1.0 if c >= r else math.exp(1.0 - r / c)
    return 100.0 * bp * float(product) ** (1.0 / n)


def bleu_best_reference(candidate: list[str], references: list[list[str]],
                        n: int) -> float:
    if not references:
        raise DataError("bleu_best_reference needs at least one reference")
    return max(bleu_n(candidate, ref, n) for ref in references)


@dataclass
class BleuReport:
    """Per-sentence best-reference scores and their means, for each n."""

    ns: tuple[int, ...]
    per_sentence: dict[int, list[float]]
    aggregate: dict[int, float]


def evaluate_corpus(outputs: list[list[str]],
                    references: list[list[list[str]]],
                    ns: tuple[int, ...] = (2, 3, 4)) -> BleuReport:
    """Best-reference BLEU per sentence, mean-aggregated per n."""
    if len(outputs) != len(references):
        raise DataError(
            f"{len(outputs)} outputs vs {len(references)} reference sets")
    if not outputs:
        raise DataError("evaluate_corpus needs at least one sentence")
    for refs in references:
        if not refs:
            raise DataError("every action needs at least one reference")
    per_sentence = {n: [bleu_best_reference(out, refs, n)
                        for out, refs in zip(outputs, references)]
                    for n in ns}
    aggregate = {n: sum(scores) / len(scores)
                 for n, scores in per_sentence.items()}
    return BleuReport(ns=tuple(ns), per_sentence=per_sentence,
                      aggregate=aggregate)


def metrics_csv(rows: list[tuple[str, int, int, float]]) -> str:
    """`variant,fold,n,score` lines; scores rendered with repr precision
    so a rerun of the same experiment compares bit-exactly."""
    lines = ["variant,fold,n,score"]
    for variant, fold, n, score in rows:
        lines.append(f"{variant},{fold},{n},{score!r}")
    return "\n".join(lines) + "\n"


def results_markdown(table: dict[str, dict[int, float]],
                     ns: tuple[int, ...] = (2, 3, 4)) -> str:
    """Mean-over-folds results as a Markdown table, one row per variant."""
    header = "| Method | " + " | ".join(f"BLEU-{n}" for n in ns) + " |"
    sep = "|" + "---|" * (len(ns) + 1)
    lines = [header, sep]
    for variant, scores in table.items():
        cells = " | ".join(f"{scores[n]:.1f}" for n in ns)
        lines.append(f"| {variant} | {cells} |")
    return "\n".join(lines) + "\n"
