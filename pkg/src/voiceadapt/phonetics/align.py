"""Global phoneme alignment and the word-level similarity score."""

from __future__ import annotations

from dataclasses import dataclass, field

from .features import phoneme_distance
from .lexicon import Lexicon, PhonemeSequence, to_phonemes

INDEL_COST = 1.0


@dataclass(frozen=True)
class Alignment:
    cost: float
    pairs: tuple  # (target phoneme or None, response phoneme or None)
    substitution_cost: float
    insertions: int
    deletions: int


@dataclass(frozen=True)
class SimilarityScore:
    value: float
    alignment: tuple
    cost: float
    breakdown: dict = field(default_factory=dict)
    target: PhonemeSequence | None = None
    response: PhonemeSequence | None = None


def align(a, b, distance=phoneme_distance, indel=INDEL_COST) -> Alignment:
    """Minimum-cost global alignment of two phoneme sequences.

    Substitutions cost ``distance(x, y)``, insertions and deletions cost
    ``indel``.  On equal cost the traceback prefers a substitution, then a
    deletion from ``a``, then an insertion from ``b``.
    """
    a, b = tuple(a), tuple(b)
    n, m = len(a), len(b)
    cost = [[0.0] * (m + 1) for _ in range(n + 1)]
    for i in range(1, n + 1):
        cost[i][0] = i * indel
    for j in range(1, m + 1):
        cost[0][j] = j * indel
    for i in range(1, n + 1):
        ai, row, prev = a[i - 1], cost[i], cost[i - 1]
        for j in range(1, m + 1):
            row[j] = min(prev[j - 1] + distance(ai, b[j - 1]), prev[j] + indel, row[j - 1] + indel)

    pairs, sub, ins, dele = [], 0.0, 0, 0
    i, j = n, m
    while i > 0 or j > 0:
        if i > 0 and j > 0:
            d = distance(a[i - 1], b[j - 1])
            if cost[i][j] == cost[i - 1][j - 1] + d:
                pairs.append((a[i - 1], b[j - 1]))
                sub += d
                i, j = i - 1, j - 1
                continue
        if i > 0 and cost[i][j] == cost[i - 1][j] + indel:
            pairs.append((a[i - 1], None))
            dele += 1
            i -= 1
        else:
            pairs.append((None, b[j - 1]))
            ins += 1
            j -= 1
    pairs.reverse()
    return Alignment(cost[n][m], tuple(pairs), sub, ins, dele)


def sequence_similarity(a, b, distance=phoneme_distance) -> tuple:
    """(score, alignment) for two phoneme sequences."""
    al = align(a, b, distance)
    longest = max(len(a), len(b))
    if longest == 0:
        return 1.0, al
    return min(1.0, max(0.0, 1.0 - al.cost / longest)), al


def similarity(target: str, response: str, lexicon: Lexicon | None = None) -> SimilarityScore:
    """Best score over all pronunciation pairs of the two words."""
    best = None
    for ta in to_phonemes(target, lexicon):
        for rb in to_phonemes(response, lexicon):
            score, al = sequence_similarity(ta.phonemes, rb.phonemes)
            if best is None or score > best[0]:
                best = (score, al, ta, rb)
    score, al, ta, rb = best
    breakdown = {"substitution": al.substitution_cost, "insertions": al.insertions,
                 "deletions": al.deletions, "total": al.cost}
    return SimilarityScore(score, al.pairs, al.cost, breakdown, ta, rb)
