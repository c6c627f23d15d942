"""Character n-gram fuzzy string matcher.

Scores pairs of strings by cosine similarity over padded character trigram
count vectors (bigrams for very short strings), used to find variant mentions
of known phrases in free text.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass

DEFAULT_THRESHOLD = 0.6

# Scores closer than this are treated as tied and re-ranked by edit distance.
_SCORE_TIE = 1e-6

_PAD = "#"


@dataclass(frozen=True)
class MatchResult:
    candidate_index: int
    score: float


def normalize(text: str) -> str:
    """Lowercase, drop characters that are neither letters, digits nor spaces,
    and collapse whitespace runs."""
    text = " ".join(text.lower().split())
    text = "".join(ch for ch in text if ch.isalnum() or ch == " ")
    return " ".join(text.split())


def _gram_counts(text: str, n: int) -> Counter[str]:
    padded = _PAD + text + _PAD
    return Counter(padded[i : i + n] for i in range(len(padded) - n + 1))


def similarity(a: str, b: str) -> float:
    """Cosine similarity of character n-gram count vectors, in [0, 1].

    Both strings are normalized first; two empty normalizations score 1.0,
    one empty scores 0.0. Trigrams are used unless either normalized string
    is shorter than 3 characters, in which case both fall back to bigrams.
    """
    na, nb = normalize(a), normalize(b)
    if not na and not nb:
        return 1.0
    if not na or not nb:
        return 0.0
    n = 3 if len(na) >= 3 and len(nb) >= 3 else 2
    ca = _gram_counts(na, n)
    cb = _gram_counts(nb, n)
    dot = sum(count * cb[g] for g, count in ca.items())
    if dot == 0:
        return 0.0
    norm_a = sum(c * c for c in ca.values())
    norm_b = sum(c * c for c in cb.values())
    return dot / math.sqrt(norm_a * norm_b)


def levenshtein(a: str, b: str) -> int:
    if len(a) < len(b):
        a, b = b, a
    previous = list(range(len(b) + 1))
    for i, ch_a in enumerate(a, start=1):
        current = [i]
        for j, ch_b in enumerate(b, start=1):
            cost = 0 if ch_a == ch_b else 1
            current.append(min(previous[j] + 1, current[j - 1] + 1, previous[j - 1] + cost))
        previous = current
    return previous[-1]


def _levenshtein_similarity(a: str, b: str) -> float:
    longest = max(len(a), len(b))
    if longest == 0:
        return 1.0
    return 1.0 - levenshtein(a, b) / longest


def best_match(
    target: str, candidates: list[str], threshold: float = DEFAULT_THRESHOLD
) -> MatchResult | None:
    """Highest-cosine candidate, or None if the winner scores below threshold.

    Candidates whose scores lie within 1e-6 of the best are treated as tied
    and re-ranked by normalized Levenshtein similarity, then by earlier index.
    The tie-break runs before the threshold test, so raising the threshold can
    only suppress the winner, never change it.
    """
    if not 0.0 <= threshold <= 1.0:
        raise ValueError(f"threshold must be in [0, 1], got {threshold}")
    if not candidates:
        return None
    scores = [similarity(target, c) for c in candidates]
    best = max(scores)
    tied = [i for i, s in enumerate(scores) if s >= best - _SCORE_TIE]
    if len(tied) > 1:
        norm_target = normalize(target)
        tied.sort(
            key=lambda i: (-_levenshtein_similarity(norm_target, normalize(candidates[i])), i)
        )
    winner = tied[0]
    if scores[winner] < threshold:
        return None
    return MatchResult(winner, scores[winner])
