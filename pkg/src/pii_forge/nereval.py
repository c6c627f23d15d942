"""Four-scheme NER scoring with half-credit semantics.

Schemes, ordered by strictness: strict (tag and boundary must match), exact
(boundary only), type (strict, or half credit for overlapping same-tag
spans), partial (strict, or half credit for any overlap). Predictions and
gold spans are paired greedily by token overlap once; the same pairing is
scored under every scheme.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from typing import Mapping, Sequence

from .corpus import Corpus, EntitySpan, TagClass
from .errors import DataError


class Scheme(str, Enum):
    STRICT = "strict"
    EXACT = "exact"
    TYPE = "type"
    PARTIAL = "partial"


class AlignmentError(DataError):
    """Prediction and gold corpora cover different sentences."""


def _overlap(a: EntitySpan, b: EntitySpan) -> int:
    return max(0, min(a.end_token, b.end_token) - max(a.start_token, b.start_token))


def pair_credit(pred: EntitySpan, gold: EntitySpan, scheme: Scheme) -> float:
    """Credit in {0, 0.5, 1} for one prediction/gold pair."""
    same_tag = pred.tag == gold.tag
    same_bounds = (
        pred.start_token == gold.start_token and pred.end_token == gold.end_token
    )
    overlaps = _overlap(pred, gold) > 0
    if scheme is Scheme.STRICT:
        return 1.0 if same_tag and same_bounds else 0.0
    if scheme is Scheme.EXACT:
        return 1.0 if same_bounds else 0.0
    if scheme is Scheme.TYPE:
        if same_tag and same_bounds:
            return 1.0
        return 0.5 if same_tag and overlaps else 0.0
    if same_tag and same_bounds:  # PARTIAL
        return 1.0
    return 0.5 if overlaps else 0.0


@dataclass
class Pairing:
    pairs: list[tuple[EntitySpan, EntitySpan]]
    unmatched_pred: list[EntitySpan]
    unmatched_gold: list[EntitySpan]


def match_entities(
    preds: Sequence[EntitySpan], golds: Sequence[EntitySpan]
) -> Pairing:
    """One-to-one pairing within a sentence.

    Pairs are chosen greedily by descending token overlap; ties prefer the
    earlier gold start, then tag equality, then the earlier prediction.
    Zero-overlap pairs are never formed.
    """
    ranked = []
    for pi, pred in enumerate(preds):
        for gi, gold in enumerate(golds):
            ov = _overlap(pred, gold)
            if ov > 0:
                ranked.append(
                    (
                        -ov,
                        gold.start_token,
                        0 if pred.tag == gold.tag else 1,
                        pred.start_token,
                        pi,
                        gi,
                    )
                )
    ranked.sort()
    used_pred: set[int] = set()
    used_gold: set[int] = set()
    pairs = []
    for _, _, _, _, pi, gi in ranked:
        if pi in used_pred or gi in used_gold:
            continue
        used_pred.add(pi)
        used_gold.add(gi)
        pairs.append((preds[pi], golds[gi]))
    return Pairing(
        pairs,
        [p for i, p in enumerate(preds) if i not in used_pred],
        [g for i, g in enumerate(golds) if i not in used_gold],
    )


@dataclass
class ClassMetrics:
    precision: float
    recall: float
    f1: float
    n_pred: int
    n_gold: int
    credit: float

    def to_dict(self) -> dict:
        return {
            "p": self.precision,
            "r": self.recall,
            "f1": self.f1,
            "n_pred": self.n_pred,
            "n_gold": self.n_gold,
        }


def _metrics(n_pred: int, n_gold: int, credit: float) -> ClassMetrics:
    if n_pred == 0 and n_gold == 0:
        return ClassMetrics(1.0, 1.0, 1.0, 0, 0, 0.0)
    p = credit / n_pred if n_pred else 0.0
    r = credit / n_gold if n_gold else 0.0
    f1 = 2 * p * r / (p + r) if p + r > 0 else 0.0
    return ClassMetrics(p, r, f1, n_pred, n_gold, credit)


class _Tally:
    __slots__ = ("n_pred", "n_gold", "credit")

    def __init__(self):
        self.n_pred = 0
        self.n_gold = 0
        self.credit = 0.0


def _score_pairings(
    pairings: Sequence[Pairing], scheme: Scheme
) -> dict[str, ClassMetrics]:
    """Per-class metrics plus micro and macro aggregates for one scheme.

    A matched pair is accounted under the gold span's class even when the
    predicted tag differs (the matcher decided this prediction answers that
    gold), which keeps per-class credit bounded by min(n_pred, n_gold).
    """
    per_class: dict[TagClass, _Tally] = {t: _Tally() for t in TagClass}
    for pairing in pairings:
        for pred, gold in pairing.pairs:
            tally = per_class[gold.tag]
            tally.n_pred += 1
            tally.n_gold += 1
            tally.credit += pair_credit(pred, gold, scheme)
        for pred in pairing.unmatched_pred:
            per_class[pred.tag].n_pred += 1
        for gold in pairing.unmatched_gold:
            per_class[gold.tag].n_gold += 1

    out: dict[str, ClassMetrics] = {}
    active = []
    for tag in TagClass:
        tally = per_class[tag]
        if tally.n_pred == 0 and tally.n_gold == 0:
            continue
        metrics = _metrics(tally.n_pred, tally.n_gold, tally.credit)
        out[tag.value] = metrics
        active.append(metrics)

    out["micro"] = _metrics(
        sum(m.n_pred for m in active),
        sum(m.n_gold for m in active),
        sum(m.credit for m in active),
    )
    if active:
        k = len(active)
        out["macro"] = ClassMetrics(
            sum(m.precision for m in active) / k,
            sum(m.recall for m in active) / k,
            sum(m.f1 for m in active) / k,
            sum(m.n_pred for m in active),
            sum(m.n_gold for m in active),
            sum(m.credit for m in active),
        )
    else:
        out["macro"] = _metrics(0, 0, 0.0)
    return out


def score(
    preds: Mapping[str, Sequence[EntitySpan]],
    golds: Mapping[str, Sequence[EntitySpan]],
    scheme: Scheme,
) -> dict[str, ClassMetrics]:
    """Score span sets grouped by sentence id under one scheme.

    Sentences appearing on only one side count as all-spurious or all-missed.
    """
    pairings = []
    for sid in sorted(set(preds) | set(golds)):
        pairings.append(match_entities(list(preds.get(sid, [])), list(golds.get(sid, []))))
    return _score_pairings(pairings, scheme)


@dataclass
class EvalReport:
    """Per-class and aggregate precision/recall/F1 under all four schemes."""

    per_scheme: dict[Scheme, dict[str, ClassMetrics]]

    def micro_f1(self, scheme: Scheme) -> float:
        return self.per_scheme[scheme]["micro"].f1

    def to_dict(self) -> dict:
        return {
            scheme.value: {name: m.to_dict() for name, m in table.items()}
            for scheme, table in self.per_scheme.items()
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def format_table(self) -> str:
        lines = [f"{'scheme':<8} {'class':<6} {'prec':>7} {'recall':>7} {'f1':>7} {'pred':>6} {'gold':>6}"]
        for scheme in Scheme:
            table = self.per_scheme[scheme]
            names = [t.value for t in TagClass if t.value in table] + ["micro", "macro"]
            for name in names:
                m = table[name]
                lines.append(
                    f"{scheme.value:<8} {name:<6} {m.precision:>7.3f} {m.recall:>7.3f} "
                    f"{m.f1:>7.3f} {m.n_pred:>6d} {m.n_gold:>6d}"
                )
            lines.append("")
        return "\n".join(lines).rstrip() + "\n"


def full_report(pred_corpus: Corpus, gold_corpus: Corpus) -> EvalReport:
    """Aggregate pair credits once and score under every scheme."""
    pred_ids = {s.sentence_id for s in pred_corpus.sentences}
    gold_ids = {s.sentence_id for s in gold_corpus.sentences}
    if pred_ids != gold_ids:
        only_pred = sorted(pred_ids - gold_ids)[:3]
        only_gold = sorted(gold_ids - pred_ids)[:3]
        raise AlignmentError(
            f"sentence ids differ (pred-only: {only_pred}, gold-only: {only_gold})"
        )
    gold_by_id = {s.sentence_id: s for s in gold_corpus.sentences}
    pairings = []
    for pred_sent in pred_corpus.sentences:
        gold_sent = gold_by_id[pred_sent.sentence_id]
        pairings.append(match_entities(pred_sent.spans(), gold_sent.spans()))
    return EvalReport({scheme: _score_pairings(pairings, scheme) for scheme in Scheme})
