"""Automatic annotation: locate infobox phrases in page text.

Candidate spans come from a built-in heuristic (capitalized runs, keyword
organizations, token-level date patterns) or from a precomputed sidecar file,
so any external NER can stand in. Phrases are matched against candidate texts
with the fuzzy matcher and winning spans are rendered to BIO labels.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from typing import Mapping, Sequence

from . import fuzzymatch
from .corpus import (
    AnnotatedSentence,
    EntitySpan,
    TagClass,
    Token,
    clean_and_split,
    spans_to_bio,
    tokenize,
)
from .errors import DataError
from .infobox import MONTH_NAMES, PiiRecord


class CandidateCategory(str, Enum):
    PERSON = "PERSON"
    ORG = "ORG"
    DATE = "DATE"
    NOUN_CHUNK = "NOUN_CHUNK"


@dataclass(frozen=True)
class CandidateSpan:
    start: int
    end: int
    category: CandidateCategory

    def __post_init__(self):
        if self.start >= self.end:
            raise ValueError("candidate span must cover at least one token")


DEFAULT_CATEGORY_MAP: dict[TagClass, tuple[CandidateCategory, ...]] = {
    TagClass.BD: (CandidateCategory.DATE,),
    TagClass.PR: (CandidateCategory.PERSON,),
    TagClass.SP: (CandidateCategory.PERSON,),
    TagClass.CH: (CandidateCategory.PERSON,),
    TagClass.ED: (CandidateCategory.ORG,),
}


@dataclass
class AnnotationConfig:
    fuzzy_threshold: float = fuzzymatch.DEFAULT_THRESHOLD
    category_map: dict[TagClass, tuple[CandidateCategory, ...]] = field(
        default_factory=lambda: dict(DEFAULT_CATEGORY_MAP)
    )
    keep_empty_sentences: bool = False

    def __post_init__(self):
        if not 0.0 <= self.fuzzy_threshold <= 1.0:
            raise ValueError(f"fuzzy_threshold must be in [0, 1], got {self.fuzzy_threshold}")
        missing = [t for t in TagClass if t not in self.category_map]
        if missing:
            raise ValueError(f"category_map missing tags: {missing}")


# Lowercase connectors that may appear inside a capitalized run.
_RUN_CONNECTORS = frozenset({"of", "the", "de", "van", "von"})

_INSTITUTION_KEYWORDS = frozenset({"university", "college", "school", "institute", "academy"})


def _is_capitalized(token: Token) -> bool:
    return token.text[0].isupper()


def _capitalized_runs(tokens: Sequence[Token]) -> list[tuple[int, int]]:
    runs = []
    i = 0
    n = len(tokens)
    while i < n:
        if not _is_capitalized(tokens[i]):
            i += 1
            continue
        last_cap = i
        j = i + 1
        while j < n:
            if _is_capitalized(tokens[j]):
                last_cap = j
                j += 1
            elif tokens[j].text.lower() in _RUN_CONNECTORS:
                j += 1
            else:
                break
        runs.append((i, last_cap + 1))
        i = last_cap + 1
    return runs


def _is_year(text: str) -> bool:
    return len(text) == 4 and text.isdigit() and text[0] in "12"


def _is_day(text: str) -> bool:
    return text.isdigit() and len(text) <= 2 and 1 <= int(text) <= 31


def _is_month(text: str) -> bool:
    return text.lower() in MONTH_NAMES


def _date_spans(tokens: Sequence[Token]) -> list[tuple[int, int]]:
    """Token-level matches of the infobox date pattern set."""
    n = len(tokens)
    texts = [t.text for t in tokens]
    spans: list[tuple[int, int]] = []
    covered = [False] * n

    def claim(s, e):
        spans.append((s, e))
        for k in range(s, e):
            covered[k] = True

    for i in range(n):
        # D Month YYYY
        if (
            i + 2 < n
            and _is_day(texts[i])
            and _is_month(texts[i + 1])
            and _is_year(texts[i + 2])
        ):
            claim(i, i + 3)
        # Month D , YYYY
        if (
            i + 3 < n
            and _is_month(texts[i])
            and _is_day(texts[i + 1])
            and texts[i + 2] == ","
            and _is_year(texts[i + 3])
        ):
            claim(i, i + 4)
        # YYYY - MM - DD
        if (
            i + 4 < n
            and _is_year(texts[i])
            and texts[i + 1] == "-"
            and len(texts[i + 2]) == 2
            and texts[i + 2].isdigit()
            and texts[i + 3] == "-"
            and len(texts[i + 4]) == 2
            and texts[i + 4].isdigit()
        ):
            claim(i, i + 5)
    for i in range(n):
        if _is_year(texts[i]) and not covered[i]:
            spans.append((i, i + 1))
    return sorted(set(spans))


def extract_candidates(tokens: Sequence[Token]) -> list[CandidateSpan]:
    """Heuristic candidate provider.

    Capitalized runs (with lowercase connectors allowed inside) become PERSON
    and NOUN_CHUNK candidates; runs containing an institutional keyword are
    additionally tagged ORG. Date-pattern matches become DATE candidates.
    """
    candidates: list[CandidateSpan] = []
    for start, end in _capitalized_runs(tokens):
        candidates.append(CandidateSpan(start, end, CandidateCategory.PERSON))
        candidates.append(CandidateSpan(start, end, CandidateCategory.NOUN_CHUNK))
        if any(tokens[k].text.lower() in _INSTITUTION_KEYWORDS for k in range(start, end)):
            candidates.append(CandidateSpan(start, end, CandidateCategory.ORG))
    for start, end in _date_spans(tokens):
        candidates.append(CandidateSpan(start, end, CandidateCategory.DATE))
    candidates.sort(key=lambda c: (c.start, c.end, c.category.value))
    return candidates


@dataclass(frozen=True)
class Claim:
    """A phrase's winning span in one sentence."""

    span: EntitySpan
    score: float
    phrase: str


def claim_entities(
    tokens: Sequence[Token],
    candidates: Sequence[CandidateSpan],
    record: PiiRecord,
    config: AnnotationConfig,
) -> list[Claim]:
    """Match each record phrase against sentence candidates and resolve
    overlapping claims by score, then span length, then tag ordinal."""
    for cand in candidates:
        if cand.start < 0 or cand.end > len(tokens):
            raise DataError(f"candidate {cand} out of bounds for {len(tokens)} tokens")

    cand_text = {c: " ".join(t.text for t in tokens[c.start : c.end]) for c in candidates}
    raw_claims: list[Claim] = []
    for tag in TagClass:
        preferred = config.category_map[tag]
        pool = [c for c in candidates if c.category in preferred]
        if not pool:
            pool = [c for c in candidates if c.category is CandidateCategory.NOUN_CHUNK]
        if not pool:
            continue
        texts = [cand_text[c] for c in pool]
        for phrase in record.phrases.get(tag, []):
            match = fuzzymatch.best_match(phrase, texts, config.fuzzy_threshold)
            if match is None:
                continue
            winner = pool[match.candidate_index]
            raw_claims.append(
                Claim(EntitySpan(winner.start, winner.end, tag), match.score, phrase)
            )

    raw_claims.sort(
        key=lambda c: (
            -c.score,
            -(c.span.end_token - c.span.start_token),
            c.span.tag.ordinal,
            c.span.start_token,
            c.phrase,
        )
    )
    accepted: list[Claim] = []
    for claim in raw_claims:
        if not any(claim.span.overlaps(a.span) for a in accepted):
            accepted.append(claim)
    accepted.sort(key=lambda c: c.span.start_token)
    return accepted


def locate_entities(
    tokens: Sequence[Token],
    candidates: Sequence[CandidateSpan],
    record: PiiRecord,
    config: AnnotationConfig,
) -> list[EntitySpan]:
    return [c.span for c in claim_entities(tokens, candidates, record, config)]


@dataclass
class AnnotationStats:
    sentences_total: int = 0
    sentences_kept: int = 0
    located: Counter = field(default_factory=Counter)
    unlocated: Counter = field(default_factory=Counter)
    spans: Counter = field(default_factory=Counter)

    def merge(self, other: "AnnotationStats") -> None:
        self.sentences_total += other.sentences_total
        self.sentences_kept += other.sentences_kept
        self.located.update(other.located)
        self.unlocated.update(other.unlocated)
        self.spans.update(other.spans)

    def to_dict(self) -> dict:
        return {
            "sentences_total": self.sentences_total,
            "sentences_kept": self.sentences_kept,
            "located_phrases": {t.value: self.located.get(t, 0) for t in TagClass},
            "unlocated_phrases": {t.value: self.unlocated.get(t, 0) for t in TagClass},
            "spans": {t.value: self.spans.get(t, 0) for t in TagClass},
        }


def annotate_page(
    page_text: str,
    record: PiiRecord,
    config: AnnotationConfig | None = None,
    candidates_by_sentence: Mapping[str, Sequence[CandidateSpan]] | None = None,
) -> tuple[list[AnnotatedSentence], AnnotationStats]:
    """Annotate one page's text against its record.

    Sentence ids are "<page_id>/<i>" with i indexing the page's split
    sentences, so sidecar candidate files can be keyed without knowing which
    sentences survive filtering. Sentences without located entities are
    dropped unless the config keeps them.
    """
    if config is None:
        config = AnnotationConfig()
    stats = AnnotationStats()
    sentences: list[AnnotatedSentence] = []
    located_pairs: set[tuple[TagClass, str]] = set()

    for i, piece in enumerate(clean_and_split(page_text)):
        sentence_id = f"{record.page_id}/{i}"
        tokens = tokenize(piece.text)
        stats.sentences_total += 1
        if not tokens:
            continue
        if candidates_by_sentence is not None:
            candidates = list(candidates_by_sentence.get(sentence_id, []))
        else:
            candidates = extract_candidates(tokens)
        claims = claim_entities(tokens, candidates, record, config)
        for claim in claims:
            located_pairs.add((claim.span.tag, claim.phrase))
            stats.spans[claim.span.tag] += 1
        spans = [c.span for c in claims]
        if spans or config.keep_empty_sentences:
            stats.sentences_kept += 1
            sentences.append(
                AnnotatedSentence(sentence_id, record.page_id, tokens, spans_to_bio(tokens, spans))
            )

    for tag, phrase in record.all_phrases():
        if (tag, phrase) in located_pairs:
            stats.located[tag] += 1
        else:
            stats.unlocated[tag] += 1
    return sentences, stats


# --------------------------------------------------------------------------
# Candidate sidecar files
# --------------------------------------------------------------------------


def load_candidate_sidecar(path) -> dict[str, list[CandidateSpan]]:
    """One JSON object per line: {"sentence_id": ..., "candidates": [...]}."""
    table: dict[str, list[CandidateSpan]] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                payload = json.loads(line)
                spans = [
                    CandidateSpan(
                        int(c["start"]), int(c["end"]), CandidateCategory(c["category"])
                    )
                    for c in payload["candidates"]
                ]
                table[str(payload["sentence_id"])] = spans
            except (KeyError, ValueError, TypeError) as exc:
                raise DataError(f"bad sidecar line {line_no}: {exc}") from exc
    return table


def dump_candidate_sidecar(table: Mapping[str, Sequence[CandidateSpan]], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for sentence_id in table:
            payload = {
                "sentence_id": sentence_id,
                "candidates": [
                    {"start": c.start, "end": c.end, "category": c.category.value}
                    for c in table[sentence_id]
                ],
            }
            fh.write(json.dumps(payload, ensure_ascii=False) + "\n")
