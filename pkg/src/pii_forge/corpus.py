"""Core text and annotation data model.

Tokenization, sentence cleaning/splitting, the BIO span codec, CoNLL-style
persistence, page-granular splits, and corpus statistics.
"""

from __future__ import annotations

import random
import re
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Sequence

from .errors import DataError


class TagClass(str, Enum):
    """The five personal-information entity classes, in fixed ordinal order."""

    BD = "BD"  # birth date
    PR = "PR"  # parents
    SP = "SP"  # spouses
    CH = "CH"  # children
    ED = "ED"  # education institutions

    @property
    def ordinal(self) -> int:
        return _TAG_ORDINAL[self]


_TAG_ORDINAL = {t: i for i, t in enumerate(TagClass)}


class BioLabel(str, Enum):
    """Per-token label: O, or a B_/I_ prefix paired with a tag class."""

    O = "O"
    B_BD = "B_BD"
    I_BD = "I_BD"
    B_PR = "B_PR"
    I_PR = "I_PR"
    B_SP = "B_SP"
    I_SP = "I_SP"
    B_CH = "B_CH"
    I_CH = "I_CH"
    B_ED = "B_ED"
    I_ED = "I_ED"

    @property
    def tag(self) -> TagClass | None:
        if self is BioLabel.O:
            return None
        return TagClass(self.value[2:])

    @property
    def is_begin(self) -> bool:
        return self.value.startswith("B_")

    @property
    def is_inside(self) -> bool:
        return self.value.startswith("I_")

    @classmethod
    def begin(cls, tag: TagClass) -> "BioLabel":
        return cls("B_" + tag.value)

    @classmethod
    def inside(cls, tag: TagClass) -> "BioLabel":
        return cls("I_" + tag.value)


#: Fixed label order used by the tagger weight matrix: O first, then B/I pairs
#: in tag ordinal order.
LABEL_ORDER: tuple[BioLabel, ...] = tuple(BioLabel)


class SpanConflictError(DataError):
    """Entity spans overlap or fall outside the sentence."""


class ConllParseError(DataError):
    def __init__(self, message: str, line_no: int):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class RatioError(DataError):
    """Malformed split ratios."""


@dataclass(frozen=True)
class Token:
    """A token with character offsets into the text it was cut from."""

    text: str
    start: int
    end: int

    def __post_init__(self):
        if self.start >= self.end:
            raise ValueError(f"empty token span [{self.start}, {self.end})")


@dataclass(frozen=True)
class EntitySpan:
    """Token-index span [start_token, end_token) carrying a tag class."""

    start_token: int
    end_token: int
    tag: TagClass

    def __post_init__(self):
        if self.start_token >= self.end_token:
            raise ValueError("entity span must cover at least one token")

    def overlaps(self, other: "EntitySpan") -> bool:
        return self.start_token < other.end_token and other.start_token < self.end_token


@dataclass
class AnnotatedSentence:
    sentence_id: str
    page_id: str
    tokens: list[Token]
    labels: list[BioLabel]

    def __post_init__(self):
        if len(self.tokens) != len(self.labels):
            raise ValueError(
                f"sentence {self.sentence_id!r}: {len(self.tokens)} tokens "
                f"but {len(self.labels)} labels"
            )

    def spans(self) -> list[EntitySpan]:
        spans, _ = bio_to_spans(self.tokens, self.labels)
        return spans

    def text(self) -> str:
        """Token texts joined with single spaces."""
        return " ".join(t.text for t in self.tokens)


@dataclass
class Corpus:
    name: str
    sentences: list[AnnotatedSentence] = field(default_factory=list)

    def __post_init__(self):
        seen = set()
        for s in self.sentences:
            if s.sentence_id in seen:
                raise DataError(f"duplicate sentence_id {s.sentence_id!r} in corpus {self.name!r}")
            seen.add(s.sentence_id)

    def page_ids(self) -> list[str]:
        """Distinct page ids in order of first appearance."""
        out: list[str] = []
        seen = set()
        for s in self.sentences:
            if s.page_id not in seen:
                seen.add(s.page_id)
                out.append(s.page_id)
        return out

    def __len__(self) -> int:
        return len(self.sentences)


# --------------------------------------------------------------------------
# Tokenization and sentence splitting
# --------------------------------------------------------------------------

# Alphanumeric runs (underscore excluded) or any single non-space character.
_TOKEN_RE = re.compile(r"[^\W_]+|\S", re.UNICODE)


def tokenize(text: str) -> list[Token]:
    """Split text into word and single-character punctuation tokens.

    Offsets index into ``text``, so ``text[t.start:t.end] == t.text`` for
    every token.
    """
    return [Token(m.group(), m.start(), m.end()) for m in _TOKEN_RE.finditer(text)]


# Citation markers "[12]" and superscript footnote numerals.
_CITATION_RE = re.compile(r"\[\d+\]|[¹²³⁰-⁹]+")

_SENT_BOUNDARY_RE = re.compile(r"[.!?]\s+")

# Words before a period that do not end a sentence.
_ABBREVIATIONS = frozenset(
    {
        "dr", "mr", "mrs", "ms", "prof", "rev", "hon", "st", "jr", "sr",
        "col", "gen", "lt", "capt", "sgt", "vs", "etc", "e.g", "i.e",
        "no", "vol", "pp", "u.s", "u.k", "u.s.a", "inc", "ltd", "co",
    }
)


@dataclass(frozen=True)
class SentenceSpan:
    """A cleaned sentence plus the region of the original text it came from."""

    text: str
    start: int
    end: int


def _is_abbreviation(prefix: str) -> bool:
    m = re.search(r"(\S+)\s*$", prefix)
    if not m:
        return False
    word = m.group(1).rstrip(".").lstrip("(\"'")
    if not word:
        return False
    if len(word) == 1 and word.isupper():
        return True  # personal initial, e.g. "John F. Kennedy"
    return word.lower() in _ABBREVIATIONS


def clean_and_split(text: str) -> list[SentenceSpan]:
    """Remove citation markers and split into sentences.

    Boundaries sit at ``.``, ``!`` or ``?`` followed by whitespace and an
    uppercase letter, unless the preceding word is a known abbreviation or an
    initial. Returned offsets bound each sentence's region in the original
    text; the cleaned sentence text has citations removed and whitespace
    collapsed.
    """
    masked = _CITATION_RE.sub(lambda m: " " * (m.end() - m.start()), text)
    cut_points = []
    for m in _SENT_BOUNDARY_RE.finditer(masked):
        nxt = m.end()
        if nxt >= len(masked) or not masked[nxt].isupper():
            continue
        if masked[m.start()] == "." and _is_abbreviation(masked[: m.start()]):
            continue
        cut_points.append((m.start() + 1, m.end()))

    sentences: list[SentenceSpan] = []
    seg_start = 0
    for seg_end, next_start in cut_points + [(len(masked), len(masked))]:
        raw = masked[seg_start:seg_end]
        cleaned = " ".join(raw.split())
        if cleaned:
            lead = len(raw) - len(raw.lstrip())
            trail = len(raw) - len(raw.rstrip())
            sentences.append(SentenceSpan(cleaned, seg_start + lead, seg_end - trail))
        seg_start = next_start
    return sentences


# --------------------------------------------------------------------------
# BIO codec
# --------------------------------------------------------------------------


def spans_to_bio(tokens: Sequence[Token], spans: Iterable[EntitySpan]) -> list[BioLabel]:
    """Render non-overlapping entity spans as a BIO label sequence."""
    labels = [BioLabel.O] * len(tokens)
    prev_end = -1
    for span in sorted(spans, key=lambda s: s.start_token):
        if span.start_token < 0 or span.end_token > len(tokens):
            raise SpanConflictError(f"span {span} out of bounds for {len(tokens)} tokens")
        if span.start_token < prev_end:
            raise SpanConflictError(f"span {span} overlaps a previous span")
        prev_end = span.end_token
        labels[span.start_token] = BioLabel.begin(span.tag)
        for i in range(span.start_token + 1, span.end_token):
            labels[i] = BioLabel.inside(span.tag)
    return labels


def bio_to_spans(
    tokens: Sequence[Token], labels: Sequence[BioLabel]
) -> tuple[list[EntitySpan], int]:
    """Decode a BIO sequence into entity spans.

    A bare ``I_t`` after O or after a different tag is repaired by treating it
    as ``B_t``; the number of such repairs is returned alongside the spans.
    """
    if len(labels) != len(tokens):
        raise DataError(f"{len(tokens)} tokens but {len(labels)} labels")
    spans: list[EntitySpan] = []
    repairs = 0
    open_tag: TagClass | None = None
    open_start = 0

    def close(end: int):
        nonlocal open_tag
        if open_tag is not None:
            spans.append(EntitySpan(open_start, end, open_tag))
            open_tag = None

    for i, label in enumerate(labels):
        if label is BioLabel.O:
            close(i)
        elif label.is_begin:
            close(i)
            open_tag = label.tag
            open_start = i
        else:  # inside
            if open_tag == label.tag:
                continue
            repairs += 1
            close(i)
            open_tag = label.tag
            open_start = i
    close(len(labels))
    return spans, repairs


# --------------------------------------------------------------------------
# CoNLL-style persistence
# --------------------------------------------------------------------------


def conll_dumps(corpus: Corpus) -> str:
    """Serialize: "#page=<id>" before each page's first sentence, then one
    "TOKEN<TAB>LABEL" line per token, one blank line after each sentence."""
    lines: list[str] = []
    last_page: str | None = None
    for sent in corpus.sentences:
        if sent.page_id != last_page:
            lines.append(f"#page={sent.page_id}")
            last_page = sent.page_id
        for tok, label in zip(sent.tokens, sent.labels):
            lines.append(f"{tok.text}\t{label.value}")
        lines.append("")
    return "\n".join(lines) + ("\n" if lines else "")


def conll_loads(text: str, name: str = "corpus") -> Corpus:
    """Parse CoNLL text. Sentence ids are synthesized as "<page>/<n>" with n
    counting sentences within each page; token offsets assume single spaces."""
    sentences: list[AnnotatedSentence] = []
    page_id = ""
    page_counter: Counter[str] = Counter()
    cur_tokens: list[Token] = []
    cur_labels: list[BioLabel] = []

    def flush():
        nonlocal cur_tokens, cur_labels
        if cur_tokens:
            n = page_counter[page_id]
            page_counter[page_id] += 1
            sentences.append(
                AnnotatedSentence(f"{page_id}/{n}", page_id, cur_tokens, cur_labels)
            )
            cur_tokens = []
            cur_labels = []

    for line_no, line in enumerate(text.split("\n"), start=1):
        if line.startswith("#page="):
            flush()
            page_id = line[len("#page=") :]
            continue
        if not line.strip():
            flush()
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise ConllParseError(f"expected TOKEN<TAB>LABEL, got {line!r}", line_no)
        tok_text, label_text = parts
        if not tok_text or any(ch.isspace() for ch in tok_text):
            raise ConllParseError(f"bad token field {tok_text!r}", line_no)
        try:
            label = BioLabel(label_text)
        except ValueError:
            raise ConllParseError(f"unknown label {label_text!r}", line_no) from None
        start = cur_tokens[-1].end + 1 if cur_tokens else 0
        cur_tokens.append(Token(tok_text, start, start + len(tok_text)))
        cur_labels.append(label)
    flush()
    return Corpus(name, sentences)


def write_conll(corpus: Corpus, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(conll_dumps(corpus))


def read_conll(path, name: str | None = None) -> Corpus:
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    return conll_loads(text, name or str(path))


# --------------------------------------------------------------------------
# Statistics and splits
# --------------------------------------------------------------------------


@dataclass
class CorpusStats:
    pages: int
    sentences: int
    sentences_with_entity: int
    mentions: dict[TagClass, int]

    def to_dict(self) -> dict:
        return {
            "pages": self.pages,
            "sentences": self.sentences,
            "sentences_with_entity": self.sentences_with_entity,
            "mentions": {t.value: self.mentions.get(t, 0) for t in TagClass},
        }


def corpus_stats(corpus: Corpus) -> CorpusStats:
    """Per-class mention counts plus page and entity-bearing sentence counts."""
    mentions: Counter[TagClass] = Counter()
    with_entity = 0
    for sent in corpus.sentences:
        spans = sent.spans()
        if spans:
            with_entity += 1
        for span in spans:
            mentions[span.tag] += 1
    return CorpusStats(
        pages=len(corpus.page_ids()),
        sentences=len(corpus.sentences),
        sentences_with_entity=with_entity,
        mentions=dict(mentions),
    )


def split_corpus(
    corpus: Corpus, ratios: Sequence[float], seed: int
) -> tuple[Corpus, Corpus, Corpus]:
    """Deterministic page-granular train/validation/test split.

    All sentences of a page land in the same part. Part sizes follow the
    ratios by largest remainder.
    """
    if len(ratios) != 3:
        raise RatioError(f"expected 3 ratios, got {len(ratios)}")
    if any(r <= 0 for r in ratios):
        raise RatioError(f"ratios must be positive: {ratios}")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise RatioError(f"ratios must sum to 1: {ratios}")

    pages = corpus.page_ids()
    rng = random.Random(seed)
    shuffled = list(pages)
    rng.shuffle(shuffled)

    n = len(shuffled)
    sizes = [int(r * n) for r in ratios]
    fractions = sorted(
        range(3), key=lambda i: (ratios[i] * n - sizes[i], -i), reverse=True
    )
    for i in range(n - sum(sizes)):
        sizes[fractions[i % 3]] += 1

    parts: list[set[str]] = []
    at = 0
    for size in sizes:
        parts.append(set(shuffled[at : at + size]))
        at += size

    names = ("train", "validation", "test")
    out = []
    for part, suffix in zip(parts, names):
        out.append(
            Corpus(
                f"{corpus.name}/{suffix}",
                [s for s in corpus.sentences if s.page_id in part],
            )
        )
    return out[0], out[1], out[2]
