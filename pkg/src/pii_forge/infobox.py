"""Infobox parsing and key normalization into the five-tag PII dictionary.

Reads the first ``<table class="...infobox...">`` of a saved HTML page into
raw key/value entries, then maps known header keys onto tag classes. Birth
dates are cut out of "Born" values with a fixed, ordered pattern set; the
non-date remainder (birthplace text and the like) is discarded.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from html.parser import HTMLParser

from .corpus import TagClass
from .errors import DataError


class NoInfoboxError(DataError):
    """The page contains no infobox table."""


@dataclass
class RawInfobox:
    page_id: str
    entries: list[tuple[str, list[str]]] = field(default_factory=list)


@dataclass
class PiiRecord:
    page_id: str
    phrases: dict[TagClass, list[str]] = field(default_factory=dict)

    def all_phrases(self) -> list[tuple[TagClass, str]]:
        return [(tag, p) for tag in TagClass for p in self.phrases.get(tag, [])]

    def is_empty(self) -> bool:
        return not any(self.phrases.get(t) for t in TagClass)


# Header keys recognized per tag class; matching is case-insensitive,
# whitespace-trimmed and apostrophe-normalized.
_TAG_KEYS: dict[TagClass, tuple[str, ...]] = {
    TagClass.BD: ("Born", "Born:"),
    TagClass.PR: (
        "Parent",
        "Parent(s)",
        "Parents",
        "Father",
        "Father's name",
        "Mother",
        "Mother's name",
    ),
    TagClass.SP: ("Spouse", "Spouse(s)", "Spouses"),
    TagClass.CH: ("Children",),
    TagClass.ED: (
        "Education",
        "High school",
        "High school:",
        "Law School",
        "School",
        "Schools",
        "College",
        "College(s)",
        "Colleges",
        "Alma mater",
        "Almat mater",
    ),
}


def _normalize_key(key: str) -> str:
    key = key.replace("’", "'")
    return " ".join(key.split()).casefold()


KEY_MAP: dict[str, TagClass] = {
    _normalize_key(k): tag for tag, keys in _TAG_KEYS.items() for k in keys
}

# Void elements never get an end tag; relevant when tracking skipped subtrees.
_VOID_TAGS = frozenset(
    {"br", "hr", "img", "input", "meta", "link", "area", "base", "col", "embed",
     "source", "track", "wbr"}
)

_HIDDEN_STYLE_RE = re.compile(r"display\s*:\s*none", re.IGNORECASE)
_VALUE_CITATION_RE = re.compile(r"\[\d+\]")


def _clean_value(raw: str) -> str:
    return " ".join(_VALUE_CITATION_RE.sub(" ", raw).split())


class _InfoboxParser(HTMLParser):
    """Extracts rows of the first table whose class contains "infobox"."""

    def __init__(self):
        super().__init__(convert_charrefs=True)
        self.rows: list[tuple[str, list[str]]] = []
        self._table_depth = 0
        self._in_infobox = False
        self._done = False
        self._skip_depth = 0
        self._cell: str | None = None  # "th" or "td"
        self._key_chunks: list[str] = []
        self._value_items: list[list[str]] = []
        self._row_open = False

    def _flush_row(self):
        if self._row_open:
            key = " ".join("".join(self._key_chunks).split())
            values = []
            for item in self._value_items:
                text = _clean_value("".join(item))
                if text:
                    values.append(text)
            if key:
                self.rows.append((key, values))
        self._row_open = False
        self._cell = None
        self._key_chunks = []
        self._value_items = []

    def handle_starttag(self, tag, attrs):
        if self._done:
            return
        if self._skip_depth:
            if tag not in _VOID_TAGS:
                self._skip_depth += 1
            return
        attrs_dict = dict(attrs)
        if tag == "table":
            if self._in_infobox:
                self._table_depth += 1
            elif "infobox" in (attrs_dict.get("class") or ""):
                self._in_infobox = True
                self._table_depth = 1
            return
        if not self._in_infobox:
            return
        style = attrs_dict.get("style") or ""
        if tag in ("script", "style", "sup") or _HIDDEN_STYLE_RE.search(style):
            if tag not in _VOID_TAGS:
                self._skip_depth = 1
            return
        if self._table_depth != 1:
            return
        if tag == "tr":
            self._flush_row()
            self._row_open = True
        elif tag == "th" and self._row_open:
            self._cell = "th"
        elif tag == "td" and self._row_open:
            self._cell = "td"
            self._value_items.append([])
        elif tag in ("li", "br") and self._cell == "td":
            self._value_items.append([])

    def handle_startendtag(self, tag, attrs):
        self.handle_starttag(tag, attrs)

    def handle_endtag(self, tag):
        if self._done:
            return
        if self._skip_depth:
            if tag not in _VOID_TAGS:
                self._skip_depth -= 1
            return
        if not self._in_infobox:
            return
        if tag == "table":
            self._table_depth -= 1
            if self._table_depth == 0:
                self._flush_row()
                self._in_infobox = False
                self._done = True
        elif self._table_depth == 1:
            if tag == "tr":
                self._flush_row()
            elif tag in ("th", "td"):
                self._cell = None

    def handle_data(self, data):
        if self._done or self._skip_depth or not self._in_infobox:
            return
        if self._table_depth != 1 or not self._row_open:
            return
        if self._cell == "th":
            self._key_chunks.append(data)
        elif self._cell == "td" and self._value_items:
            self._value_items[-1].append(data)


def parse_infobox(html: str, page_id: str) -> RawInfobox:
    """Parse the first infobox table of a page into raw key/value entries.

    Rows without a header cell are skipped; list items and line breaks inside
    a value cell yield separate values; hidden elements and ``<sup>``
    reference markers are stripped.
    """
    parser = _InfoboxParser()
    parser.feed(html)
    parser.close()
    if not parser._done:
        raise NoInfoboxError(f"page {page_id!r} has no infobox table")
    return RawInfobox(page_id, parser.rows)


# --------------------------------------------------------------------------
# Key normalization and birth-date extraction
# --------------------------------------------------------------------------

MONTH_NAMES = frozenset(
    "january february march april may june july august september october "
    "november december jan feb mar apr jun jul aug sep sept oct nov dec".split()
)

_MONTH_ALT = (
    "January|February|March|April|May|June|July|August|September|October|"
    "November|December|Jan|Feb|Mar|Apr|Jun|Jul|Aug|Sept|Sep|Oct|Nov|Dec"
)

# Ordered richest-first; a bare year only counts when nothing richer matched.
_DATE_PATTERNS = (
    re.compile(rf"\b(\d{{1,2}})\s+({_MONTH_ALT})\s+(\d{{4}})\b", re.IGNORECASE),
    re.compile(rf"\b({_MONTH_ALT})\s+(\d{{1,2}}),\s*(\d{{4}})\b", re.IGNORECASE),
    re.compile(r"\b(\d{4})-(\d{2})-(\d{2})\b"),
)
_BARE_YEAR_RE = re.compile(r"\b([12]\d{3})\b")


def _valid_day(text: str) -> bool:
    return 1 <= int(text) <= 31


def extract_birth_date(born_values: list[str]) -> list[str]:
    """Extract date phrases from "Born" values, dropping the rest.

    Patterns, in order: "D Month YYYY", "Month D, YYYY", "YYYY-MM-DD", and a
    bare "YYYY" only when no richer pattern matched that value.
    """
    dates: list[str] = []
    for value in born_values:
        found: list[str] = []
        for pattern in _DATE_PATTERNS:
            for m in pattern.finditer(value):
                day = m.group(1) if pattern is _DATE_PATTERNS[0] else (
                    m.group(2) if pattern is _DATE_PATTERNS[1] else None
                )
                if day is not None and not _valid_day(day):
                    continue
                found.append(m.group(0))
        if not found:
            found = [m.group(0) for m in _BARE_YEAR_RE.finditer(value)]
        for phrase in found:
            if phrase not in dates:
                dates.append(phrase)
    return dates


# Trailing parentheticals like "(m. 2001)" on name values.
_PARENTHETICAL_RE = re.compile(r"\([^)]*\)")

_NAME_TAGS = (TagClass.PR, TagClass.SP, TagClass.CH)


def normalize_keys(raw: RawInfobox) -> PiiRecord:
    """Map raw infobox entries onto the five-tag dictionary.

    Unmapped keys are dropped. "Born" values go through birth-date
    extraction; parenthetical annotations are stripped from name values.
    Phrase lists are deduplicated case-insensitively.
    """
    phrases: dict[TagClass, list[str]] = {t: [] for t in TagClass}
    seen: dict[TagClass, set[str]] = {t: set() for t in TagClass}

    def add(tag: TagClass, phrase: str):
        phrase = " ".join(phrase.split())
        if not phrase:
            return
        key = phrase.casefold()
        if key not in seen[tag]:
            seen[tag].add(key)
            phrases[tag].append(phrase)

    for key, values in raw.entries:
        tag = KEY_MAP.get(_normalize_key(key))
        if tag is None:
            continue
        if tag is TagClass.BD:
            for phrase in extract_birth_date(values):
                add(tag, phrase)
        elif tag in _NAME_TAGS:
            for value in values:
                add(tag, _PARENTHETICAL_RE.sub(" ", value))
        else:
            for value in values:
                add(tag, value)
    return PiiRecord(raw.page_id, {t: v for t, v in phrases.items() if v})


# --------------------------------------------------------------------------
# Page text extraction and JSONL persistence
# --------------------------------------------------------------------------


class _PageTextParser(HTMLParser):
    """Collects paragraph text outside infobox tables, scripts and markers."""

    def __init__(self):
        super().__init__(convert_charrefs=True)
        self.paragraphs: list[str] = []
        self._skip_depth = 0
        self._p_depth = 0
        self._chunks: list[str] = []

    def handle_starttag(self, tag, attrs):
        if self._skip_depth:
            if tag not in _VOID_TAGS:
                self._skip_depth += 1
            return
        attrs_dict = dict(attrs)
        style = attrs_dict.get("style") or ""
        if (
            tag in ("script", "style", "sup")
            or (tag == "table" and "infobox" in (attrs_dict.get("class") or ""))
            or _HIDDEN_STYLE_RE.search(style)
        ):
            if tag not in _VOID_TAGS:
                self._skip_depth = 1
            return
        if tag == "p":
            self._p_depth += 1

    def handle_startendtag(self, tag, attrs):
        self.handle_starttag(tag, attrs)

    def handle_endtag(self, tag):
        if self._skip_depth:
            if tag not in _VOID_TAGS:
                self._skip_depth -= 1
            return
        if tag == "p" and self._p_depth:
            self._p_depth -= 1
            if self._p_depth == 0 and self._chunks:
                text = " ".join("".join(self._chunks).split())
                if text:
                    self.paragraphs.append(text)
                self._chunks = []

    def handle_data(self, data):
        if self._p_depth and not self._skip_depth:
            self._chunks.append(data)


def extract_page_text(html: str) -> str:
    """Paragraph text of a page, with the infobox and markup stripped."""
    parser = _PageTextParser()
    parser.feed(html)
    parser.close()
    return " ".join(parser.paragraphs)


def record_to_json(record: PiiRecord) -> str:
    payload: dict = {"page_id": record.page_id}
    for tag in TagClass:
        payload[tag.value] = list(record.phrases.get(tag, []))
    return json.dumps(payload, ensure_ascii=False)


def record_from_json(line: str) -> PiiRecord:
    payload = json.loads(line)
    if "page_id" not in payload:
        raise DataError(f"record line missing page_id: {line!r}")
    phrases = {}
    for tag in TagClass:
        values = payload.get(tag.value, [])
        if values:
            phrases[tag] = [str(v) for v in values]
    return PiiRecord(str(payload["page_id"]), phrases)


def write_records(records: list[PiiRecord], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(record_to_json(record) + "\n")


def read_records(path) -> list[PiiRecord]:
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                records.append(record_from_json(line))
    return records
