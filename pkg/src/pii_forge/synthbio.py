"""Deterministic synthetic biography pages.

Generates small HTML biography pages with infoboxes, plus the true entity
spans of every body sentence, so annotation quality can be measured offline
against known gold labels. Pages deliberately include the failure modes of
distant supervision: name variants between infobox and text, city names that
collide with child names, title words glued onto capitalized runs, and
citation markers.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field

from .corpus import (
    AnnotatedSentence,
    Corpus,
    EntitySpan,
    TagClass,
    spans_to_bio,
    tokenize,
)

FIRST_NAMES = [
    "Adam", "Alice", "Brian", "Clara", "David", "Elena", "Frank", "Grace",
    "Henry", "Irene", "James", "Karen", "Louis", "Maria", "Nathan", "Olivia",
    "Peter", "Paula", "Robert", "Sarah", "Thomas", "Ursula", "Victor", "Wendy",
    "Alan", "Bella", "Carl", "Diana", "Edgar", "Fiona", "George", "Hannah",
    "Ivan", "Julia", "Kevin", "Laura", "Martin", "Nora", "Oscar", "Ruth",
]

LAST_NAMES = [
    "Abbott", "Barnes", "Carter", "Dawson", "Ellis", "Foster", "Graham",
    "Hayes", "Ingram", "Jensen", "Keller", "Lawson", "Mercer", "Norris",
    "Osborne", "Parker", "Quincy", "Reyes", "Sutton", "Turner", "Underwood",
    "Vaughn", "Walsh", "Young", "Bishop", "Chandler", "Doyle", "Emerson",
    "Fleming", "Gardner", "Holloway", "Irving", "Jennings", "Kendall",
    "Loomis", "Merritt", "Nolan", "Preston", "Ramsey", "Sherwood",
]

CITIES = [
    "Boston", "Chicago", "Denver", "Atlanta", "Seattle", "Portland",
    "Richmond", "Hartford", "Savannah", "Oakland", "Bristol", "Dover",
    "Salem", "Albany", "Norfolk",
]

# Short city names used for "of <city>" run extensions; also child-name bait.
SHORT_CITIES = ["Troy", "Kent", "Hull", "Bath"]
BAIT_CHILD_NAMES = ["Troy", "Chelsea", "Madison", "Austin", "Florence"]

REGIONS = ["Ohio", "Michigan", "Vermont", "Oregon", "Kansas", "Maine"]
OCCUPATIONS = [
    "lawyer", "historian", "economist", "novelist", "physicist",
    "architect", "journalist", "surgeon",
]
TITLES = ["Captain", "Professor", "Judge"]
MONTHS = [
    "January", "February", "March", "April", "May", "June", "July",
    "August", "September", "October", "November", "December",
]
SUBJECTS = ["Music", "Arts", "Science", "Law"]

FILLERS = [
    "The family later moved abroad.",
    "Colleagues praised the work for decades.",
    "Little else about the early years is recorded.",
    "The estate passed to a local trust afterwards.",
]


@dataclass
class SyntheticPage:
    page_id: str
    html: str
    body_text: str
    sentences: list[str]
    gold_spans: list[list[EntitySpan]] = field(default_factory=list)


class _SentenceBuilder:
    def __init__(self):
        self._parts: list[str] = []
        self._length = 0
        self._entities: list[tuple[int, int, TagClass]] = []

    def add(self, text: str) -> "_SentenceBuilder":
        if self._parts and not self._parts[-1].endswith(" ") and not text.startswith((",", ".", ";", ")")):
            self._parts.append(" ")
            self._length += 1
        self._parts.append(text)
        self._length += len(text)
        return self

    def add_entity(self, text: str, tag: TagClass) -> "_SentenceBuilder":
        if self._parts and not self._parts[-1].endswith(" "):
            self._parts.append(" ")
            self._length += 1
        self._entities.append((self._length, self._length + len(text), tag))
        self._parts.append(text)
        self._length += len(text)
        return self

    def build(self) -> tuple[str, list[EntitySpan]]:
        text = "".join(self._parts)
        tokens = tokenize(text)
        spans = []
        for char_start, char_end, tag in self._entities:
            covered = [
                k
                for k, t in enumerate(tokens)
                if t.start >= char_start and t.end <= char_end
            ]
            if not covered:
                raise AssertionError(f"entity chars [{char_start},{char_end}) lost in {text!r}")
            spans.append(EntitySpan(covered[0], covered[-1] + 1, tag))
        return text, spans


def _date_text(day: int, month: str, year: int, style: str) -> str:
    if style == "mdy":
        return f"{month} {day}, {year}"
    return f"{day} {month} {year}"


def _institution(rng: random.Random) -> str:
    kind = rng.randrange(5)
    if kind == 0:
        return f"{rng.choice(CITIES)} University"
    if kind == 1:
        return f"University of {rng.choice(CITIES)}"
    if kind == 2:
        return f"{rng.choice(LAST_NAMES)} College"
    if kind == 3:
        return f"Royal Academy of {rng.choice(SUBJECTS)}"
    return f"{rng.choice(CITIES)} Law School"


def _inject_citations(sentence: str, rng: random.Random) -> str:
    """Attach [n] markers after random words; cleaning removes them."""
    words = sentence.split(" ")
    for _ in range(rng.randrange(1, 3)):
        at = rng.randrange(len(words))
        if not words[at].endswith("]"):
            words[at] = words[at] + f"[{rng.randrange(1, 40)}]"
    return " ".join(words)


def _make_page(page_id: str, rng: random.Random) -> SyntheticPage:
    first = rng.choice(FIRST_NAMES)
    last = rng.choice(LAST_NAMES)
    name = f"{first} {last}"
    # The first-name pool alternates between typically male and female names.
    she = FIRST_NAMES.index(first) % 2 == 1
    subj, poss = ("She", "her") if she else ("He", "his")

    day = rng.randrange(1, 29)
    month = rng.choice(MONTHS)
    year = rng.randrange(1940, 2006)
    birth_city = rng.choice(CITIES)
    region = rng.choice(REGIONS)
    occupation = rng.choice(OCCUPATIONS)

    # Parents; the name pool's parity split keeps parent names plausible.
    father = mother = None
    father_title = None
    if rng.random() < 0.7:
        father = f"{rng.choice(FIRST_NAMES[::2])} {last}"
        mother = f"{rng.choice(FIRST_NAMES[1::2])} {rng.choice(LAST_NAMES)}"
        if rng.random() < 0.25:
            father_title = rng.choice(TITLES)

    # Spouse: the text may use a shorter form than the infobox.
    spouse_text = spouse_infobox = None
    spouse_city = None
    if rng.random() < 0.75:
        s_first = rng.choice(FIRST_NAMES[::2] if she else FIRST_NAMES[1::2])
        if rng.random() < 0.12:
            s_first = f"{s_first}-{rng.choice(FIRST_NAMES)}"
        s_last = rng.choice(LAST_NAMES)
        spouse_text = f"{s_first} {s_last}"
        spouse_infobox = spouse_text
        if rng.random() < 0.3:
            spouse_infobox = f"{s_first} {rng.choice(FIRST_NAMES)} {s_last}"
        if rng.random() < 0.3:
            spouse_city = rng.choice(SHORT_CITIES)
    marriage_year = year + rng.randrange(20, 35)

    # Children: first names only; sometimes a name that is also a city.
    children: list[str] = []
    if rng.random() < 0.65:
        pool = [n for n in FIRST_NAMES if n != first]
        children = rng.sample(pool, rng.randrange(1, 4))
        if rng.random() < 0.5:
            children[0] = rng.choice(BAIT_CHILD_NAMES)
    bait_city = children[0] if children and children[0] in BAIT_CHILD_NAMES else None

    institutions = [_institution(rng)]
    if rng.random() < 0.4:
        second = _institution(rng)
        if second != institutions[0]:
            institutions.append(second)

    # ---- body sentences -------------------------------------------------
    built: list[tuple[str, list[EntitySpan]]] = []

    intro = _SentenceBuilder()
    intro.add(name).add("(born")
    intro.add_entity(
        _date_text(day, month, year, "mdy" if rng.random() < 0.3 else "dmy"),
        TagClass.BD,
    )
    intro.add(") is an American").add(occupation + ".")
    built.append(intro.build())

    if father:
        b = _SentenceBuilder()
        b.add(first).add("was born in").add(birth_city).add("to")
        if father_title:
            b.add(father_title)
        b.add_entity(father, TagClass.PR).add("and")
        b.add_entity(mother, TagClass.PR).add(".")
        built.append(b.build())

    if spouse_text:
        b = _SentenceBuilder()
        b.add(subj).add("married")
        b.add_entity(spouse_text, TagClass.SP)
        if spouse_city:
            b.add("of").add(spouse_city)
        b.add("in").add(f"{marriage_year}.")
        built.append(b.build())

    if children:
        b = _SentenceBuilder()
        if len(children) == 1:
            b.add("Their only child,")
            b.add_entity(children[0], TagClass.CH)
            b.add(", stayed in").add(f"{region}.")
        else:
            b.add(subj).add("raised")
            for k, child in enumerate(children):
                if k:
                    b.add("and" if k == len(children) - 1 else ",")
                b.add_entity(child, TagClass.CH)
            b.add("in").add(f"{birth_city}.")
        built.append(b.build())

    for k, institution in enumerate(institutions):
        b = _SentenceBuilder()
        if k == 0:
            b.add(subj).add("studied at")
            b.add_entity(institution, TagClass.ED)
            b.add("and later taught there.")
        else:
            b.add(subj).add("also attended")
            b.add_entity(institution, TagClass.ED)
            b.add(".")
        built.append(b.build())

    if bait_city and rng.random() < 0.7:
        b = _SentenceBuilder()
        b.add(subj).add("lives in").add(bait_city).add(",").add(region)
        b.add(", near the coast with").add(poss).add("family.")
        built.append(b.build())

    if rng.random() < 0.6:
        built.append((rng.choice(FILLERS), []))

    sentences = [text for text, _ in built]
    gold = [spans for _, spans in built]

    raw_sentences = [
        _inject_citations(text, rng) if rng.random() < 0.4 else text
        for text in sentences
    ]
    body_raw = " ".join(raw_sentences)

    # ---- infobox ---------------------------------------------------------
    rows = [f"<tr><th colspan=\"2\">{name}</th></tr>"]
    rows.append(
        f"<tr><th>{rng.choice(['Born', 'Born:'])}</th>"
        f"<td>{day} {month} {year}<br/>{birth_city}, {region}</td></tr>"
    )
    if father:
        if rng.random() < 0.5:
            rows.append(f"<tr><th>Father</th><td>{father}</td></tr>")
            rows.append(f"<tr><th>Mother</th><td>{mother}</td></tr>")
        else:
            rows.append(f"<tr><th>Parent(s)</th><td>{father}<br/>{mother}</td></tr>")
    if spouse_infobox:
        key = rng.choice(["Spouse", "Spouse(s)", "Spouses"])
        value = spouse_infobox
        if rng.random() < 0.4:
            value += f" (m. {marriage_year})"
        rows.append(f"<tr><th>{key}</th><td>{value}</td></tr>")
    if children:
        if len(children) == 1:
            rows.append(f"<tr><th>Children</th><td>{children[0]}</td></tr>")
        else:
            items = "".join(f"<li>{c}</li>" for c in children)
            rows.append(f"<tr><th>Children</th><td><ul>{items}</ul></td></tr>")
    ed_key = rng.choice(["Education", "Alma mater", "College"])
    if len(institutions) == 1:
        rows.append(f"<tr><th>{ed_key}</th><td>{institutions[0]}</td></tr>")
    else:
        items = "".join(f"<li>{inst}</li>" for inst in institutions)
        rows.append(f"<tr><th>{ed_key}</th><td><ul>{items}</ul></td></tr>")
    rows.append(f"<tr><th>Occupation</th><td>{occupation.title()}</td></tr>")

    html = (
        "<!DOCTYPE html>\n<html>\n<head><title>{title}</title></head>\n<body>\n"
        "<h1>{title}</h1>\n"
        '<table class="infobox vcard">\n{rows}\n</table>\n'
        "<p>{body}</p>\n"
        "</body>\n</html>\n"
    ).format(title=name, rows="\n".join(rows), body=body_raw)

    return SyntheticPage(page_id, html, body_raw, sentences, gold)


def generate_pages(count: int, seed: int, prefix: str = "page") -> list[SyntheticPage]:
    rng = random.Random(seed)
    return [_make_page(f"{prefix}{i:03d}", rng) for i in range(count)]


def gold_corpus(
    pages: list[SyntheticPage], name: str, only_entity_sentences: bool = False
) -> Corpus:
    """True-label corpus over the generated sentences.

    Sentence ids use page split order, matching the annotator's numbering
    when empty sentences are kept.
    """
    sentences = []
    for page in pages:
        for i, (text, spans) in enumerate(zip(page.sentences, page.gold_spans)):
            if only_entity_sentences and not spans:
                continue
            tokens = tokenize(text)
            sentences.append(
                AnnotatedSentence(
                    f"{page.page_id}/{i}", page.page_id, tokens, spans_to_bio(tokens, spans)
                )
            )
    return Corpus(name, sentences)
