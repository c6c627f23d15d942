"""Human review of automatic annotations over HTTP.

Serves sentences with machine entities and the source infobox phrases,
records confirm/reject/correct/add decisions in an append-only JSONL log
(the single source of truth), and exports the reviewed gold corpus. State is
a pure fold over the log, so replaying it from an empty state reproduces the
service exactly; on startup the existing log is replayed.
"""

from __future__ import annotations

import copy
import json
import os
import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable

from .corpus import AnnotatedSentence, Corpus, EntitySpan, TagClass, spans_to_bio
from .errors import DataError
from .infobox import PiiRecord


class ReviewAction(str, Enum):
    CONFIRM = "CONFIRM"
    REJECT = "REJECT"
    CORRECT = "CORRECT"
    ADD = "ADD"


class UnknownTargetError(DataError):
    """Decision references a sentence or entity that does not exist."""


class InvalidDecisionError(DataError):
    """Decision payload is malformed or out of bounds."""


class OverlapError(DataError):
    """Decision would create overlapping gold spans."""


class LogCorruptionError(DataError):
    def __init__(self, message: str, last_good_offset: int, line_no: int):
        super().__init__(f"{message} (last good byte offset {last_good_offset}, line {line_no})")
        self.last_good_offset = last_good_offset
        self.line_no = line_no


@dataclass(frozen=True)
class ReviewDecision:
    decision_id: int
    sentence_id: str
    action: ReviewAction
    target: str | None = None  # entity id for CONFIRM/REJECT/CORRECT
    start: int | None = None
    end: int | None = None
    tag: str | None = None  # TagClass value, or "O" to drop via CORRECT
    annotator: str = "anonymous"
    timestamp: float = 0.0

    def to_json(self) -> str:
        payload = {
            "decision_id": self.decision_id,
            "sentence_id": self.sentence_id,
            "action": self.action.value,
            "target": self.target,
            "start": self.start,
            "end": self.end,
            "tag": self.tag,
            "annotator": self.annotator,
            "timestamp": self.timestamp,
        }
        return json.dumps(payload, ensure_ascii=False)

    @classmethod
    def from_json(cls, line: str) -> "ReviewDecision":
        payload = json.loads(line)
        return cls(
            decision_id=int(payload["decision_id"]),
            sentence_id=str(payload["sentence_id"]),
            action=ReviewAction(payload["action"]),
            target=payload.get("target"),
            start=payload.get("start"),
            end=payload.get("end"),
            tag=payload.get("tag"),
            annotator=str(payload.get("annotator", "anonymous")),
            timestamp=float(payload.get("timestamp", 0.0)),
        )


@dataclass
class _EntityState:
    span: EntitySpan
    status: str = "pending"  # pending | confirmed | rejected
    replacement: EntitySpan | None = None  # set by CORRECT

    def gold_span(self) -> EntitySpan | None:
        if self.status != "confirmed":
            return None
        return self.replacement or self.span


@dataclass
class _SentenceState:
    sentence: AnnotatedSentence
    machine: dict[str, _EntityState] = field(default_factory=dict)
    added: dict[str, EntitySpan] = field(default_factory=dict)

    def gold_spans(self) -> list[EntitySpan]:
        spans = [s for e in self.machine.values() if (s := e.gold_span()) is not None]
        spans.extend(self.added.values())
        return sorted(spans, key=lambda s: s.start_token)

    def done(self) -> bool:
        return all(e.status != "pending" for e in self.machine.values())


class ReviewState:
    """Review progress: a deterministic fold over the decision sequence."""

    def __init__(self, machine_corpus: Corpus):
        self.sentences: dict[str, _SentenceState] = {}
        for sentence in machine_corpus.sentences:
            state = _SentenceState(sentence)
            for i, span in enumerate(sorted(sentence.spans(), key=lambda s: s.start_token)):
                state.machine[f"m{i}"] = _EntityState(span)
            self.sentences[sentence.sentence_id] = state
        self.decisions_applied = 0

    # -- validation ---------------------------------------------------------

    def _resolve(self, decision: ReviewDecision) -> _SentenceState:
        state = self.sentences.get(decision.sentence_id)
        if state is None:
            raise UnknownTargetError(f"unknown sentence {decision.sentence_id!r}")
        return state

    def _decision_span(self, decision: ReviewDecision, state: _SentenceState) -> EntitySpan:
        if decision.start is None or decision.end is None or decision.tag is None:
            raise InvalidDecisionError(f"{decision.action.value} requires start, end and tag")
        n = len(state.sentence.tokens)
        if not (0 <= decision.start < decision.end <= n):
            raise InvalidDecisionError(
                f"span [{decision.start}, {decision.end}) out of bounds for {n} tokens"
            )
        try:
            tag = TagClass(decision.tag)
        except ValueError:
            raise InvalidDecisionError(f"unknown tag {decision.tag!r}") from None
        return EntitySpan(decision.start, decision.end, tag)

    def validate(self, decision: ReviewDecision) -> None:
        """Raise if the decision cannot be applied; leaves state untouched."""
        state = self._resolve(decision)
        action = decision.action

        if action in (ReviewAction.CONFIRM, ReviewAction.REJECT, ReviewAction.CORRECT):
            if decision.target not in state.machine:
                raise UnknownTargetError(
                    f"unknown entity {decision.target!r} in {decision.sentence_id!r}"
                )

        prospective: list[EntitySpan] = []
        for entity_id, entity in state.machine.items():
            if action != ReviewAction.ADD and entity_id == decision.target:
                if action == ReviewAction.REJECT:
                    continue
                if action == ReviewAction.CONFIRM:
                    prospective.append(entity.span)
                    continue
                # CORRECT: tag "O" drops the entity, otherwise replace.
                if decision.tag == "O":
                    continue
                if decision.tag is None:
                    new_tag = entity.span.tag
                else:
                    try:
                        new_tag = TagClass(decision.tag)
                    except ValueError:
                        raise InvalidDecisionError(f"unknown tag {decision.tag!r}") from None
                if decision.start is not None or decision.end is not None:
                    if decision.start is None or decision.end is None:
                        raise InvalidDecisionError("CORRECT with a span needs both start and end")
                    n = len(state.sentence.tokens)
                    if not (0 <= decision.start < decision.end <= n):
                        raise InvalidDecisionError(
                            f"span [{decision.start}, {decision.end}) out of bounds for {n} tokens"
                        )
                    prospective.append(EntitySpan(decision.start, decision.end, new_tag))
                elif decision.tag is None:
                    raise InvalidDecisionError("CORRECT must change the span, the tag, or both")
                else:
                    prospective.append(
                        EntitySpan(entity.span.start_token, entity.span.end_token, new_tag)
                    )
                continue
            gold = entity.gold_span()
            if gold is not None:
                prospective.append(gold)
        prospective.extend(state.added.values())
        if action == ReviewAction.ADD:
            prospective.append(self._decision_span(decision, state))

        prospective.sort(key=lambda s: s.start_token)
        for a, b in zip(prospective, prospective[1:]):
            if a.overlaps(b):
                raise OverlapError(f"gold spans would overlap: {a} and {b}")

    # -- application --------------------------------------------------------

    def apply(self, decision: ReviewDecision) -> None:
        self.validate(decision)
        state = self.sentences[decision.sentence_id]
        action = decision.action
        if action == ReviewAction.CONFIRM:
            entity = state.machine[decision.target]
            entity.status = "confirmed"
            entity.replacement = None
        elif action == ReviewAction.REJECT:
            state.machine[decision.target].status = "rejected"
        elif action == ReviewAction.CORRECT:
            entity = state.machine[decision.target]
            if decision.tag == "O":
                entity.status = "rejected"
                entity.replacement = None
            else:
                tag = TagClass(decision.tag) if decision.tag is not None else entity.span.tag
                if decision.start is not None:
                    span = EntitySpan(decision.start, decision.end, tag)
                else:
                    span = EntitySpan(entity.span.start_token, entity.span.end_token, tag)
                entity.status = "confirmed"
                entity.replacement = span
        else:  # ADD
            span = self._decision_span(decision, state)
            state.added[f"a{decision.decision_id}"] = span
        self.decisions_applied += 1

    def snapshot(self) -> dict:
        """Comparable view of the full state, for replay checks."""
        return {
            sid: {
                "machine": {
                    eid: (e.span, e.status, e.replacement) for eid, e in st.machine.items()
                },
                "added": dict(st.added),
            }
            for sid, st in self.sentences.items()
        }

    # -- queries ------------------------------------------------------------

    def progress(self) -> dict:
        done = sum(1 for s in self.sentences.values() if s.done())
        return {
            "total_sentences": len(self.sentences),
            "done": done,
            "pending": len(self.sentences) - done,
            "decisions": self.decisions_applied,
        }


def apply_decision(state: ReviewState, decision: ReviewDecision) -> ReviewState:
    """Fold one decision into the state (mutating) and return it."""
    state.apply(decision)
    return state


def replay_decisions(machine_corpus: Corpus, decisions: Iterable[ReviewDecision]) -> ReviewState:
    state = ReviewState(machine_corpus)
    for decision in decisions:
        state.apply(decision)
    return state


def export_gold(state: ReviewState, machine_corpus: Corpus, only_done: bool = True) -> Corpus:
    """Render reviewed sentences back to a BIO corpus.

    Pending sentences are excluded when only_done is set; confirmed spans,
    corrections and additions become the gold labels.
    """
    sentences = []
    for source in machine_corpus.sentences:
        st = state.sentences[source.sentence_id]
        if only_done and not st.done():
            continue
        sentences.append(
            AnnotatedSentence(
                source.sentence_id,
                source.page_id,
                source.tokens,
                spans_to_bio(source.tokens, st.gold_spans()),
            )
        )
    return Corpus(f"{machine_corpus.name}/gold", sentences)


# --------------------------------------------------------------------------
# durable log + service
# --------------------------------------------------------------------------


def read_decision_log(path) -> list[ReviewDecision]:
    """Parse the JSONL decision log; corruption reports the last good offset."""
    decisions: list[ReviewDecision] = []
    if not os.path.exists(path):
        return decisions
    last_good = 0
    with open(path, "rb") as fh:
        for line_no, raw in enumerate(fh, start=1):
            if not raw.strip():
                last_good += len(raw)
                continue
            try:
                decisions.append(ReviewDecision.from_json(raw.decode("utf-8")))
            except (ValueError, KeyError, UnicodeDecodeError) as exc:
                raise LogCorruptionError(f"bad log entry: {exc}", last_good, line_no) from exc
            last_good += len(raw)
    return decisions


class ReviewSession:
    """Owns state, ordering and the durable log behind the HTTP API."""

    def __init__(self, machine_corpus: Corpus, records: list[PiiRecord], log_path):
        self.corpus = machine_corpus
        self.records = {r.page_id: r for r in records}
        missing = [p for p in machine_corpus.page_ids() if p not in self.records]
        if missing:
            raise DataError(f"records missing for pages: {missing[:5]}")
        self.log_path = log_path
        self.state = ReviewState(machine_corpus)
        for decision in read_decision_log(log_path):
            self.state.apply(decision)

        # Pages with the most machine entities come first.
        entity_count = {page: 0 for page in machine_corpus.page_ids()}
        for sentence in machine_corpus.sentences:
            entity_count[sentence.page_id] += len(sentence.spans())
        page_rank = {
            page: i
            for i, page in enumerate(
                sorted(entity_count, key=lambda p: (-entity_count[p], p))
            )
        }
        self.order = sorted(
            (s.sentence_id for s in machine_corpus.sentences),
            key=lambda sid: (page_rank[sid.split("/")[0]], sid),
        )
        self._by_id = {s.sentence_id: s for s in machine_corpus.sentences}

    def next_pending(self) -> str | None:
        for sid in self.order:
            if not self.state.sentences[sid].done():
                return sid
        return None

    def sentence_payload(self, sentence_id: str) -> dict:
        if sentence_id not in self.state.sentences:
            raise UnknownTargetError(f"unknown sentence {sentence_id!r}")
        st = self.state.sentences[sentence_id]
        sentence = st.sentence
        record = self.records.get(sentence.page_id)
        return {
            "sentence_id": sentence_id,
            "page_id": sentence.page_id,
            "tokens": [{"text": t.text, "start": t.start, "end": t.end} for t in sentence.tokens],
            "entities": [
                {
                    "id": eid,
                    "start": e.span.start_token,
                    "end": e.span.end_token,
                    "tag": e.span.tag.value,
                    "status": e.status,
                    "corrected": (
                        {
                            "start": e.replacement.start_token,
                            "end": e.replacement.end_token,
                            "tag": e.replacement.tag.value,
                        }
                        if e.replacement
                        else None
                    ),
                }
                for eid, e in st.machine.items()
            ],
            "added": [
                {"id": aid, "start": s.start_token, "end": s.end_token, "tag": s.tag.value}
                for aid, s in st.added.items()
            ],
            "infobox": {
                tag.value: list(record.phrases.get(tag, [])) if record else []
                for tag in TagClass
            },
            "status": "done" if st.done() else "pending",
            "progress": self.state.progress(),
        }

    def submit(self, payload: dict) -> ReviewDecision:
        """Validate, durably append, then apply a decision."""
        try:
            action = ReviewAction(payload.get("action"))
        except ValueError:
            raise InvalidDecisionError(f"unknown action {payload.get('action')!r}") from None
        decision = ReviewDecision(
            decision_id=self.state.decisions_applied,
            sentence_id=str(payload.get("sentence_id", "")),
            action=action,
            target=payload.get("target"),
            start=payload.get("start"),
            end=payload.get("end"),
            tag=payload.get("tag"),
            annotator=str(payload.get("annotator", "anonymous")),
            timestamp=time.time(),
        )
        self.state.validate(decision)
        with open(self.log_path, "a", encoding="utf-8") as fh:
            fh.write(decision.to_json() + "\n")
            fh.flush()
            os.fsync(fh.fileno())
        self.state.apply(decision)
        return decision

    def export(self, only_done: bool = True) -> Corpus:
        return export_gold(self.state, self.corpus, only_done)


def create_app(session: ReviewSession):
    """FastAPI application exposing the review API."""
    from fastapi import FastAPI, HTTPException
    from fastapi.responses import PlainTextResponse

    from .corpus import conll_dumps

    app = FastAPI(title="pii-forge review service")

    @app.get("/api/progress")
    def progress():
        return session.state.progress()

    @app.get("/api/next")
    def next_sentence(annotator: str = "anonymous"):
        sid = session.next_pending()
        if sid is None:
            raise HTTPException(status_code=404, detail="no pending sentences")
        return session.sentence_payload(sid)

    @app.get("/api/sentence/{sentence_id:path}")
    def sentence(sentence_id: str):
        try:
            return session.sentence_payload(sentence_id)
        except UnknownTargetError as exc:
            raise HTTPException(status_code=404, detail=str(exc))

    @app.post("/api/decision")
    def decision(payload: dict):
        try:
            applied = session.submit(payload)
        except UnknownTargetError as exc:
            raise HTTPException(status_code=404, detail=str(exc))
        except (InvalidDecisionError, OverlapError) as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        return {
            "decision_id": applied.decision_id,
            "sentence": session.sentence_payload(applied.sentence_id),
        }

    @app.get("/api/export", response_class=PlainTextResponse)
    def export(only_done: bool = True):
        return conll_dumps(session.export(only_done))

    return app


def serve(machine_corpus: Corpus, records: list[PiiRecord], log_path, port: int = 8571):
    """Run the review service until interrupted."""
    import uvicorn

    session = ReviewSession(machine_corpus, records, log_path)
    app = create_app(session)
    uvicorn.run(app, host="127.0.0.1", port=port, log_level="info")
