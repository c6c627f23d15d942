import json
import random

import pytest
from fastapi.testclient import TestClient

from pii_forge.corpus import (
    AnnotatedSentence,
    Corpus,
    EntitySpan,
    TagClass,
    Token,
    conll_loads,
    spans_to_bio,
)
from pii_forge.infobox import PiiRecord
from pii_forge.review_service import (
    InvalidDecisionError,
    LogCorruptionError,
    OverlapError,
    ReviewAction,
    ReviewDecision,
    ReviewSession,
    ReviewState,
    UnknownTargetError,
    apply_decision,
    create_app,
    export_gold,
    read_decision_log,
    replay_decisions,
)


def _tokens(words):
    toks = []
    at = 0
    for w in words:
        toks.append(Token(w, at, at + len(w)))
        at += len(w) + 1
    return toks


def _sentence(sid, page, words, spans):
    toks = _tokens(words)
    return AnnotatedSentence(sid, page, toks, spans_to_bio(toks, spans))


def machine_corpus():
    return Corpus(
        "machine",
        [
            _sentence(
                "a/0",
                "a",
                ["He", "married", "Jane", "Doe", "in", "2001", "."],
                [EntitySpan(2, 4, TagClass.SP), EntitySpan(5, 6, TagClass.BD)],
            ),
            _sentence(
                "a/1",
                "a",
                ["He", "lives", "in", "Troy", ",", "Michigan", "."],
                [EntitySpan(3, 4, TagClass.CH)],
            ),
            _sentence("b/0", "b", ["Nothing", "here", "."], []),
        ],
    )


RECORDS = [
    PiiRecord("a", {TagClass.SP: ["Jane Doe"], TagClass.BD: ["2001"], TagClass.CH: ["Troy"]}),
    PiiRecord("b", {}),
]


def _decision(i, sid, action, **kw):
    return ReviewDecision(decision_id=i, sentence_id=sid, action=action, **kw)


# ---------------------------------------------------------------------------
# state fold
# ---------------------------------------------------------------------------


def test_confirm_keeps_entity():
    state = ReviewState(machine_corpus())
    apply_decision(state, _decision(0, "a/0", ReviewAction.CONFIRM, target="m0"))
    golds = state.sentences["a/0"].gold_spans()
    assert EntitySpan(2, 4, TagClass.SP) in golds


def test_reject_removes_entity():
    state = ReviewState(machine_corpus())
    apply_decision(state, _decision(0, "a/0", ReviewAction.REJECT, target="m0"))
    assert state.sentences["a/0"].gold_spans() == []


def test_correct_to_o_equals_reject():
    # The city mistagged as a child: correcting its tag to O drops it.
    state = ReviewState(machine_corpus())
    apply_decision(state, _decision(0, "a/1", ReviewAction.CORRECT, target="m0", tag="O"))
    assert state.sentences["a/1"].gold_spans() == []
    assert state.sentences["a/1"].done()


def test_correct_span_and_tag():
    state = ReviewState(machine_corpus())
    apply_decision(
        state,
        _decision(0, "a/0", ReviewAction.CORRECT, target="m0", start=2, end=3, tag="PR"),
    )
    assert EntitySpan(2, 3, TagClass.PR) in state.sentences["a/0"].gold_spans()


def test_add_inserts_entity():
    state = ReviewState(machine_corpus())
    apply_decision(state, _decision(0, "b/0", ReviewAction.ADD, start=0, end=1, tag="ED"))
    assert state.sentences["b/0"].gold_spans() == [EntitySpan(0, 1, TagClass.ED)]


def test_later_decision_supersedes():
    state = ReviewState(machine_corpus())
    apply_decision(state, _decision(0, "a/0", ReviewAction.REJECT, target="m0"))
    apply_decision(state, _decision(1, "a/0", ReviewAction.CONFIRM, target="m0"))
    assert EntitySpan(2, 4, TagClass.SP) in state.sentences["a/0"].gold_spans()


def test_overlap_rejected():
    state = ReviewState(machine_corpus())
    apply_decision(state, _decision(0, "a/0", ReviewAction.CONFIRM, target="m0"))
    with pytest.raises(OverlapError):
        state.apply(_decision(1, "a/0", ReviewAction.ADD, start=3, end=5, tag="ED"))


def test_unknown_targets():
    state = ReviewState(machine_corpus())
    with pytest.raises(UnknownTargetError):
        state.apply(_decision(0, "zz/9", ReviewAction.CONFIRM, target="m0"))
    with pytest.raises(UnknownTargetError):
        state.apply(_decision(0, "a/0", ReviewAction.CONFIRM, target="m9"))


def test_invalid_spans():
    state = ReviewState(machine_corpus())
    with pytest.raises(InvalidDecisionError):
        state.apply(_decision(0, "b/0", ReviewAction.ADD, start=0, end=9, tag="ED"))
    with pytest.raises(InvalidDecisionError):
        state.apply(_decision(0, "b/0", ReviewAction.ADD, start=1, end=1, tag="ED"))
    with pytest.raises(InvalidDecisionError):
        state.apply(_decision(0, "b/0", ReviewAction.ADD, start=0, end=1, tag="XX"))


def _random_decisions(corpus, n, seed):
    """Generate n decisions, keeping only those the state accepts."""
    rnd = random.Random(seed)
    state = ReviewState(corpus)
    accepted = []
    sids = list(state.sentences)
    while len(accepted) < n:
        sid = rnd.choice(sids)
        st = state.sentences[sid]
        action = rnd.choice(list(ReviewAction))
        kw = {}
        if action in (ReviewAction.CONFIRM, ReviewAction.REJECT, ReviewAction.CORRECT):
            if not st.machine:
                continue
            kw["target"] = rnd.choice(sorted(st.machine))
            if action == ReviewAction.CORRECT:
                if rnd.random() < 0.3:
                    kw["tag"] = "O"
                else:
                    n_tok = len(st.sentence.tokens)
                    start = rnd.randrange(0, n_tok)
                    kw["start"] = start
                    kw["end"] = rnd.randrange(start + 1, min(start + 3, n_tok) + 1)
                    kw["tag"] = rnd.choice(list(TagClass)).value
        else:
            n_tok = len(st.sentence.tokens)
            start = rnd.randrange(0, n_tok)
            kw["start"] = start
            kw["end"] = rnd.randrange(start + 1, min(start + 2, n_tok) + 1)
            kw["tag"] = rnd.choice(list(TagClass)).value
        decision = _decision(len(accepted), sid, action, **kw)
        try:
            state.apply(decision)
        except Exception:
            continue
        accepted.append(decision)
    return accepted


def test_replay_reproduces_state():
    corpus = machine_corpus()
    decisions = _random_decisions(corpus, 50, seed=4)
    step_state = ReviewState(corpus)
    for decision in decisions:
        step_state.apply(decision)
    replayed = replay_decisions(corpus, decisions)
    assert replayed.snapshot() == step_state.snapshot()
    assert replayed.decisions_applied == 50


def test_gold_never_overlaps_after_random_decisions():
    corpus = machine_corpus()
    for seed in range(5):
        state = replay_decisions(corpus, _random_decisions(corpus, 30, seed=seed))
        for st in state.sentences.values():
            spans = st.gold_spans()
            for a, b in zip(spans, spans[1:]):
                assert not a.overlaps(b)


# ---------------------------------------------------------------------------
# export
# ---------------------------------------------------------------------------


def test_export_equals_machine_when_all_confirmed():
    corpus = machine_corpus()
    state = ReviewState(corpus)
    for sid, st in state.sentences.items():
        for eid in st.machine:
            state.apply(_decision(0, sid, ReviewAction.CONFIRM, target=eid))
    exported = export_gold(state, corpus, only_done=True)
    assert [s.labels for s in exported.sentences] == [s.labels for s in corpus.sentences]


def test_export_only_done_subset():
    corpus = machine_corpus()
    state = ReviewState(corpus)
    state.apply(_decision(0, "a/0", ReviewAction.CONFIRM, target="m0"))
    state.apply(_decision(1, "a/0", ReviewAction.REJECT, target="m1"))
    done_only = export_gold(state, corpus, only_done=True)
    everything = export_gold(state, corpus, only_done=False)
    done_ids = {s.sentence_id for s in done_only.sentences}
    all_ids = {s.sentence_id for s in everything.sentences}
    assert done_ids <= all_ids
    assert "a/0" in done_ids and "a/1" not in done_ids
    # b/0 has no machine entities, so it is born done.
    assert "b/0" in done_ids


def test_export_reflects_reject():
    corpus = machine_corpus()
    state = ReviewState(corpus)
    state.apply(_decision(0, "a/0", ReviewAction.CONFIRM, target="m0"))
    state.apply(_decision(1, "a/0", ReviewAction.REJECT, target="m1"))
    exported = export_gold(state, corpus, only_done=True)
    by_id = {s.sentence_id: s for s in exported.sentences}
    assert by_id["a/0"].spans() == [EntitySpan(2, 4, TagClass.SP)]


def test_export_mixed_decisions_fixture():
    # Hand-built expectation: confirm SP, correct BD to span [4,6), reject the
    # Troy child, add ED on b/0.
    corpus = machine_corpus()
    state = ReviewState(corpus)
    state.apply(_decision(0, "a/0", ReviewAction.CONFIRM, target="m0"))
    state.apply(_decision(1, "a/0", ReviewAction.CORRECT, target="m1", start=4, end=6, tag="BD"))
    state.apply(_decision(2, "a/1", ReviewAction.CORRECT, target="m0", tag="O"))
    state.apply(_decision(3, "b/0", ReviewAction.ADD, start=0, end=1, tag="ED"))
    exported = export_gold(state, corpus, only_done=True)
    by_id = {s.sentence_id: s for s in exported.sentences}
    assert by_id["a/0"].spans() == [EntitySpan(2, 4, TagClass.SP), EntitySpan(4, 6, TagClass.BD)]
    assert by_id["a/1"].spans() == []
    assert by_id["b/0"].spans() == [EntitySpan(0, 1, TagClass.ED)]


# ---------------------------------------------------------------------------
# log + service
# ---------------------------------------------------------------------------


def test_log_corruption_reports_offset(tmp_path):
    path = tmp_path / "log.jsonl"
    good = ReviewDecision(0, "a/0", ReviewAction.CONFIRM, target="m0", timestamp=1.0)
    with open(path, "w") as fh:
        fh.write(good.to_json() + "\n")
        offset = fh.tell()
        fh.write("{this is not json\n")
    with pytest.raises(LogCorruptionError) as exc:
        read_decision_log(path)
    assert exc.value.last_good_offset == offset
    assert exc.value.line_no == 2


def _client(tmp_path, log_name="decisions.jsonl"):
    session = ReviewSession(machine_corpus(), RECORDS, tmp_path / log_name)
    return TestClient(create_app(session)), session


def test_api_next_serves_entities_and_infobox(tmp_path):
    client, _ = _client(tmp_path)
    response = client.get("/api/next")
    assert response.status_code == 200
    payload = response.json()
    # Page "a" has more machine entities, so its first sentence comes first.
    assert payload["sentence_id"] == "a/0"
    assert {e["tag"] for e in payload["entities"]} == {"SP", "BD"}
    assert payload["infobox"]["SP"] == ["Jane Doe"]
    assert payload["progress"]["total_sentences"] == 3


def test_api_decision_and_restart_replay(tmp_path):
    client, _ = _client(tmp_path)
    response = client.post(
        "/api/decision",
        json={"sentence_id": "a/0", "action": "CONFIRM", "target": "m0", "annotator": "t"},
    )
    assert response.status_code == 200
    response = client.post(
        "/api/decision",
        json={"sentence_id": "a/0", "action": "REJECT", "target": "m1", "annotator": "t"},
    )
    assert response.status_code == 200

    # Restart: a fresh session replays the log and exports identically.
    client2, session2 = _client(tmp_path)
    assert session2.state.decisions_applied == 2
    export1 = client.get("/api/export", params={"only_done": "true"}).text
    export2 = client2.get("/api/export", params={"only_done": "true"}).text
    assert export1 == export2
    corpus = conll_loads(export1)
    by_id = {s.sentence_id: s for s in corpus.sentences}
    assert by_id["a/0"].spans() == [EntitySpan(2, 4, TagClass.SP)]


def test_api_validation_errors(tmp_path):
    client, _ = _client(tmp_path)
    response = client.post(
        "/api/decision",
        json={"sentence_id": "b/0", "action": "ADD", "start": 0, "end": 99, "tag": "ED"},
    )
    assert response.status_code == 400
    assert "out of bounds" in response.json()["detail"]
    response = client.post(
        "/api/decision", json={"sentence_id": "zz/0", "action": "CONFIRM", "target": "m0"}
    )
    assert response.status_code == 404
    response = client.post(
        "/api/decision", json={"sentence_id": "a/0", "action": "FROB", "target": "m0"}
    )
    assert response.status_code == 400


def test_api_sentence_and_progress(tmp_path):
    client, _ = _client(tmp_path)
    response = client.get("/api/sentence/a/1")
    assert response.status_code == 200
    assert response.json()["sentence_id"] == "a/1"
    assert client.get("/api/sentence/nope/0").status_code == 404
    progress = client.get("/api/progress").json()
    assert progress == {"total_sentences": 3, "done": 1, "pending": 2, "decisions": 0}


def test_api_next_exhausts(tmp_path):
    client, session = _client(tmp_path)
    while True:
        response = client.get("/api/next")
        if response.status_code == 404:
            break
        payload = response.json()
        for entity in payload["entities"]:
            if entity["status"] == "pending":
                client.post(
                    "/api/decision",
                    json={
                        "sentence_id": payload["sentence_id"],
                        "action": "CONFIRM",
                        "target": entity["id"],
                    },
                )
    assert session.state.progress()["pending"] == 0
