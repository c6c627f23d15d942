import itertools

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pii_forge.corpus import (
    AnnotatedSentence,
    Corpus,
    EntitySpan,
    TagClass,
    Token,
    spans_to_bio,
)
from pii_forge.nereval import (
    AlignmentError,
    Scheme,
    full_report,
    match_entities,
    pair_credit,
    score,
)

NAME = TagClass.SP  # stands in for the "name" tag of the reward-table rows
PLACE = TagClass.ED  # stands in for "place"

GOLD = EntitySpan(0, 2, NAME)

# (pred, expected credit per scheme strict/exact/type/partial)
REWARD_ROWS = [
    (EntitySpan(0, 2, NAME), (1.0, 1.0, 1.0, 1.0)),
    (EntitySpan(1, 2, NAME), (0.0, 0.0, 0.5, 0.5)),
    (EntitySpan(0, 2, PLACE), (0.0, 1.0, 0.0, 0.5)),
    (EntitySpan(1, 2, PLACE), (0.0, 0.0, 0.0, 0.5)),
]


@pytest.mark.parametrize("pred,expected", REWARD_ROWS)
def test_pair_credit_reward_table(pred, expected):
    got = tuple(
        pair_credit(pred, GOLD, s)
        for s in (Scheme.STRICT, Scheme.EXACT, Scheme.TYPE, Scheme.PARTIAL)
    )
    assert got == expected


spans_strategy = st.builds(
    lambda s, length, tag: EntitySpan(s, s + length, tag),
    st.integers(0, 8),
    st.integers(1, 3),
    st.sampled_from(list(TagClass)),
)


@given(spans_strategy, spans_strategy)
def test_pair_credit_monotone_across_schemes(pred, gold):
    strict = pair_credit(pred, gold, Scheme.STRICT)
    exact = pair_credit(pred, gold, Scheme.EXACT)
    typ = pair_credit(pred, gold, Scheme.TYPE)
    partial = pair_credit(pred, gold, Scheme.PARTIAL)
    assert strict <= typ <= partial
    assert strict <= exact


# ---------------------------------------------------------------------------
# matching
# ---------------------------------------------------------------------------


def test_match_single_overlap():
    pairing = match_entities([EntitySpan(0, 2, NAME)], [EntitySpan(1, 3, NAME)])
    assert len(pairing.pairs) == 1
    assert pairing.unmatched_pred == [] and pairing.unmatched_gold == []


def test_match_tie_prefers_earlier_gold():
    pred = EntitySpan(2, 4, NAME)
    golds = [EntitySpan(1, 3, NAME), EntitySpan(3, 5, NAME)]
    pairing = match_entities([pred], golds)
    assert pairing.pairs == [(pred, golds[0])]
    assert pairing.unmatched_gold == [golds[1]]


def test_match_never_pairs_disjoint():
    pairing = match_entities([EntitySpan(0, 1, NAME)], [EntitySpan(5, 6, NAME)])
    assert pairing.pairs == []
    assert len(pairing.unmatched_pred) == 1 and len(pairing.unmatched_gold) == 1


def _greedy_total_credit(preds, golds, scheme):
    pairing = match_entities(preds, golds)
    return sum(pair_credit(p, g, scheme) for p, g in pairing.pairs)


def _optimal_total_credit(preds, golds, scheme):
    """Exhaustive assignment oracle over all one-to-one matchings."""
    best = 0.0
    n = len(golds)
    for k in range(0, min(len(preds), n) + 1):
        for pred_subset in itertools.combinations(range(len(preds)), k):
            for gold_perm in itertools.permutations(range(n), k):
                total = 0.0
                ok = True
                for pi, gi in zip(pred_subset, gold_perm):
                    if (
                        min(preds[pi].end_token, golds[gi].end_token)
                        - max(preds[pi].start_token, golds[gi].start_token)
                        <= 0
                    ):
                        ok = False
                        break
                    total += pair_credit(preds[pi], golds[gi], scheme)
                if ok:
                    best = max(best, total)
    return best


@given(
    st.lists(spans_strategy, max_size=3),
    st.lists(spans_strategy, max_size=3),
    st.sampled_from(list(Scheme)),
)
@settings(max_examples=60, deadline=None)
def test_greedy_close_to_optimal_and_deterministic(preds, golds, scheme):
    greedy = _greedy_total_credit(preds, golds, scheme)
    optimal = _optimal_total_credit(preds, golds, scheme)
    assert greedy <= optimal + 1e-9
    # Determinism: same inputs, same pairing.
    first = match_entities(preds, golds)
    second = match_entities(preds, golds)
    assert first.pairs == second.pairs


# ---------------------------------------------------------------------------
# score
# ---------------------------------------------------------------------------


def test_score_hand_computed_partial_precision():
    date = TagClass.BD
    golds = {"s0": [EntitySpan(0, 2, NAME), EntitySpan(5, 6, date)]}
    preds = {"s0": [EntitySpan(0, 2, NAME), EntitySpan(5, 6, PLACE)]}
    # Hand computation from the reward table: 1 + 0.5 credits over 2 preds.
    table = score(preds, golds, Scheme.PARTIAL)
    assert table["micro"].precision == pytest.approx(0.75)


def test_score_identical_sets_are_perfect():
    spans = {"a": [EntitySpan(0, 1, NAME)], "b": [EntitySpan(2, 4, PLACE)]}
    for scheme in Scheme:
        table = score(spans, spans, scheme)
        assert table["micro"].f1 == 1.0
        assert table["macro"].f1 == 1.0


def test_score_empty_preds():
    golds = {"a": [EntitySpan(0, 1, NAME)]}
    table = score({"a": []}, golds, Scheme.STRICT)
    assert table["micro"].precision == 0.0
    assert table["micro"].recall == 0.0


def test_score_both_empty_is_perfect():
    table = score({"a": []}, {"a": []}, Scheme.STRICT)
    assert table["micro"].f1 == 1.0


def test_per_class_credit_bounded():
    golds = {"s": [EntitySpan(0, 2, NAME)]}
    preds = {"s": [EntitySpan(0, 2, PLACE)]}
    table = score(preds, golds, Scheme.EXACT)
    # Credit lands on the gold class; bounds hold per class.
    m = table[NAME.value]
    assert m.credit <= min(m.n_pred, m.n_gold)
    assert m.f1 == 1.0
    assert PLACE.value not in table


# ---------------------------------------------------------------------------
# full_report
# ---------------------------------------------------------------------------


def _sentence(sid, page, n_tokens, spans):
    toks = [Token(f"w{i}", 2 * i, 2 * i + 1) for i in range(n_tokens)]
    return AnnotatedSentence(sid, page, toks, spans_to_bio(toks, spans))


def test_full_report_self_comparison():
    corpus = Corpus(
        "c",
        [
            _sentence("p/0", "p", 6, [EntitySpan(0, 2, NAME)]),
            _sentence("p/1", "p", 6, [EntitySpan(3, 5, TagClass.BD)]),
        ],
    )
    report = full_report(corpus, corpus)
    for scheme in Scheme:
        assert report.micro_f1(scheme) == 1.0


def test_full_report_reward_table_corpus():
    # The four reward-table rows as four sentences of one corpus.
    golds = Corpus("g", [_sentence(f"s/{i}", "s", 4, [GOLD]) for i in range(4)])
    preds = Corpus(
        "p",
        [_sentence(f"s/{i}", "s", 4, [row[0]]) for i, row in enumerate(REWARD_ROWS)],
    )
    report = full_report(preds, golds)
    # Sum of the reward-table PARTIAL credits: (1 + 0.5 + 0.5 + 0.5) / 4.
    assert report.per_scheme[Scheme.PARTIAL]["micro"].precision == pytest.approx(0.625)
    assert report.per_scheme[Scheme.STRICT]["micro"].precision == pytest.approx(0.25)
    assert report.per_scheme[Scheme.EXACT]["micro"].precision == pytest.approx(0.5)
    assert report.per_scheme[Scheme.TYPE]["micro"].precision == pytest.approx(0.375)


def test_full_report_misaligned_ids():
    a = Corpus("a", [_sentence("x/0", "x", 3, [])])
    b = Corpus("b", [_sentence("y/0", "y", 3, [])])
    with pytest.raises(AlignmentError):
        full_report(a, b)


@st.composite
def random_span_sets(draw, n_tokens=10, max_spans=3):
    spans = []
    at = 0
    for _ in range(draw(st.integers(0, max_spans))):
        start = draw(st.integers(at, n_tokens - 1)) if at < n_tokens else None
        if start is None:
            break
        end = draw(st.integers(start + 1, min(start + 3, n_tokens)))
        spans.append(EntitySpan(start, end, draw(st.sampled_from(list(TagClass)))))
        at = end
        if at >= n_tokens:
            break
    return spans


@given(
    st.lists(
        st.tuples(random_span_sets(), random_span_sets()), min_size=1, max_size=4
    )
)
@settings(max_examples=80)
def test_scheme_f1_ordering(sentence_pairs):
    preds = {f"s{i}": p for i, (p, _) in enumerate(sentence_pairs)}
    golds = {f"s{i}": g for i, (_, g) in enumerate(sentence_pairs)}
    f1 = {s: score(preds, golds, s)["micro"].f1 for s in Scheme}
    assert f1[Scheme.STRICT] <= f1[Scheme.TYPE] + 1e-12
    assert f1[Scheme.TYPE] <= f1[Scheme.PARTIAL] + 1e-12
    assert f1[Scheme.STRICT] <= f1[Scheme.EXACT] + 1e-12


@given(
    st.lists(st.tuples(random_span_sets(), random_span_sets()), min_size=2, max_size=4),
    st.randoms(use_true_random=False),
)
@settings(max_examples=50)
def test_scores_invariant_under_reordering(sentence_pairs, rnd):
    preds = {f"s{i}": p for i, (p, _) in enumerate(sentence_pairs)}
    golds = {f"s{i}": g for i, (_, g) in enumerate(sentence_pairs)}
    baseline = score(preds, golds, Scheme.PARTIAL)["micro"]

    shuffled_ids = sorted(preds, key=lambda _: rnd.random())
    preds2 = {sid: list(preds[sid]) for sid in shuffled_ids}
    for sid in preds2:
        rnd.shuffle(preds2[sid])
    again = score(preds2, golds, Scheme.PARTIAL)["micro"]
    assert again == baseline


@given(st.lists(st.tuples(random_span_sets(), random_span_sets()), min_size=1, max_size=4))
@settings(max_examples=50)
def test_micro_credit_equals_class_sum(sentence_pairs):
    preds = {f"s{i}": p for i, (p, _) in enumerate(sentence_pairs)}
    golds = {f"s{i}": g for i, (_, g) in enumerate(sentence_pairs)}
    for scheme in Scheme:
        table = score(preds, golds, scheme)
        class_sum = sum(
            m.credit for name, m in table.items() if name not in ("micro", "macro")
        )
        assert table["micro"].credit == pytest.approx(class_sum)
