import numpy as np
import pytest

from cabblab.corpus import parse_corpus
from cabblab.labeling import (
    FEATURE_NAMES,
    FeatureConfig,
    HistoryIndex,
    apply_scheme_alphas,
    build_dataset,
    dataset_arrays,
    extract_features,
    last_click_labels,
    partition_labels,
)
from cabblab.similarity import ItemI2I, Static1, TaxonomyCF, build_similarity_matrix
from cabblab.taxonomy import build_taxonomy
from conftest import make_corpus

F = {name: i for i, name in enumerate(FEATURE_NAMES)}

CATALOG = [
    ("p0", "a/x", "adv0"),
    ("p1", "a/x", "adv0"),
    ("p2", "b/y", "adv1"),
    ("p3", "c/z", "adv1"),
]


def brute_force_session_labels(events):
    """Independent per-click scan: (y1, y2, others, last_click_credit)."""
    click_positions = [i for i, ev in enumerate(events) if ev.event_type == "click"]
    purchase_positions = [i for i, ev in enumerate(events) if ev.event_type == "purchase"]
    credited = set()
    for pi in purchase_positions:
        prior = [ci for ci in click_positions if ci < pi]
        if prior:
            credited.add(max(prior))
    out = []
    for ci in click_positions:
        click = events[ci]
        y1 = 0
        others = set()
        for pi in purchase_positions:
            if pi <= ci:
                continue
            if events[pi].product_id == click.product_id:
                y1 = 1
            else:
                others.add(events[pi].product_id)
        out.append((y1, int(bool(others)), frozenset(others), int(ci in credited)))
    return out


def random_session_corpus(seed, n_sessions=60):
    rng = np.random.default_rng(seed)
    types = ["impression", "click", "add_to_cart", "purchase"]
    events = []
    for s in range(n_sessions):
        user = f"u{int(rng.integers(8))}"
        n = int(rng.integers(1, 10))
        # coarse timestamps force plenty of exact ties
        for _ in range(n):
            events.append(
                (
                    f"s{s:03d}",
                    user,
                    f"p{int(rng.integers(4))}",
                    types[int(rng.integers(4))],
                    int(rng.integers(1, 8)) * 1000,
                )
            )
    return make_corpus(events, CATALOG)


@pytest.mark.parametrize("seed", range(5))
def test_labels_match_brute_force_scanner(seed):
    corpus = random_session_corpus(seed)
    lc, _orphans = last_click_labels(corpus)
    flat = []
    for sid in sorted(corpus.sessions):
        events = corpus.sessions[sid]
        got = partition_labels(events)
        expect = brute_force_session_labels(events)
        assert [(y1, y2, others) for y1, y2, others in got] == [
            (y1, y2, others) for y1, y2, others, _ in expect
        ], sid
        flat.extend(last for _, _, _, last in expect)
    assert lc.tolist() == flat


def test_partition_labels_hand_case():
    corpus = make_corpus(
        [
            ("s1", "u1", "p0", "click", 1000),
            ("s1", "u1", "p1", "click", 2000),
            ("s1", "u1", "p0", "purchase", 3000),
            ("s1", "u1", "p2", "click", 4000),
            ("s1", "u1", "p3", "purchase", 5000),
        ],
        CATALOG,
    )
    labels = partition_labels(corpus.sessions["s1"])
    # click p0: buys p0 later (y1) and p3 later (y2)
    assert labels[0] == (1, 1, frozenset({"p0", "p3"} - {"p0"}))
    # click p1: p0 and p3 purchased later, neither is p1
    assert labels[1] == (0, 1, frozenset({"p0", "p3"}))
    # click p2 after the p0 purchase: only p3 remains
    assert labels[2] == (0, 1, frozenset({"p3"}))


def test_purchase_before_click_gives_no_credit():
    corpus = make_corpus(
        [("s1", "u1", "p0", "purchase", 1000), ("s1", "u1", "p0", "click", 2000)],
        CATALOG,
    )
    assert partition_labels(corpus.sessions["s1"]) == [(0, 0, frozenset())]


def test_same_timestamp_uses_event_position():
    # ties keep input order, and "later" means a later position
    corpus = make_corpus(
        [("s1", "u1", "p0", "click", 1000), ("s1", "u1", "p0", "purchase", 1000)],
        CATALOG,
    )
    assert partition_labels(corpus.sessions["s1"]) == [(1, 0, frozenset())]
    reversed_corpus = make_corpus(
        [("s1", "u1", "p0", "purchase", 1000), ("s1", "u1", "p0", "click", 1000)],
        CATALOG,
    )
    assert partition_labels(reversed_corpus.sessions["s1"]) == [(0, 0, frozenset())]


def test_last_click_orphan_purchases_are_counted():
    corpus = make_corpus(
        [
            ("s1", "u1", "p0", "purchase", 1000),
            ("s2", "u1", "p0", "click", 1000),
            ("s2", "u1", "p1", "purchase", 2000),
        ],
        CATALOG,
    )
    labels, orphans = last_click_labels(corpus)
    assert orphans == 1
    assert labels.tolist() == [1.0]


def _crafted_schemes():
    """TaxonomyCF over three leaves where a/x pairs are similar and c/z is
    engaged by nobody, so S(leaf(p0), leaf(p3)) = 0."""
    corpus = make_corpus(
        [
            ("s1", "u1", "p0", "click", 1000),
            ("s2", "u1", "p2", "click", 2000),
        ],
        CATALOG,
    )
    tax = build_taxonomy(corpus.catalog)
    vectors = {tax.leaf("p0"): {"u1": 1.0}, tax.leaf("p2"): {"u1": 2.0}, tax.leaf("p3"): {}}
    return tax, build_similarity_matrix(vectors)


def test_alpha_is_one_for_pure_caba_clicks():
    tax, matrix = _crafted_schemes()
    scheme = TaxonomyCF(taxonomy=tax, matrix=matrix)
    corpus = make_corpus(
        [("s1", "u1", "p0", "click", 1000), ("s1", "u1", "p0", "purchase", 2000)],
        CATALOG,
    )
    examples = build_dataset(corpus, tax, scheme)
    assert examples[0].y1 == 1 and examples[0].y2 == 0
    assert examples[0].alpha == 1.0


def test_alpha_takes_max_over_purchased_others():
    tax, matrix = _crafted_schemes()
    scheme = TaxonomyCF(taxonomy=tax, matrix=matrix)
    corpus = make_corpus(
        [
            ("s1", "u1", "p0", "click", 1000),
            ("s1", "u1", "p2", "purchase", 2000),
            ("s1", "u1", "p3", "purchase", 3000),
        ],
        CATALOG,
    )
    examples = build_dataset(corpus, tax, scheme)
    ex = examples[0]
    assert ex.purchased_others == frozenset({"p2", "p3"})
    s_02 = matrix.value(tax.leaf("p0"), tax.leaf("p2"))
    s_03 = matrix.value(tax.leaf("p0"), tax.leaf("p3"))
    assert s_03 == 0.0 and s_02 > 0.0
    assert ex.alpha == max(s_02, s_03)


def test_alpha_zero_when_only_other_is_unengaged():
    tax, matrix = _crafted_schemes()
    scheme = TaxonomyCF(taxonomy=tax, matrix=matrix)
    corpus = make_corpus(
        [("s1", "u1", "p0", "click", 1000), ("s1", "u1", "p3", "purchase", 2000)],
        CATALOG,
    )
    examples = build_dataset(corpus, tax, scheme)
    assert examples[0].y2 == 1
    assert examples[0].alpha == 0.0


def test_apply_scheme_alphas_only_touches_alpha():
    tax, matrix = _crafted_schemes()
    corpus = make_corpus(
        [
            ("s1", "u1", "p0", "click", 1000),
            ("s1", "u1", "p3", "purchase", 2000),
        ],
        CATALOG,
    )
    base = build_dataset(corpus, tax, Static1())
    assert base[0].alpha == 1.0
    rew = apply_scheme_alphas(base, TaxonomyCF(taxonomy=tax, matrix=matrix))
    assert rew[0].alpha == 0.0
    assert rew[0].y1 == base[0].y1 and rew[0].y2 == base[0].y2
    assert rew[0].features is base[0].features


BASE_EVENTS = [
    ("s1", "u1", "p0", "click", 10_000),
    ("s1", "u1", "p0", "purchase", 12_000),
    ("s2", "u1", "p0", "click", 50_000),
    ("s2", "u1", "p1", "click", 55_000),
]


def test_feature_values_hand_check():
    corpus = make_corpus(BASE_EVENTS, CATALOG)
    tax = build_taxonomy(corpus.catalog)
    examples = build_dataset(corpus, tax, Static1())
    cfg = FeatureConfig()
    # first ever click of u1 on p0: empty history
    f = examples[0].features
    assert f[F["f_user_product_clicks"]] == 0.0
    assert f[F["f_user_leaf_purchases"]] == 0.0
    assert f[F["f_time_gap"]] == pytest.approx(np.log1p(cfg.time_gap_cap_ms))
    assert f[F["f_product_popularity"]] == 0.0
    assert f[F["f_advertiser_cvr"]] == pytest.approx(0.1)
    assert f[F["f_session_click_index"]] == 0.0
    assert f[F["f_quick_bounce"]] == 0.0  # next event is the same product
    # second session: one prior click and one prior purchase on p0's leaf
    g = examples[1].features
    assert g[F["f_user_product_clicks"]] == pytest.approx(np.log1p(1))
    assert g[F["f_user_leaf_purchases"]] == pytest.approx(np.log1p(1))
    assert g[F["f_time_gap"]] == pytest.approx(np.log1p(50_000 - 12_000))
    assert g[F["f_advertiser_cvr"]] == pytest.approx((1 + 1) / (1 + 10))
    assert g[F["f_quick_bounce"]] == 1.0  # p1 click 5 s later
    # p1 click: index 1 within s2
    assert examples[2].features[F["f_session_click_index"]] == 1.0


def test_bounce_window_edges():
    cfg = FeatureConfig(bounce_threshold_ms=5000)
    corpus = make_corpus(
        [
            ("s1", "u1", "p0", "click", 1000),
            ("s1", "u1", "p1", "click", 6000),
            ("s1", "u1", "p2", "click", 20_000),
        ],
        CATALOG,
    )
    tax = build_taxonomy(corpus.catalog)
    examples = build_dataset(corpus, tax, Static1(), cfg)
    assert examples[0].features[F["f_quick_bounce"]] == 1.0  # exactly at threshold
    assert examples[1].features[F["f_quick_bounce"]] == 0.0  # 14 s later
    assert examples[2].features[F["f_quick_bounce"]] == 0.0  # no next event


def test_history_features_ignore_simultaneous_and_future_events():
    """Adding events at or after the click's timestamp in other sessions
    leaves all its history features untouched."""
    corpus = make_corpus(BASE_EVENTS, CATALOG)
    tax = build_taxonomy(corpus.catalog)
    base = build_dataset(corpus, tax, Static1())
    # latest click in BASE_EVENTS is at 55 000 ms; pollute from there on
    polluted = make_corpus(
        BASE_EVENTS
        + [
            ("s3", "u1", "p1", "click", 55_000),  # same instant as the last click
            ("s3", "u1", "p0", "purchase", 60_000),
            ("s4", "u1", "p0", "click", 70_000),
        ],
        CATALOG,
    )
    after = build_dataset(polluted, tax, Static1())
    for i in range(len(base)):
        assert np.array_equal(after[i].features, base[i].features), i


def test_history_features_see_strictly_earlier_events():
    corpus = make_corpus(BASE_EVENTS, CATALOG)
    tax = build_taxonomy(corpus.catalog)
    base = build_dataset(corpus, tax, Static1())
    polluted = make_corpus(
        BASE_EVENTS + [("s0", "u1", "p0", "click", 49_999)],
        CATALOG,
    )
    after = build_dataset(polluted, tax, Static1())
    i = next(
        k
        for k, ex in enumerate(after)
        if ex.session_id == "s2" and ex.product_id == "p0"
    )
    assert after[i].features[F["f_user_product_clicks"]] > base[1].features[
        F["f_user_product_clicks"]
    ]


@pytest.mark.parametrize("seed", range(3))
def test_extract_features_agrees_with_dataset_sweep(seed):
    """Dual route: positioning a fresh index at each click's timestamp must
    reproduce the incremental sweep's features exactly."""
    corpus = random_session_corpus(seed, n_sessions=25)
    tax = build_taxonomy(corpus.catalog)
    examples = build_dataset(corpus, tax, Static1())
    by_key = {}
    for ex in examples:
        by_key.setdefault((ex.session_id, ex.timestamp_ms, ex.product_id), []).append(ex)
    for sid in sorted(corpus.sessions):
        for ev in corpus.sessions[sid]:
            if ev.event_type != "click":
                continue
            hist = HistoryIndex.build(corpus, tax, ev.timestamp_ms)
            got = extract_features(corpus, ev, hist)
            candidates = by_key[(sid, ev.timestamp_ms, ev.product_id)]
            assert any(np.array_equal(got, ex.features) for ex in candidates)


def test_dataset_order_and_arrays_alignment():
    corpus = random_session_corpus(9)
    tax = build_taxonomy(corpus.catalog)
    examples = build_dataset(corpus, tax, Static1())
    keys = [(ex.session_id, ex.timestamp_ms) for ex in examples]
    assert keys == sorted(keys, key=lambda k: k[0])  # grouped by ascending sid
    arrays = dataset_arrays(examples)
    lc, _ = last_click_labels(corpus)
    assert arrays.X.shape == (len(examples), len(FEATURE_NAMES))
    assert len(lc) == len(examples)
    assert arrays.y1.tolist() == [ex.y1 for ex in examples]
    assert arrays.leaf_ids.tolist() == [ex.leaf_id for ex in examples]


def test_item_scheme_alpha_through_build_dataset():
    corpus = make_corpus(
        [
            ("s1", "u1", "p0", "click", 1000),
            ("s1", "u1", "p1", "purchase", 5000),
            ("s2", "u2", "p0", "click", 9000),
            ("s2", "u2", "p1", "click", 9500),
        ],
        CATALOG,
    )
    tax = build_taxonomy(corpus.catalog)
    from cabblab.similarity import build_item_vectors

    scheme = ItemI2I(vectors=build_item_vectors(corpus))
    examples = build_dataset(corpus, tax, scheme)
    ex = examples[0]
    assert ex.y2 == 1
    # u2 engages both products, u1 only p0 (purchases weigh on p1)
    assert 0.0 < ex.alpha < 1.0