"""Per-click conversion labels, history features, and dataset assembly.

Each click on product A becomes one training example: y1 says A itself was
purchased later in the session, y2 says some other product was, and alpha
carries the weighting scheme's similarity between A and the most similar
purchased other. History features are computed strictly from events before
the click's timestamp; the single exception is f_quick_bounce, which by
definition looks at the immediately following event within a short window.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from math import log1p
from typing import Iterable, Sequence

import numpy as np

from .corpus import CLICK, PURCHASE, Corpus, Event
from .similarity import WeightingScheme, alpha as scheme_alpha
from .taxonomy import Taxonomy

FEATURE_NAMES = (
    "f_user_product_clicks",
    "f_user_leaf_purchases",
    "f_time_gap",
    "f_product_popularity",
    "f_advertiser_cvr",
    "f_session_click_index",
    "f_quick_bounce",
)

N_FEATURES = len(FEATURE_NAMES)


@dataclass(frozen=True)
class FeatureConfig:
    bounce_threshold_ms: int = 10_000
    cvr_prior_purchases: float = 1.0
    cvr_prior_clicks: float = 10.0
    time_gap_cap_ms: int = 30 * 24 * 3_600_000

    def __post_init__(self) -> None:
        if self.bounce_threshold_ms < 0 or self.time_gap_cap_ms <= 0:
            raise ValueError("thresholds must be positive")
        if self.cvr_prior_clicks <= 0 or self.cvr_prior_purchases < 0:
            raise ValueError("cvr smoothing must have positive click prior")


@dataclass
class ClickExample:
    session_id: str
    user_id: str
    product_id: str
    timestamp_ms: int
    y1: int
    y2: int
    alpha: float
    purchased_others: frozenset[str]
    features: np.ndarray
    leaf_id: int


def partition_labels(session: Sequence[Event]) -> list[tuple[int, int, frozenset[str]]]:
    """(y1, y2, purchased_others) for each click of a time-sorted session,
    in click order. "Later" means a strictly later event position."""
    out = []
    purchases = [(pos, ev.product_id) for pos, ev in enumerate(session) if ev.event_type == PURCHASE]
    for pos, ev in enumerate(session):
        if ev.event_type != CLICK:
            continue
        y1 = 0
        others = set()
        for ppos, pid in purchases:
            if ppos <= pos:
                continue
            if pid == ev.product_id:
                y1 = 1
            else:
                others.add(pid)
        out.append((y1, 1 if others else 0, frozenset(others)))
    return out


def last_click_labels(corpus: Corpus) -> tuple[np.ndarray, int]:
    """Binary last-click credit per click, aligned with build_dataset order
    (ascending session id, then event position). A click gets 1 iff it is
    the most recent click preceding at least one purchase; purchases with
    no preceding click are skipped and counted as orphans."""
    labels: list[int] = []
    orphans = 0
    for sid in sorted(corpus.sessions):
        events = corpus.sessions[sid]
        click_positions = [pos for pos, ev in enumerate(events) if ev.event_type == CLICK]
        credited = set()
        for pos, ev in enumerate(events):
            if ev.event_type != PURCHASE:
                continue
            prior = [cp for cp in click_positions if cp < pos]
            if prior:
                credited.add(prior[-1])
            else:
                orphans += 1
        labels.extend(1 if cp in credited else 0 for cp in click_positions)
    return np.array(labels, dtype=np.float64), orphans


@dataclass
class HistoryIndex:
    """Running aggregates over already-seen events, used to compute the
    history features of a click without touching the click's own timestamp
    group or anything after it."""

    taxonomy: Taxonomy
    advertiser_of: dict[str, str]
    user_product_clicks: dict[tuple[str, str], int] = field(default_factory=dict)
    user_leaf_purchases: dict[tuple[str, int], int] = field(default_factory=dict)
    product_clicks: dict[str, int] = field(default_factory=dict)
    advertiser_clicks: dict[str, int] = field(default_factory=dict)
    advertiser_purchases: dict[str, int] = field(default_factory=dict)
    last_interaction_ms: dict[tuple[str, str], int] = field(default_factory=dict)

    @classmethod
    def empty(cls, corpus: Corpus, taxonomy: Taxonomy) -> "HistoryIndex":
        adv = {pid: entry.advertiser_id for pid, entry in corpus.catalog.items()}
        return cls(taxonomy=taxonomy, advertiser_of=adv)

    @classmethod
    def build(cls, corpus: Corpus, taxonomy: Taxonomy, up_to_ms: int) -> "HistoryIndex":
        """Aggregates over every event with timestamp strictly before
        `up_to_ms`, in deterministic global order."""
        hist = cls.empty(corpus, taxonomy)
        stream = []
        for sid in sorted(corpus.sessions):
            for pos, ev in enumerate(corpus.sessions[sid]):
                if ev.timestamp_ms < up_to_ms:
                    stream.append((ev.timestamp_ms, sid, pos, ev))
        stream.sort(key=lambda item: (item[0], item[1], item[2]))
        for _, _, _, ev in stream:
            hist.observe(ev)
        return hist

    def observe(self, ev: Event) -> None:
        key = (ev.user_id, ev.product_id)
        if ev.event_type == CLICK:
            self.user_product_clicks[key] = self.user_product_clicks.get(key, 0) + 1
            self.product_clicks[ev.product_id] = self.product_clicks.get(ev.product_id, 0) + 1
            aid = self.advertiser_of[ev.product_id]
            self.advertiser_clicks[aid] = self.advertiser_clicks.get(aid, 0) + 1
        elif ev.event_type == PURCHASE:
            leaf = self.taxonomy.leaf(ev.product_id)
            lkey = (ev.user_id, leaf)
            self.user_leaf_purchases[lkey] = self.user_leaf_purchases.get(lkey, 0) + 1
            aid = self.advertiser_of[ev.product_id]
            self.advertiser_purchases[aid] = self.advertiser_purchases.get(aid, 0) + 1
        self.last_interaction_ms[key] = ev.timestamp_ms

    def features_for(
        self,
        click: Event,
        session_click_index: int,
        next_event: Event | None,
        config: FeatureConfig,
    ) -> np.ndarray:
        key = (click.user_id, click.product_id)
        leaf = self.taxonomy.leaf(click.product_id)
        aid = self.advertiser_of[click.product_id]
        last_ms = self.last_interaction_ms.get(key)
        if last_ms is None:
            gap = config.time_gap_cap_ms
        else:
            gap = min(click.timestamp_ms - last_ms, config.time_gap_cap_ms)
        cvr = (self.advertiser_purchases.get(aid, 0) + config.cvr_prior_purchases) / (
            self.advertiser_clicks.get(aid, 0) + config.cvr_prior_clicks
        )
        bounce = 0.0
        if (
            next_event is not None
            and next_event.product_id != click.product_id
            and next_event.timestamp_ms - click.timestamp_ms <= config.bounce_threshold_ms
        ):
            bounce = 1.0
        return np.array(
            [
                log1p(self.user_product_clicks.get(key, 0)),
                log1p(self.user_leaf_purchases.get((click.user_id, leaf), 0)),
                log1p(gap),
                log1p(self.product_clicks.get(click.product_id, 0)),
                cvr,
                float(session_click_index),
                bounce,
            ],
            dtype=np.float64,
        )


def extract_features(
    corpus: Corpus,
    click: Event,
    history_index: HistoryIndex,
    config: FeatureConfig = FeatureConfig(),
) -> np.ndarray:
    """Feature vector for one click using an already-positioned history
    index; the click is located in its session by object identity."""
    events = corpus.sessions[click.session_id]
    pos = next(i for i, ev in enumerate(events) if ev is click)
    index = sum(1 for ev in events[:pos] if ev.event_type == CLICK)
    next_event = events[pos + 1] if pos + 1 < len(events) else None
    return history_index.features_for(click, index, next_event, config)


def _example_alpha(scheme: WeightingScheme, product_id: str, others: frozenset[str]) -> float:
    if not others:
        return 1.0
    return max(scheme_alpha(scheme, product_id, b) for b in sorted(others))


def build_dataset(
    corpus: Corpus,
    taxonomy: Taxonomy,
    scheme: WeightingScheme,
    feature_config: FeatureConfig = FeatureConfig(),
) -> list[ClickExample]:
    """One example per click event, ordered by (session_id, event position).

    History aggregates advance through all sessions in global timestamp
    order; events sharing a timestamp see only strictly earlier ones."""
    stream: list[tuple[int, str, int, Event]] = []
    session_meta: dict[str, dict[int, tuple[int, int, Event | None]]] = {}
    session_labels: dict[str, list[tuple[int, int, frozenset[str]]]] = {}
    for sid in sorted(corpus.sessions):
        events = corpus.sessions[sid]
        session_labels[sid] = partition_labels(events)
        meta: dict[int, tuple[int, int, Event | None]] = {}
        click_index = 0
        for pos, ev in enumerate(events):
            stream.append((ev.timestamp_ms, sid, pos, ev))
            if ev.event_type == CLICK:
                nxt = events[pos + 1] if pos + 1 < len(events) else None
                meta[pos] = (click_index, pos, nxt)
                click_index += 1
        session_meta[sid] = meta

    stream.sort(key=lambda item: (item[0], item[1], item[2]))
    hist = HistoryIndex.empty(corpus, taxonomy)
    features: dict[tuple[str, int], np.ndarray] = {}
    i = 0
    n = len(stream)
    while i < n:
        j = i
        ts = stream[i][0]
        while j < n and stream[j][0] == ts:
            j += 1
        for k in range(i, j):
            _, sid, pos, ev = stream[k]
            if ev.event_type == CLICK:
                click_index, _, nxt = session_meta[sid][pos]
                features[(sid, pos)] = hist.features_for(ev, click_index, nxt, feature_config)
        for k in range(i, j):
            hist.observe(stream[k][3])
        i = j

    examples: list[ClickExample] = []
    for sid in sorted(corpus.sessions):
        events = corpus.sessions[sid]
        labels = session_labels[sid]
        li = 0
        for pos, ev in enumerate(events):
            if ev.event_type != CLICK:
                continue
            y1, y2, others = labels[li]
            li += 1
            examples.append(
                ClickExample(
                    session_id=sid,
                    user_id=ev.user_id,
                    product_id=ev.product_id,
                    timestamp_ms=ev.timestamp_ms,
                    y1=y1,
                    y2=y2,
                    alpha=_example_alpha(scheme, ev.product_id, others),
                    purchased_others=others,
                    features=features[(sid, pos)],
                    leaf_id=taxonomy.leaf(ev.product_id),
                )
            )
    return examples


def apply_scheme_alphas(examples: Sequence[ClickExample], scheme: WeightingScheme) -> list[ClickExample]:
    """Same examples with alphas recomputed under another scheme; labels
    and features are untouched (schemes only reweight CABB positives)."""
    return [
        replace(ex, alpha=_example_alpha(scheme, ex.product_id, ex.purchased_others))
        for ex in examples
    ]


@dataclass
class DatasetArrays:
    X: np.ndarray
    leaf_ids: np.ndarray
    y1: np.ndarray
    y2: np.ndarray
    alpha: np.ndarray
    session_ids: list[str]


def dataset_arrays(examples: Sequence[ClickExample]) -> DatasetArrays:
    n = len(examples)
    # feature width comes from the examples so ad-hoc batches of any
    # dimensionality (smaller test fixtures included) stack cleanly
    width = len(examples[0].features) if n else N_FEATURES
    X = np.empty((n, width))
    leaf_ids = np.empty(n, dtype=np.int64)
    y1 = np.empty(n)
    y2 = np.empty(n)
    alpha_arr = np.empty(n)
    session_ids = []
    for i, ex in enumerate(examples):
        X[i] = ex.features
        leaf_ids[i] = ex.leaf_id
        y1[i] = ex.y1
        y2[i] = ex.y2
        alpha_arr[i] = ex.alpha
        session_ids.append(ex.session_id)
    return DatasetArrays(X=X, leaf_ids=leaf_ids, y1=y1, y2=y2, alpha=alpha_arr, session_ids=session_ids)


def serialize_dataset(examples: Iterable[ClickExample]) -> Iterable[str]:
    """Debug dump: session, product, labels, alpha, features, leaf."""
    for ex in examples:
        feats = "\t".join(f"{v:.17g}" for v in ex.features)
        yield f"{ex.session_id}\t{ex.product_id}\t{ex.y1}\t{ex.y2}\t{ex.alpha:.17g}\t{feats}\t{ex.leaf_id}\n"
