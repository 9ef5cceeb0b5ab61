"""Seeded synthetic session generator with planted conversion structure.

Each session draws a latent intent category; clicks land inside it and the
final outcome is one of four planted classes: buy a clicked product, buy
from a related category (per the configured affinity matrix), buy from an
unrelated category, or no purchase. The generator also plants learnable
signal: user loyalty and advertiser quality tilt the outcome odds (zero-mean,
so configured marginals are preserved), repeat-clicked products are the ones
bought in same-product conversions, and dwell-before-next-event is shorter
for clicks that end in cross-product conversions.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import IO, Iterable

import numpy as np

from .corpus import ADD_TO_CART, CLICK, IMPRESSION, PURCHASE, CatalogEntry, Corpus, Event
from .seeds import TAG_GENERATE, derive_rng

OUTCOME_CABA = "caba"
OUTCOME_RELATED = "related_cabb"
OUTCOME_NOISE = "noise_cabb"
OUTCOME_NONE = "none"

OUTCOME_CLASSES = (OUTCOME_CABA, OUTCOME_RELATED, OUTCOME_NOISE, OUTCOME_NONE)

_PROB_TOL = 1e-9

# ms offsets used to lay out a session's timeline
_SESSION_SPACING_MS = 600_000
_EPOCH_BASE_MS = 1_600_000_000_000

# dwell-to-next-event ranges; "short" sits under the default bounce threshold
_SHORT_DWELL_MS = (2_000, 8_001)
_LONG_DWELL_MS = (15_000, 60_001)
_IMPRESSION_LEAD_MS = (1_000, 3_001)
_PURCHASE_STEP_MS = (2_000, 10_001)

# planted probability that a click's dwell is short, by session outcome
_P_SHORT_DWELL = {
    OUTCOME_CABA: 0.35,
    OUTCOME_RELATED: 0.75,
    OUTCOME_NOISE: 0.5,
    OUTCOME_NONE: 0.5,
}

_P_CLICK_FAVORITE = 0.5
_P_BUY_MOST_CLICKED = 0.7
_P_CART_BEFORE_PURCHASE = 0.5
_P_ABANDONED_CART = 0.15
_LOYALTY_TILT = 0.10
_QUALITY_TILT = 0.08
_CATEGORY_TILT = 0.15
_NOISE_TILT = 0.85


def ring_affinity(n_categories: int, k: int = 2) -> np.ndarray:
    """Row-stochastic matrix putting uniform mass on the k ring neighbors
    each side of a category and zero elsewhere (diagonal included)."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if 2 * k >= n_categories:
        raise ValueError(f"ring width 2k={2 * k} must be < n_categories={n_categories}")
    aff = np.zeros((n_categories, n_categories))
    for c in range(n_categories):
        for d in range(1, k + 1):
            aff[c, (c + d) % n_categories] = 1.0 / (2 * k)
            aff[c, (c - d) % n_categories] = 1.0 / (2 * k)
    return aff


@dataclass
class SynthConfig:
    n_users: int
    n_sessions: int
    n_products: int
    n_categories: int
    p_caba: float
    p_related_cabb: float
    p_noise_cabb: float
    p_no_purchase: float
    related_affinity: np.ndarray
    clicks_per_session_mean: float = 2.2
    seed: int = 0

    def __post_init__(self) -> None:
        for name in ("n_users", "n_sessions", "n_products", "n_categories"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.n_categories < 2:
            raise ValueError("n_categories must be >= 2 to split related from unrelated")
        if self.n_products < self.n_categories:
            raise ValueError("need at least one product per category")
        probs = (self.p_caba, self.p_related_cabb, self.p_noise_cabb, self.p_no_purchase)
        if any(p < 0 or p > 1 for p in probs):
            raise ValueError(f"outcome probabilities must lie in [0,1], got {probs}")
        if abs(sum(probs) - 1.0) > _PROB_TOL:
            raise ValueError(f"outcome probabilities must sum to 1, got {sum(probs)!r}")
        aff = np.asarray(self.related_affinity, dtype=np.float64)
        if aff.shape != (self.n_categories, self.n_categories):
            raise ValueError(
                f"related_affinity shape {aff.shape} != ({self.n_categories}, {self.n_categories})"
            )
        if np.any(aff < 0):
            raise ValueError("related_affinity entries must be non-negative")
        row_sums = aff.sum(axis=1)
        if np.any(np.abs(row_sums - 1.0) > _PROB_TOL):
            raise ValueError("related_affinity rows must each sum to 1")
        self.related_affinity = aff
        if self.clicks_per_session_mean <= 0:
            raise ValueError("clicks_per_session_mean must be positive")


@dataclass
class GroundTruth:
    """Per-session planted truth: intent category path and outcome class,
    plus the affinity matrix the related outcomes were drawn from."""

    records: dict[str, tuple[str, str]] = field(default_factory=dict)
    related_affinity: np.ndarray | None = None

    def outcome_counts(self) -> dict[str, int]:
        counts = {c: 0 for c in OUTCOME_CLASSES}
        for _, outcome in self.records.values():
            counts[outcome] += 1
        return counts


def serialize_ground_truth(gt: GroundTruth) -> Iterable[str]:
    for sid in sorted(gt.records):
        intent, outcome = gt.records[sid]
        yield f"{sid}\t{intent}\t{outcome}\n"


def parse_ground_truth(stream: Iterable[str] | IO[str]) -> GroundTruth:
    records: dict[str, tuple[str, str]] = {}
    for lineno, line in enumerate(stream, start=1):
        if not line.strip():
            continue
        parts = line.rstrip("\n").split("\t")
        if len(parts) != 3:
            raise ValueError(f"ground-truth line {lineno}: expected 3 fields, got {len(parts)}")
        sid, intent, outcome = parts
        if outcome not in OUTCOME_CLASSES:
            raise ValueError(f"ground-truth line {lineno}: unknown outcome_class {outcome!r}")
        records[sid] = (intent, outcome)
    return GroundTruth(records=records)


def _category_paths(n_categories: int) -> list[str]:
    return [f"shop/dept{c % 10}/cat{c:04d}" for c in range(n_categories)]


def generate_synthetic(config: SynthConfig) -> tuple[Corpus, GroundTruth]:
    """Generate a corpus and its ground truth; pure function of `config`."""
    rng = derive_rng(config.seed, TAG_GENERATE)
    n_cat = config.n_categories
    aff = config.related_affinity
    cat_paths = _category_paths(n_cat)

    n_adv = max(2, config.n_products // 8)
    catalog: dict[str, CatalogEntry] = {}
    products_in_cat: list[list[str]] = [[] for _ in range(n_cat)]
    cat_of_pid: dict[str, int] = {}
    adv_of_pid: dict[str, int] = {}
    for j in range(config.n_products):
        pid = f"p{j:05d}"
        c = j % n_cat
        a = j % n_adv
        catalog[pid] = CatalogEntry(pid, cat_paths[c], f"a{a:04d}")
        products_in_cat[c].append(pid)
        cat_of_pid[pid] = c
        adv_of_pid[pid] = a

    # one zero off-diagonal affinity entry per row is required to place noise
    if config.p_noise_cabb > 0:
        for c in range(n_cat):
            related = aff[c] > 0
            if all(related[c2] or c2 == c for c2 in range(n_cat)):
                raise ValueError(
                    f"category {c}: every other category is related; "
                    "noise outcomes need an unrelated category"
                )

    loyalty = rng.uniform(-1.0, 1.0, config.n_users)
    adv_quality = rng.uniform(-1.0, 1.0, n_adv)

    # per-category conversion propensities: same-product propensity varies
    # smoothly around the category circle (low-rank, easy to embed), while
    # the coincidental cross-category propensity is i.i.d. per category
    # (incompressible; supervision on it is pure noise for other tasks).
    # Both are zero-mean so the configured outcome marginals are preserved.
    phase = rng.uniform(0.0, 2.0 * np.pi)
    cat_caba = np.cos(2.0 * np.pi * np.arange(n_cat) / n_cat + phase)
    cat_noise = rng.uniform(-1.0, 1.0, n_cat)
    cat_noise -= cat_noise.mean()
    cat_noise /= max(1.0, float(np.max(np.abs(cat_noise))))  # keep shifts feasible

    # each user prefers two categories; the second is drawn from the first's
    # affinity row so co-engagement aligns with the planted relatedness
    pref_a = rng.integers(0, n_cat, config.n_users)
    pref_b = np.empty(config.n_users, dtype=np.int64)
    for u in range(config.n_users):
        pref_b[u] = rng.choice(n_cat, p=aff[pref_a[u]])
    favorite: dict[tuple[int, int], str] = {}
    for u in range(config.n_users):
        for c in {int(pref_a[u]), int(pref_b[u])}:
            prods = products_in_cat[c]
            favorite[(u, c)] = prods[rng.integers(0, len(prods))]

    tilt_cap = min(config.p_caba, 1.0 - config.p_caba) / 2.0
    poisson_lam = max(config.clicks_per_session_mean - 1.0, 0.0)

    click_counts: dict[tuple[int, str], int] = {}
    sessions: dict[str, list[Event]] = {}
    records: dict[str, tuple[str, str]] = {}

    for i in range(config.n_sessions):
        sid = f"s{i:07d}"
        u = int(rng.integers(0, config.n_users))
        uid = f"u{u:05d}"
        intent = int(pref_a[u]) if rng.random() < 0.5 else int(pref_b[u])

        n_clicks = 1 + int(rng.poisson(poisson_lam))
        click_pids: list[str] = []
        for _ in range(n_clicks):
            if rng.random() < _P_CLICK_FAVORITE:
                pid = favorite[(u, intent)]
            else:
                prods = products_in_cat[intent]
                pid = prods[rng.integers(0, len(prods))]
            click_pids.append(pid)
        # the purchase, if any, lands after this many clicks
        n_before = int(rng.integers(1, n_clicks + 1))

        q_bar = float(np.mean([adv_quality[adv_of_pid[p]] for p in click_pids]))
        tilt = float(
            np.clip(
                _LOYALTY_TILT * loyalty[u] + _QUALITY_TILT * q_bar + _CATEGORY_TILT * cat_caba[intent],
                -tilt_cap,
                tilt_cap,
            )
        )
        p1 = config.p_caba + tilt
        scale = (1.0 - p1) / (1.0 - config.p_caba) if config.p_caba < 1.0 else 0.0
        p_noise = config.p_noise_cabb * scale
        p_none = config.p_no_purchase * scale
        # trade mass between the coincidental-purchase and no-purchase outcomes;
        # |cat_noise| <= 1 so both stay nonnegative for any configuration
        shift = _NOISE_TILT * cat_noise[intent] * min(p_noise, p_none)
        probs = (
            p1,
            config.p_related_cabb * scale,
            p_noise + shift,
            p_none - shift,
        )
        r = rng.random()
        acc = 0.0
        drawn = len(probs) - 1
        for idx, p in enumerate(probs):
            acc += p
            if r < acc:
                drawn = idx
                break
        planted = OUTCOME_CLASSES[drawn]

        purchased_pid: str | None = None
        before = click_pids[:n_before]
        if planted == OUTCOME_CABA:
            if rng.random() < _P_BUY_MOST_CLICKED:
                counts: dict[str, int] = {}
                for p in before:
                    counts[p] = counts.get(p, 0) + 1
                best, best_n = None, -1
                for p in before:  # first-seen order breaks ties
                    n = click_counts.get((u, p), 0) + counts[p]
                    if n > best_n:
                        best, best_n = p, n
                purchased_pid = best
            else:
                purchased_pid = before[rng.integers(0, len(before))]
        elif planted in (OUTCOME_RELATED, OUTCOME_NOISE):
            if planted == OUTCOME_RELATED:
                target = int(rng.choice(n_cat, p=aff[intent]))
            else:
                excluded = {intent, int(pref_a[u]), int(pref_b[u])}
                candidates = [
                    c for c in range(n_cat) if c not in excluded and aff[intent, c] == 0.0
                ]
                if not candidates:
                    candidates = [
                        c for c in range(n_cat) if c != intent and aff[intent, c] == 0.0
                    ]
                target = candidates[rng.integers(0, len(candidates))]
            clicked = set(click_pids)
            pool = [p for p in products_in_cat[target] if p not in clicked]
            if not pool:
                pool = products_in_cat[target]
            purchased_pid = pool[rng.integers(0, len(pool))]

        # ground truth records what the event stream will actually exhibit
        if purchased_pid is None:
            outcome = OUTCOME_NONE
        elif purchased_pid in before:
            outcome = OUTCOME_CABA
        elif aff[intent, cat_of_pid[purchased_pid]] > 0:
            outcome = OUTCOME_RELATED
        else:
            outcome = OUTCOME_NOISE
        records[sid] = (cat_paths[intent], outcome)

        p_short = _P_SHORT_DWELL[outcome]
        events: list[Event] = []
        cursor = _EPOCH_BASE_MS + i * _SESSION_SPACING_MS
        for k, pid in enumerate(click_pids):
            events.append(Event(sid, uid, pid, IMPRESSION, cursor))
            cursor += int(rng.integers(*_IMPRESSION_LEAD_MS))
            events.append(Event(sid, uid, pid, CLICK, cursor))
            if purchased_pid is not None and pid == purchased_pid:
                dwell = int(rng.integers(*_LONG_DWELL_MS))
            elif rng.random() < p_short:
                dwell = int(rng.integers(*_SHORT_DWELL_MS))
            else:
                dwell = int(rng.integers(*_LONG_DWELL_MS))
            cursor += dwell
            if purchased_pid is not None and k == n_before - 1:
                if rng.random() < _P_CART_BEFORE_PURCHASE:
                    events.append(Event(sid, uid, purchased_pid, ADD_TO_CART, cursor))
                    cursor += int(rng.integers(*_PURCHASE_STEP_MS))
                events.append(Event(sid, uid, purchased_pid, PURCHASE, cursor))
                cursor += int(rng.integers(*_PURCHASE_STEP_MS))
        if rng.random() < _P_ABANDONED_CART:
            pool = [p for p in dict.fromkeys(click_pids) if p != purchased_pid]
            if pool:
                events.append(Event(sid, uid, pool[rng.integers(0, len(pool))], ADD_TO_CART, cursor))

        sessions[sid] = events
        for p in click_pids:
            click_counts[(u, p)] = click_counts.get((u, p), 0) + 1

    corpus = Corpus(sessions=sessions, catalog=catalog)
    return corpus, GroundTruth(records=records, related_affinity=aff.copy())
