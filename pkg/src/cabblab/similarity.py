"""Category co-engagement similarity and the example-level weight alpha.

Engagement vectors live in user space: coordinate u of category c's vector
is the weighted count of user u's clicks, add-to-carts, and purchases on
products of c. Pairwise cosine of those non-negative vectors gives the
category-similarity matrix; alpha weights a click-purchase pair by the
similarity of the two products under one of three schemes (constant 1,
product-level cosine, or the category matrix looked up via the taxonomy).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import sqrt
from typing import IO, Iterable

import numpy as np

from .corpus import ADD_TO_CART, CLICK, PURCHASE, Corpus, IMPRESSION
from .kernels import sparse_dot
from .taxonomy import Taxonomy

EngagementVector = dict[str, float]


@dataclass(frozen=True)
class EventWeights:
    w_click: float = 1.0
    w_cart: float = 2.0
    w_purchase: float = 4.0
    w_impression: float = 0.0

    def __post_init__(self) -> None:
        weights = (self.w_click, self.w_cart, self.w_purchase, self.w_impression)
        if any(w < 0 for w in weights):
            raise ValueError(f"event weights must be non-negative, got {weights}")
        if not any(w > 0 for w in weights):
            raise ValueError("at least one event weight must be positive")

    def weight_for(self, event_type: str) -> float:
        if event_type == CLICK:
            return self.w_click
        if event_type == ADD_TO_CART:
            return self.w_cart
        if event_type == PURCHASE:
            return self.w_purchase
        if event_type == IMPRESSION:
            return self.w_impression
        raise ValueError(f"unknown event_type {event_type!r}")


def _accumulate(corpus: Corpus, weights: EventWeights, key_of) -> dict:
    vectors: dict = {}
    for sid in sorted(corpus.sessions):
        for ev in corpus.sessions[sid]:
            w = weights.weight_for(ev.event_type)
            if w == 0.0:
                continue
            vec = vectors.setdefault(key_of(ev.product_id), {})
            vec[ev.user_id] = vec.get(ev.user_id, 0.0) + w
    return vectors


def build_engagement_vectors(
    corpus: Corpus, taxonomy: Taxonomy, weights: EventWeights = EventWeights()
) -> dict[int, EngagementVector]:
    """Weighted per-user engagement counts keyed by leaf id; every leaf of
    the taxonomy gets a vector, empty when nothing engaged it."""
    vectors = _accumulate(corpus, weights, taxonomy.leaf)
    for leaf in taxonomy.leaves:
        vectors.setdefault(leaf, {})
    return vectors


def build_item_vectors(corpus: Corpus, weights: EventWeights = EventWeights()) -> dict[str, EngagementVector]:
    """Same accumulation keyed by product id; every catalog product present."""
    vectors = _accumulate(corpus, weights, lambda pid: pid)
    for pid in corpus.catalog:
        vectors.setdefault(pid, {})
    return vectors


def cosine(v_i: EngagementVector, v_j: EngagementVector) -> float:
    """Cosine of two sparse non-negative vectors, clamped to [0,1];
     0 when either vector is empty."""
    if not v_i or not v_j:
        return 0.0
    if len(v_j) < len(v_i):
        v_i, v_j = v_j, v_i
    dot = 0.0
    for u, w in v_i.items():
        other = v_j.get(u)
        if other is not None:
            dot += w * other
    if dot == 0.0:
        return 0.0
    norm_i = sqrt(sum(w * w for w in v_i.values()))
    norm_j = sqrt(sum(w * w for w in v_j.values()))
    return min(max(dot / (norm_i * norm_j), 0.0), 1.0)


def _condensed_index(i: int, j: int, n: int) -> int:
    # upper triangle incl. diagonal, row-major: (i, j) with i <= j
    return i * n - (i * (i - 1)) // 2 + (j - i)


@dataclass
class SimilarityMatrix:
    """Symmetric leaf-by-leaf similarity; only the upper triangle including
    the diagonal is stored, so mirrored reads are exactly equal."""

    leaf_count: int
    condensed: np.ndarray

    def value(self, i: int, j: int) -> float:
        n = self.leaf_count
        if not (0 <= i < n and 0 <= j < n):
            raise IndexError(f"leaf pair ({i}, {j}) out of range for {n} leaves")
        if i > j:
            i, j = j, i
        return float(self.condensed[_condensed_index(i, j, n)])

    def to_dense(self) -> np.ndarray:
        n = self.leaf_count
        dense = np.empty((n, n))
        for i in range(n):
            for j in range(i, n):
                dense[i, j] = dense[j, i] = self.condensed[_condensed_index(i, j, n)]
        return dense

    def nonzero_pair_count(self) -> int:
        n = self.leaf_count
        count = 0
        for i in range(n):
            for j in range(i + 1, n):
                if self.condensed[_condensed_index(i, j, n)] != 0.0:
                    count += 1
        return count


def build_similarity_matrix(vectors: dict[int, EngagementVector]) -> SimilarityMatrix:
    """Pairwise cosine over the upper triangle; diagonal set to 1
    unconditionally (a same-leaf pair always gets full weight)."""
    n = len(vectors)
    if set(vectors) != set(range(n)):
        raise ValueError("vectors must be keyed by dense leaf ids 0..leaf_count-1")
    condensed = np.zeros((n * (n + 1)) // 2)
    for i in range(n):
        condensed[_condensed_index(i, i, n)] = 1.0
        for j in range(i + 1, n):
            condensed[_condensed_index(i, j, n)] = cosine(vectors[i], vectors[j])
    return SimilarityMatrix(leaf_count=n, condensed=condensed)


def serialize_similarity(matrix: SimilarityMatrix) -> Iterable[str]:
    """One line per stored nonzero entry: `leaf_i TAB leaf_j TAB score`,
    leaf_i <= leaf_j, score with full float precision."""
    n = matrix.leaf_count
    for i in range(n):
        for j in range(i, n):
            score = matrix.condensed[_condensed_index(i, j, n)]
            if score != 0.0:
                yield f"{i}\t{j}\t{score:.17g}\n"


def parse_similarity(stream: Iterable[str] | IO[str]) -> SimilarityMatrix:
    entries: list[tuple[int, int, float]] = []
    max_leaf = -1
    for lineno, line in enumerate(stream, start=1):
        if not line.strip():
            continue
        parts = line.rstrip("\n").split("\t")
        if len(parts) != 3:
            raise ValueError(f"similarity line {lineno}: expected 3 fields, got {len(parts)}")
        try:
            i, j, score = int(parts[0]), int(parts[1]), float(parts[2])
        except ValueError:
            raise ValueError(f"similarity line {lineno}: malformed entry {line!r}") from None
        if i > j:
            raise ValueError(f"similarity line {lineno}: leaf_i {i} > leaf_j {j}")
        entries.append((i, j, score))
        max_leaf = max(max_leaf, j)
    if max_leaf < 0:
        raise ValueError("empty similarity dump")
    n = max_leaf + 1
    condensed = np.zeros((n * (n + 1)) // 2)
    for i, j, score in entries:
        condensed[_condensed_index(i, j, n)] = score
    return SimilarityMatrix(leaf_count=n, condensed=condensed)


@dataclass(frozen=True)
class Static1:
    name = "static1"


@dataclass
class ItemI2I:
    """Product-level cosine weighting; vectors are interned to sorted
    integer-id arrays once and pair cosines are memoized."""

    vectors: dict[str, EngagementVector]
    name = "item_i2i"
    _index: dict[str, tuple[np.ndarray, np.ndarray, float]] = field(
        default_factory=dict, repr=False
    )
    _memo: dict[tuple[str, str], float] = field(default_factory=dict, repr=False)

    def __post_init__(self) -> None:
        user_ids: dict[str, int] = {}
        for pid in sorted(self.vectors):
            for u in sorted(self.vectors[pid]):
                if u not in user_ids:
                    user_ids[u] = len(user_ids)
        for pid in sorted(self.vectors):
            vec = self.vectors[pid]
            raw_ids = np.array([user_ids[u] for u in vec], dtype=np.int64)
            order = np.argsort(raw_ids, kind="stable")
            ids = raw_ids[order]
            ws = np.array([vec[u] for u in vec], dtype=np.float64)[order]
            norm = float(np.sqrt(np.dot(ws, ws)))
            self._index[pid] = (ids, ws, norm)

    def pair_cosine(self, product_a: str, product_b: str) -> float:
        key = (product_a, product_b) if product_a <= product_b else (product_b, product_a)
        hit = self._memo.get(key)
        if hit is not None:
            return hit
        a = self._index.get(product_a)
        b = self._index.get(product_b)
        if a is None or b is None or a[2] == 0.0 or b[2] == 0.0:
            val = 0.0
        elif product_a == product_b:
            val = 1.0
        else:
            dot = sparse_dot(a[0], a[1], b[0], b[1])
            val = min(max(dot / (a[2] * b[2]), 0.0), 1.0)
        self._memo[key] = val
        return val


@dataclass
class TaxonomyCF:
    taxonomy: Taxonomy
    matrix: SimilarityMatrix
    name = "taxonomy_cf"


WeightingScheme = Static1 | ItemI2I | TaxonomyCF


def alpha(scheme: WeightingScheme, product_a: str, product_b: str) -> float:
    """Example weight for a clicked/purchased product pair under `scheme`."""
    if isinstance(scheme, Static1):
        return 1.0
    if isinstance(scheme, ItemI2I):
        return scheme.pair_cosine(product_a, product_b)
    if isinstance(scheme, TaxonomyCF):
        return scheme.matrix.value(scheme.taxonomy.leaf(product_a), scheme.taxonomy.leaf(product_b))
    raise TypeError(f"unknown weighting scheme {scheme!r}")
