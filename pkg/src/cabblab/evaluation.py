"""Normalized Entropy scoring and seeded experiment harnesses.

NE is mean cross-entropy divided by the entropy of the constant base-rate
predictor: 1 means no better than predicting the prevalence, 0 is perfect.
The harnesses train model variants on a shared session-hash split, score
the held-out clicks uniformly (evaluation never applies alpha weights),
repeat over several derived seeds with common splits across variants, and
emit tab-separated reports with a config-echo header.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from math import log
from typing import Iterable, Sequence

import numpy as np

from . import kernels
from .corpus import Corpus
from .kernels import LOSS_CLAMP_HI, LOSS_CLAMP_LO
from .labeling import (
    ClickExample,
    DatasetArrays,
    FeatureConfig,
    apply_scheme_alphas,
    build_dataset,
    dataset_arrays,
    last_click_labels,
)
from .model import (
    Architecture,
    ModelParams,
    TrainConfig,
    TrainMode,
    predict_arrays,
    train,
)
from .seeds import TAG_EXPERIMENT, TAG_SPLIT, derive_int
from .similarity import (
    EventWeights,
    Static1,
    TaxonomyCF,
    WeightingScheme,
    build_engagement_vectors,
    build_similarity_matrix,
)
from .taxonomy import Taxonomy


class DegenerateLabelsError(ValueError):
    """Labels are all 0 or all 1; the base-rate entropy denominator is 0."""


@dataclass(frozen=True)
class NEResult:
    ne: float
    n: int
    base_rate: float


def normalized_entropy(labels: Sequence[float] | np.ndarray, predictions: Sequence[float] | np.ndarray) -> NEResult:
    y = np.asarray(labels, dtype=np.float64)
    p = np.asarray(predictions, dtype=np.float64)
    if y.size == 0 or y.shape != p.shape:
        raise ValueError(f"labels/predictions shapes {y.shape}/{p.shape} unusable")
    if not np.all((y == 0.0) | (y == 1.0)):
        raise ValueError("labels must be binary")
    if not np.all(np.isfinite(p)):
        raise ValueError("predictions must be finite")
    base = float(np.mean(y))
    if base <= 0.0 or base >= 1.0:
        raise DegenerateLabelsError(f"base rate {base} admits no normalization")
    pc = np.clip(p, LOSS_CLAMP_LO, LOSS_CLAMP_HI)
    ce = float(-np.mean(y * np.log(pc) + (1.0 - y) * np.log(1.0 - pc)))
    denom = -(base * log(base) + (1.0 - base) * log(1.0 - base))
    return NEResult(ne=ce / denom, n=int(y.size), base_rate=base)


@dataclass
class TaskNEBreakdown:
    overall: NEResult | None
    caba: NEResult | None
    cabb: NEResult | None
    errors: dict[str, str] = field(default_factory=dict)


def _as_arrays(dataset: Sequence[ClickExample] | DatasetArrays) -> DatasetArrays:
    if isinstance(dataset, DatasetArrays):
        return dataset
    return dataset_arrays(dataset)


def task_ne_breakdown(
    params: ModelParams,
    dataset: Sequence[ClickExample] | DatasetArrays,
    mode: TrainMode = TrainMode.MULTITASK,
) -> TaskNEBreakdown:
    """Unweighted NE per task plus a combined-conversion NE.

    The combined label is y1-or-y2. Multitask models predict it as the
    noisy-or 1-(1-p1)(1-p2) of their two heads; single-head modes are
    scored with head 1's output directly (the last-click baseline has no
    second head worth reading, so all three components reuse its one head).
    Components whose labels are degenerate come back as None with the
    reason under `errors`.
    """
    arrays = _as_arrays(dataset)
    p1, p2 = predict_arrays(params, arrays.X, arrays.leaf_ids)
    y_any = np.maximum(arrays.y1, arrays.y2)
    if mode is TrainMode.MULTITASK:
        p_overall = 1.0 - (1.0 - p1) * (1.0 - p2)
        p_cabb = p2
    elif mode is TrainMode.CABA_ONLY:
        p_overall = p1
        p_cabb = p2
    else:
        p_overall = p1
        p_cabb = p1
    components = {
        "overall": (y_any, p_overall),
        "caba": (arrays.y1, p1),
        "cabb": (arrays.y2, p_cabb),
    }
    results: dict[str, NEResult | None] = {}
    errors: dict[str, str] = {}
    for name, (y, pred) in components.items():
        try:
            results[name] = normalized_entropy(y, pred)
        except DegenerateLabelsError as exc:
            results[name] = None
            errors[name] = str(exc)
    return TaskNEBreakdown(
        overall=results["overall"], caba=results["caba"], cabb=results["cabb"], errors=errors
    )


def split_sessions(
    session_ids: Iterable[str], seed: int, test_fraction: float = 0.2
) -> tuple[set[str], set[str]]:
    """Deterministic session-level split: a salted 64-bit hash of each
    session id lands it in test when hash/2^64 < test_fraction."""
    if not 0.0 < test_fraction < 1.0:
        raise ValueError(f"test_fraction must be in (0,1), got {test_fraction}")
    train_ids: set[str] = set()
    test_ids: set[str] = set()
    salt = f"{seed}:{TAG_SPLIT}:"
    for sid in session_ids:
        digest = hashlib.blake2b((salt + sid).encode("utf-8"), digest_size=8).digest()
        u = int.from_bytes(digest, "big") / 2**64
        (test_ids if u < test_fraction else train_ids).add(sid)
    return train_ids, test_ids


@dataclass(frozen=True)
class ReportRow:
    variant: str
    seed: int | str
    overall_ne: float | None
    caba_ne: float | None
    cabb_ne: float | None
    note: str = ""


@dataclass
class ExperimentReport:
    config_echo: dict[str, str]
    rows: list[ReportRow]

    def seed_rows(self, variant: str) -> list[ReportRow]:
        return [r for r in self.rows if r.variant == variant and r.seed != "mean"]

    def mean_row(self, variant: str) -> ReportRow:
        for r in self.rows:
            if r.variant == variant and r.seed == "mean":
                return r
        raise KeyError(f"no mean row for variant {variant!r}")

    def variants(self) -> list[str]:
        seen: list[str] = []
        for r in self.rows:
            if r.variant not in seen:
                seen.append(r.variant)
        return seen

    def lines(self) -> list[str]:
        out = [f"# {k}={self.config_echo[k]}" for k in sorted(self.config_echo)]
        out.append("variant\toverall_ne\tcaba_ne\tcabb_ne\tseed\tnote")

        def fmt(v: float | None) -> str:
            return "-" if v is None else f"{v:.6f}"

        for r in self.rows:
            out.append(
                f"{r.variant}\t{fmt(r.overall_ne)}\t{fmt(r.caba_ne)}\t{fmt(r.cabb_ne)}"
                f"\t{r.seed}\t{r.note}"
            )
        return out


@dataclass(frozen=True)
class _Variant:
    label: str
    mode: TrainMode
    lam: float
    scheme: WeightingScheme
    note: str = ""


_SINGLE_HEAD_NOTE = "one head scored against all three label sets"


def _subset_arrays(arrays: DatasetArrays, mask: np.ndarray) -> DatasetArrays:
    idx = np.flatnonzero(mask)
    return DatasetArrays(
        X=arrays.X[idx],
        leaf_ids=arrays.leaf_ids[idx],
        y1=arrays.y1[idx],
        y2=arrays.y2[idx],
        alpha=arrays.alpha[idx],
        session_ids=[arrays.session_ids[i] for i in idx],
    )


def _run_experiment(
    corpus: Corpus,
    taxonomy: Taxonomy,
    variants: Sequence[_Variant],
    config: TrainConfig,
    n_seeds: int,
    test_fraction: float,
    feature_config: FeatureConfig,
    arch: Architecture,
    extra_echo: dict[str, str],
) -> ExperimentReport:
    if n_seeds < 1:
        raise ValueError("n_seeds must be >= 1")
    base = build_dataset(corpus, taxonomy, Static1(), feature_config)
    if not base:
        raise ValueError("corpus yields no click examples")
    base_arrays = dataset_arrays(base)
    lc_labels, _ = last_click_labels(corpus)

    scheme_examples: dict[str, Sequence[ClickExample]] = {Static1().name: base}
    for v in variants:
        if v.scheme.name not in scheme_examples:
            scheme_examples[v.scheme.name] = apply_scheme_alphas(base, v.scheme)

    session_list = base_arrays.session_ids
    rows: list[ReportRow] = []
    collected: dict[str, list[TaskNEBreakdown]] = {v.label: [] for v in variants}
    for k in range(n_seeds):
        seed_k = derive_int(config.seed, TAG_EXPERIMENT, k)
        train_ids, test_ids = split_sessions(corpus.sessions.keys(), seed_k, test_fraction)
        train_mask = np.fromiter(
            (sid in train_ids for sid in session_list), dtype=bool, count=len(session_list)
        )
        if not train_mask.any() or train_mask.all():
            raise ValueError(f"split at seed {seed_k} left one side empty")
        test_arrays = _subset_arrays(base_arrays, ~train_mask)
        for v in variants:
            examples = scheme_examples[v.scheme.name]
            train_examples = [ex for ex, m in zip(examples, train_mask) if m]
            cfg = TrainConfig(
                lam=v.lam,
                learning_rate=config.learning_rate,
                epochs=config.epochs,
                batch_size=config.batch_size,
                seed=seed_k,
                mode=v.mode,
            )
            last = lc_labels[train_mask] if v.mode is TrainMode.SINGLE_TASK_LAST_CLICK else None
            params, _ = train(
                train_examples, cfg, arch, last_click=last, leaf_count=taxonomy.leaf_count
            )
            bd = task_ne_breakdown(params, test_arrays, mode=v.mode)
            collected[v.label].append(bd)
            note = v.note
            if bd.errors:
                degenerate = ", ".join(f"{c}: {m}" for c, m in sorted(bd.errors.items()))
                note = f"{note}; {degenerate}" if note else degenerate
            rows.append(
                ReportRow(
                    variant=v.label,
                    seed=seed_k,
                    overall_ne=bd.overall.ne if bd.overall else None,
                    caba_ne=bd.caba.ne if bd.caba else None,
                    cabb_ne=bd.cabb.ne if bd.cabb else None,
                    note=note,
                )
            )

    for v in variants:
        bds = collected[v.label]

        def mean_of(component: str) -> float | None:
            vals = [
                getattr(bd, component).ne for bd in bds if getattr(bd, component) is not None
            ]
            if len(vals) != len(bds):
                return None
            return float(np.mean(vals))

        rows.append(
            ReportRow(
                variant=v.label,
                seed="mean",
                overall_ne=mean_of("overall"),
                caba_ne=mean_of("caba"),
                cabb_ne=mean_of("cabb"),
                note=v.note,
            )
        )

    echo = {
        "backend": kernels.BACKEND,
        "batch_size": str(config.batch_size),
        "epochs": str(config.epochs),
        "learning_rate": repr(config.learning_rate),
        "n_seeds": str(n_seeds),
        "seed": str(config.seed),
        "test_fraction": repr(test_fraction),
        "embedding_dim": str(arch.embedding_dim),
        "hidden_dims": ",".join(str(d) for d in arch.hidden_dims),
    }
    echo.update(extra_echo)
    return ExperimentReport(config_echo=echo, rows=rows)


def baseline_comparison(
    corpus: Corpus,
    taxonomy: Taxonomy,
    config: TrainConfig,
    n_seeds: int = 5,
    test_fraction: float = 0.2,
    weights: EventWeights = EventWeights(),
    feature_config: FeatureConfig = FeatureConfig(),
    arch: Architecture = Architecture(),
) -> ExperimentReport:
    """Three rows per seed: last-click single-task, same-product-only, and
    the two-head model weighted by category similarity."""
    vectors = build_engagement_vectors(corpus, taxonomy, weights)
    matrix = build_similarity_matrix(vectors)
    scheme = TaxonomyCF(taxonomy=taxonomy, matrix=matrix)
    variants = [
        _Variant(
            "baseline1_last_click", TrainMode.SINGLE_TASK_LAST_CLICK, 0.0, Static1(), _SINGLE_HEAD_NOTE
        ),
        _Variant("baseline2_caba_only", TrainMode.CABA_ONLY, 0.0, Static1()),
        _Variant("multitask_taxonomy_cf", TrainMode.MULTITASK, config.lam, scheme),
    ]
    return _run_experiment(
        corpus,
        taxonomy,
        variants,
        config,
        n_seeds,
        test_fraction,
        feature_config,
        arch,
        {"experiment": "baseline_comparison", "lambda": repr(config.lam)},
    )


def lambda_sweep(
    corpus: Corpus,
    taxonomy: Taxonomy,
    scheme: WeightingScheme,
    lambdas: Sequence[float],
    base_config: TrainConfig,
    n_seeds: int = 5,
    test_fraction: float = 0.2,
    feature_config: FeatureConfig = FeatureConfig(),
    arch: Architecture = Architecture(),
) -> ExperimentReport:
    """One multitask row per lambda plus a single-task baseline row."""
    if len(lambdas) < 2:
        raise ValueError("a sweep needs at least two lambda values")
    if any(l < 0 for l in lambdas):
        raise ValueError("lambdas must be >= 0")
    variants = [
        _Variant(
            "baseline_last_click", TrainMode.SINGLE_TASK_LAST_CLICK, 0.0, Static1(), _SINGLE_HEAD_NOTE
        )
    ]
    variants.extend(
        _Variant(f"lambda_{lam:g}", TrainMode.MULTITASK, float(lam), scheme) for lam in lambdas
    )
    return _run_experiment(
        corpus,
        taxonomy,
        variants,
        base_config,
        n_seeds,
        test_fraction,
        feature_config,
        arch,
        {
            "experiment": "lambda_sweep",
            "lambdas": ",".join(f"{l:g}" for l in lambdas),
            "scheme": scheme.name,
        },
    )


def scheme_comparison(
    corpus: Corpus,
    taxonomy: Taxonomy,
    schemes: Sequence[WeightingScheme],
    config: TrainConfig,
    n_seeds: int = 5,
    test_fraction: float = 0.2,
    feature_config: FeatureConfig = FeatureConfig(),
    arch: Architecture = Architecture(),
) -> ExperimentReport:
    """One multitask row per weighting scheme at the configured lambda;
    identical architecture, split, and seeds across schemes."""
    if not schemes:
        raise ValueError("need at least one scheme")
    names = [scheme.name for scheme in schemes]
    if len(set(names)) != len(names):
        raise ValueError(f"scheme names must be distinct, got {names}")
    variants = [
        _Variant(f"scheme_{scheme.name}", TrainMode.MULTITASK, config.lam, scheme)
        for scheme in schemes
    ]
    return _run_experiment(
        corpus,
        taxonomy,
        variants,
        config,
        n_seeds,
        test_fraction,
        feature_config,
        arch,
        {"experiment": "scheme_comparison", "lambda": repr(config.lam)},
    )
