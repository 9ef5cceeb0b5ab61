"""Command-line orchestrator: reproducible corpus, training, and report
pipelines.

Every subcommand reads one flat key=value config (any key overridable as
`--KEY VALUE`), derives all randomness from the single `seed` key, writes
its outputs under `--out`, validates what it wrote by reading it back,
and only then exits 0. Reruns with identical config produce byte-identical
files.
"""

from __future__ import annotations

import argparse
import sys
import textwrap
from pathlib import Path

import numpy as np

from . import kernels
from .config import (
    CONFIG_KEYS,
    ConfigError,
    RunConfig,
    load_run_config,
)
from .corpus import (
    Corpus,
    CorpusError,
    corpus_stats,
    parse_corpus,
    serialize_catalog,
    serialize_events,
)
from .evaluation import (
    DegenerateLabelsError,
    lambda_sweep,
    scheme_comparison,
    split_sessions,
    task_ne_breakdown,
)
from .labeling import (
    FEATURE_NAMES,
    N_FEATURES,
    DatasetArrays,
    build_dataset,
    dataset_arrays,
    last_click_labels,
)
from .model import (
    HEAD_CABA,
    HEAD_CABB,
    TrainMode,
    load_checkpoint,
    permutation_importance,
    save_checkpoint,
    train,
)
from .similarity import (
    ItemI2I,
    Static1,
    TaxonomyCF,
    WeightingScheme,
    build_engagement_vectors,
    build_item_vectors,
    build_similarity_matrix,
    parse_similarity,
    serialize_similarity,
)
from .synth import generate_synthetic, parse_ground_truth, serialize_ground_truth
from .taxonomy import Taxonomy, TaxonomyError, build_taxonomy


class OutputValidationError(RuntimeError):
    """A written output failed its read-back check."""


def _write_text(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")


def _read_corpus(cfg: RunConfig) -> Corpus:
    corpus_dir = cfg.corpus_dir()
    events_path = corpus_dir / "events.tsv"
    catalog_path = corpus_dir / "catalog.tsv"
    for p in (events_path, catalog_path):
        if not p.is_file():
            raise ConfigError(f"missing corpus file {p} (run `generate` first?)")
    with events_path.open(encoding="utf-8") as events, catalog_path.open(
        encoding="utf-8"
    ) as catalog:
        return parse_corpus(events, catalog)


def _scheme(name: str, corpus: Corpus, taxonomy: Taxonomy, cfg: RunConfig) -> WeightingScheme:
    if name == "static1":
        return Static1()
    if name == "item_i2i":
        return ItemI2I(vectors=build_item_vectors(corpus, cfg.event_weights()))
    if name == "taxonomy_cf":
        vectors = build_engagement_vectors(corpus, taxonomy, cfg.event_weights())
        return TaxonomyCF(taxonomy=taxonomy, matrix=build_similarity_matrix(vectors))
    raise ConfigError(f"unknown scheme {name!r}")


def cmd_generate(cfg: RunConfig) -> int:
    corpus, truth = generate_synthetic(cfg.synth_config())
    out = cfg.out_dir()
    events_path = out / "events.tsv"
    catalog_path = out / "catalog.tsv"
    truth_path = out / "ground_truth.tsv"
    _write_text(events_path, "".join(serialize_events(corpus)))
    _write_text(catalog_path, "".join(serialize_catalog(corpus.catalog)))
    _write_text(truth_path, "".join(serialize_ground_truth(truth)))

    with events_path.open(encoding="utf-8") as events, catalog_path.open(
        encoding="utf-8"
    ) as catalog:
        reread = parse_corpus(events, catalog)
    if reread.n_events() != corpus.n_events() or set(reread.sessions) != set(corpus.sessions):
        raise OutputValidationError("re-parsed corpus differs from the generated one")
    with truth_path.open(encoding="utf-8") as fh:
        reread_truth = parse_ground_truth(fh)
    if reread_truth.records != truth.records:
        raise OutputValidationError("re-parsed ground truth differs from the generated one")

    for line in corpus_stats(corpus, truth).lines():
        print(line)
    print(f"wrote\t{events_path}\t{catalog_path}\t{truth_path}")
    return 0


def cmd_similarity(cfg: RunConfig) -> int:
    corpus = _read_corpus(cfg)
    taxonomy = build_taxonomy(corpus.catalog)
    vectors = build_engagement_vectors(corpus, taxonomy, cfg.event_weights())
    matrix = build_similarity_matrix(vectors)
    out_path = cfg.out_dir() / "similarity.tsv"
    _write_text(out_path, "".join(serialize_similarity(matrix)))

    with out_path.open(encoding="utf-8") as fh:
        reread = parse_similarity(fh)
    if reread.leaf_count != matrix.leaf_count or not np.array_equal(
        reread.condensed, matrix.condensed
    ):
        raise OutputValidationError("re-parsed similarity matrix differs from the built one")

    print(f"leaves\t{matrix.leaf_count}")
    print(f"nonzero_pairs\t{matrix.nonzero_pair_count()}")
    print(f"wrote\t{out_path}")
    return 0


def _train_split_masks(
    cfg: RunConfig, session_ids: list[str]
) -> tuple[np.ndarray, np.ndarray]:
    """Boolean train/test masks aligned to a per-example session id list."""
    train_ids, test_ids = split_sessions(set(session_ids), cfg.seed, cfg.eval_test_fraction)
    train_mask = np.fromiter(
        (sid in train_ids for sid in session_ids), dtype=bool, count=len(session_ids)
    )
    return train_mask, ~train_mask


def cmd_train(cfg: RunConfig) -> int:
    corpus = _read_corpus(cfg)
    taxonomy = build_taxonomy(corpus.catalog)
    scheme = _scheme(cfg.train_scheme, corpus, taxonomy, cfg)
    examples = build_dataset(corpus, taxonomy, scheme, cfg.feature_config())
    if not examples:
        raise ConfigError("corpus yields no click examples")
    train_mask, _ = _train_split_masks(cfg, [ex.session_id for ex in examples])
    if not train_mask.any():
        raise ConfigError("train split is empty; lower eval.test_fraction")
    train_examples = [ex for ex, m in zip(examples, train_mask) if m]
    config = cfg.train_config()
    last = None
    if config.mode is TrainMode.SINGLE_TASK_LAST_CLICK:
        lc, _orphans = last_click_labels(corpus)
        last = lc[train_mask]
    params, history = train(
        train_examples,
        config,
        cfg.architecture(),
        last_click=last,
        leaf_count=taxonomy.leaf_count,
    )

    ckpt_path = cfg.checkpoint_path()
    ckpt_path.parent.mkdir(parents=True, exist_ok=True)
    save_checkpoint(params, str(ckpt_path))
    history_path = cfg.out_dir() / "loss_history.tsv"
    lines = ["epoch\tl_caba\tl_cabb\ttotal"]
    lines.extend(
        f"{epoch}\t{h.l_caba:.17g}\t{h.l_cabb:.17g}\t{h.total:.17g}"
        for epoch, h in enumerate(history)
    )
    _write_text(history_path, "\n".join(lines) + "\n")

    loaded, _arch = load_checkpoint(str(ckpt_path))
    same = (
        np.array_equal(loaded.embedding, params.embedding)
        and all(np.array_equal(a, b) for a, b in zip(loaded.trunk_ws, params.trunk_ws))
        and all(np.array_equal(a, b) for a, b in zip(loaded.trunk_bs, params.trunk_bs))
        and np.array_equal(loaded.w1, params.w1)
        and np.array_equal(loaded.w2, params.w2)
        and loaded.b1 == params.b1
        and loaded.b2 == params.b2
        and np.array_equal(loaded.norm_mean, params.norm_mean)
        and np.array_equal(loaded.norm_std, params.norm_std)
    )
    if not same:
        raise OutputValidationError("checkpoint read back differs from trained parameters")
    if len(history) != config.epochs:
        raise OutputValidationError("loss history row count does not match epochs")

    print(f"trained\tmode={config.mode.value}\tscheme={scheme.name}\texamples={len(train_examples)}")
    final = history[-1]
    print(f"final_loss\tl_caba={final.l_caba:.6f}\tl_cabb={final.l_cabb:.6f}\ttotal={final.total:.6f}")
    print(f"wrote\t{ckpt_path}\t{history_path}")
    return 0


def _select_split(cfg: RunConfig, arrays: DatasetArrays, session_ids: list[str]) -> DatasetArrays:
    if cfg.eval_split == "all":
        return arrays
    train_mask, test_mask = _train_split_masks(cfg, session_ids)
    mask = train_mask if cfg.eval_split == "train" else test_mask
    if not mask.any():
        raise ConfigError(f"{cfg.eval_split} split is empty; adjust eval.test_fraction")
    idx = np.flatnonzero(mask)
    return DatasetArrays(
        X=arrays.X[idx],
        leaf_ids=arrays.leaf_ids[idx],
        y1=arrays.y1[idx],
        y2=arrays.y2[idx],
        alpha=arrays.alpha[idx],
        session_ids=[arrays.session_ids[i] for i in idx],
    )


def _load_checkpoint_for(cfg: RunConfig, taxonomy: Taxonomy):
    ckpt_path = cfg.checkpoint_path()
    if not ckpt_path.is_file():
        raise ConfigError(f"missing checkpoint {ckpt_path} (run `train` first?)")
    params, arch = load_checkpoint(str(ckpt_path))
    if params.leaf_count != taxonomy.leaf_count:
        raise ConfigError(
            f"checkpoint was trained with {params.leaf_count} leaves but the corpus has "
            f"{taxonomy.leaf_count}"
        )
    if params.feature_dim != N_FEATURES:
        raise ConfigError(
            f"checkpoint expects {params.feature_dim} features but this build extracts {N_FEATURES}"
        )
    return params, arch


def cmd_evaluate(cfg: RunConfig) -> int:
    corpus = _read_corpus(cfg)
    taxonomy = build_taxonomy(corpus.catalog)
    params, _arch = _load_checkpoint_for(cfg, taxonomy)
    examples = build_dataset(corpus, taxonomy, Static1(), cfg.feature_config())
    if not examples:
        raise ConfigError("corpus yields no click examples")
    arrays = dataset_arrays(examples)
    subset = _select_split(cfg, arrays, arrays.session_ids)
    mode = TrainMode(cfg.train_mode)
    breakdown = task_ne_breakdown(params, subset, mode=mode)

    lines = [
        f"# mode={mode.value}",
        f"# n_examples={len(subset.session_ids)}",
        f"# seed={cfg.seed}",
        f"# split={cfg.eval_split}",
        "component\tne\tn\tbase_rate\tnote",
    ]
    for name in ("overall", "caba", "cabb"):
        result = getattr(breakdown, name)
        if result is None:
            lines.append(f"{name}\t-\t-\t-\t{breakdown.errors[name]}")
        else:
            lines.append(f"{name}\t{result.ne:.6f}\t{result.n}\t{result.base_rate:.6f}\t")
    out_path = cfg.out_dir() / "evaluation.tsv"
    _write_text(out_path, "\n".join(lines) + "\n")

    body = [l for l in out_path.read_text(encoding="utf-8").splitlines() if not l.startswith("#")]
    if len(body) != 4:
        raise OutputValidationError("evaluation report has the wrong shape")

    for line in lines:
        print(line)
    print(f"wrote\t{out_path}")
    return 0


def _write_report(report, out_path: Path) -> None:
    lines = report.lines()
    _write_text(out_path, "\n".join(lines) + "\n")
    reread = out_path.read_text(encoding="utf-8").splitlines()
    if reread != lines:
        raise OutputValidationError(f"report read back from {out_path} differs")


def cmd_sweep(cfg: RunConfig) -> int:
    corpus = _read_corpus(cfg)
    taxonomy = build_taxonomy(corpus.catalog)
    scheme = _scheme(cfg.train_scheme, corpus, taxonomy, cfg)
    report = lambda_sweep(
        corpus,
        taxonomy,
        scheme,
        cfg.sweep_lambdas,
        cfg.train_config(),
        n_seeds=cfg.eval_n_seeds,
        test_fraction=cfg.eval_test_fraction,
        feature_config=cfg.feature_config(),
        arch=cfg.architecture(),
    )
    out_path = cfg.out_dir() / "sweep.tsv"
    _write_report(report, out_path)
    for variant in report.variants():
        row = report.mean_row(variant)
        overall = "-" if row.overall_ne is None else f"{row.overall_ne:.6f}"
        cabb = "-" if row.cabb_ne is None else f"{row.cabb_ne:.6f}"
        print(f"mean\t{variant}\toverall_ne={overall}\tcabb_ne={cabb}")
    print(f"wrote\t{out_path}")
    return 0


def cmd_schemes(cfg: RunConfig) -> int:
    corpus = _read_corpus(cfg)
    taxonomy = build_taxonomy(corpus.catalog)
    schemes = [_scheme(name, corpus, taxonomy, cfg) for name in ("static1", "item_i2i", "taxonomy_cf")]
    report = scheme_comparison(
        corpus,
        taxonomy,
        schemes,
        cfg.train_config(),
        n_seeds=cfg.eval_n_seeds,
        test_fraction=cfg.eval_test_fraction,
        feature_config=cfg.feature_config(),
        arch=cfg.architecture(),
    )
    out_path = cfg.out_dir() / "schemes.tsv"
    _write_report(report, out_path)
    for variant in report.variants():
        row = report.mean_row(variant)
        caba = "-" if row.caba_ne is None else f"{row.caba_ne:.6f}"
        print(f"mean\t{variant}\tcaba_ne={caba}")
    print(f"wrote\t{out_path}")
    return 0


def cmd_importance(cfg: RunConfig) -> int:
    corpus = _read_corpus(cfg)
    taxonomy = build_taxonomy(corpus.catalog)
    params, _arch = _load_checkpoint_for(cfg, taxonomy)
    examples = build_dataset(corpus, taxonomy, Static1(), cfg.feature_config())
    if not examples:
        raise ConfigError("corpus yields no click examples")
    arrays = dataset_arrays(examples)
    subset = _select_split(cfg, arrays, arrays.session_ids)
    heads = [HEAD_CABA, HEAD_CABB] if cfg.importance_head == "both" else [cfg.importance_head]

    lines = [
        f"# n_examples={len(subset.session_ids)}",
        f"# n_repeats={cfg.importance_n_repeats}",
        f"# seed={cfg.seed}",
        f"# split={cfg.eval_split}",
        "head\tfeature\tscore",
    ]
    for head in heads:
        scores = permutation_importance(
            params, subset, head, seed=cfg.seed, n_repeats=cfg.importance_n_repeats
        )
        for feature in (*FEATURE_NAMES, "leaf_id"):
            lines.append(f"{head}\t{feature}\t{scores[feature]:.6f}")
    out_path = cfg.out_dir() / "importance.tsv"
    _write_text(out_path, "\n".join(lines) + "\n")

    body = [l for l in out_path.read_text(encoding="utf-8").splitlines() if not l.startswith("#")]
    if len(body) != 1 + len(heads) * (len(FEATURE_NAMES) + 1):
        raise OutputValidationError("importance report has the wrong shape")

    for line in lines:
        print(line)
    print(f"wrote\t{out_path}")
    return 0


_DISPATCH = {
    "generate": cmd_generate,
    "similarity": cmd_similarity,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "sweep": cmd_sweep,
    "schemes": cmd_schemes,
    "importance": cmd_importance,
}

_COMMAND_HELP = {
    "generate": "write a seeded synthetic corpus (events, catalog, ground truth)",
    "similarity": "build and dump the category-similarity matrix",
    "train": "train a model on the train split and write a checkpoint",
    "evaluate": "score a checkpoint with per-task normalized entropy",
    "sweep": "compare lambda values against a single-task baseline",
    "schemes": "compare example-weighting schemes at a fixed lambda",
    "importance": "permutation feature importance per head",
}


def _format_default(value: object) -> str:
    if isinstance(value, tuple):
        return ",".join(str(v) for v in value)
    return str(value)


def _build_parser() -> argparse.ArgumentParser:
    from .config import KEY_TABLE

    defaults = RunConfig()
    listed = ", ".join(
        f"{key}={_format_default(getattr(defaults, attr))}"
        for key, (attr, _) in sorted(KEY_TABLE.items())
    )
    epilog = "config keys and defaults (override with --KEY VALUE):\n" + textwrap.fill(
        listed, width=78, initial_indent="  ", subsequent_indent="  "
    )
    parser = argparse.ArgumentParser(
        prog="cabblab",
        description="Seeded conversion-attribution laboratory over synthetic clickstreams.",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog=epilog,
    )
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    for name, fn in _DISPATCH.items():
        p = sub.add_parser(
            name,
            help=_COMMAND_HELP[name],
            formatter_class=argparse.RawDescriptionHelpFormatter,
            epilog=epilog,
        )
        p.add_argument("--config", metavar="PATH", default=None, help="flat key=value config file")
        p.add_argument("--out", metavar="DIR", default=None, help="output directory (io.out_dir)")
        p.add_argument(
            "--corpus", metavar="DIR", default=None, help="corpus directory (io.corpus_dir)"
        )
        p.add_argument(
            "--checkpoint", metavar="PATH", default=None, help="checkpoint path (io.checkpoint)"
        )
        for key in CONFIG_KEYS:
            if key == "seed":
                p.add_argument("--seed", dest="seed", metavar="N", default=None, help="master seed")
                continue
            p.add_argument(f"--{key}", dest=key, metavar="VALUE", default=None, help=argparse.SUPPRESS)
    return parser


def _config_from_args(args: argparse.Namespace) -> RunConfig:
    overrides: dict[str, str] = {}
    for key in CONFIG_KEYS:
        value = getattr(args, key, None)
        if value is not None:
            overrides[key] = value
    if args.out is not None:
        overrides["io.out_dir"] = args.out
    if args.corpus is not None:
        overrides["io.corpus_dir"] = args.corpus
    if args.checkpoint is not None:
        overrides["io.checkpoint"] = args.checkpoint
    return load_run_config(args.config, overrides)


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _config_from_args(args)
        return _DISPATCH[args.command](cfg)
    except (
        ConfigError,
        CorpusError,
        TaxonomyError,
        DegenerateLabelsError,
        OutputValidationError,
        ValueError,
        OSError,
    ) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
