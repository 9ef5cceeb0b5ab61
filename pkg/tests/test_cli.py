import numpy as np
import pytest

from cabblab.cli import main
from cabblab.corpus import parse_corpus
from cabblab.labeling import N_FEATURES
from cabblab.model import Architecture, init_params, save_checkpoint
from cabblab.similarity import (
    build_engagement_vectors,
    build_similarity_matrix,
    parse_similarity,
)
from cabblab.synth import parse_ground_truth
from cabblab.taxonomy import build_taxonomy
from conftest import catalog_lines, event_lines

GEN_ARGS = [
    "--seed", "7",
    "--synth.n_users", "20",
    "--synth.n_sessions", "200",
    "--synth.n_products", "30",
    "--synth.n_categories", "6",
    "--synth.affinity_k", "1",
]
FAST_TRAIN = ["--train.epochs", "30", "--train.batch_size", "64"]


def read_bytes(directory, names):
    return {name: (directory / name).read_bytes() for name in names}


@pytest.fixture(scope="module")
def corpus_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("corpus")
    assert main(["generate", "--out", str(out), *GEN_ARGS]) == 0
    return out


@pytest.fixture(scope="module")
def trained_dir(tmp_path_factory, corpus_dir):
    out = tmp_path_factory.mktemp("trained")
    code = main(
        ["train", "--corpus", str(corpus_dir), "--out", str(out), *GEN_ARGS, *FAST_TRAIN]
    )
    assert code == 0
    return out


def test_generate_writes_files_that_reparse(corpus_dir):
    with (corpus_dir / "events.tsv").open(encoding="utf-8") as ev, (
        corpus_dir / "catalog.tsv"
    ).open(encoding="utf-8") as cat:
        corpus = parse_corpus(ev, cat)
    with (corpus_dir / "ground_truth.tsv").open(encoding="utf-8") as fh:
        truth = parse_ground_truth(fh)
    assert len(corpus.sessions) == 200
    assert set(truth.records) == set(corpus.sessions)


def test_generate_rerun_is_byte_identical(tmp_path, corpus_dir):
    again = tmp_path / "again"
    assert main(["generate", "--out", str(again), *GEN_ARGS]) == 0
    names = ["events.tsv", "catalog.tsv", "ground_truth.tsv"]
    assert read_bytes(again, names) == read_bytes(corpus_dir, names)


def test_generate_all_no_purchase_yields_only_none_outcomes(tmp_path):
    out = tmp_path / "none"
    args = [
        "generate", "--out", str(out), *GEN_ARGS,
        "--synth.p_caba", "0",
        "--synth.p_related_cabb", "0",
        "--synth.p_noise_cabb", "0",
        "--synth.p_no_purchase", "1",
    ]
    assert main(args) == 0
    with (out / "ground_truth.tsv").open(encoding="utf-8") as fh:
        truth = parse_ground_truth(fh)
    assert {outcome for _, outcome in truth.records.values()} == {"none"}


def test_similarity_round_trips_against_fresh_build(tmp_path, corpus_dir):
    out = tmp_path / "sim"
    assert main(["similarity", "--corpus", str(corpus_dir), "--out", str(out), "--seed", "7"]) == 0
    with (out / "similarity.tsv").open(encoding="utf-8") as fh:
        reloaded = parse_similarity(fh)
    with (corpus_dir / "events.tsv").open(encoding="utf-8") as ev, (
        corpus_dir / "catalog.tsv"
    ).open(encoding="utf-8") as cat:
        corpus = parse_corpus(ev, cat)
    taxonomy = build_taxonomy(corpus.catalog)
    fresh = build_similarity_matrix(build_engagement_vectors(corpus, taxonomy))
    assert reloaded.leaf_count == fresh.leaf_count
    assert np.allclose(reloaded.condensed, fresh.condensed, atol=1e-12, rtol=0.0)

    again = tmp_path / "sim2"
    assert main(["similarity", "--corpus", str(corpus_dir), "--out", str(again), "--seed", "7"]) == 0
    assert (again / "similarity.tsv").read_bytes() == (out / "similarity.tsv").read_bytes()


def write_corpus(directory, event_rows, catalog_rows):
    directory.mkdir(parents=True, exist_ok=True)
    (directory / "events.tsv").write_text("".join(event_lines(event_rows)), encoding="utf-8")
    (directory / "catalog.tsv").write_text("".join(catalog_lines(catalog_rows)), encoding="utf-8")


def test_similarity_single_leaf_dump_is_one_diagonal_line(tmp_path):
    src = tmp_path / "one"
    write_corpus(
        src,
        [("s1", "u1", "p1", "click", 1000), ("s2", "u2", "p1", "click", 2000)],
        [("p1", "a/b/c", "adv1")],
    )
    out = tmp_path / "oneout"
    assert main(["similarity", "--corpus", str(src), "--out", str(out)]) == 0
    lines = (out / "similarity.tsv").read_text(encoding="utf-8").splitlines()
    assert len(lines) == 1
    i, j, score = lines[0].split("\t")
    assert (int(i), int(j), float(score)) == (0, 0, 1.0)


def test_similarity_disjoint_audiences_emit_no_off_diagonal(tmp_path):
    src = tmp_path / "disjoint"
    write_corpus(
        src,
        [("s1", "u1", "p1", "click", 1000), ("s2", "u2", "p2", "click", 2000)],
        [("p1", "a/b/c1", "adv1"), ("p2", "a/b/c2", "adv2")],
    )
    out = tmp_path / "disjointout"
    assert main(["similarity", "--corpus", str(src), "--out", str(out)]) == 0
    entries = [line.split("\t") for line in (out / "similarity.tsv").read_text().splitlines()]
    assert [(e[0], e[1]) for e in entries] == [("0", "0"), ("1", "1")]


def test_train_writes_checkpoint_and_full_history(trained_dir):
    assert (trained_dir / "checkpoint.bin").is_file()
    lines = (trained_dir / "loss_history.tsv").read_text(encoding="utf-8").splitlines()
    assert lines[0] == "epoch\tl_caba\tl_cabb\ttotal"
    assert len(lines) == 1 + 30


def test_train_rerun_is_byte_identical(tmp_path, corpus_dir, trained_dir):
    again = tmp_path / "again"
    code = main(
        ["train", "--corpus", str(corpus_dir), "--out", str(again), *GEN_ARGS, *FAST_TRAIN]
    )
    assert code == 0
    names = ["checkpoint.bin", "loss_history.tsv"]
    assert read_bytes(again, names) == read_bytes(trained_dir, names)


def evaluate_args(corpus_dir, trained_dir, out, split):
    return [
        "evaluate",
        "--corpus", str(corpus_dir),
        "--checkpoint", str(trained_dir / "checkpoint.bin"),
        "--out", str(out),
        "--eval.split", split,
        *GEN_ARGS,
    ]


def test_train_then_evaluate_beats_base_rate_on_train_split(tmp_path, corpus_dir, trained_dir):
    out = tmp_path / "eval"
    assert main(evaluate_args(corpus_dir, trained_dir, out, "train")) == 0
    rows = [
        line.split("\t")
        for line in (out / "evaluation.tsv").read_text(encoding="utf-8").splitlines()
        if not line.startswith("#")
    ]
    overall = next(r for r in rows if r[0] == "overall")
    assert float(overall[1]) < 1.0


def test_evaluate_rerun_is_byte_identical(tmp_path, corpus_dir, trained_dir):
    one, two = tmp_path / "e1", tmp_path / "e2"
    assert main(evaluate_args(corpus_dir, trained_dir, one, "test")) == 0
    assert main(evaluate_args(corpus_dir, trained_dir, two, "test")) == 0
    assert (one / "evaluation.tsv").read_bytes() == (two / "evaluation.tsv").read_bytes()


def sweep_args(corpus_dir, out):
    return [
        "sweep",
        "--corpus", str(corpus_dir),
        "--out", str(out),
        "--sweep.lambdas", "0,0.25,0.75",
        "--eval.n_seeds", "2",
        *GEN_ARGS,
        "--train.epochs", "2",
        "--train.batch_size", "64",
    ]


def test_sweep_reports_baseline_plus_one_variant_per_lambda(tmp_path, corpus_dir):
    out = tmp_path / "sweep"
    assert main(sweep_args(corpus_dir, out)) == 0
    body = [
        line.split("\t")
        for line in (out / "sweep.tsv").read_text(encoding="utf-8").splitlines()
        if line and not line.startswith("#")
    ]
    assert body[0] == ["variant", "overall_ne", "caba_ne", "cabb_ne", "seed", "note"]
    variants = []
    for row in body[1:]:
        if row[0] not in variants:
            variants.append(row[0])
    assert variants == ["baseline_last_click", "lambda_0", "lambda_0.25", "lambda_0.75"]
    # per variant: one row per seed plus the mean row
    assert len(body) - 1 == len(variants) * (2 + 1)


def test_sweep_rerun_is_byte_identical(tmp_path, corpus_dir):
    one, two = tmp_path / "s1", tmp_path / "s2"
    assert main(sweep_args(corpus_dir, one)) == 0
    assert main(sweep_args(corpus_dir, two)) == 0
    assert (one / "sweep.tsv").read_bytes() == (two / "sweep.tsv").read_bytes()


def schemes_args(corpus_dir, out):
    return [
        "schemes",
        "--corpus", str(corpus_dir),
        "--out", str(out),
        "--eval.n_seeds", "2",
        *GEN_ARGS,
        "--train.epochs", "2",
        "--train.batch_size", "64",
    ]


def test_schemes_reports_all_three_weightings(tmp_path, corpus_dir):
    out = tmp_path / "schemes"
    assert main(schemes_args(corpus_dir, out)) == 0
    body = [
        line.split("\t")
        for line in (out / "schemes.tsv").read_text(encoding="utf-8").splitlines()
        if line and not line.startswith("#")
    ]
    variants = {row[0] for row in body[1:]}
    assert variants == {"scheme_static1", "scheme_item_i2i", "scheme_taxonomy_cf"}

    again = tmp_path / "schemes2"
    assert main(schemes_args(corpus_dir, again)) == 0
    assert (again / "schemes.tsv").read_bytes() == (out / "schemes.tsv").read_bytes()


def importance_args(corpus_dir, checkpoint, out):
    return [
        "importance",
        "--corpus", str(corpus_dir),
        "--checkpoint", str(checkpoint),
        "--out", str(out),
        "--importance.n_repeats", "2",
        *GEN_ARGS,
    ]


def test_importance_zero_head_model_scores_zero(tmp_path, corpus_dir):
    with (corpus_dir / "events.tsv").open(encoding="utf-8") as ev, (
        corpus_dir / "catalog.tsv"
    ).open(encoding="utf-8") as cat:
        corpus = parse_corpus(ev, cat)
    taxonomy = build_taxonomy(corpus.catalog)
    params = init_params(Architecture(), taxonomy.leaf_count, N_FEATURES, seed=0)
    params.w1[:] = 0.0
    params.w2[:] = 0.0
    params.b1 = 0.0
    params.b2 = 0.0
    ckpt = tmp_path / "zero.ckpt"
    save_checkpoint(params, str(ckpt))

    out = tmp_path / "imp"
    assert main(importance_args(corpus_dir, ckpt, out)) == 0
    rows = [
        line.split("\t")
        for line in (out / "importance.tsv").read_text(encoding="utf-8").splitlines()
        if not line.startswith("#")
    ]
    assert rows[0] == ["head", "feature", "score"]
    assert {r[0] for r in rows[1:]} == {"caba", "cabb"}
    assert all(abs(float(r[2])) < 1e-12 for r in rows[1:])


def test_importance_rerun_is_byte_identical(tmp_path, corpus_dir, trained_dir):
    ckpt = trained_dir / "checkpoint.bin"
    one, two = tmp_path / "i1", tmp_path / "i2"
    assert main(importance_args(corpus_dir, ckpt, one)) == 0
    assert main(importance_args(corpus_dir, ckpt, two)) == 0
    assert (one / "importance.tsv").read_bytes() == (two / "importance.tsv").read_bytes()


def test_missing_corpus_exits_one(tmp_path, capsys):
    assert main(["train", "--corpus", str(tmp_path / "nowhere"), "--out", str(tmp_path)]) == 1
    assert "missing corpus file" in capsys.readouterr().err


def test_corrupt_corpus_exits_one(tmp_path, capsys):
    src = tmp_path / "bad"
    write_corpus(src, [("s1", "u1", "p1", "click", 1000)], [("p1", "a/b/c", "adv1")])
    (src / "events.tsv").write_text("s1\tu1\tp1\tclick\n", encoding="utf-8")
    assert main(["similarity", "--corpus", str(src), "--out", str(tmp_path / "o")]) == 1
    err = capsys.readouterr().err
    assert err.startswith("error:")


def test_unknown_config_key_exits_one(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("no.such.key=1\n", encoding="utf-8")
    assert main(["generate", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 1
    assert "unknown key" in capsys.readouterr().err


def test_bad_override_value_exits_one(tmp_path, capsys):
    assert main(["generate", "--out", str(tmp_path), "--train.epochs", "soon"]) == 1
    assert "expected integer" in capsys.readouterr().err


def test_checkpoint_leaf_mismatch_exits_one(tmp_path, corpus_dir, trained_dir, capsys):
    other = tmp_path / "other"
    args = ["generate", "--out", str(other), *GEN_ARGS]
    idx = args.index("--synth.n_categories")
    args[idx + 1] = "5"
    assert main(args) == 0
    code = main(evaluate_args(other, trained_dir, tmp_path / "e", "test"))
    assert code == 1
    assert "leaves" in capsys.readouterr().err


def test_unknown_flag_exits_two(tmp_path):
    with pytest.raises(SystemExit) as exc:
        main(["generate", "--out", str(tmp_path), "--bogus-flag", "1"])
    assert exc.value.code == 2


def test_missing_command_exits_two():
    with pytest.raises(SystemExit) as exc:
        main([])
    assert exc.value.code == 2
