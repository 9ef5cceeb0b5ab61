"""Compare the compiled and pure-numpy kernel backends on one training
workload.

Run without arguments to benchmark both backends (each in its own
subprocess, since the backend is chosen once at import time) and print a
comparison table. With CABBLAB_BACKEND already set, measures just that
backend. Timings exclude corpus generation and, for the compiled
backend, the first warm-up epoch."""

import argparse
import json
import os
import subprocess
import sys
import time


def measure(sessions: int, epochs: int, repeats: int) -> dict:
    from cabblab import kernels
    from cabblab.labeling import apply_scheme_alphas, build_dataset, dataset_arrays
    from cabblab.model import TrainConfig, train
    from cabblab.similarity import TaxonomyCF, build_engagement_vectors, build_similarity_matrix
    from cabblab.synth import SynthConfig, generate_synthetic, ring_affinity
    from cabblab.taxonomy import build_taxonomy

    config = SynthConfig(
        n_users=200,
        n_sessions=sessions,
        n_products=300,
        n_categories=30,
        p_caba=0.5,
        p_related_cabb=0.25,
        p_noise_cabb=0.15,
        p_no_purchase=0.10,
        related_affinity=ring_affinity(30, 2),
        clicks_per_session_mean=4.0,
        seed=5,
    )
    corpus, _ = generate_synthetic(config)
    taxonomy = build_taxonomy(corpus.catalog)
    vectors = build_engagement_vectors(corpus, taxonomy)
    scheme = TaxonomyCF(taxonomy=taxonomy, matrix=build_similarity_matrix(vectors))
    examples = apply_scheme_alphas(build_dataset(corpus, taxonomy, scheme), scheme)
    arrays = dataset_arrays(examples)

    cfg = TrainConfig(lam=0.75, epochs=1, seed=5)
    train(examples, cfg, leaf_count=taxonomy.leaf_count)  # warm-up / jit compile

    times = []
    for rep in range(repeats):
        cfg = TrainConfig(lam=0.75, epochs=epochs, seed=5 + rep)
        t0 = time.perf_counter()
        params, _ = train(examples, cfg, leaf_count=taxonomy.leaf_count)
        times.append(time.perf_counter() - t0)

    t0 = time.perf_counter()
    for _ in range(10):
        kernels.predict_batch(
            params.embedding,
            tuple(params.trunk_ws),
            tuple(params.trunk_bs),
            params.w1,
            params.b1,
            params.w2,
            params.b2,
            (arrays.X - params.norm_mean) / params.norm_std,
            arrays.leaf_ids,
        )
    predict_s = (time.perf_counter() - t0) / 10

    return {
        "backend": kernels.BACKEND,
        "n_examples": len(examples),
        "train_s": min(times),
        "epochs": epochs,
        "predict_s": predict_s,
    }


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--sessions", type=int, default=10_000)
    parser.add_argument("--epochs", type=int, default=5)
    parser.add_argument("--repeats", type=int, default=3)
    parser.add_argument("--json", action="store_true", help="emit one json object (internal)")
    args = parser.parse_args(argv)

    if os.environ.get("CABBLAB_BACKEND"):
        result = measure(args.sessions, args.epochs, args.repeats)
        print(json.dumps(result) if args.json else format_row(result))
        return 0

    results = []
    for backend in ("numba", "numpy"):
        env = dict(os.environ, CABBLAB_BACKEND=backend)
        cmd = [
            sys.executable, __file__, "--json",
            "--sessions", str(args.sessions),
            "--epochs", str(args.epochs),
            "--repeats", str(args.repeats),
        ]
        out = subprocess.run(cmd, env=env, capture_output=True, text=True)
        if out.returncode != 0:
            print(out.stderr, file=sys.stderr)
            return out.returncode
        results.append(json.loads(out.stdout.strip().splitlines()[-1]))

    print(f"workload: {results[0]['n_examples']} examples, {args.epochs} epochs, best of {args.repeats}")
    print("backend  train_s   epochs/s  predict_s")
    for r in results:
        print(format_row(r))
    speedup = results[1]["train_s"] / results[0]["train_s"]
    print(f"numba speedup over numpy: {speedup:.1f}x on training")
    return 0


def format_row(r: dict) -> str:
    return (
        f"{r['backend']:<8} {r['train_s']:>7.3f}  {r['epochs'] / r['train_s']:>8.2f}  "
        f"{r['predict_s']:>9.4f}"
    )


if __name__ == "__main__":
    sys.exit(main())
