"""Two-head conversion model trained from scratch with mini-batch descent.

A click example enters as its leaf embedding concatenated with standardized
dense features, passes through a shared rectified-linear trunk, and exits
through two sigmoid heads: one predicting a same-product purchase, one a
different-product purchase. The objective is the mean same-product
cross-entropy plus lam times the mean alpha-weighted different-product
cross-entropy; alpha scales each example's whole second term.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np

from . import kernels
from .kernels import LOSS_CLAMP_HI, LOSS_CLAMP_LO
from .kernels.numpy_backend import forward_batch
from .labeling import FEATURE_NAMES, ClickExample, DatasetArrays, dataset_arrays
from .seeds import TAG_PERMUTE, TAG_TRAIN_INIT, TAG_TRAIN_SHUFFLE, derive_rng

HEAD_CABA = "caba"
HEAD_CABB = "cabb"


class TrainMode(Enum):
    SINGLE_TASK_LAST_CLICK = "single_task_last_click"
    CABA_ONLY = "caba_only"
    MULTITASK = "multitask"


@dataclass(frozen=True)
class Architecture:
    embedding_dim: int = 8
    hidden_dims: tuple[int, ...] = (32, 16)

    def __post_init__(self) -> None:
        object.__setattr__(self, "hidden_dims", tuple(int(d) for d in self.hidden_dims))
        if self.embedding_dim < 1:
            raise ValueError("embedding_dim must be positive")
        if not self.hidden_dims or any(d < 1 for d in self.hidden_dims):
            raise ValueError("hidden_dims must be a non-empty sequence of positive ints")


@dataclass
class ModelParams:
    embedding: np.ndarray
    trunk_ws: list[np.ndarray]
    trunk_bs: list[np.ndarray]
    w1: np.ndarray
    b1: float
    w2: np.ndarray
    b2: float
    norm_mean: np.ndarray
    norm_std: np.ndarray

    @property
    def leaf_count(self) -> int:
        return self.embedding.shape[0]

    @property
    def embedding_dim(self) -> int:
        return self.embedding.shape[1]

    @property
    def feature_dim(self) -> int:
        return self.norm_mean.size

    def architecture(self) -> Architecture:
        return Architecture(
            embedding_dim=self.embedding_dim,
            hidden_dims=tuple(w.shape[1] for w in self.trunk_ws),
        )

    def copy(self) -> "ModelParams":
        return ModelParams(
            embedding=self.embedding.copy(),
            trunk_ws=[w.copy() for w in self.trunk_ws],
            trunk_bs=[b.copy() for b in self.trunk_bs],
            w1=self.w1.copy(),
            b1=self.b1,
            w2=self.w2.copy(),
            b2=self.b2,
            norm_mean=self.norm_mean.copy(),
            norm_std=self.norm_std.copy(),
        )


@dataclass
class TrainConfig:
    lam: float = 0.75
    learning_rate: float = 0.05
    epochs: int = 30
    batch_size: int = 256
    seed: int = 0
    mode: TrainMode = TrainMode.MULTITASK

    def __post_init__(self) -> None:
        if self.lam < 0:
            raise ValueError("lam must be >= 0")
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be >= 0")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be positive")


@dataclass(frozen=True)
class LossBreakdown:
    l_caba: float
    l_cabb: float
    total: float


@dataclass
class Gradients:
    embedding: np.ndarray
    trunk_ws: list[np.ndarray]
    trunk_bs: list[np.ndarray]
    w1: np.ndarray
    b1: float
    w2: np.ndarray
    b2: float


def init_params(arch: Architecture, leaf_count: int, feature_dim: int, seed: int) -> ModelParams:
    """Zero-mean uniform weights with limit sqrt(3)/sqrt(fan_in) (unit
    variance scaled by 1/fan_in); biases zero. Embedding rows use their own
    width as fan-in. Draw order: embedding, trunk layers, head 1, head 2."""
    if leaf_count < 1 or feature_dim < 1:
        raise ValueError("leaf_count and feature_dim must be positive")
    rng = derive_rng(seed, TAG_TRAIN_INIT)

    def uniform(fan_in: int, shape) -> np.ndarray:
        limit = math.sqrt(3.0) / math.sqrt(fan_in)
        return rng.uniform(-limit, limit, shape)

    embedding = uniform(arch.embedding_dim, (leaf_count, arch.embedding_dim))
    dims = [arch.embedding_dim + feature_dim, *arch.hidden_dims]
    trunk_ws = []
    trunk_bs = []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        trunk_ws.append(uniform(fan_in, (fan_in, fan_out)))
        trunk_bs.append(np.zeros(fan_out))
    w1 = uniform(dims[-1], dims[-1])
    w2 = uniform(dims[-1], dims[-1])
    return ModelParams(
        embedding=embedding,
        trunk_ws=trunk_ws,
        trunk_bs=trunk_bs,
        w1=w1,
        b1=0.0,
        w2=w2,
        b2=0.0,
        norm_mean=np.zeros(feature_dim),
        norm_std=np.ones(feature_dim),
    )


def _standardize(params: ModelParams, X: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray((X - params.norm_mean) / params.norm_std)


def _sigmoid_scalar(z: float) -> float:
    if z >= 0.0:
        return 1.0 / (1.0 + math.exp(-z))
    ez = math.exp(z)
    return ez / (1.0 + ez)


def forward(params: ModelParams, example: ClickExample) -> tuple[float, float]:
    """Predicted (same-product, different-product) purchase probabilities
    for one click; both strictly inside (0, 1)."""
    if example.features.size != params.feature_dim:
        raise ValueError(
            f"feature dim {example.features.size} != model feature dim {params.feature_dim}"
        )
    if not 0 <= example.leaf_id < params.leaf_count:
        raise ValueError(f"leaf_id {example.leaf_id} outside [0, {params.leaf_count})")
    x = (example.features - params.norm_mean) / params.norm_std
    a = np.concatenate((params.embedding[example.leaf_id], x))
    for W, b in zip(params.trunk_ws, params.trunk_bs):
        a = np.maximum(a @ W + b, 0.0)
    return (
        _sigmoid_scalar(float(a @ params.w1) + params.b1),
        _sigmoid_scalar(float(a @ params.w2) + params.b2),
    )


def predict_arrays(params: ModelParams, X: np.ndarray, leaf_ids: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Batched head probabilities for raw (unstandardized) features."""
    return kernels.predict_batch(
        params.embedding,
        tuple(params.trunk_ws),
        tuple(params.trunk_bs),
        params.w1,
        params.b1,
        params.w2,
        params.b2,
        _standardize(params, X),
        np.ascontiguousarray(leaf_ids, dtype=np.int64),
    )


def _batch_forward(params: ModelParams, batch: Sequence[ClickExample]):
    if not batch:
        raise ValueError("batch must be non-empty")
    arrays = dataset_arrays(batch)
    Xs = _standardize(params, arrays.X)
    acts, p1, p2 = forward_batch(
        params.embedding,
        tuple(params.trunk_ws),
        tuple(params.trunk_bs),
        params.w1,
        params.b1,
        params.w2,
        params.b2,
        Xs,
        arrays.leaf_ids,
    )
    return arrays, acts, p1, p2


def batch_loss(params: ModelParams, batch: Sequence[ClickExample], lam: float) -> LossBreakdown:
    """Mean clamped cross-entropies over the batch: l_caba unweighted on the
    same-product labels, l_cabb alpha-weighted on the different-product
    labels, total = l_caba + lam * l_cabb."""
    arrays, _, p1, p2 = _batch_forward(params, batch)
    pc1 = np.clip(p1, LOSS_CLAMP_LO, LOSS_CLAMP_HI)
    pc2 = np.clip(p2, LOSS_CLAMP_LO, LOSS_CLAMP_HI)
    l_caba = float(
        -np.mean(arrays.y1 * np.log(pc1) + (1.0 - arrays.y1) * np.log(1.0 - pc1))
    )
    l_cabb = float(
        -np.mean(
            arrays.alpha * (arrays.y2 * np.log(pc2) + (1.0 - arrays.y2) * np.log(1.0 - pc2))
        )
    )
    return LossBreakdown(l_caba=l_caba, l_cabb=l_cabb, total=l_caba + lam * l_cabb)


def gradients(params: ModelParams, batch: Sequence[ClickExample], lam: float) -> Gradients:
    """Analytic gradients of batch_loss(...).total for every parameter,
    including only the embedding rows the batch touches. Where the clamp
    is active the loss is locally flat, so those positions contribute 0."""
    arrays, acts, p1, p2 = _batch_forward(params, batch)
    nb = len(batch)
    n_layers = len(params.trunk_ws)

    dz1 = (p1 - arrays.y1) / nb
    dz1[(p1 <= LOSS_CLAMP_LO) | (p1 >= LOSS_CLAMP_HI)] = 0.0
    gw1 = np.dot(acts[-1].T, dz1)
    gb1 = float(np.sum(dz1))
    dh = np.outer(dz1, params.w1)

    dz2 = lam * arrays.alpha * (p2 - arrays.y2) / nb
    dz2[(p2 <= LOSS_CLAMP_LO) | (p2 >= LOSS_CLAMP_HI)] = 0.0
    gw2 = np.dot(acts[-1].T, dz2)
    gb2 = float(np.sum(dz2))
    dh = dh + np.outer(dz2, params.w2)

    g_ws: list[np.ndarray] = [np.empty(0)] * n_layers
    g_bs: list[np.ndarray] = [np.empty(0)] * n_layers
    for li in range(n_layers - 1, -1, -1):
        dz = dh * (acts[li + 1] > 0.0)
        g_ws[li] = np.dot(acts[li].T, dz)
        g_bs[li] = dz.sum(axis=0)
        dh = np.dot(dz, params.trunk_ws[li].T)

    g_emb = np.zeros_like(params.embedding)
    np.add.at(g_emb, arrays.leaf_ids, dh[:, : params.embedding_dim])
    return Gradients(
        embedding=g_emb, trunk_ws=g_ws, trunk_bs=g_bs, w1=gw1, b1=gb1, w2=gw2, b2=gb2
    )


def train(
    dataset: Sequence[ClickExample],
    config: TrainConfig,
    arch: Architecture = Architecture(),
    last_click: np.ndarray | None = None,
    leaf_count: int | None = None,
) -> tuple[ModelParams, list[LossBreakdown]]:
    """Seeded mini-batch gradient descent.

    Multitask optimizes both heads at the configured lam; the caba-only
    mode sets lam to 0 so head 2 and its gradient path are never touched;
    the last-click mode additionally swaps in `last_click` as head 1's
    labels. History rows report the optimized objective per epoch (whole
    -epoch means of the pre-update batch losses), so at lam = 0 the second
    component reads 0.
    """
    if not dataset:
        raise ValueError("training dataset must be non-empty")
    arrays = dataset_arrays(dataset)
    n = len(dataset)
    y1 = arrays.y1
    if config.mode is TrainMode.SINGLE_TASK_LAST_CLICK:
        if last_click is None:
            raise ValueError("single-task last-click training needs last_click labels")
        if last_click.shape != (n,):
            raise ValueError(f"last_click shape {last_click.shape} != ({n},)")
        y1 = np.asarray(last_click, dtype=np.float64)
        lam_eff = 0.0
    elif config.mode is TrainMode.CABA_ONLY:
        lam_eff = 0.0
    else:
        lam_eff = config.lam

    n_leaves = leaf_count if leaf_count is not None else int(arrays.leaf_ids.max()) + 1
    if int(arrays.leaf_ids.max()) >= n_leaves:
        raise ValueError("leaf_count smaller than max leaf id in dataset")
    params = init_params(arch, n_leaves, arrays.X.shape[1], config.seed)
    mean = arrays.X.mean(axis=0)
    std = arrays.X.std(axis=0)
    std[std < 1e-9] = 1.0  # constant features standardize to 0, not inf
    params.norm_mean = mean
    params.norm_std = std

    Xs = _standardize(params, arrays.X)
    leaf_ids = arrays.leaf_ids
    rng = derive_rng(config.seed, TAG_TRAIN_SHUFFLE)
    history: list[LossBreakdown] = []
    for epoch in range(config.epochs):
        order = rng.permutation(n).astype(np.int64)
        caba_sum, cabb_sum, b1, b2 = kernels.run_epoch(
            params.embedding,
            tuple(params.trunk_ws),
            tuple(params.trunk_bs),
            params.w1,
            params.b1,
            params.w2,
            params.b2,
            Xs,
            leaf_ids,
            y1,
            arrays.y2,
            arrays.alpha,
            order,
            lam_eff,
            config.learning_rate,
            config.batch_size,
        )
        params.b1 = float(b1)
        params.b2 = float(b2)
        l_caba = caba_sum / n
        l_cabb = cabb_sum / n
        breakdown = LossBreakdown(l_caba=l_caba, l_cabb=l_cabb, total=l_caba + lam_eff * l_cabb)
        if not (math.isfinite(breakdown.l_caba) and math.isfinite(breakdown.l_cabb)):
            raise RuntimeError(
                f"non-finite training loss at epoch {epoch}: {breakdown} "
                f"(lr={config.learning_rate}, lam={lam_eff})"
            )
        history.append(breakdown)
    return params, history


def permutation_importance(
    params: ModelParams,
    dataset: Sequence[ClickExample] | DatasetArrays,
    head: str,
    seed: int,
    n_repeats: int = 5,
) -> dict[str, float]:
    """Mean NE increase from shuffling one input across the dataset,
    per feature, for the requested head ("caba" or "cabb"); the leaf id
    is scored too by permuting it as a column. Higher = more important."""
    if head not in (HEAD_CABA, HEAD_CABB):
        raise ValueError(f"head must be '{HEAD_CABA}' or '{HEAD_CABB}', got {head!r}")
    from .evaluation import normalized_entropy  # deferred: evaluation imports this module

    arrays = dataset if isinstance(dataset, DatasetArrays) else dataset_arrays(dataset)
    labels = arrays.y1 if head == HEAD_CABA else arrays.y2
    Xs = _standardize(params, arrays.X)
    leaf_ids = arrays.leaf_ids

    def head_pred(xmat: np.ndarray, leaves: np.ndarray) -> np.ndarray:
        p1, p2 = kernels.predict_batch(
            params.embedding,
            tuple(params.trunk_ws),
            tuple(params.trunk_bs),
            params.w1,
            params.b1,
            params.w2,
            params.b2,
            xmat,
            leaves,
        )
        return p1 if head == HEAD_CABA else p2

    base_ne = normalized_entropy(labels, head_pred(Xs, leaf_ids)).ne
    scores: dict[str, float] = {}
    width = Xs.shape[1]
    if width == len(FEATURE_NAMES):
        names = list(FEATURE_NAMES)
    else:
        names = [f"f{i}" for i in range(width)]
    columns = names + ["leaf_id"]
    for f_idx, name in enumerate(columns):
        deltas = []
        for rep in range(n_repeats):
            rng = derive_rng(seed, TAG_PERMUTE, f_idx, rep)
            perm = rng.permutation(len(labels))
            if name == "leaf_id":
                ne = normalized_entropy(labels, head_pred(Xs, leaf_ids[perm])).ne
            else:
                Xp = Xs.copy()
                Xp[:, f_idx] = Xs[perm, f_idx]
                ne = normalized_entropy(labels, head_pred(Xp, leaf_ids)).ne
            deltas.append(ne - base_ne)
        scores[name] = float(np.mean(deltas))
    return scores


_CHECKPOINT_FORMAT = "cabblab-checkpoint"
_CHECKPOINT_VERSION = 1


def save_checkpoint(params: ModelParams, path: str) -> None:
    """Versioned binary dump: json header, NUL byte, then raw little-endian
    float64 array bytes in header order. Round-trips bitwise."""
    for scalar in (params.b1, params.b2):
        if not math.isfinite(scalar):
            raise ValueError("refusing to checkpoint non-finite parameters")
    arrays = [("embedding", params.embedding)]
    for i, (w, b) in enumerate(zip(params.trunk_ws, params.trunk_bs)):
        arrays.append((f"trunk_w{i}", w))
        arrays.append((f"trunk_b{i}", b))
    arrays.extend(
        [
            ("w1", params.w1),
            ("w2", params.w2),
            ("norm_mean", params.norm_mean),
            ("norm_std", params.norm_std),
        ]
    )
    header = {
        "format": _CHECKPOINT_FORMAT,
        "version": _CHECKPOINT_VERSION,
        "embedding_dim": params.embedding_dim,
        "hidden_dims": list(params.architecture().hidden_dims),
        "leaf_count": params.leaf_count,
        "feature_dim": params.feature_dim,
        "b1": params.b1,
        "b2": params.b2,
        "arrays": [{"name": name, "shape": list(arr.shape)} for name, arr in arrays],
    }
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode("utf-8"))
        fh.write(b"\0")
        for _, arr in arrays:
            if not np.all(np.isfinite(arr)):
                raise ValueError("refusing to checkpoint non-finite parameters")
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_checkpoint(path: str) -> tuple[ModelParams, Architecture]:
    with open(path, "rb") as fh:
        blob = fh.read()
    sep = blob.find(b"\0")
    if sep < 0:
        raise ValueError(f"{path}: not a checkpoint (missing header separator)")
    try:
        header = json.loads(blob[:sep].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ValueError(f"{path}: corrupt checkpoint header: {exc}") from None
    if header.get("format") != _CHECKPOINT_FORMAT:
        raise ValueError(f"{path}: unknown checkpoint format {header.get('format')!r}")
    if header.get("version") != _CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {header.get('version')!r}")
    payload = blob[sep + 1 :]
    offset = 0
    loaded: dict[str, np.ndarray] = {}
    for entry in header["arrays"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        nbytes = count * 8
        if offset + nbytes > len(payload):
            raise ValueError(f"{path}: truncated checkpoint payload")
        arr = np.frombuffer(payload[offset : offset + nbytes], dtype="<f8").reshape(shape)
        loaded[entry["name"]] = arr.astype(np.float64)
        offset += nbytes
    if offset != len(payload):
        raise ValueError(f"{path}: trailing bytes in checkpoint payload")
    hidden = list(header["hidden_dims"])
    arch = Architecture(embedding_dim=header["embedding_dim"], hidden_dims=tuple(hidden))
    params = ModelParams(
        embedding=loaded["embedding"],
        trunk_ws=[loaded[f"trunk_w{i}"] for i in range(len(hidden))],
        trunk_bs=[loaded[f"trunk_b{i}"] for i in range(len(hidden))],
        w1=loaded["w1"],
        b1=float(header["b1"]),
        w2=loaded["w2"],
        b2=float(header["b2"]),
        norm_mean=loaded["norm_mean"],
        norm_std=loaded["norm_std"],
    )
    if params.leaf_count != header["leaf_count"] or params.feature_dim != header["feature_dim"]:
        raise ValueError(f"{path}: header dimensions disagree with array shapes")
    return params, arch
