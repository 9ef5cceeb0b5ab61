"""Flat key=value run configuration with a typed key registry.

One text file drives every command: `key=value` per line, `#` comments
and blank lines allowed. Every key is declared below with its type and
default; unknown keys and badly typed values are rejected at load time.
Command-line overrides use the same keys and win over the file.
"""

from __future__ import annotations

from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Callable

from .labeling import FeatureConfig
from .model import Architecture, TrainConfig, TrainMode
from .similarity import EventWeights
from .synth import SynthConfig, ring_affinity


class ConfigError(ValueError):
    pass


def _as_int(text: str) -> int:
    try:
        return int(text, 10)
    except ValueError:
        raise ConfigError(f"expected integer, got {text!r}") from None


def _as_float(text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise ConfigError(f"expected number, got {text!r}") from None
    if value != value or value in (float("inf"), float("-inf")):
        raise ConfigError(f"expected finite number, got {text!r}")
    return value


def _as_str(text: str) -> str:
    return text


def _as_int_tuple(text: str) -> tuple[int, ...]:
    items = [part.strip() for part in text.split(",")]
    if not all(items):
        raise ConfigError(f"expected comma-separated integers, got {text!r}")
    return tuple(_as_int(part) for part in items)


def _as_float_tuple(text: str) -> tuple[float, ...]:
    items = [part.strip() for part in text.split(",")]
    if not all(items):
        raise ConfigError(f"expected comma-separated numbers, got {text!r}")
    return tuple(_as_float(part) for part in items)


def _as_choice(options: tuple[str, ...]) -> Callable[[str], str]:
    def cast(text: str) -> str:
        if text not in options:
            raise ConfigError(f"expected one of {', '.join(options)}; got {text!r}")
        return text

    return cast


MODES = tuple(mode.value for mode in TrainMode)
SCHEMES = ("static1", "item_i2i", "taxonomy_cf")
SPLITS = ("train", "test", "all")
HEADS = ("caba", "cabb", "both")


@dataclass
class RunConfig:
    seed: int = 0
    synth_n_users: int = 1000
    synth_n_sessions: int = 20000
    synth_n_products: int = 500
    synth_n_categories: int = 50
    synth_affinity_k: int = 2
    synth_p_caba: float = 0.5
    synth_p_related_cabb: float = 0.25
    synth_p_noise_cabb: float = 0.15
    synth_p_no_purchase: float = 0.10
    synth_clicks_per_session_mean: float = 4.0
    weights_click: float = 1.0
    weights_cart: float = 2.0
    weights_purchase: float = 4.0
    weights_impression: float = 0.0
    features_bounce_threshold_ms: int = 10_000
    features_time_gap_cap_ms: int = 30 * 24 * 3_600_000
    features_cvr_prior_purchases: float = 1.0
    features_cvr_prior_clicks: float = 10.0
    arch_embedding_dim: int = 8
    arch_hidden_dims: tuple[int, ...] = (32, 16)
    train_lambda: float = 0.75
    train_learning_rate: float = 0.05
    train_epochs: int = 30
    train_batch_size: int = 256
    train_mode: str = "multitask"
    train_scheme: str = "taxonomy_cf"
    eval_test_fraction: float = 0.2
    eval_n_seeds: int = 5
    eval_split: str = "test"
    sweep_lambdas: tuple[float, ...] = (0.0, 0.1, 0.25, 0.5, 0.75, 0.9)
    importance_n_repeats: int = 5
    importance_head: str = "both"
    io_out_dir: str = "."
    io_corpus_dir: str = ""
    io_checkpoint: str = ""

    def synth_config(self) -> SynthConfig:
        return SynthConfig(
            n_users=self.synth_n_users,
            n_sessions=self.synth_n_sessions,
            n_products=self.synth_n_products,
            n_categories=self.synth_n_categories,
            p_caba=self.synth_p_caba,
            p_related_cabb=self.synth_p_related_cabb,
            p_noise_cabb=self.synth_p_noise_cabb,
            p_no_purchase=self.synth_p_no_purchase,
            related_affinity=ring_affinity(self.synth_n_categories, self.synth_affinity_k),
            clicks_per_session_mean=self.synth_clicks_per_session_mean,
            seed=self.seed,
        )

    def event_weights(self) -> EventWeights:
        return EventWeights(
            w_click=self.weights_click,
            w_cart=self.weights_cart,
            w_purchase=self.weights_purchase,
            w_impression=self.weights_impression,
        )

    def feature_config(self) -> FeatureConfig:
        return FeatureConfig(
            bounce_threshold_ms=self.features_bounce_threshold_ms,
            cvr_prior_purchases=self.features_cvr_prior_purchases,
            cvr_prior_clicks=self.features_cvr_prior_clicks,
            time_gap_cap_ms=self.features_time_gap_cap_ms,
        )

    def architecture(self) -> Architecture:
        return Architecture(
            embedding_dim=self.arch_embedding_dim, hidden_dims=self.arch_hidden_dims
        )

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            lam=self.train_lambda,
            learning_rate=self.train_learning_rate,
            epochs=self.train_epochs,
            batch_size=self.train_batch_size,
            seed=self.seed,
            mode=TrainMode(self.train_mode),
        )

    def out_dir(self) -> Path:
        return Path(self.io_out_dir)

    def corpus_dir(self) -> Path:
        return Path(self.io_corpus_dir) if self.io_corpus_dir else self.out_dir()

    def checkpoint_path(self) -> Path:
        if self.io_checkpoint:
            return Path(self.io_checkpoint)
        return self.out_dir() / "checkpoint.bin"


def _registry() -> dict[str, tuple[str, Callable[[str], object]]]:
    casters: dict[str, Callable[[str], object]] = {
        "seed": _as_int,
        "synth.n_users": _as_int,
        "synth.n_sessions": _as_int,
        "synth.n_products": _as_int,
        "synth.n_categories": _as_int,
        "synth.affinity_k": _as_int,
        "synth.p_caba": _as_float,
        "synth.p_related_cabb": _as_float,
        "synth.p_noise_cabb": _as_float,
        "synth.p_no_purchase": _as_float,
        "synth.clicks_per_session_mean": _as_float,
        "weights.click": _as_float,
        "weights.cart": _as_float,
        "weights.purchase": _as_float,
        "weights.impression": _as_float,
        "features.bounce_threshold_ms": _as_int,
        "features.time_gap_cap_ms": _as_int,
        "features.cvr_prior_purchases": _as_float,
        "features.cvr_prior_clicks": _as_float,
        "arch.embedding_dim": _as_int,
        "arch.hidden_dims": _as_int_tuple,
        "train.lambda": _as_float,
        "train.learning_rate": _as_float,
        "train.epochs": _as_int,
        "train.batch_size": _as_int,
        "train.mode": _as_choice(MODES),
        "train.scheme": _as_choice(SCHEMES),
        "eval.test_fraction": _as_float,
        "eval.n_seeds": _as_int,
        "eval.split": _as_choice(SPLITS),
        "sweep.lambdas": _as_float_tuple,
        "importance.n_repeats": _as_int,
        "importance.head": _as_choice(HEADS),
        "io.out_dir": _as_str,
        "io.corpus_dir": _as_str,
        "io.checkpoint": _as_str,
    }
    table: dict[str, tuple[str, Callable[[str], object]]] = {}
    attr_names = {f.name for f in fields(RunConfig)}
    for key, caster in casters.items():
        attr = key.replace(".", "_")
        if attr not in attr_names:
            raise AssertionError(f"registry key {key} has no RunConfig field")
        table[key] = (attr, caster)
    return table


KEY_TABLE = _registry()
CONFIG_KEYS = tuple(sorted(KEY_TABLE))


def parse_config_text(text: str, source: str = "<config>") -> dict[str, str]:
    """Raw key=value pairs from config text; duplicates and junk rejected."""
    pairs: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected key=value, got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if not key:
            raise ConfigError(f"{source}:{lineno}: empty key")
        if key in pairs:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        pairs[key] = value
    return pairs


def apply_pairs(config: RunConfig, pairs: dict[str, str], source: str) -> RunConfig:
    updates: dict[str, object] = {}
    for key, value in pairs.items():
        entry = KEY_TABLE.get(key)
        if entry is None:
            raise ConfigError(f"{source}: unknown key {key!r}")
        attr, caster = entry
        try:
            updates[attr] = caster(value)
        except ConfigError as exc:
            raise ConfigError(f"{source}: key {key!r}: {exc}") from None
    return replace(config, **updates)


def load_run_config(path: str | Path | None, overrides: dict[str, str]) -> RunConfig:
    """Defaults, then the config file, then overrides; later layers win."""
    config = RunConfig()
    if path is not None:
        p = Path(path)
        try:
            text = p.read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config {p}: {exc}") from None
        config = apply_pairs(config, parse_config_text(text, str(p)), str(p))
    if overrides:
        config = apply_pairs(config, overrides, "command line")
    return config
