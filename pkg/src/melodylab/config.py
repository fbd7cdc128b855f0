"""Plain-text run configuration: INI sections per module, resolved defaults
written back on every run so experiments are reproducible from the file."""

from __future__ import annotations

import configparser
import hashlib
import io
import typing
from dataclasses import dataclass, fields, replace

from .corpus import GenreProfile, source_pop_profile, target_folk_profile
from .mcts import SearchConfig
from .seeding import derive_seed
from .vae import Dims, TrainConfig

DEFAULT_APPROACHES = (
    "non-transfer",
    "zero-shot",
    "finetune-all",
    "finetune-last",
    "ce-mcts",
)


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int = 7
    k_folds: int = 5
    n_source_train: int = 500
    n_source_test: int = 100
    n_target: int = 100
    approaches: tuple[str, ...] = DEFAULT_APPROACHES
    distill_weight: float = 0.5
    distill_temperature: float = 2.0


@dataclass(frozen=True)
class RunConfig:
    experiment: ExperimentConfig
    dims: Dims
    pretrain: TrainConfig
    finetune: TrainConfig
    non_transfer: TrainConfig
    search: SearchConfig
    source_profile: GenreProfile
    target_profile: GenreProfile


def default_run_config(seed: int = 7) -> RunConfig:
    """Package defaults; per-stage seeds are derived from the top-level seed."""
    return _resolve_seeds(
        RunConfig(
            experiment=ExperimentConfig(seed=seed),
            dims=Dims(),
            pretrain=TrainConfig(
                learning_rate=2e-3,
                batch_size=32,
                max_epochs=300,
                beta_max=0.2,
                beta_warmup_epochs=50,
                free_bits=0.125,
                early_stop_patience=25,
            ),
            finetune=TrainConfig(
                learning_rate=2e-4,  # 0.1x the pretraining rate
                batch_size=32,
                max_epochs=200,
                beta_max=0.2,
                beta_warmup_epochs=0,
                free_bits=0.125,
                early_stop_patience=20,
            ),
            non_transfer=TrainConfig(
                learning_rate=2e-3,
                batch_size=32,
                max_epochs=300,
                beta_max=0.2,
                beta_warmup_epochs=50,
                free_bits=0.125,
                early_stop_patience=20,
            ),
            search=SearchConfig(),
            source_profile=source_pop_profile(),
            target_profile=target_folk_profile(),
        )
    )


def _resolve_seeds(cfg: RunConfig) -> RunConfig:
    """Derive every stage seed from experiment.seed (overrides any stored)."""
    seed = cfg.experiment.seed
    return replace(
        cfg,
        pretrain=replace(cfg.pretrain, seed=derive_seed(seed, "pretrain")),
        finetune=replace(cfg.finetune, seed=derive_seed(seed, "finetune")),
        non_transfer=replace(cfg.non_transfer, seed=derive_seed(seed, "non-transfer")),
        search=replace(cfg.search, seed=derive_seed(seed, "search")),
        source_profile=cfg.source_profile.with_seed(derive_seed(seed, "corpus", "source")),
        target_profile=cfg.target_profile.with_seed(derive_seed(seed, "corpus", "target")),
    )


_SECTIONS = (
    ("experiment", "experiment"),
    ("dims", "dims"),
    ("pretrain", "pretrain"),
    ("finetune", "finetune"),
    ("non-transfer", "non_transfer"),
    ("search", "search"),
    ("profile.source", "source_profile"),
    ("profile.target", "target_profile"),
)


def _format_value(value) -> str:
    if isinstance(value, tuple):
        return ", ".join(str(v) for v in value)
    return str(value)


def _parse_value(kind, raw: str):
    raw = raw.strip()
    if kind is bool:
        if raw.lower() in ("1", "true", "yes", "on"):
            return True
        if raw.lower() in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {raw!r}")
    if kind in (int, float, str):
        return kind(raw)
    origin = typing.get_origin(kind)
    if origin is tuple:
        elem = typing.get_args(kind)[0]
        if not raw:
            return ()
        return tuple(_parse_value(elem, part) for part in raw.split(","))
    raise ValueError(f"unsupported config field type: {kind}")


def _apply_section(obj, section: configparser.SectionProxy):
    hints = typing.get_type_hints(type(obj))
    updates = {}
    for f in fields(obj):
        if f.name in section:
            updates[f.name] = _parse_value(hints[f.name], section[f.name])
    unknown = set(section) - {f.name for f in fields(obj)}
    if unknown:
        raise ValueError(
            f"unknown keys in [{section.name}]: {sorted(unknown)}"
        )
    return replace(obj, **updates) if updates else obj


def load_config(path=None, seed: int | None = None) -> RunConfig:
    """Defaults overlaid with the INI file (if given); the --seed override
    wins over the file; all stage seeds are then derived."""
    cfg = default_run_config()
    if path is not None:
        parser = configparser.ConfigParser()
        with open(path, "r", encoding="utf-8") as fh:
            parser.read_file(fh)
        known = {name for name, _ in _SECTIONS}
        unknown = set(parser.sections()) - known
        if unknown:
            raise ValueError(f"unknown config sections: {sorted(unknown)}")
        for section_name, attr in _SECTIONS:
            if parser.has_section(section_name):
                updated = _apply_section(getattr(cfg, attr), parser[section_name])
                cfg = replace(cfg, **{attr: updated})
    if seed is not None:
        cfg = replace(cfg, experiment=replace(cfg.experiment, seed=seed))
    return _resolve_seeds(cfg)


def config_text(cfg: RunConfig) -> str:
    parser = configparser.ConfigParser()
    for section_name, attr in _SECTIONS:
        obj = getattr(cfg, attr)
        parser[section_name] = {
            f.name: _format_value(getattr(obj, f.name)) for f in fields(obj)
        }
    buf = io.StringIO()
    parser.write(buf)
    return buf.getvalue()


def write_config(cfg: RunConfig, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(config_text(cfg))


def config_hash(cfg: RunConfig) -> str:
    return hashlib.sha256(config_text(cfg).encode("utf-8")).hexdigest()[:16]
