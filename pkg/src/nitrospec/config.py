"""Pipeline configuration: dataclasses, TOML loading, and a stable hash."""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .ensemble import RANKER_NAMES
from .synth import SynthConfig


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class PreprocessConfig:
    trim_head: int = 10
    trim_tail: int = 2
    sg_window: int | str = "auto"
    poly_order: int = 2
    sg_candidates: tuple = tuple(range(5, 32, 2))
    power_cutoff: float = 0.01
    max_leakage: float = 0.05

    def __post_init__(self):
        if self.sg_window != "auto" and not isinstance(self.sg_window, int):
            raise ConfigError("sg_window must be an odd integer or 'auto'")
        object.__setattr__(self, "sg_candidates", tuple(int(w) for w in self.sg_candidates))


@dataclass(frozen=True)
class EnsembleSection:
    n_iterations: int = 50
    train_fraction: float = 0.9
    rankers: tuple = RANKER_NAMES
    n_trees: int = 100
    epsilon: float = 0.005
    m_max: int = 40

    def __post_init__(self):
        object.__setattr__(self, "rankers", tuple(self.rankers))


@dataclass(frozen=True)
class PlsrSection:
    folds: int = 10
    a_max: int = 20
    min_features: int = 2


@dataclass(frozen=True)
class ModelGrid:
    n_estimators: tuple = (100, 500, 1000)
    max_depth: tuple = (3, 5, 7, 10)
    learning_rate: tuple = (0.01, 0.05, 0.1)
    subsample: tuple = (0.5, 0.7, 1.0)
    l2_leaf: float = 1.0

    def __post_init__(self):
        for axis in ("n_estimators", "max_depth", "learning_rate", "subsample"):
            vals = tuple(getattr(self, axis))
            if not vals:
                raise ConfigError(f"grid axis {axis} is empty")
            object.__setattr__(self, axis, vals)

    @property
    def size(self) -> int:
        return (len(self.n_estimators) * len(self.max_depth) * len(self.learning_rate)
                * len(self.subsample))


NEWTON_GRID = ModelGrid()
GRADIENT_GRID = ModelGrid(n_estimators=(100, 200), max_depth=(3, 5), learning_rate=(0.01, 0.1),
                          subsample=(0.5, 0.7), l2_leaf=0.0)


@dataclass(frozen=True)
class ModelsSection:
    folds: int = 10
    newton: ModelGrid = NEWTON_GRID
    gradient: ModelGrid = GRADIENT_GRID


@dataclass(frozen=True)
class PipelineConfig:
    seed: int = 42
    data_path: str | None = None
    synth: SynthConfig = SynthConfig()
    preprocess: PreprocessConfig = PreprocessConfig()
    redundancy_threshold: float = 0.08
    ensemble: EnsembleSection = EnsembleSection()
    plsr: PlsrSection = PlsrSection()
    models: ModelsSection = ModelsSection()
    out: str = "runs/latest"
    threads: int = 1

    def with_overrides(self, **kw) -> "PipelineConfig":
        kw = {k: v for k, v in kw.items() if v is not None}
        return dataclasses.replace(self, **kw)


def _build(cls, section: dict, where: str):
    if not isinstance(section, dict):
        raise ConfigError(f"[{where}] must be a table")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(section) - names
    if unknown:
        raise ConfigError(f"unknown keys in [{where}]: {sorted(unknown)}")
    kw = {k: tuple(v) if isinstance(v, list) else v for k, v in section.items()}
    try:
        return cls(**kw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[{where}]: {exc}") from None


def config_from_dict(doc: dict) -> PipelineConfig:
    doc = dict(doc)
    kw = {}
    for key in ("seed", "out", "threads"):
        if key in doc:
            kw[key] = doc.pop(key)
    if "data" in doc:
        data = doc.pop("data")
        unknown = set(data) - {"path"}
        if unknown:
            raise ConfigError(f"unknown keys in [data]: {sorted(unknown)}")
        kw["data_path"] = data.get("path")
    if "synth" in doc:
        kw["synth"] = _build(SynthConfig, doc.pop("synth"), "synth")
    if "preprocess" in doc:
        kw["preprocess"] = _build(PreprocessConfig, doc.pop("preprocess"), "preprocess")
    if "redundancy" in doc:
        red = doc.pop("redundancy")
        unknown = set(red) - {"threshold"}
        if unknown:
            raise ConfigError(f"unknown keys in [redundancy]: {sorted(unknown)}")
        kw["redundancy_threshold"] = float(red.get("threshold", 0.08))
    if "ensemble" in doc:
        kw["ensemble"] = _build(EnsembleSection, doc.pop("ensemble"), "ensemble")
    if "plsr" in doc:
        kw["plsr"] = _build(PlsrSection, doc.pop("plsr"), "plsr")
    if "models" in doc:
        models = dict(doc.pop("models"))
        mk = {}
        if "folds" in models:
            mk["folds"] = int(models.pop("folds"))
        if "newton" in models:
            mk["newton"] = _build(ModelGrid, models.pop("newton"), "models.newton")
        if "gradient" in models:
            base = {"l2_leaf": 0.0, **models.pop("gradient")}
            mk["gradient"] = _build(ModelGrid, base, "models.gradient")
        if models:
            raise ConfigError(f"unknown keys in [models]: {sorted(models)}")
        kw["models"] = ModelsSection(**mk)
    if doc:
        raise ConfigError(f"unknown top-level keys: {sorted(doc)}")
    return PipelineConfig(**kw)


def load_config(path) -> PipelineConfig:
    with open(path, "rb") as fh:
        try:
            doc = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from None
    cfg = config_from_dict(doc)
    if cfg.data_path and not Path(cfg.data_path).is_absolute():
        cfg = dataclasses.replace(cfg, data_path=str(Path(path).parent / cfg.data_path))
    return cfg


def config_dict(cfg: PipelineConfig) -> dict:
    """Result-relevant settings; ``out`` and ``threads`` do not affect outputs."""
    d = dataclasses.asdict(cfg)
    d.pop("out")
    d.pop("threads")
    return d


def config_hash(cfg: PipelineConfig) -> str:
    text = json.dumps(config_dict(cfg), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()
