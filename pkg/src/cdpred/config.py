"""JSON pipeline configuration with strict key checking."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields as dataclass_fields, replace
from typing import Dict, Optional, Tuple

from .evaluation import METRIC_NAMES, MODEL_SPECS
from .mews import DEFAULT_BANDS, MewsBands
from .network import LAYER_BOOST_DEFAULTS, TrainConfig
from .trees import BoostParams, ForestParams

DEFAULT_MODELS = ("xbnet", "xbnet+pca", "xgboost", "xgboost+pca",
                  "rf", "rf+pca", "mews")


def parse_model_row(name: str) -> Tuple[str, bool]:
    """Split a report row name like "xgboost+pca" into (spec, use_pca)."""
    parts = name.split("+")
    spec = parts[0]
    if spec not in MODEL_SPECS:
        raise ValueError(f"unknown model spec {spec!r}")
    if len(parts) == 1:
        return spec, False
    if len(parts) == 2 and parts[1] == "pca":
        if spec == "mews":
            raise ValueError("mews has no pca variant")
        return spec, True
    raise ValueError(f"malformed model row {name!r}")


@dataclass(frozen=True)
class PipelineConfig:
    cohort: Optional[str] = None
    out_dir: str = "out"
    seed: int = 0
    horizon_h: float = 12.0
    models: Tuple[str, ...] = DEFAULT_MODELS
    pca_enabled: bool = True
    pca_threshold: float = 0.95
    cv_k: int = 10
    objective_metric: str = "f1"
    boost: BoostParams = BoostParams()
    forest: ForestParams = ForestParams()
    train: TrainConfig = TrainConfig()
    mews: MewsBands = DEFAULT_BANDS
    grid: Dict[str, Dict[str, list]] = field(default_factory=dict)

    def __post_init__(self):
        for row in self.models:
            parse_model_row(row)
        if not (0.0 < self.pca_threshold <= 1.0):
            raise ValueError("pca threshold must be in (0, 1]")
        if self.cv_k < 2:
            raise ValueError("cv k must be >= 2")
        if self.objective_metric not in METRIC_NAMES:
            raise ValueError(f"unknown objective metric {self.objective_metric!r}")
        if self.horizon_h < 0:
            raise ValueError("horizon_h must be >= 0")
        for model in self.grid:
            if model not in MODEL_SPECS:
                raise ValueError(f"grid section names unknown model {model!r}")


def _check_keys(raw: dict, allowed, path: str) -> None:
    for key in raw:
        if key not in allowed:
            where = f"{path}.{key}" if path else key
            raise ValueError(f"unknown config key {where!r}")


def _dataclass_from(raw: dict, cls, base, path: str):
    names = {f.name for f in dataclass_fields(cls)}
    _check_keys(raw, names, path)
    return replace(base, **raw)


def _train_from(raw: dict, base: TrainConfig, path: str) -> TrainConfig:
    raw = dict(raw)
    layer_boost = base.layer_boost
    if "layer_boost" in raw:
        layer_boost = _dataclass_from(raw.pop("layer_boost"), BoostParams,
                                      LAYER_BOOST_DEFAULTS, f"{path}.layer_boost")
    names = {f.name for f in dataclass_fields(TrainConfig)} - {"layer_boost"}
    _check_keys(raw, names, path)
    return replace(base, layer_boost=layer_boost, **raw)


def _mews_from(raw: dict, base: MewsBands, path: str) -> MewsBands:
    _check_keys(raw, {"alarm_threshold", "bands"}, path)
    if "bands" in raw:
        # reuse the band-table parser, including null for infinite bounds
        payload = {"alarm_threshold": raw.get("alarm_threshold",
                                              base.alarm_threshold),
                   "bands": raw["bands"]}
        return MewsBands.from_json(json.dumps(payload))
    if "alarm_threshold" in raw:
        return MewsBands(bands=base.bands,
                         alarm_threshold=int(raw["alarm_threshold"]))
    return base


def config_from_dict(raw: dict) -> PipelineConfig:
    top = {"cohort", "out_dir", "seed", "horizon_h", "models", "pca", "cv",
           "boost", "forest", "train", "mews", "grid"}
    _check_keys(raw, top, "")
    base = PipelineConfig()
    kwargs = {}
    for key in ("cohort", "out_dir", "seed", "horizon_h"):
        if key in raw:
            kwargs[key] = raw[key]
    if "models" in raw:
        kwargs["models"] = tuple(raw["models"])
    if "pca" in raw:
        _check_keys(raw["pca"], {"enabled", "threshold"}, "pca")
        if "enabled" in raw["pca"]:
            kwargs["pca_enabled"] = bool(raw["pca"]["enabled"])
        if "threshold" in raw["pca"]:
            kwargs["pca_threshold"] = float(raw["pca"]["threshold"])
    if "cv" in raw:
        _check_keys(raw["cv"], {"k", "objective_metric"}, "cv")
        if "k" in raw["cv"]:
            kwargs["cv_k"] = int(raw["cv"]["k"])
        if "objective_metric" in raw["cv"]:
            kwargs["objective_metric"] = raw["cv"]["objective_metric"]
    if "boost" in raw:
        kwargs["boost"] = _dataclass_from(raw["boost"], BoostParams,
                                          base.boost, "boost")
    if "forest" in raw:
        kwargs["forest"] = _dataclass_from(raw["forest"], ForestParams,
                                           base.forest, "forest")
    if "train" in raw:
        kwargs["train"] = _train_from(raw["train"], base.train, "train")
    if "mews" in raw:
        kwargs["mews"] = _mews_from(raw["mews"], base.mews, "mews")
    if "grid" in raw:
        grid = {}
        for model, params in raw["grid"].items():
            if not isinstance(params, dict):
                raise ValueError(f"grid.{model} must be an object of lists")
            for pname, values in params.items():
                if not isinstance(values, list) or not values:
                    raise ValueError(
                        f"grid.{model}.{pname} must be a non-empty list")
            grid[model] = {p: list(v) for p, v in params.items()}
        kwargs["grid"] = grid
    return PipelineConfig(**kwargs)


def load_config(path: str) -> PipelineConfig:
    with open(path, "r", encoding="utf-8") as fh:
        raw = json.load(fh)
    if not isinstance(raw, dict):
        raise ValueError("config root must be a JSON object")
    return config_from_dict(raw)


def config_echo_dict(config: PipelineConfig) -> dict:
    """Full resolved configuration as plain JSON-ready data."""
    from .network import _config_dict
    from .trees import _boost_params_dict, _forest_params_dict

    return {
        "cohort": config.cohort,
        "out_dir": config.out_dir,
        "seed": config.seed,
        "horizon_h": config.horizon_h,
        "models": list(config.models),
        "pca": {"enabled": config.pca_enabled,
                "threshold": config.pca_threshold},
        "cv": {"k": config.cv_k, "objective_metric": config.objective_metric},
        "boost": _boost_params_dict(config.boost),
        "forest": _forest_params_dict(config.forest),
        "train": _config_dict(config.train),
        "mews": json.loads(config.mews.to_json()),
        "grid": config.grid,
    }
