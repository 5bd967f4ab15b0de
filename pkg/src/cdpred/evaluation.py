"""Stratified cross-validation, binary-classification metrics, grid search,
and plain-text report rendering for all model families."""

from __future__ import annotations

import itertools
import json
import time
from dataclasses import dataclass, fields as dataclass_fields, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .cohort import PatientStay, truncate_horizon
from .features import apply_schema, fit_schema
from .mews import DEFAULT_BANDS, MewsBands, mews_predict
from .network import (TrainConfig, predict_proba as network_predict_proba,
                      train_mlp, train_xbnet)
from .pca import components_for_variance, fit_pca, transform
from .trees import (BoostParams, ForestParams, fit_booster, fit_forest,
                    labels_from_proba, predict_booster, predict_forest)

MODEL_SPECS = ("xgboost", "rf", "xbnet", "mlp", "mews")

# multiplier for deriving per-fold model seeds from the base seed
FOLD_SEED_STRIDE = 1009


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    fn: int
    tn: int

    @classmethod
    def from_labels(cls, y_true: np.ndarray, y_pred: np.ndarray) -> "ConfusionCounts":
        y_true = np.asarray(y_true, dtype=np.int64)
        y_pred = np.asarray(y_pred, dtype=np.int64)
        if y_true.shape != y_pred.shape or y_true.ndim != 1:
            raise ValueError("label vectors must be 1-D and aligned")
        return cls(
            tp=int(np.sum((y_true == 1) & (y_pred == 1))),
            fp=int(np.sum((y_true == 0) & (y_pred == 1))),
            fn=int(np.sum((y_true == 1) & (y_pred == 0))),
            tn=int(np.sum((y_true == 0) & (y_pred == 0))),
        )

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


@dataclass(frozen=True)
class MetricSet:
    accuracy: float
    precision: float
    recall: float
    specificity: float
    f1: float
    gmean: float

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in dataclass_fields(self)}

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, f.name) for f in dataclass_fields(self)])


METRIC_NAMES = tuple(f.name for f in dataclass_fields(MetricSet))


def _safe_div(num: float, den: float) -> float:
    return num / den if den > 0 else 0.0


def metrics(counts: ConfusionCounts) -> MetricSet:
    """Standard binary metrics; every 0/0 ratio is defined as 0."""
    accuracy = _safe_div(counts.tp + counts.tn, counts.total)
    precision = _safe_div(counts.tp, counts.tp + counts.fp)
    recall = _safe_div(counts.tp, counts.tp + counts.fn)
    specificity = _safe_div(counts.tn, counts.tn + counts.fp)
    f1 = _safe_div(2.0 * precision * recall, precision + recall)
    gmean = float(np.sqrt(recall * specificity))
    return MetricSet(accuracy=accuracy, precision=precision, recall=recall,
                     specificity=specificity, f1=f1, gmean=gmean)


def stratified_kfold(labels: np.ndarray, k: int = 10, seed: int = 0) -> np.ndarray:
    """Fold index per row, k folds, class-balanced.

    Each class is shuffled and dealt out base-count first; leftover members
    go to the currently smallest folds (lowest index on ties), so per-class
    counts and overall fold sizes both differ by at most one.
    """
    labels = np.asarray(labels)
    if labels.ndim != 1:
        raise ValueError("labels must be 1-D")
    n = labels.shape[0]
    if k < 2:
        raise ValueError("k must be >= 2")
    if k > n:
        raise ValueError("k must be <= the number of rows")
    assignment = np.full(n, -1, dtype=np.int64)
    fold_sizes = np.zeros(k, dtype=np.int64)
    rng = np.random.default_rng(seed)
    for cls in np.unique(labels):
        idx = np.flatnonzero(labels == cls)
        idx = idx[rng.permutation(idx.shape[0])]
        base = idx.shape[0] // k
        counts = np.full(k, base, dtype=np.int64)
        rem = idx.shape[0] - base * k
        if rem:
            order = np.lexsort((np.arange(k), fold_sizes))
            counts[order[:rem]] += 1
        pos = 0
        for f in range(k):
            assignment[idx[pos:pos + counts[f]]] = f
            pos += counts[f]
        fold_sizes += counts
    return assignment


def average_curves(per_fold: Sequence[Dict[str, List[float]]]) -> Dict[str, List[float]]:
    """Elementwise mean of per-fold curves; lengths must agree per key."""
    if not per_fold:
        return {}
    keys = list(per_fold[0].keys())
    out: Dict[str, List[float]] = {}
    for key in keys:
        lengths = {len(fold[key]) for fold in per_fold}
        if len(lengths) != 1:
            raise ValueError(f"curve {key!r} has mismatched lengths across folds")
        stacked = np.array([fold[key] for fold in per_fold])
        out[key] = stacked.mean(axis=0).tolist()
    return out


@dataclass
class CvReport:
    model: str
    use_pca: bool
    k: int
    seed: int
    horizon_h: float
    fold_metrics: List[MetricSet]
    mean: MetricSet
    std: MetricSet
    curves: Optional[Dict[str, List[float]]]
    fold_seconds: List[float]
    total_seconds: float

    @property
    def name(self) -> str:
        return self.model + ("+pca" if self.use_pca else "")

    def to_dict(self, include_timing: bool = True) -> dict:
        out = {
            "model": self.model,
            "use_pca": self.use_pca,
            "k": self.k,
            "seed": self.seed,
            "horizon_h": self.horizon_h,
            "fold_metrics": [m.to_dict() for m in self.fold_metrics],
            "mean": self.mean.to_dict(),
            "std": self.std.to_dict(),
            "curves": self.curves,
        }
        if include_timing:
            out["fold_seconds"] = self.fold_seconds
            out["total_seconds"] = self.total_seconds
        return out

    def to_json(self, include_timing: bool = True) -> str:
        return json.dumps(self.to_dict(include_timing=include_timing),
                          indent=2, sort_keys=True)


def _aggregate(fold_metrics: Sequence[MetricSet]) -> Tuple[MetricSet, MetricSet]:
    arr = np.array([m.as_array() for m in fold_metrics])
    mean = arr.mean(axis=0)
    std = arr.std(axis=0)
    return MetricSet(*mean.tolist()), MetricSet(*std.tolist())


def _history_dict(history) -> Dict[str, List[float]]:
    out = {"train_logloss": list(history.train_logloss),
           "train_acc": list(history.train_acc)}
    if history.val_logloss:
        out["val_logloss"] = list(history.val_logloss)
        out["val_acc"] = list(history.val_acc)
    return out


def cross_validate(model_spec: str, stays: Sequence[PatientStay], *,
                   k: int = 10, seed: int = 0, use_pca: bool = False,
                   pca_threshold: float = 0.95, horizon_h: float = 12.0,
                   boost_params: Optional[BoostParams] = None,
                   forest_params: Optional[ForestParams] = None,
                   train_config: Optional[TrainConfig] = None,
                   bands: Optional[MewsBands] = None) -> CvReport:
    """Stratified k-fold evaluation of one model family.

    Observations after outcome_time - horizon_h are dropped before anything
    else, the feature schema and any PCA basis are fit on each training fold
    alone, and each fold's model seed is derived from the base seed so folds
    are independent but reproducible.
    """
    if model_spec not in MODEL_SPECS:
        raise ValueError(f"unknown model spec {model_spec!r}")
    if model_spec == "mews" and use_pca:
        raise ValueError("the early-warning score does not use feature columns")
    boost_params = boost_params if boost_params is not None else BoostParams()
    forest_params = forest_params if forest_params is not None else ForestParams()
    train_config = train_config if train_config is not None else TrainConfig()
    bands = bands if bands is not None else DEFAULT_BANDS

    start_total = time.perf_counter()
    truncated = [truncate_horizon(stay, horizon_h) for stay in stays]
    labels = np.array([stay.outcome for stay in truncated], dtype=np.int64)
    assignment = stratified_kfold(labels, k=k, seed=seed)

    fold_metrics: List[MetricSet] = []
    fold_seconds: List[float] = []
    fold_curves: List[Dict[str, List[float]]] = []
    for f in range(k):
        start_fold = time.perf_counter()
        try:
            test_mask = assignment == f
            train_stays = [s for s, m in zip(truncated, test_mask) if not m]
            test_stays = [s for s, m in zip(truncated, test_mask) if m]
            y_test = labels[test_mask]

            if model_spec == "mews":
                y_pred = mews_predict(test_stays, bands)
            else:
                schema = fit_schema(train_stays)
                train_fm = apply_schema(schema, train_stays)
                test_fm = apply_schema(schema, test_stays)
                X_train, y_train = train_fm.values, train_fm.labels
                X_test = test_fm.values
                if use_pca:
                    pca = fit_pca(X_train)
                    n_comp = components_for_variance(pca, pca_threshold)
                    X_train = transform(pca, X_train, n_comp)
                    X_test = transform(pca, X_test, n_comp)
                fold_seed = seed * FOLD_SEED_STRIDE + f
                if model_spec == "xgboost":
                    booster = fit_booster(
                        X_train, y_train,
                        replace(boost_params, seed=fold_seed),
                        eval_set=(X_test, y_test))
                    proba = predict_booster(booster, X_test)
                    fold_curves.append(_history_dict(booster.history))
                elif model_spec == "rf":
                    forest = fit_forest(X_train, y_train,
                                        replace(forest_params, seed=fold_seed))
                    proba = predict_forest(forest, X_test)
                elif model_spec in ("xbnet", "mlp"):
                    trainer = train_xbnet if model_spec == "xbnet" else train_mlp
                    model = trainer(X_train, y_train, X_test, y_test,
                                    replace(train_config, seed=fold_seed))
                    proba = network_predict_proba(model, X_test)
                    fold_curves.append(_history_dict(model.history))
                y_pred = labels_from_proba(proba)

            fold_metrics.append(metrics(ConfusionCounts.from_labels(y_test, y_pred)))
        except Exception as exc:
            raise RuntimeError(
                f"model {model_spec!r} failed on fold {f}: {exc}") from exc
        fold_seconds.append(time.perf_counter() - start_fold)

    mean, std = _aggregate(fold_metrics)
    curves = average_curves(fold_curves) if fold_curves else None
    return CvReport(model=model_spec, use_pca=use_pca, k=k, seed=seed,
                    horizon_h=horizon_h, fold_metrics=fold_metrics,
                    mean=mean, std=std, curves=curves,
                    fold_seconds=fold_seconds,
                    total_seconds=time.perf_counter() - start_total)


_GRID_BASES = {
    "xgboost": ("boost_params", BoostParams),
    "rf": ("forest_params", ForestParams),
    "xbnet": ("train_config", TrainConfig),
    "mlp": ("train_config", TrainConfig),
    "mews": ("bands", MewsBands),
}


def grid_search(model_spec: str, param_grid: Dict[str, Sequence],
                stays: Sequence[PatientStay], *,
                k: int = 10, seed: int = 0, objective: str = "f1",
                use_pca: bool = False, pca_threshold: float = 0.95,
                horizon_h: float = 12.0,
                boost_params: Optional[BoostParams] = None,
                forest_params: Optional[ForestParams] = None,
                train_config: Optional[TrainConfig] = None,
                bands: Optional[MewsBands] = None):
    """Exhaustive search over the cartesian product of param_grid values.

    Combinations are visited in key insertion order; on a tied objective the
    earliest combination wins. Returns (best_params, rows) where each row
    holds the combination and its cross-validated report.
    """
    if model_spec not in MODEL_SPECS:
        raise ValueError(f"unknown model spec {model_spec!r}")
    if objective not in METRIC_NAMES:
        raise ValueError(f"unknown objective {objective!r}")
    if not param_grid:
        raise ValueError("param_grid must not be empty")
    kwarg_name, base_cls = _GRID_BASES[model_spec]
    valid = {f.name for f in dataclass_fields(base_cls)}
    for key in param_grid:
        if key not in valid:
            raise ValueError(f"unknown parameter {key!r} for model {model_spec!r}")

    bases = {"boost_params": boost_params if boost_params is not None else BoostParams(),
             "forest_params": forest_params if forest_params is not None else ForestParams(),
             "train_config": train_config if train_config is not None else TrainConfig(),
             "bands": bands if bands is not None else DEFAULT_BANDS}

    keys = list(param_grid.keys())
    best_score = -np.inf
    best_params: Optional[dict] = None
    rows = []
    for combo in itertools.product(*(param_grid[key] for key in keys)):
        overrides = dict(zip(keys, combo))
        kwargs = dict(bases)
        kwargs[kwarg_name] = replace(bases[kwarg_name], **overrides)
        report = cross_validate(model_spec, stays, k=k, seed=seed,
                                use_pca=use_pca, pca_threshold=pca_threshold,
                                horizon_h=horizon_h, **kwargs)
        rows.append({"params": overrides, "report": report})
        score = getattr(report.mean, objective)
        if score > best_score:
            best_score = score
            best_params = overrides
    return best_params, rows


def render_report_table(reports: Sequence[CvReport]) -> str:
    """Fixed-width text table of mean+/-std metrics plus per-model timings."""
    headers = ("model", "accuracy", "precision", "recall", "f1", "gmean")
    rows = []
    for r in reports:
        cells = [r.name]
        for name in headers[1:]:
            cells.append(f"{getattr(r.mean, name):.4f}+/-{getattr(r.std, name):.4f}")
        rows.append(cells)
    widths = [max(len(h), *(len(row[i]) for row in rows)) if rows else len(h)
              for i, h in enumerate(headers)]
    lines = ["  ".join(h.ljust(widths[i]) for i, h in enumerate(headers))]
    lines.append("  ".join("-" * w for w in widths))
    for row in rows:
        lines.append("  ".join(cell.ljust(widths[i]) for i, cell in enumerate(row)))
    lines.append("")
    lines.append("timing:")
    for r in reports:
        per_fold = float(np.mean(r.fold_seconds)) if r.fold_seconds else 0.0
        lines.append(f"  {r.name}: {r.total_seconds:.2f} s total, "
                     f"{per_fold:.2f} s per fold")
    return "\n".join(lines) + "\n"
