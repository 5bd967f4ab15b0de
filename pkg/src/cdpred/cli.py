"""Command-line pipeline: cohort synthesis, cross-validated evaluation,
scree export, and grid search."""

from __future__ import annotations

import argparse
import json
import os
import sys
from typing import List, Optional

import numpy as np

from .cohort import (COLLECTIONS_PER_KIND, VITAL_KINDS, filter_adults,
                     generate_synthetic_cohort, load_cohort, save_cohort,
                     truncate_horizon)
from .config import (PipelineConfig, config_echo_dict, load_config,
                     parse_model_row)
from .evaluation import cross_validate, grid_search, render_report_table
from .features import apply_schema, fit_schema
from .network import network_to_json, train_mlp, train_xbnet
from .pca import components_for_variance, fit_pca, transform
from .trees import (booster_to_json, fit_booster, fit_forest, forest_to_json)


def _sanitize(name: str) -> str:
    return name.replace("+", "_")


def _write(path: str, text: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)


def cmd_synth(args) -> int:
    try:
        cohort = generate_synthetic_cohort(args.n, seed=args.seed)
        save_cohort(cohort, args.out)
    except Exception as exc:
        print(f"error during synth: {exc}", file=sys.stderr)
        return 1
    deaths = sum(stay.outcome for stay in cohort)
    print(f"stays: {len(cohort)}")
    print(f"deaths: {deaths} (rate {deaths / len(cohort):.4f})")
    print("observed missing rate by kind:")
    denom = COLLECTIONS_PER_KIND * len(cohort)
    for kind in VITAL_KINDS:
        present = sum(len(stay.vitals[kind]) for stay in cohort)
        print(f"  {kind.value}: {1.0 - present / denom:.4f}")
    print(f"wrote {args.out}")
    return 0


def _resolve_config(args) -> PipelineConfig:
    config = load_config(args.config) if args.config else PipelineConfig()
    from dataclasses import replace
    if getattr(args, "seed", None) is not None:
        config = replace(config, seed=args.seed)
    if getattr(args, "out", None) is not None:
        config = replace(config, out_dir=args.out)
    if getattr(args, "cohort", None):
        config = replace(config, cohort=args.cohort)
    if getattr(args, "models", None):
        config = replace(config, models=tuple(args.models.split(",")))
    if getattr(args, "no_pca", False):
        config = replace(config, pca_enabled=False)
    return config


def _load_stays(config: PipelineConfig):
    if not config.cohort:
        raise ValueError("no cohort path given (use --cohort or the config)")
    return filter_adults(load_cohort(config.cohort))


def cmd_run(args) -> int:
    stage = "load-config"
    try:
        config = _resolve_config(args)
        stage = "load-cohort"
        stays = _load_stays(config)
        os.makedirs(config.out_dir, exist_ok=True)

        stage = "evaluate"
        rows = []
        for row in config.models:
            spec, use_pca = parse_model_row(row)
            if use_pca and not config.pca_enabled:
                continue
            rows.append((row, spec, use_pca))
        reports = []
        for row, spec, use_pca in rows:
            report = cross_validate(
                spec, stays, k=config.cv_k, seed=config.seed,
                use_pca=use_pca, pca_threshold=config.pca_threshold,
                horizon_h=config.horizon_h, boost_params=config.boost,
                forest_params=config.forest, train_config=config.train,
                bands=config.mews)
            reports.append(report)
            print(f"evaluated {report.name}: mean f1 {report.mean.f1:.4f} "
                  f"({report.total_seconds:.2f} s)")

        stage = "write-artifacts"
        payload = {"models": {r.name: r.to_dict(include_timing=False)
                              for r in reports}}
        _write(os.path.join(config.out_dir, "report.json"),
               json.dumps(payload, indent=2, sort_keys=True) + "\n")
        _write(os.path.join(config.out_dir, "report.txt"),
               render_report_table(reports))
        _write(os.path.join(config.out_dir, "config_echo.json"),
               json.dumps(config_echo_dict(config), indent=2, sort_keys=True) + "\n")
        for report in reports:
            if not report.curves:
                continue
            step = "round" if report.model == "xgboost" else "epoch"
            names = ["train_logloss", "val_logloss", "train_acc", "val_acc"]
            present = [n for n in names if n in report.curves]
            lines = [",".join([step] + present)]
            length = len(report.curves[present[0]])
            for i in range(length):
                cells = [str(i + 1)]
                cells += [repr(report.curves[n][i]) for n in present]
                lines.append(",".join(cells))
            _write(os.path.join(config.out_dir,
                                f"curves_{_sanitize(report.name)}.csv"),
                   "\n".join(lines) + "\n")

        stage = "refit"
        truncated = [truncate_horizon(stay, config.horizon_h) for stay in stays]
        ml_rows = [(row, spec, use_pca) for row, spec, use_pca in rows
                   if spec != "mews"]
        if ml_rows:
            schema = fit_schema(truncated)
            fm = apply_schema(schema, truncated)
            _write(os.path.join(config.out_dir, "schema.json"),
                   schema.to_json())
            pca_model = None
            if any(use_pca for _, _, use_pca in ml_rows):
                pca_model = fit_pca(fm.values)
                _write(os.path.join(config.out_dir, "pca.json"),
                       pca_model.to_json())
            for row, spec, use_pca in ml_rows:
                X, y = fm.values, fm.labels
                if use_pca:
                    n_comp = components_for_variance(pca_model,
                                                     config.pca_threshold)
                    X = transform(pca_model, X, n_comp)
                if spec == "xgboost":
                    text = booster_to_json(fit_booster(X, y, config.boost))
                elif spec == "rf":
                    text = forest_to_json(fit_forest(X, y, config.forest))
                elif spec == "xbnet":
                    text = network_to_json(train_xbnet(X, y, config=config.train))
                else:
                    text = network_to_json(train_mlp(X, y, config=config.train))
                _write(os.path.join(config.out_dir,
                                    f"model_{_sanitize(row)}.json"), text)
        print(f"wrote artifacts to {config.out_dir}")
        return 0
    except Exception as exc:
        print(f"error during {stage}: {exc}", file=sys.stderr)
        return 1


def cmd_pca_scree(args) -> int:
    stage = "load-cohort"
    try:
        stays = filter_adults(load_cohort(args.cohort))
        stage = "features"
        truncated = [truncate_horizon(stay, args.horizon_h) for stay in stays]
        schema = fit_schema(truncated)
        fm = apply_schema(schema, truncated)
        stage = "pca"
        model = fit_pca(fm.values)
        lines = ["component,eigenvalue,variance_ratio,cumulative_ratio,"
                 "reaches_threshold"]
        cumulative = np.cumsum(model.explained_variance_ratio)
        for i, (ev, ratio) in enumerate(zip(model.eigenvalues,
                                            model.explained_variance_ratio)):
            reaches = 1 if cumulative[i] >= args.threshold else 0
            lines.append(f"{i + 1},{repr(float(ev))},{repr(float(ratio))},"
                         f"{repr(float(cumulative[i]))},{reaches}")
        _write(args.out, "\n".join(lines) + "\n")
    except Exception as exc:
        print(f"error during {stage}: {exc}", file=sys.stderr)
        return 1
    n_comp = components_for_variance(model, args.threshold)
    print(f"{n_comp} components reach {args.threshold:.2f} of the variance")
    print(f"wrote {args.out}")
    return 0


def cmd_grid_search(args) -> int:
    stage = "load-config"
    try:
        config = _resolve_config(args)
        if args.model not in config.grid:
            raise ValueError(f"config has no grid section for {args.model!r}")
        stage = "load-cohort"
        stays = _load_stays(config)
        stage = "grid-search"
        spec, use_pca = parse_model_row(args.model)
        best, rows = grid_search(
            spec, config.grid[args.model], stays, k=config.cv_k,
            seed=config.seed, objective=config.objective_metric,
            use_pca=use_pca, pca_threshold=config.pca_threshold,
            horizon_h=config.horizon_h, boost_params=config.boost,
            forest_params=config.forest, train_config=config.train,
            bands=config.mews)
        payload = {
            "model": args.model,
            "objective": config.objective_metric,
            "best_params": best,
            "rows": [{"params": row["params"],
                      "mean": row["report"].mean.to_dict(),
                      "std": row["report"].std.to_dict()} for row in rows],
        }
        if args.grid_out:
            os.makedirs(os.path.dirname(args.grid_out) or ".", exist_ok=True)
            _write(args.grid_out,
                   json.dumps(payload, indent=2, sort_keys=True) + "\n")
            print(f"wrote {args.grid_out}")
        for row in rows:
            score = getattr(row["report"].mean, config.objective_metric)
            print(f"  {row['params']}: {config.objective_metric} {score:.4f}")
        print(f"best: {best}")
        return 0
    except Exception as exc:
        print(f"error during {stage}: {exc}", file=sys.stderr)
        return 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cdpred",
        description="Train and evaluate deterioration predictors on "
                    "vital-sign cohorts.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_synth = sub.add_parser("synth", help="generate a synthetic cohort CSV")
    p_synth.add_argument("--n", type=int, required=True)
    p_synth.add_argument("--seed", type=int, default=0)
    p_synth.add_argument("--out", required=True)
    p_synth.set_defaults(func=cmd_synth)

    p_run = sub.add_parser("run", help="cross-validate the configured models")
    p_run.add_argument("--config")
    p_run.add_argument("--cohort")
    p_run.add_argument("--seed", type=int)
    p_run.add_argument("--models",
                       help="comma-separated rows, e.g. xgboost,rf+pca")
    p_run.add_argument("--no-pca", action="store_true")
    p_run.add_argument("--out", help="output directory")
    p_run.set_defaults(func=cmd_run)

    p_scree = sub.add_parser("pca-scree",
                             help="export the PCA eigenvalue spectrum")
    p_scree.add_argument("--cohort", required=True)
    p_scree.add_argument("--out", required=True)
    p_scree.add_argument("--threshold", type=float, default=0.95)
    p_scree.add_argument("--horizon-h", type=float, default=12.0)
    p_scree.set_defaults(func=cmd_pca_scree)

    p_grid = sub.add_parser("grid-search",
                            help="sweep a parameter grid from the config")
    p_grid.add_argument("--config", required=True)
    p_grid.add_argument("--model", required=True)
    p_grid.add_argument("--cohort")
    p_grid.add_argument("--seed", type=int)
    p_grid.add_argument("--out", dest="grid_out")
    p_grid.set_defaults(func=cmd_grid_search)

    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
