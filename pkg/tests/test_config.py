import json

import pytest

from cdpred import (DEFAULT_MODELS, BoostParams, PipelineConfig,
                    config_echo_dict, config_from_dict, load_config,
                    parse_model_row)


def test_parse_model_row():
    assert parse_model_row("xgboost") == ("xgboost", False)
    assert parse_model_row("rf+pca") == ("rf", True)
    assert parse_model_row("mews") == ("mews", False)
    for bad in ("mews+pca", "boosting", "xgboost+pca+pca", "xgboost+pcb"):
        with pytest.raises(ValueError):
            parse_model_row(bad)


def test_pipeline_config_defaults_and_validation():
    config = PipelineConfig()
    assert config.models == DEFAULT_MODELS
    assert config.cv_k == 10 and config.pca_threshold == 0.95
    assert config.boost == BoostParams()
    with pytest.raises(ValueError):
        PipelineConfig(pca_threshold=0.0)
    with pytest.raises(ValueError):
        PipelineConfig(cv_k=1)
    with pytest.raises(ValueError):
        PipelineConfig(objective_metric="auc")
    with pytest.raises(ValueError):
        PipelineConfig(horizon_h=-1.0)
    with pytest.raises(ValueError):
        PipelineConfig(models=("xgboost", "mews+pca"))
    with pytest.raises(ValueError):
        PipelineConfig(grid={"boosting": {"n_rounds": [1]}})


def test_config_from_dict_overrides():
    config = config_from_dict({
        "cohort": "c.csv",
        "seed": 7,
        "models": ["xgboost", "mews"],
        "pca": {"enabled": False, "threshold": 0.9},
        "cv": {"k": 5, "objective_metric": "recall"},
        "boost": {"n_rounds": 12, "max_depth": 4},
        "forest": {"n_trees": 20},
        "train": {"epochs": 3, "layer_boost": {"n_rounds": 5}},
        "mews": {"alarm_threshold": 3},
        "grid": {"xgboost": {"n_rounds": [5, 10]}},
    })
    assert config.cohort == "c.csv" and config.seed == 7
    assert config.models == ("xgboost", "mews")
    assert config.pca_enabled is False and config.pca_threshold == 0.9
    assert config.cv_k == 5 and config.objective_metric == "recall"
    assert config.boost.n_rounds == 12 and config.boost.max_depth == 4
    assert config.boost.learning_rate == BoostParams().learning_rate
    assert config.forest.n_trees == 20
    assert config.train.epochs == 3
    assert config.train.layer_boost.n_rounds == 5
    assert config.train.layer_boost.max_depth == 2
    assert config.mews.alarm_threshold == 3
    assert config.grid == {"xgboost": {"n_rounds": [5, 10]}}


def test_config_from_dict_custom_bands_with_null_bounds():
    config = config_from_dict({
        "mews": {"bands": {"HR": [[None, 100.0, 0], [100.0, None, 2]]},
                 "alarm_threshold": 2},
    })
    from cdpred import VitalKind
    assert config.mews.points_for(VitalKind.HEART_RATE, 120.0) == 2
    assert config.mews.alarm_threshold == 2


def test_config_from_dict_rejects_unknown_keys():
    with pytest.raises(ValueError, match="unknown config key 'bogus'"):
        config_from_dict({"bogus": 1})
    with pytest.raises(ValueError, match="'pca.keep'"):
        config_from_dict({"pca": {"keep": 3}})
    with pytest.raises(ValueError, match="'boost.rounds'"):
        config_from_dict({"boost": {"rounds": 5}})
    with pytest.raises(ValueError, match="'train.layer_boost.depth'"):
        config_from_dict({"train": {"layer_boost": {"depth": 2}}})
    with pytest.raises(ValueError, match="'cv.folds'"):
        config_from_dict({"cv": {"folds": 5}})
    with pytest.raises(ValueError, match="'mews.bandz'"):
        config_from_dict({"mews": {"bandz": []}})


def test_config_from_dict_validates_grid_shapes():
    with pytest.raises(ValueError, match="grid.xgboost must be an object"):
        config_from_dict({"grid": {"xgboost": [1, 2]}})
    with pytest.raises(ValueError, match="non-empty list"):
        config_from_dict({"grid": {"xgboost": {"n_rounds": []}}})
    with pytest.raises(ValueError, match="non-empty list"):
        config_from_dict({"grid": {"xgboost": {"n_rounds": 5}}})


def test_echo_round_trips_through_the_parser():
    config = config_from_dict({
        "cohort": "c.csv",
        "out_dir": "results",
        "models": ["xgboost+pca", "mews"],
        "boost": {"n_rounds": 9},
        "train": {"epochs": 2},
        "mews": {"alarm_threshold": 5},
        "grid": {"rf": {"n_trees": [10, 20]}},
    })
    echo = config_echo_dict(config)
    text = json.dumps(echo)
    assert config_from_dict(json.loads(text)) == config


def test_load_config_from_file(tmp_path):
    path = tmp_path / "config.json"
    path.write_text(json.dumps({"seed": 3, "cv": {"k": 4}}))
    config = load_config(str(path))
    assert config.seed == 3 and config.cv_k == 4
    bad = tmp_path / "bad.json"
    bad.write_text("[1, 2]")
    with pytest.raises(ValueError, match="root must be a JSON object"):
        load_config(str(bad))
