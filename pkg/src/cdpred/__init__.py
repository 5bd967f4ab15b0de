"""Clinical deterioration prediction from routine vital-sign records.

Implements the full pipeline: synthetic cohort generation, per-stay feature
extraction, PCA, a second-order gradient booster, a random forest, a small
neural network with per-epoch boosted weight rescaling, a rule-based
early-warning score, and stratified cross-validation with plain-text and
JSON reporting.
"""

from .cohort import (AR1_COEFF, AR1_INNOVATION_FRACTION, COLLECTIONS_PER_KIND,
                     COLLECTION_SPACING_H, CSV_COLUMNS, CalibrationStats,
                     ClassStats, CohortSchemaError, LAST_COLLECTION_OFFSET_H,
                     MIN_STAY_DAYS, PatientStay, VITAL_KINDS, VITAL_RANGES,
                     VitalKind, VitalObservation, default_calibration,
                     filter_adults, generate_synthetic_cohort, load_cohort,
                     save_cohort, truncate_horizon)
from .config import (DEFAULT_MODELS, PipelineConfig, config_echo_dict,
                     config_from_dict, load_config, parse_model_row)
from .evaluation import (ConfusionCounts, CvReport, METRIC_NAMES, MODEL_SPECS,
                         MetricSet, average_curves, cross_validate,
                         grid_search, metrics, render_report_table,
                         stratified_kfold)
from .features import (CATEGORICAL_ATTRS, EncodingSchema, FeatureMatrix,
                       SCALAR_COLUMNS, STAT_NAMES, apply_schema, fit_schema,
                       forward_fill, last_five, slot_stats)
from .mews import (DEFAULT_BANDS, MewsBands, SCORED_KINDS, latest_snapshot,
                   mews_predict, mews_score)
from .network import (AdamState, HIDDEN_DIMS, LAYER_BOOST_DEFAULTS, Network,
                      TrainConfig, TrainedNetwork, adam_step,
                      apply_importance_scaling, backward, boosted_update,
                      cross_entropy, forward, history_csv, init_network,
                      network_from_json, network_loss, network_to_json,
                      train_mlp, train_xbnet)
from .network import predict_proba as network_predict_proba
from .pca import (PcaModel, components_for_variance, fit_pca,
                  inverse_transform, transform)
from .trees import (BoostParams, Booster, Forest, ForestParams, Tree,
                    TrainHistory, booster_from_json, booster_to_json,
                    feature_importance, fit_boosted_tree, fit_booster,
                    fit_forest, forest_from_json, forest_to_json,
                    labels_from_proba, log_loss, predict_booster,
                    predict_forest, round_masks, sigmoid)

__version__ = "0.1.0"
