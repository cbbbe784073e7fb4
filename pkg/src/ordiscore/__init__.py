"""Integer point scorecards for ordinal outcomes.

A six-stage pipeline turns a tabular dataset with an ordered categorical
outcome into a deployable paper scorecard: forest-based variable ranking,
percentile categorization, proportional odds fitting, parsimony-guided
selection, cut-off fine-tuning, and test-set evaluation with bootstrap
intervals.
"""

__version__ = "0.1.0"

from .config import PipelineConfig, load_config
from .data import (ColumnSpec, DataTable, ImputationPlan, OrdinalOutcome,
                   PredictorSpec, Schema, SplitIndices, SyntheticSpec,
                   generate_synthetic, impute, load_csv, plan_imputation,
                   read_schema, stratified_split)
from .errors import ConvergenceError, ValidationError
from .links import LinkFunction, get_link
from .metrics import (BootstrapCI, EvalReport, MeanAucResult, ParsimonyCurve,
                      binary_auc, bootstrap_ci, evaluate_scores,
                      generalized_c_index, mean_auc, parsimony_curve)
from .pom import (PomFit, category_probs, cumulative_probs, fit_pom,
                  linear_predictor, linear_predictors, log_likelihood,
                  refit_positive)
from .ranking import (Forest, ImportanceRanking, forest_predict, rank_variables,
                      train_forest, variable_importance)
from .scorecard import (LookupTable, ScoreCard, build_lookup, derive_scorecard,
                        predict_probs, total_score, total_scores)
from .transform import (CutoffSpec, apply_overrides, categorize, derive_cutoffs,
                        prune_cutoffs)

__all__ = [
    "BootstrapCI", "ColumnSpec", "ConvergenceError", "CutoffSpec", "DataTable",
    "EvalReport", "Forest", "ImportanceRanking", "ImputationPlan",
    "LinkFunction", "LookupTable", "MeanAucResult", "OrdinalOutcome",
    "ParsimonyCurve", "PipelineConfig", "PomFit", "PredictorSpec", "Schema",
    "ScoreCard", "SplitIndices", "SyntheticSpec", "ValidationError",
    "__version__", "apply_overrides", "binary_auc", "bootstrap_ci",
    "build_lookup", "categorize", "category_probs", "cumulative_probs",
    "derive_cutoffs", "derive_scorecard", "evaluate_scores", "fit_pom",
    "forest_predict", "generalized_c_index", "generate_synthetic", "get_link",
    "impute", "linear_predictor", "linear_predictors", "load_config",
    "load_csv", "log_likelihood", "mean_auc", "parsimony_curve",
    "plan_imputation", "predict_probs", "prune_cutoffs", "rank_variables",
    "read_schema", "refit_positive", "stratified_split", "total_score",
    "total_scores", "train_forest", "variable_importance",
]
