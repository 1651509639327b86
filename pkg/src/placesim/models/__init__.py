"""Component performance models and the per-application bundle."""

from .basic import (ConstantModel, FitError, LinearModel, NormalDist, fit_linear, fit_mean,
                    fit_normal, mape, noise_floor_mape)
from .bundle import (DEFAULT_T_IDL_MS, MODEL_VERSION, PerfModelBundle, TrainingError,
                     TrainOptions, evaluate_bundle, predict_component, predicted_row_total,
                     split_inputs, train_bundle)
from .gbrt import (GBRTHyper, GBRTModel, TreeNode, best_split, fit_gbrt, grid_search_cv,
                   kfold_indices)

__all__ = [
    "ConstantModel", "FitError", "LinearModel", "NormalDist", "fit_linear", "fit_mean",
    "fit_normal", "mape", "noise_floor_mape", "DEFAULT_T_IDL_MS", "MODEL_VERSION",
    "PerfModelBundle", "TrainingError", "TrainOptions", "evaluate_bundle", "predict_component",
    "predicted_row_total", "split_inputs", "train_bundle", "GBRTHyper", "GBRTModel", "TreeNode",
    "best_split", "fit_gbrt", "grid_search_cv", "kfold_indices",
]
