"""Grid-based neural fields and their grid tangent kernel (GTK) analysis."""

from . import _backend
from .geometry import ConfigError, GridGeometry, index_irregular, index_regular, index_set
from .gtk import (GtkMatrix, PreconditionError, bound_difference_map, bound_map, closed_form_outputs,
                  generalization_delta, gradient_matrix, gtk_compute, gtk_spectrum,
                  weight_change_bound_check)
from .kernels import (GaussianRBF, MulFA, MulFAParams, Multilinear, fourier_features,
                      kernel_eval, kernel_grad_params, kernel_normalize, mfn_unnormalized)
from .model import Dataset, GridModel, dense_gradient, grad_wrt_features, model_forward
from .training import DivergenceError, TrainConfig, TrainHistory, gd_step, gradcheck, train

__version__ = "0.1.0"
BACKEND = _backend.NAME

__all__ = [
    "ConfigError", "GridGeometry", "index_regular", "index_irregular", "index_set",
    "GtkMatrix", "PreconditionError", "gtk_compute", "gradient_matrix", "closed_form_outputs",
    "generalization_delta", "bound_map", "bound_difference_map", "gtk_spectrum", "weight_change_bound_check",
    "Multilinear", "GaussianRBF", "MulFA", "MulFAParams", "fourier_features", "kernel_eval",
    "kernel_grad_params", "kernel_normalize", "mfn_unnormalized",
    "Dataset", "GridModel", "model_forward", "grad_wrt_features", "dense_gradient",
    "TrainConfig", "TrainHistory", "DivergenceError", "gd_step", "train", "gradcheck",
    "BACKEND",
]
