"""Parsimonious Mahalanobis kernels for high-dimensional SVM classification.

Per-class covariances follow the HDDA model (a few leading eigenpairs plus
one isotropic noise level). The resulting Mahalanobis distance becomes a
Gaussian-type kernel whose per-direction variances are tuned, together
with the L2-SVM penalty ``C``, by gradient descent on the radius-margin
bound.
"""

__version__ = "0.1.0"

from .classify import EvaluationReport, MulticlassModel, evaluate, predict_binary, train_one_vs_all
from .dataio import Dataset, SplitSpec, load_dataset, load_model, save_model, split
from .hdda import HddaClassModel, fit_hdda, mahalanobis_sq, scree_select
from .kernels import GAUSSIAN, HDDA_MAHALANOBIS, PCA_MAHALANOBIS, KernelSpec, gram
from .qp import solve_radius, solve_svm_dual
from .simulate import SimConfig, generate, paper_scenario
from .tune import TuneConfig, grad_T, optimize, radius_margin

__all__ = [
    "Dataset",
    "EvaluationReport",
    "GAUSSIAN",
    "HDDA_MAHALANOBIS",
    "HddaClassModel",
    "KernelSpec",
    "MulticlassModel",
    "PCA_MAHALANOBIS",
    "SimConfig",
    "SplitSpec",
    "TuneConfig",
    "evaluate",
    "fit_hdda",
    "generate",
    "grad_T",
    "gram",
    "load_dataset",
    "load_model",
    "mahalanobis_sq",
    "optimize",
    "paper_scenario",
    "predict_binary",
    "radius_margin",
    "save_model",
    "scree_select",
    "solve_radius",
    "solve_svm_dual",
    "split",
    "train_one_vs_all",
]
