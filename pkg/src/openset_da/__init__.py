"""Open-set domain adaptation by iterative assignment and linear mapping."""

__version__ = "0.1.0"

from .assign import Assignment, SolveConfig, solve_locality, solve_semi_supervised, solve_unsupervised
from .ati import AtiConfig, AtiResult, run_ati
from .dataset import ClassCatalog, Dataset, load_features, save_features
from .evaluate import EvalReport, score
from .svm import SvmConfig, predict, train_ovo
from .transform import Transform, estimate_transform

__all__ = [
    "Assignment", "AtiConfig", "AtiResult", "ClassCatalog", "Dataset", "EvalReport",
    "SolveConfig", "SvmConfig", "Transform", "estimate_transform", "load_features",
    "predict", "run_ati", "save_features", "score", "solve_locality",
    "solve_semi_supervised", "solve_unsupervised", "train_ovo",
]
