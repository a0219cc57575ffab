"""Jorge: an inverse-free approximation of the Shampoo preconditioner."""

__version__ = "0.1.0"

from .bootstrap import SgdBaseline, bootstrap_jorge
from .errors import ConfigError, DomainError, JorgeError, NumericError, ShapeError
from .linalg import count_ops, exact_inv_root, sym_eig
from .optimizers import Optimizer, OptimizerConfig
from .preconditioner import PreconditionerPair, init_preconditioners, maybe_update_pair, precondition
from .problems import DatasetSpec, Problem, build_problem, make_logreg, make_mlp, make_quadratic
from .schedules import ScheduleSpec, lr_at

__all__ = [
    "ConfigError",
    "DatasetSpec",
    "DomainError",
    "JorgeError",
    "NumericError",
    "Optimizer",
    "OptimizerConfig",
    "PreconditionerPair",
    "Problem",
    "ScheduleSpec",
    "SgdBaseline",
    "ShapeError",
    "__version__",
    "bootstrap_jorge",
    "build_problem",
    "count_ops",
    "exact_inv_root",
    "init_preconditioners",
    "lr_at",
    "make_logreg",
    "make_mlp",
    "make_quadratic",
    "maybe_update_pair",
    "precondition",
    "sym_eig",
]
