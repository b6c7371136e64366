"""Maximum-likelihood and MAP fitting of reducible SDEs by least squares."""

from importlib.metadata import PackageNotFoundError, version

try:
    __version__ = version("artifact")
except PackageNotFoundError:  # running from a source tree
    __version__ = "0.1.0"

from .datasets import LongitudinalDataset, load_csv, load_gagurine, load_loblolly
from .estimator import ReducibleSDE
from .fitting import fit_sde
from .hierarchy import ParamSpec, SdeModel
from .optimize import FitProblem, FitResult, fit_direct_nll, fit_least_squares, information_criteria
from .regression import BoxCoxRegression, fit_boxcox_regression
from .sde import SdeParams, uvector
from .simulate import TrajectorySpec, simulate_trajectory

__all__ = [
    "__version__",
    "LongitudinalDataset",
    "load_csv",
    "load_gagurine",
    "load_loblolly",
    "ReducibleSDE",
    "BoxCoxRegression",
    "fit_sde",
    "fit_boxcox_regression",
    "ParamSpec",
    "SdeModel",
    "SdeParams",
    "uvector",
    "FitProblem",
    "FitResult",
    "fit_least_squares",
    "fit_direct_nll",
    "information_criteria",
    "TrajectorySpec",
    "simulate_trajectory",
]
