"""Learning linear time-invariant systems from sampled output trajectories."""

from .bounds import (
    BoundReport,
    SpectrumBound,
    bound_report,
    condition_ratio,
    corollary1_bound,
    gauss_newton_hessian,
    iteration_estimate,
    theorem1_bound,
    theorem2_bound,
)
from .errors import ContractError, DataError, DimensionError, LtiError, NumericError, PredictionOverflow
from .initstate import Estimated, EstimatorParams, Fixed, Learned, learned_from_pinv, resolve_all
from .loss import GradientBundle, LossKind, LossSpec, f_eps, loss_gradient, loss_value, predict
from .model import (
    Dataset,
    SystemParams,
    TimeKind,
    Trajectory,
    generate_system,
    make_dataset,
    read_dataset,
    simulate,
    write_dataset,
)
from .numkernel import ComplexSpectrum, eigen, mat_exp, mat_exp_frechet
from .train import FullBatch, PerTrajectory, Status, TrainConfig, TrainResult, clip_gradient, train

__version__ = "0.1.0"
