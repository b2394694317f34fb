"""Exact-Wasserstein tooling and generalization bounds for reciprocal learning.

Reciprocal learning alternates empirical risk minimization with a
model-dependent change of the training sample; self-training with soft
pseudo-labels is the shipped instance.
"""

from .bounds import (
    THEOREMS,
    BoundInputs,
    BoundReport,
    anytime_excess_risk_bound,
    anytime_gap_bound,
    concentration_radius,
    covering_entropy_linear,
    data_dependent_excess_bound,
    default_constants,
    distortion_bound,
    distortion_limit,
    evaluate,
    excess_risk_bound,
    gen_gap_bound,
    stopping_rule,
    stopping_time,
)
from .core import (
    EmpiricalDistribution,
    Instance,
    SpaceSpec,
    diameter_z,
    diameters_x_theta,
    instance_distance,
    load_space,
    make_empirical,
)
from .errors import (
    BudgetExhaustedError,
    ConditionError,
    ConfigError,
    NumericalError,
    RecBoundsError,
    ValidationFailure,
)
from .learner import LossSpec, Model, erm, estimate_la, loss, loss_constants, loss_gradient, risk
from .reciprocal import (
    AdaptationConfig,
    ReciprocalPath,
    adapt_sample,
    detect_convergence,
    estimate_ls,
    run_reciprocal,
)
from .transport import Coupling, wasserstein, wasserstein_bruteforce

__version__ = "0.1.0"
