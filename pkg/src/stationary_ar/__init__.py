"""Stationarity-constrained AR(p) estimation by gradient descent in an
unconstrained (tanh + Durbin-Levinson) parameter space, with a conditional
maximum-likelihood baseline and a benchmark harness."""

__version__ = "0.1.0"

from .core import (STATIONARITY_MARGIN, Acf, ArProcess, InnovationSpec, NonStationaryError, Pacf,
                   QuadratureError, RootSet, characteristic_roots, dl_forward, dl_inverse,
                   is_stationary, levinson_durbin, r_squared, sample_acf, theoretical_variance)
from .estimators import EstimationResult, estimate, estimate_cml, estimate_gd, estimate_yw
from .objectives import (CostEvaluation, conditional_nll, cost_and_gradient, inverse_transform,
                         mse_cost, predict, transform)
from .optimize import (AdamConfig, BfgsConfig, FailureReason, OptimRun, StoppingCriterion,
                       adam_minimize, bfgs_minimize, should_stop)
from .simulate import (SimulationPlan, TimeSeries, generate_series, run_plan,
                       sample_stationary_process)
