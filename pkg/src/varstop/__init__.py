"""Variance-maximizing optimal stopping for one-dimensional diffusions."""

from .builtins import gbm, jacobi, logit_scale, natural_scale, randomized_example, piecewise_scale, tabulated_scale
from .diffusion import Classification, DiffusionSpec, StateInterval, classify, exit_mean, exit_variance, hit_prob
from .embedded import embedded_value, majorant, maximizer_set, multi_maximizer_scan, stopping_set
from .errors import *  # noqa: F401,F403
from .game import duality_gap, solve_game
from .kernels import BACKEND
from .montecarlo import EstimatorResult, SampleConfig, sample_rule, sde_paths
from .rules import BernoulliMix, EpsilonFamily, ExitInterval, Immediate, WholeInterval, moments
from .scale import ScaleLimits, ScaleModel
from .solver import VarianceSolution, solve, value_profile

__version__ = "0.1.0"
