"""Exact modulus of the concave KL property, rival desingularizers and PALM length certificates."""

from .errors import *  # noqa: F401,F403
from .intervals import Interval, IntervalSet
from .function_model import (Affine, ExpComposite, Indicator, Piece, Piecewise1D, Power, Quadratic,
                             dist_zero_subdiff, eval_at, level_band, limiting_subdiff)
from .numerics import (QuadratureResult, concavity_check, convexity_check, grid_sup,
                       integrate_decreasing, invert_monotone, left_derivative)
from .modulus import (ClosedForm, Desingularizer, ExactModulus, FunctionOracle, IntegralDesingularizer,
                      KlCertificate, KlContext, Linear, StepIntegral, Zero, exact_modulus,
                      exact_modulus_convex_c1, h_of_s, setwise_modulus, uniformize, verify_gkl)
from .desingularizers import (GrowthModulus, bdlm_phi, bdlm_phi_convex, bdlm_u, compare,
                              growth_desingularizer, growth_phi, nonstationary_certificate)
from .palm import (PalmConfig, PalmProblem, length_bound, limit_set_estimate, palm_step,
                   residual_check, run, sufficient_decrease_check)
from .dc_oscillation import dc_oscillation_build
from . import catalog

__version__ = "0.1.0"
