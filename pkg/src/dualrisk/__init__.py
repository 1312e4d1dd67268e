"""Ruin probabilities and ruin-time transforms for dual risk models with proportional gains.

The Laplace transform of the ruin probability satisfies a linear functional
equation with contracting arguments. :mod:`dualrisk.models` builds that
equation per model, :mod:`dualrisk.feq` solves it, :mod:`dualrisk.inversion`
returns to the capital domain and :mod:`dualrisk.simulator` provides Monte
Carlo estimates for cross-checks.
"""

from .errors import DualRiskError
from .feq import fe_residual, rho_eval, solve_unknowns
from .inversion import InversionParams, invert
from .models import (
    CausalProportional,
    FgmMixture,
    FgmProportional,
    GfgmMixture,
    GfgmParams,
    GfgmProportional,
    LinearDependence,
    RuinProbability,
    RuinTimeLst,
    TwoSided,
    TwoSidedFgm,
    UniformProportional,
    build_ruin_system,
    build_system,
    build_time_system,
)
from .simulator import estimate

__version__ = "0.1.0"
