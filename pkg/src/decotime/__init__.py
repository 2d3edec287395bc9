"""Decoherence times of continuous-spectrum systems from complex poles,
checked against direct time-domain evaluation of the fluctuating term."""
from .constants import CODATA, HBAR, HBAR_SI, KB, KB_SI, PhysicalConstants
from .cpoles import (
    PoleLocation,
    RationalApproximant,
    SearchRectangle,
    continue_from_samples,
    count_poles_zeros,
    locate_poles,
    residue,
)
from .decofit import DecayFit, envelope, estimate_from_fit, fit_exponential, fit_series
from .estimate import DecoherenceEstimate
from .oscint import QuadratureConfig, expectation_value, fluctuating_series, fluctuating_term
from .vanhove import (
    ExpectationSeries,
    RegularKernel,
    VanHoveObservable,
    VanHoveState,
    expectation_constant,
    hermitize,
    to_lambda_nu,
    weak_limit_state,
)

__version__ = "0.1.0"
