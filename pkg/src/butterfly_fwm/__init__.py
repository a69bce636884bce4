"""Collective four-wave-mixing biphoton source in a butterfly level scheme.

The compiled kernels are used when available; set ``BUTTERFLY_FWM_BACKEND``
to ``python`` to force the pure-Python fallback.
"""
__version__ = "0.1.0"

from ._backend import BACKEND
from .config import RunConfig, load_config, load_preset, parse_config, serialize_config
from .correlations import (
    CorrelationCurve,
    chi,
    correlation_curve,
    cs_violation,
    first_peak,
    g2_cross,
    idler_delay,
)
from .dynamics import (
    ButterflyParams,
    IntegratorControl,
    SystemState,
    Trajectory,
    emission_rates,
    integrate,
    kappa,
    pairing_ratio,
    rhs,
    sphere_kappa_estimate,
    steady_residual,
    steady_state,
)
from .errors import (
    ButterflyError,
    ConfigError,
    IntegrationError,
    ReductionError,
    RegimeWarning,
    SteadyStateError,
)
from .geometry import (
    LINEAR_Z,
    SIGMA_MINUS,
    SIGMA_PLUS,
    DipoleOrientation,
    ModeGrid,
    build_mode_grid,
    enhancement_factor,
    enhancement_sum,
    ring_enhancement,
)
from .polarization import (
    bell_fidelity,
    circular_probabilities,
    entangled_fraction,
    opposite_polarization_probability,
)
from .schemes import (
    RegimeReport,
    SilverConfig,
    effective_params_from_silver,
    reduce_silver,
    validate_regime,
)
