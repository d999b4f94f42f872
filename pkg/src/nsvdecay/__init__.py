"""Decay-rate laboratory for the Navier-Stokes-Voigt equations."""

from .decay_character import (
    ContinuumDatum,
    DecayCharacterEstimate,
    Sentinel,
    decay_indicator,
    estimate_decay_character,
    make_datum,
    sample_on_grid,
    shift_character,
)
from .errors import (
    DomainError,
    InstabilityError,
    NSVError,
    NumericalError,
    PlanError,
    QuadratureError,
    ValidationError,
)
from .linear import (
    RateClass,
    classify_rate,
    evolve_linear,
    linear_norm_series,
    predicted_linear_exponent,
)
from .series import DecayFitResult, NormSeries, fit_decay_exponent
from .solver import (
    SolverConfig,
    TrajectoryRecord,
    check_lemma_bound,
    desk_config,
    energy_balance_residual,
    max_trustworthy_time,
    nonlinear_flux,
    rk4_step,
    run_simulation,
)
from .spectral import (
    Grid,
    NonlinearFluxSpectrum,
    PhysicsParams,
    SpectralVectorField,
    dealias,
    h1alpha_norm_sq,
    helmholtz_inverse_factor,
    leray_project,
    transform_roundtrip,
    voigt_multiplier,
)
from .verification import (
    VerificationPlan,
    VerificationReport,
    Verdict,
    default_plan,
    difference_series,
    predicted_difference_exponent,
    predicted_nsv_exponent,
    run_verification,
)

__version__ = "0.1.0"
