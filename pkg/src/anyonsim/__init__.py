"""Stochastic exchange-phase noise for abelian anyons.

Simulation library for anyonic systems whose statistical angle fluctuates:
Jordan-Wigner operator construction, correlated phase-noise generation,
stochastic Liouville trajectories (Stratonovich and Ito), the equivalent
Lindblad dephasing engine with spectral diagnostics (normality,
decoherence-free subspaces, exceptional points), and closed-form protection
analysis of the optimal statistical angle.
"""

__version__ = "0.1.0"

from .errors import (
    AccuracyError,
    AnyonsimError,
    ConfigError,
    EnsembleError,
    NumericError,
    ParameterError,
    ShapeError,
    SizeError,
    TrajectoryError,
    ValidityError,
)
from .lindblad import (
    EPCandidate,
    LindbladChannel,
    Liouvillian,
    MasterResult,
    SpectralReport,
    build_liouvillian,
    dephasing_channel,
    dephasing_channels,
    dephasing_generator,
    detect_ep,
    dfs_kernel,
    normality_defect,
    propagate_master,
    relaxation_generator,
    spectral_report,
)
from .linalg import bloch_state, bloch_vector, pure_state_density, trace_distance
from .noise import (
    BathSpectrum,
    CorrelationMatrix,
    OrnsteinUhlenbeck,
    QuantumBath,
    RngStream,
    Wiener,
    effective_rate,
    lamb_shift_coefficient,
    ohmic_sff,
    ohmic_sff0,
    ou_path,
    rate_matrix,
    sample_increments,
    two_link_correlation,
)
from .operators import (
    HilbertSpace,
    Link,
    boson_annihilator,
    build_jw_anyon_ops,
    collective_currents,
    exchange_current,
    number_operator,
    reduce_angle,
    single_excitation_block,
    two_mode_K,
    verify_distorted_algebra,
)
from .protection import (
    ProtectionReport,
    SweepTable,
    covariance,
    dephasing_rate_bloch,
    effective_lifetime,
    multilink_rate,
    optimal_angle,
    sweep_theta,
    two_link_rates,
    variance,
)
from .trajectories import (
    EnsembleResult,
    SimulationGrid,
    StochasticModel,
    TrajectoryResult,
    ensemble_average,
    ito_step,
    run_trajectory,
    stratonovich_step,
    survival_probability,
    two_mode_model,
)

__all__ = [name for name in dir() if not name.startswith("_")]
