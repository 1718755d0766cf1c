"""Liberation of two projections: Loewner flow, entropy, and oracles.

The package evolves the spectral measure of X_t = Q u_t P u_t^* Q -- two
projections with one rotated by a free unitary Brownian motion -- through
a radial Loewner equation on the circle, computes the liberation Fisher
information phi*(t), the free mutual information i*, and the orbital
entropy chi_orb, and cross-validates everything against a triangular
moment recursion and a finite-N random-matrix Monte Carlo model.
"""

__version__ = "0.1.0"

from .errors import (
    AtomPresent,
    BranchAmbiguity,
    BranchFailure,
    CharacteristicExit,
    DivergenceDetected,
    LiblabError,
    NegativeMass,
    NewtonDivergence,
    SpecValidationError,
    TimeGridMismatch,
    TooCloseToSpectrum,
)
from .measures import (
    DEFAULT_GRID,
    HALF_TRACE,
    CircleMeasure,
    IntervalMeasure,
    TraceParams,
    circle_cdf_interval,
    circle_grid,
    compact_bump,
    cos_coefficients,
    decompose,
    delta_zero_start,
    density_from_cos_coefficients,
    free_projection_edges,
    free_projections,
    from_circle,
    haar_half,
    interval_nodes,
    measure_from_spec,
    raised_cosine,
    symmetrize_density,
    to_circle,
)
from .transforms import (
    HerglotzField,
    boundary_density,
    cauchy_F,
    cauchy_G,
    cauchy_from_circle,
    hardy_norm_diag,
    herglotz_H,
    herglotz_L,
    hilbert_transform,
    pde_residual_G,
    recover_L_from_H,
    sqrt_z2_minus_z,
    szego_to_disk,
    szego_to_plane,
)
from .loewner import (
    FlowState,
    GeneralFlow,
    HalfTraceFlow,
    evolve_general,
    evolve_half_trace,
    make_flow,
    subordinate_f,
)
from .fubm import (
    MomentVector,
    delta_start,
    haar_start,
    measure_from_moments,
    moment_flow,
    moments_of,
)
from .entropy import (
    FisherProfile,
    IdentityReport,
    calibrate_Z,
    chi_orb,
    fisher_info,
    fisher_profile,
    i_star,
    liberation_gradient_k,
    log_energy_fourier,
    log_energy_quadrature,
    log_kernel_integral,
    verify_identity,
)
from .matrix_oracle import (
    MatrixModelConfig,
    SpectrumResult,
    compare_to_flow,
    ks_distance,
    simulate_spectrum,
)
