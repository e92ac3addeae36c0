"""conewalk: radial random walks on matrix spaces and index-mu random
walks on the cone of positive semidefinite matrices, with a batch
verification harness for their large-dimension limit behavior."""

__version__ = "0.1.0"

from .bessel import (
    BesselParam,
    BesselWalkConfig,
    ClippedQuadraticForm,
    bessel_character_1d,
    convolve_points,
    kappa_mu,
    kappa_quadrature_1d,
    root_lipschitz_gap,
    run_bessel_walk,
    run_bessel_walks,
    sample_contraction,
    semigroup_convolve,
)
from .cone_linalg import (
    COMPLEX,
    REAL,
    clamp_psd,
    det_herm,
    devectorize_herm,
    eig_herm,
    frob_norm,
    herm_part,
    psd_sqrt,
    trace_herm,
    vectorize_herm,
)
from .limit_lab import (
    EmpiricalSummary,
    MardiaResult,
    RateFit,
    berry_esseen_scan,
    chi2_cdf,
    empirical_cov,
    ks_2samp,
    ks_distance,
    mardia_tests,
    moment_identity_rhs,
    normal_cdf,
    normalize_clt,
    t_squared_limit,
)
from .orbit_sampler import (
    GroupWalkConfig,
    WalkTrajectory,
    run_group_walk,
    run_group_walks,
    sample_radial_matrix,
    sample_stiefel_frame,
    stiefel_block,
    wishart_sample,
)
from .radial_laws import MomentData, RadialLaw, law_from_spec, moments
