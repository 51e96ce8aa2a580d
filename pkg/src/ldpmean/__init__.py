"""Locally differentially private, communication-constrained mean estimation.

A library and CLI simulator for private mean estimation over the unit
sphere: a rotated-simplex codebook mechanism with k-closest encoding, the
Gaussian cap reference mechanism, a Kashin-frame randomized-response
baseline, and an importance-sampling channel-simulation baseline, plus the
Monte Carlo calibration and sweep harness that benchmarks them against each
other.
"""

from .calibration import (
    Calibration,
    CalibrationCache,
    CalibrationError,
    Calibrator,
    CkEstimate,
    compute_rk,
    estimate_ck,
    mmrc_calibration,
    rk_uniform_sphere,
    select_k,
    sphere_calibration,
    sphere_select_k,
)
from .codebook import Codebook, simplex_vectors
from .encoding import (
    check_probability_vector,
    kclosest_probs,
    message_from_bytes,
    message_to_bytes,
    message_width,
)
from .estimation import cohort_mean, estimate_mean, generate_cohort, l2_error
from .mechanisms import (
    MECHANISM_KINDS,
    MMRC,
    RRSC,
    SQKR,
    BaseMechanism,
    KashinLevelError,
    PrivUnitG,
    make_mechanism,
)
from .montecarlo import ResponseMoments, decoded_moments
from .privunit import CapParams, cap_params, sphere_cap_mass, sphere_cap_threshold
from .randomness import RandomStream, haar_orthogonal, orthonormal_rows, uniform_sphere
from .sweep import CSV_HEADER, ExperimentRecord, SweepConfig, SweepConfigError, run_sweep

__version__ = "0.1.0"

__all__ = [
    "__version__",
    "BaseMechanism",
    "Calibration",
    "CalibrationCache",
    "CalibrationError",
    "Calibrator",
    "CapParams",
    "CkEstimate",
    "Codebook",
    "CSV_HEADER",
    "ExperimentRecord",
    "KashinLevelError",
    "MECHANISM_KINDS",
    "MMRC",
    "PrivUnitG",
    "RandomStream",
    "ResponseMoments",
    "RRSC",
    "SQKR",
    "SweepConfig",
    "SweepConfigError",
    "cap_params",
    "check_probability_vector",
    "cohort_mean",
    "compute_rk",
    "decoded_moments",
    "estimate_ck",
    "estimate_mean",
    "generate_cohort",
    "haar_orthogonal",
    "kclosest_probs",
    "l2_error",
    "make_mechanism",
    "message_from_bytes",
    "message_to_bytes",
    "message_width",
    "mmrc_calibration",
    "orthonormal_rows",
    "rk_uniform_sphere",
    "run_sweep",
    "select_k",
    "simplex_vectors",
    "sphere_calibration",
    "sphere_cap_mass",
    "sphere_cap_threshold",
    "sphere_select_k",
    "uniform_sphere",
]
