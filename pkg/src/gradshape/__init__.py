"""Randomized gradient shaping: curvature-mixing identities, finite-query
deviation accounting, exposure benchmarks, blockwise shaping of exact
gradients, and a deterministic quadratic-sandbox experiment runner."""

__version__ = "0.1.0"

from .symkernel import (  # noqa: F401
    SpectralDecomp,
    SymMatrix,
    eig_sym,
    fro_norm,
    inv_sqrt,
    op_norm,
    plane_rotation,
    psd_check,
    symmetrize,
    trace,
)
from .shaping import (  # noqa: F401
    DirectionBatch,
    ShapeSample,
    SmoothedEstimate,
    apply_norm_matched,
    apply_raw,
    calibration_constants,
    sample_directions,
    sample_shape,
    shape_from_directions,
    two_point_estimate,
    whitening_reference,
)
from .retention import (  # noqa: F401
    DamageContext,
    damage_context,
    equalized_spectrum,
    expected_shaped_curvature,
    fo_damage,
    mean_gap,
    quadratic_damage,
    relative_reduction,
    zo_mean_damage,
)
from .deviation import (  # noqa: F401
    DEFAULT_C,
    CertificateReport,
    DeviationBudget,
    deviation_bound,
    noise_residual_second_moment,
    norm_mismatch_bound,
    psi_q,
    sign_certificate,
    smoothing_damage_bound,
)
from .exposure import (  # noqa: F401
    ExposureMoment,
    aligned_benchmark,
    centered_covariance,
    fo_exposure,
    gap_closing_factor,
    isotropic_optimum,
    worst_case_exposure,
    zo_exposure,
)
from .rise import (  # noqa: F401
    BlockCurvatureView,
    BlockDeviationBound,
    BlockMeanGap,
    BlockPartition,
    BlockScores,
    CouplingReport,
    block_partition,
    block_scores,
    blockwise_deviation_bound,
    blockwise_expected_curvature,
    blockwise_mean_gap,
    control_adaptation,
    coupling_coefficient,
    mean_residual_decomposition,
    rise_shape,
)
