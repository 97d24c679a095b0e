"""Transform-domain iterative hard thresholding for cosparse signals."""

from .experiments import (
    MriRunSpec,
    PhaseGridResult,
    PhaseGridSpec,
    denoising_ensemble,
    run_mri,
    run_phase_cell,
    run_phase_grid,
)
from .frames import (
    FrameBounds,
    RipEstimate,
    check_contraction_condition,
    drip_exhaustive,
    drip_monte_carlo,
    frame_bounds,
    random_tight_frame,
    rip_projection_residual,
)
from .linops import (
    AnalysisPair,
    DenseMap,
    LinearMap,
    PartialFourier,
    RankError,
    SamplingMask,
    partial_fourier,
    pseudo_inverse,
    radial_mask,
    undecimated_haar,
)
from .recovery import (
    AdaptiveStep,
    ConstantStep,
    DivergenceError,
    HaltingRule,
    RecoveryOutput,
    RecoveryProblem,
    aiht_recover,
    cosparse_project,
    cosupport_select,
    hard_threshold,
    iht_recover,
    tdiht_recover,
)
from .signals import (
    CosparseSpec,
    NoiseSpec,
    add_noise,
    cosparsify,
    gen_cosparse_signal,
    lemma7_bound_check,
    psnr,
    shepp_logan,
)

__version__ = "0.1.0"
