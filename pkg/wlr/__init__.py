"""Weighted low-rank approximation and background modeling for grayscale video."""

from .background import (
    Decomposition,
    IndexSet,
    baseline_background,
    batch_background,
    incremental_background,
    learn_bg_indices,
    score_columns,
)
from .errors import (
    DegeneracyError,
    DivergenceError,
    FrameFormatError,
    ParameterError,
    PipelineError,
    SpecError,
    SvdConvergenceError,
    UsageError,
    WlrError,
)
from .frames import FrameSequence, read_frames, write_frames
from .ghs import PartitionedInput, ghs_solve, svt_shrink
from .matrix_core import SvdTriple, frob_norm_sq, hadamard, hard_threshold, orthonormal_basis, project, project_orth, svd
from .metrics import auc, msssim, mssim, psnr, roc, ssim_map
from .model import BackgroundKind, BackgroundSpec, BgParams, ForegroundEvent, SynthSpec
from .solver import BlockWeight, FactorState, SolveReport, objective, solve
from .synth import standard_spec, synth_video
