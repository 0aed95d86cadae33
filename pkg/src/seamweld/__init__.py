"""Seam-cutting image stitching with local patch realignment of misaligned seam segments."""
from .accel import backend
from .errors import (ConstraintConflictError, DimensionMismatchError, EmptyOverlapError, EmptySeamError,
                     ImageReadError, InvalidInputError, PatchSkipped, SeamweldError, UnanchoredCutError)
from .flow import FlowParams, dense_descriptors, estimate_flow
from .imaging import AlignedPair, Rect, load_aligned_pair, make_pair
from .lpam import LpamConfig, StitchState, local_seam, merge_step, run_lpam, sigmoid_weight, warp_patch
from .mincut import HARD, CutResult, GridGraph, energy_of, solve_mincut
from .quality import (MisalignedComponent, PatchRegion, QualityProfile, SeamMetrics, detect_misaligned,
                      enclosing_patches, evaluate_seam, otsu_threshold, patch_errors, seam_metrics)
from .seam import Seam, build_energy, composite, effective_labels, estimate_seam, extract_seam_path

__version__ = "0.1.0"
