"""Audio reconstruction from degraded time and time-frequency observations."""
from .codec import EncodedPayload, EncodeSpec, decode, encode, sdr, tf_direct_baseline
from .degradation import QuantizerSpec, Records, Tag, apply_mask, clip, quantize
from .feasible import BoxConstraint, build_box, project, prox_distance
from .frame import FrameSpec, analyze, make_tight_frame, operator_norm, synthesize
from .solver import (ProblemSpec, SolverConfig, SolveReport, solve, solve_general,
                     solve_tight)

__version__ = "0.1.0"

__all__ = [
    "BoxConstraint", "EncodeSpec", "EncodedPayload", "FrameSpec", "ProblemSpec",
    "QuantizerSpec", "Records", "SolveReport", "SolverConfig", "Tag", "analyze",
    "apply_mask", "build_box", "clip", "decode", "encode", "make_tight_frame",
    "operator_norm", "project", "prox_distance", "quantize", "sdr", "solve",
    "solve_general", "solve_tight", "synthesize", "tf_direct_baseline",
]
