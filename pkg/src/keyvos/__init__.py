"""Instance association and key-instance selection for unsupervised video object segmentation."""

from .datamodel import (
    BoundingBox,
    BoxVector,
    CandidateProposal,
    RleMask,
    SaliencyMap,
    SequenceInput,
    mask_iou,
    mask_mean_saliency,
    rle_decode,
    rle_encode,
)
from .fileio import load_result, load_sequence, save_result, save_sequence
from .metrics import SequenceReport, boundary_f, evaluate, jaccard
from .pipeline import PipelineConfig, SequenceResult, load_config, run_sequence
from .pool import ObjectPool, PoolConfig, TrackedInstance
from .scoring import ScoreWeights, build_score_matrix
from .selection import SelectionWeights

__all__ = [
    "BoundingBox",
    "BoxVector",
    "CandidateProposal",
    "ObjectPool",
    "PipelineConfig",
    "PoolConfig",
    "RleMask",
    "SaliencyMap",
    "ScoreWeights",
    "SelectionWeights",
    "SequenceInput",
    "SequenceReport",
    "SequenceResult",
    "TrackedInstance",
    "boundary_f",
    "build_score_matrix",
    "evaluate",
    "jaccard",
    "load_config",
    "load_result",
    "load_sequence",
    "mask_iou",
    "mask_mean_saliency",
    "rle_decode",
    "rle_encode",
    "run_sequence",
    "save_result",
    "save_sequence",
]

__version__ = "0.1.0"
