"""Co-learning toolkit: annotation alignment, dynamic pseudo-label
thresholds, cost-based anchor assignment, EMA teacher state, AP@0.5
evaluation, and a deterministic teacher-student simulator."""

from .align import (
    AlignmentIssue,
    AlignmentResult,
    Attributes,
    Lexicon,
    StandardizedDescription,
    align_dataset,
    canonicalize_class,
    default_lexicon,
    extract_attributes,
    load_lexicon,
    normalize_tokens,
    parse_description,
    standardize,
)
from .assign import (
    Anchor,
    Assignment,
    Matching,
    assign_topk,
    hungarian_assign,
    matching_cost,
    select_regression_head,
)
from .ema import ParamVector, ema_update, load_checkpoint, save_checkpoint
from .errors import (
    ColearnError,
    ConfigError,
    DegenerateInputError,
    IncompatibleVectorsError,
    MissingTypeError,
    NoHeadsError,
    SchemaError,
    UnknownTypeError,
    ValidationError,
)
from .metrics import EvalReport, average_precision, evaluate_dataset, match_detections
from .model import (
    BBox,
    ClassVocabulary,
    Dataset,
    Detection,
    GroundTruthBox,
    ImageInfo,
    default_vocabulary,
    iou,
    load_dataset,
    save_dataset,
)
from .pseudo import (
    GmmModel,
    PseudoLabelSet,
    ScoreWindow,
    ThresholdState,
    dynamic_threshold,
    filter_pseudo_labels,
    fit_gmm,
    smooth_threshold,
    update_thresholds,
)
from .sim import (
    DetectorNoise,
    SimConfig,
    SimReport,
    generate_scene,
    load_sim_config,
    run_colearning_sim,
    simulate_detector,
)
from .stemmer import porter_stem

__version__ = "0.1.0"

__all__ = [
    "AlignmentIssue", "AlignmentResult", "Anchor", "Assignment", "Attributes",
    "BBox", "ClassVocabulary", "ColearnError", "ConfigError", "Dataset",
    "DegenerateInputError", "Detection", "DetectorNoise", "EvalReport",
    "GmmModel", "GroundTruthBox", "ImageInfo", "IncompatibleVectorsError",
    "Lexicon", "Matching", "MissingTypeError", "NoHeadsError", "ParamVector",
    "PseudoLabelSet", "SchemaError", "ScoreWindow", "SimConfig", "SimReport",
    "StandardizedDescription", "ThresholdState", "UnknownTypeError",
    "ValidationError", "align_dataset", "assign_topk", "average_precision",
    "canonicalize_class", "default_lexicon", "default_vocabulary",
    "dynamic_threshold", "ema_update", "evaluate_dataset", "extract_attributes",
    "filter_pseudo_labels", "fit_gmm", "generate_scene", "hungarian_assign",
    "iou", "load_checkpoint", "load_dataset", "load_lexicon", "load_sim_config",
    "match_detections", "matching_cost", "normalize_tokens", "parse_description",
    "porter_stem", "run_colearning_sim", "save_checkpoint", "save_dataset",
    "select_regression_head", "simulate_detector", "smooth_threshold",
    "standardize", "update_thresholds",
]
