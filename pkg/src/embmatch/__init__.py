"""Training-free matching of 2D object proposals against multi-view template
embedding banks, with a COCO-style AP evaluator and a synthetic benchmark."""

from .core import (
    ConfigurationError,
    DataError,
    Detection,
    EngineError,
    Proposal,
    RleMask,
    ScoreTensor,
    ScoringConfig,
    TemplateBank,
    TemplateClass,
    TemplateView,
    Violation,
    default_config,
    validate_bank,
)
from .estimator import TemplateMatcher
from .evaluation import (
    IOU_THRESHOLDS,
    EvalReport,
    GroundTruthInstance,
    GroundTruthSet,
    evaluate,
    iou_bbox,
    iou_mask,
)
from .scoring import (
    AggregationSpec,
    MatchResult,
    absolute_matrix,
    aggregate_class_score,
    final_matrix,
    joint_matrix,
    match,
    relative_matrix,
    row_argmax,
    scaled_prior,
)
from .similarity import (
    PoolingKind,
    cosine,
    gem_pool,
    integrated_similarity,
    max_pool,
    mean_pool,
    tanimoto,
)
from .storage import (
    load_bank,
    load_ground_truth,
    load_predictions,
    load_proposals,
    pool_bank,
    save_bank,
    save_ground_truth,
    save_predictions,
    save_proposals,
)
from .synthbench import (
    AblationRow,
    AblationVariant,
    SyntheticWorld,
    WorldSpec,
    export_world,
    generate_world,
    ladder_variants,
    pooling_variants,
    run_ablation_suite,
    strip_prior,
    world_map,
)

__version__ = "0.1.0"
