"""Frame-importance scoring and in-place frame repetition for long-video QA.

Core pipeline: encode frames and a question into feature files, measure each
frame's repeat gain through an answer-probability oracle, train a lightweight
cross-attention scorer on those gains, then duplicate the top-scored frames at
their original temporal positions at inference time.
"""

from .aoi import (
    FrameMultiset,
    OracleHandle,
    RepeatGainRecord,
    baseline_multiset,
    filter_dataset,
    repeat_multiset,
    scan_repeat_gains,
    select_candidates,
)
from .features import (
    FrameFeatureSet,
    QuestionEncoding,
    SampleRecord,
    cosine,
    load_sample,
    make_sample,
    save_sample,
)
from .losses import LossConfig, ranking_loss, regression_loss, standardize, total_loss
from .numerics import GradTape, Tensor, adam_step, backward, finite_diff_grad
from .oracles import (
    RemoteOracle,
    ReplayOracle,
    SyntheticDataset,
    SyntheticOracle,
    SyntheticOracleSpec,
    generate_synthetic_dataset,
)
from .planner import RepetitionPlan, plan, plan_from_scores, plan_select_only
from .scorer import (
    ScorerConfig,
    ScorerParams,
    forward,
    init_params,
    load_checkpoint,
    save_checkpoint,
)
from .trainer import TrainConfig, TrainLog, evaluate_ranking, train

__version__ = "0.1.0"

__all__ = [
    "FrameMultiset",
    "OracleHandle",
    "RepeatGainRecord",
    "baseline_multiset",
    "filter_dataset",
    "repeat_multiset",
    "scan_repeat_gains",
    "select_candidates",
    "FrameFeatureSet",
    "QuestionEncoding",
    "SampleRecord",
    "cosine",
    "load_sample",
    "make_sample",
    "save_sample",
    "LossConfig",
    "ranking_loss",
    "regression_loss",
    "standardize",
    "total_loss",
    "GradTape",
    "Tensor",
    "adam_step",
    "backward",
    "finite_diff_grad",
    "RemoteOracle",
    "ReplayOracle",
    "SyntheticDataset",
    "SyntheticOracle",
    "SyntheticOracleSpec",
    "generate_synthetic_dataset",
    "RepetitionPlan",
    "plan",
    "plan_from_scores",
    "plan_select_only",
    "ScorerConfig",
    "ScorerParams",
    "forward",
    "init_params",
    "load_checkpoint",
    "save_checkpoint",
    "TrainConfig",
    "TrainLog",
    "evaluate_ranking",
    "train",
]
