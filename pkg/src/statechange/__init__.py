"""Self-supervised temporal localization of object states and actions."""

from .core import (AnnotationInterval, AnnotationTrack, Architecture, Category,
                   CategoryCatalog, FrameScores, LabelKind, Localization,
                   PseudoLabel, ValidationReport, VideoFeatures,
                   seconds_to_frames, validate_dataset)
from .decode import (DEFAULT_OPTIONS, DecodeOptions, classify, detect_multi,
                     localize, localize_tracks, score_tracks, score_video)
from .evalkit import (classification_accuracy, mean_average_precision,
                      pca_export, precision_at_1)
from .model import (ModelParams, backward, forward, init_params,
                    load_checkpoint, save_checkpoint)
from .pseudo import LabelRuleConfig, build_cross_task_negatives, build_labels
from .synth import SynthConfig, SynthDataset, generate
from .train import (EpochLog, StepReport, TrainConfig, batch_rank_weight,
                    best_epoch_metrics, constant_weight, fit, lr_at, train_step)

__version__ = "0.1.0"

__all__ = [
    "AnnotationInterval", "AnnotationTrack", "Architecture", "Category",
    "CategoryCatalog", "FrameScores", "LabelKind", "Localization",
    "PseudoLabel", "ValidationReport", "VideoFeatures", "seconds_to_frames",
    "validate_dataset",
    "DEFAULT_OPTIONS", "DecodeOptions", "classify", "detect_multi", "localize",
    "localize_tracks", "score_tracks", "score_video",
    "classification_accuracy", "mean_average_precision", "pca_export",
    "precision_at_1",
    "ModelParams", "backward", "forward", "init_params", "load_checkpoint",
    "save_checkpoint",
    "LabelRuleConfig", "build_cross_task_negatives", "build_labels",
    "SynthConfig", "SynthDataset", "generate",
    "EpochLog", "StepReport", "TrainConfig", "batch_rank_weight",
    "best_epoch_metrics", "constant_weight", "fit", "lr_at", "train_step",
    "__version__",
]
