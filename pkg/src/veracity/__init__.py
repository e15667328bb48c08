"""Multimodal deception detection from courtroom-style video statements.

Pipeline: per-modality descriptors (dense-trajectory motion blocks, MFCC
audio, word-embedding transcripts) are encoded against per-fold Gaussian
dictionaries as Fisher vectors, micro-expression detectors add a pooled
high-level score vector, seven classifier kinds score each modality, and
simplex-constrained late fusion combines them under identity-grouped
cross-validation scored by area under the precision-recall curve.
"""

from .classifiers import (
    CLASSIFIER_KINDS,
    ClassifierSpec,
    TrainedModel,
    load_model,
    predict_score,
    save_model,
    train,
)
from .config import PipelineConfig, load_config
from .data import (
    DatasetManifest,
    DescriptorBag,
    PcmSignal,
    VideoRecord,
    load_audio,
    load_manifest,
    load_trajectory_descriptors,
    load_transcript,
    save_manifest,
)
from .errors import DataError, LeakageError, VeracityError
from .evaluation import (
    FoldPlan,
    FusionWeights,
    auc_pr,
    fuse,
    grouped_kfold,
    load_fold_plan,
    save_fold_plan,
    search_weights,
)
from .experiment import ExperimentReport, run_experiment
from .fisher import (
    FisherVector,
    FisherVectorBag,
    encode_fisher,
    load_fv,
    normalize_fv,
    save_fv,
)
from .gmm import EmConfig, FitResult, GaussianMixture, fit_gmm, load_gmm, save_gmm
from .mfcc import MfccConfig, extract_mfcc
from .pca import PcaModel, fit_pca
from .microexpression import (
    EXPRESSIONS,
    ClipSet,
    ExpressionDetectorSet,
    ExpressionScoreVector,
    segment_clips,
    train_expression_detectors,
)
from .text import EmbeddingTable, embed_transcript, load_embeddings, tokenize

__version__ = "0.1.0"

__all__ = [
    "CLASSIFIER_KINDS",
    "EXPRESSIONS",
    "ClassifierSpec",
    "ClipSet",
    "DataError",
    "DatasetManifest",
    "DescriptorBag",
    "EmConfig",
    "EmbeddingTable",
    "ExperimentReport",
    "ExpressionDetectorSet",
    "ExpressionScoreVector",
    "FisherVector",
    "FisherVectorBag",
    "FitResult",
    "FoldPlan",
    "FusionWeights",
    "GaussianMixture",
    "LeakageError",
    "MfccConfig",
    "PcaModel",
    "PcmSignal",
    "PipelineConfig",
    "TrainedModel",
    "VeracityError",
    "VideoRecord",
    "auc_pr",
    "embed_transcript",
    "encode_fisher",
    "extract_mfcc",
    "fit_gmm",
    "fit_pca",
    "fuse",
    "grouped_kfold",
    "load_audio",
    "load_config",
    "load_embeddings",
    "load_fold_plan",
    "load_fv",
    "load_gmm",
    "load_manifest",
    "load_model",
    "load_trajectory_descriptors",
    "load_transcript",
    "normalize_fv",
    "predict_score",
    "run_experiment",
    "save_fold_plan",
    "save_fv",
    "save_gmm",
    "save_manifest",
    "save_model",
    "search_weights",
    "segment_clips",
    "tokenize",
    "train",
    "train_expression_detectors",
]
