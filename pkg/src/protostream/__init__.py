"""Task-free continual learning for streaming sensor classification.

A prototype-memory classifier over a small trainable embedding network,
kept current on a non-stationary stream through online prototype
averaging, experience replay, replay-based prototype adaptation and a
margin contrastive loss; plus the streaming protocol, forgetting and
intransigence metrics, and a seeded experiment CLI.
"""
from .autodiff import (
    Adam,
    ContractViolation,
    GradientDescent,
    NumericOverflowError,
    Tensor,
    forward_backward,
    make_optimizer,
    no_grad,
)
from .batch import LabeledBatch
from .config import (
    ContinualConfig,
    DatasetConfig,
    ExperimentConfig,
    METHODS,
    PretrainConfig,
    SplitConfig,
    load_config,
)
from .encoder import Encoder, EncoderConfig
from .ingest import SyntheticSpec, WindowingSpec, normalize, read_recording, segment, synth
from .losses import LossReport, combined, contrastive, proto_cross_entropy
from .metrics import MetricsLedger, macro_f1, per_class_f1
from .prototypes import Prediction, PrototypeMemory
from .replay import ReplayBuffer
from .stream import Dataset, Split, StreamBatch, StreamSampler, make_split
from .trainer import EvalSuite, TrainerState, continual_step, evaluate, offline_pretrain, run

__all__ = [
    "Adam", "ContractViolation", "ContinualConfig", "Dataset", "DatasetConfig",
    "Encoder", "EncoderConfig", "EvalSuite", "ExperimentConfig", "GradientDescent",
    "LabeledBatch", "LossReport", "METHODS", "MetricsLedger", "NumericOverflowError",
    "Prediction", "PretrainConfig", "PrototypeMemory", "ReplayBuffer", "Split",
    "SplitConfig", "StreamBatch", "StreamSampler", "SyntheticSpec", "Tensor",
    "TrainerState", "WindowingSpec", "combined", "continual_step", "contrastive",
    "evaluate", "forward_backward", "load_config", "macro_f1", "make_optimizer",
    "make_split", "no_grad", "normalize", "offline_pretrain", "per_class_f1",
    "proto_cross_entropy", "read_recording", "run", "segment", "synth",
]

__version__ = "0.1.0"
