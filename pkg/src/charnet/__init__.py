"""Character-level CNN/BiLSTM document classification.

A self-contained engine: text encoding over a fixed 71-symbol alphabet,
a small tape-based autodiff tensor core, the coupled sentence-encoder /
document-classifier networks, Adam training with the full metric suite,
transfer learning by head replacement and layer freezing, and 2-d
embedding maps via exact t-SNE.
"""

__version__ = "0.1.0"

from .alphabet import Alphabet, build_alphabet, load_alphabet, save_alphabet
from .checkpoint import load_checkpoint, save_checkpoint
from .data import LabeledDataset, balance_sample, load_dataset
from .embedding import EmbeddingSet, extract_embeddings, silhouette
from .encoding import (
    EncodingConfig,
    encode_document,
    encode_sentence,
    split_sentences,
)
from .errors import (
    CharnetError,
    CheckpointError,
    DataError,
    NumericError,
    ShapeError,
)
from .gradcheck import end_to_end_grad_check, grad_check
from .metrics import Metrics, evaluate, roc_auc
from .model import Model, ModelSpec, build_default_spec
from .rng import RngStream
from .tensor import Tape, Tensor, backward
from .training import Hyperparams, TrainingHistory, adam_step, loss, train
from .transfer import FreezeSpec, fine_tune, freeze, replace_head
from .tsne import TsneConfig, perplexity_calibration, tsne

__all__ = [
    "Alphabet",
    "CharnetError",
    "CheckpointError",
    "DataError",
    "EmbeddingSet",
    "EncodingConfig",
    "FreezeSpec",
    "Hyperparams",
    "LabeledDataset",
    "Metrics",
    "Model",
    "ModelSpec",
    "NumericError",
    "RngStream",
    "ShapeError",
    "Tape",
    "Tensor",
    "TrainingHistory",
    "TsneConfig",
    "adam_step",
    "backward",
    "balance_sample",
    "build_alphabet",
    "build_default_spec",
    "encode_document",
    "encode_sentence",
    "end_to_end_grad_check",
    "evaluate",
    "extract_embeddings",
    "fine_tune",
    "freeze",
    "grad_check",
    "load_alphabet",
    "load_checkpoint",
    "load_dataset",
    "loss",
    "perplexity_calibration",
    "replace_head",
    "roc_auc",
    "save_alphabet",
    "save_checkpoint",
    "silhouette",
    "split_sentences",
    "train",
    "tsne",
    "__version__",
]
