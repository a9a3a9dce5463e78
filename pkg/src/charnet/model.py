"""The two coupled networks: sentence encoder and document classifier.

A model is a declarative layer stack (ModelSpec) plus a flat map of named
weight blocks. The sentence encoder turns one one-hot sentence grid into
a fixed feature vector; the document classifier consumes the stacked
per-sentence vectors and emits per-class probabilities, with its
penultimate dense layer doubling as the document feature extractor.

Layer counting convention: every stage in the stack is one LayerSpec,
including activations and the final bidirectional-state readout
(`last_step`); fused post-activations of dense layers (`+relu`, the
probability head) are hyperparameters of their dense layer, not separate
entries. Under this convention the default encoder has 13 layers and the
default classifier 7, at every width scale.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from . import ops
from .alphabet import ALPHABET_SIZE, Alphabet, build_alphabet
from .encoding import EncodingConfig, document_indices, one_hot
from .errors import ShapeError
from .ops import LstmParams
from .rng import RngStream
from .tensor import Tensor

LAYER_KINDS = ("conv1d", "maxpool1d", "dropout", "bilstm", "dense",
               "activation", "last_step")
ACTIVATIONS = ("relu", "sigmoid", "tanh", "softmax")
HEADS = ("sigmoid", "softmax")
READOUTS = ("sequence", "final_states")

ENCODER_DEPTH = 13
CLASSIFIER_DEPTH = 7
BASE_SENTENCE_HIDDEN = 256   # -> 512-wide sentence vectors at scale 1
BASE_FEATURE_UNITS = 128     # document feature width at scale 1


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    name: str
    hyper: dict

    def __post_init__(self):
        if self.kind not in LAYER_KINDS:
            raise ShapeError(f"unknown layer kind {self.kind!r}")
        h = self.hyper
        need = {
            "conv1d": ("filters", "kernel", "stride", "pad"),
            "maxpool1d": ("window", "stride"),
            "dropout": ("rate",),
            "bilstm": ("hidden", "readout"),
            "dense": ("units", "activation"),
            "activation": ("fn",),
            "last_step": (),
        }[self.kind]
        missing = [k for k in need if k not in h]
        if missing:
            raise ShapeError(f"layer {self.name}: missing hyperparams {missing}")
        for key in ("filters", "kernel", "stride", "window", "hidden", "units"):
            if key in need and h[key] < 1:
                raise ShapeError(f"layer {self.name}: {key} must be positive")
        if self.kind == "conv1d" and h["pad"] < 0:
            raise ShapeError(f"layer {self.name}: pad must be >= 0")
        if self.kind == "dropout" and not 0 <= h["rate"] < 1:
            raise ShapeError(f"layer {self.name}: rate must be in [0, 1)")
        if self.kind == "bilstm" and h["readout"] not in READOUTS:
            raise ShapeError(f"layer {self.name}: readout must be one of {READOUTS}")
        if self.kind == "activation" and h["fn"] not in ACTIVATIONS:
            raise ShapeError(f"layer {self.name}: fn must be one of {ACTIVATIONS}")
        if self.kind == "dense" and h["activation"] not in ACTIVATIONS + ("none",):
            raise ShapeError(f"layer {self.name}: bad dense activation")

    def to_dict(self) -> dict:
        return {"kind": self.kind, "name": self.name, "hyper": dict(self.hyper)}

    @classmethod
    def from_dict(cls, d: dict) -> "LayerSpec":
        return cls(d["kind"], d["name"], dict(d["hyper"]))


@dataclass(frozen=True)
class ModelSpec:
    encoder_layers: tuple[LayerSpec, ...]
    classifier_layers: tuple[LayerSpec, ...]
    sentence_dim: int
    feature_dim: int
    n_classes: int
    encoding: EncodingConfig
    head: str
    scale: float

    def __post_init__(self):
        if len(self.encoder_layers) != ENCODER_DEPTH:
            raise ShapeError(
                f"encoder must have {ENCODER_DEPTH} layers, "
                f"got {len(self.encoder_layers)}")
        if len(self.classifier_layers) != CLASSIFIER_DEPTH:
            raise ShapeError(
                f"classifier must have {CLASSIFIER_DEPTH} layers, "
                f"got {len(self.classifier_layers)}")
        if self.head not in HEADS:
            raise ShapeError(f"head must be one of {HEADS}")
        if self.n_classes < 2:
            raise ShapeError(f"n_classes must be >= 2, got {self.n_classes}")
        enc_out = _walk_shapes(self.encoder_layers,
                               (self.encoding.max_chars, ALPHABET_SIZE))
        if enc_out != (None, self.sentence_dim):
            raise ShapeError(
                f"encoder produces {enc_out}, expected a "
                f"{self.sentence_dim}-wide vector")
        cls_out = _walk_shapes(self.classifier_layers,
                               (self.encoding.max_sentences, self.sentence_dim))
        if cls_out != (None, self.n_classes):
            raise ShapeError(
                f"classifier produces {cls_out}, expected a "
                f"{self.n_classes}-wide vector")
        head_in = _walk_shapes(self.classifier_layers[:-1],
                               (self.encoding.max_sentences, self.sentence_dim))
        if head_in != (None, self.feature_dim):
            raise ShapeError(
                f"classifier penultimate output {head_in}, expected "
                f"{self.feature_dim}-wide features")

    def to_dict(self) -> dict:
        return {
            "encoder_layers": [l.to_dict() for l in self.encoder_layers],
            "classifier_layers": [l.to_dict() for l in self.classifier_layers],
            "sentence_dim": self.sentence_dim,
            "feature_dim": self.feature_dim,
            "n_classes": self.n_classes,
            "encoding": {
                "max_chars": self.encoding.max_chars,
                "max_sentences": self.encoding.max_sentences,
                "lowercase": self.encoding.lowercase,
            },
            "head": self.head,
            "scale": self.scale,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelSpec":
        return cls(
            encoder_layers=tuple(LayerSpec.from_dict(x) for x in d["encoder_layers"]),
            classifier_layers=tuple(
                LayerSpec.from_dict(x) for x in d["classifier_layers"]),
            sentence_dim=d["sentence_dim"],
            feature_dim=d["feature_dim"],
            n_classes=d["n_classes"],
            encoding=EncodingConfig(**d["encoding"]),
            head=d["head"],
            scale=d["scale"],
        )


def _walk_shapes(layers: Iterable[LayerSpec], start: tuple[int, int]):
    """Propagate (time, channels) through a stack; time None once the
    stack has reduced to a vector. Raises when a layer cannot apply."""
    t, c = start
    for layer in layers:
        h = layer.hyper
        if layer.kind == "conv1d":
            if t is None:
                raise ShapeError(f"{layer.name}: conv1d needs a sequence input")
            t_pad = t + 2 * h["pad"]
            if h["kernel"] > t_pad:
                raise ShapeError(
                    f"{layer.name}: kernel {h['kernel']} exceeds padded length {t_pad}")
            t = (t_pad - h["kernel"]) // h["stride"] + 1
            c = h["filters"]
        elif layer.kind == "maxpool1d":
            if t is None or h["window"] > t:
                raise ShapeError(f"{layer.name}: pool window {h['window']} "
                                 f"exceeds length {t}")
            t = (t - h["window"]) // h["stride"] + 1
        elif layer.kind == "bilstm":
            if t is None:
                raise ShapeError(f"{layer.name}: bilstm needs a sequence input")
            c = 2 * h["hidden"]
            t = t if h["readout"] == "sequence" else None
        elif layer.kind == "dense":
            if t is not None:
                raise ShapeError(f"{layer.name}: dense needs a vector input")
            c = h["units"]
        elif layer.kind == "last_step":
            if t is None or c % 2:
                raise ShapeError(f"{layer.name}: last_step needs a "
                                 f"direction-concatenated sequence")
            t = None
        # dropout / activation leave shape unchanged
    return t, c


def _scaled(width: int, scale: float) -> int:
    return max(1, math.ceil(width * scale))


def build_default_spec(n_classes: int, encoding: EncodingConfig,
                       scale: float = 1.0, head: str = "sigmoid") -> ModelSpec:
    """The documented default stacks, widths multiplied by scale
    (rounded up, min 1). Layer counts and the layer order never change
    with scale."""
    if not 0 < scale <= 1:
        raise ShapeError(f"scale must be in (0, 1], got {scale}")
    if n_classes < 2:
        raise ShapeError(f"n_classes must be >= 2, got {n_classes}")
    s = lambda w: _scaled(w, scale)

    def conv(name, filters, kernel):
        return LayerSpec("conv1d", name, {
            "filters": filters, "kernel": kernel, "stride": 1, "pad": kernel // 2})

    def pool(name):
        return LayerSpec("maxpool1d", name, {"window": 2, "stride": 2})

    def drop(name):
        return LayerSpec("dropout", name, {"rate": 0.1})

    encoder = (
        conv("conv0", s(64), 5),
        LayerSpec("activation", "act0", {"fn": "relu"}),
        pool("pool0"),
        drop("drop0"),
        conv("conv1", s(128), 5),
        LayerSpec("activation", "act1", {"fn": "relu"}),
        pool("pool1"),
        drop("drop1"),
        conv("conv2", s(256), 3),
        LayerSpec("activation", "act2", {"fn": "relu"}),
        LayerSpec("bilstm", "bilstm", {"hidden": s(BASE_SENTENCE_HIDDEN),
                                       "readout": "sequence"}),
        drop("drop2"),
        LayerSpec("last_step", "read", {}),
    )
    classifier = (
        conv("conv0", s(128), 3),
        pool("pool0"),
        drop("drop0"),
        LayerSpec("bilstm", "bilstm", {"hidden": s(64), "readout": "final_states"}),
        drop("drop1"),
        LayerSpec("dense", "feature", {"units": s(BASE_FEATURE_UNITS),
                                       "activation": "relu"}),
        LayerSpec("dense", "head", {"units": n_classes, "activation": head}),
    )
    return ModelSpec(
        encoder_layers=encoder,
        classifier_layers=classifier,
        sentence_dim=2 * s(BASE_SENTENCE_HIDDEN),
        feature_dim=s(BASE_FEATURE_UNITS),
        n_classes=n_classes,
        encoding=encoding,
        head=head,
        scale=scale,
    )


def param_shapes(spec: ModelSpec) -> dict[str, tuple[int, ...]]:
    """Canonical weight-block name -> shape map for a spec."""
    shapes: dict[str, tuple[int, ...]] = {}

    def walk(layers, prefix, start):
        t, c = start
        for layer in layers:
            h = layer.hyper
            base = f"{prefix}.{layer.name}"
            if layer.kind == "conv1d":
                shapes[f"{base}.kernel"] = (h["kernel"], c, h["filters"])
                shapes[f"{base}.bias"] = (h["filters"],)
            elif layer.kind == "bilstm":
                hid = h["hidden"]
                for d in ("fwd", "bwd"):
                    shapes[f"{base}.{d}.wx"] = (c, 4 * hid)
                    shapes[f"{base}.{d}.uh"] = (hid, 4 * hid)
                    shapes[f"{base}.{d}.b"] = (4 * hid,)
            elif layer.kind == "dense":
                shapes[f"{base}.weight"] = (c, h["units"])
                shapes[f"{base}.bias"] = (h["units"],)
            t, c = _walk_shapes([layer], (t, c))
        return t, c

    walk(spec.encoder_layers, "encoder", (spec.encoding.max_chars, ALPHABET_SIZE))
    walk(spec.classifier_layers, "classifier",
         (spec.encoding.max_sentences, spec.sentence_dim))
    return shapes


def head_block_prefix(spec: ModelSpec) -> str:
    """Weight-name prefix of the final classifier layer."""
    return f"classifier.{spec.classifier_layers[-1].name}."


class Model:
    """A built network: spec + named weight blocks + label vocabulary."""

    def __init__(self, spec: ModelSpec, weights: dict[str, Tensor],
                 label_vocab: list[str], alphabet: Alphabet):
        expected = param_shapes(spec)
        if set(weights) != set(expected):
            missing = sorted(set(expected) - set(weights))
            extra = sorted(set(weights) - set(expected))
            raise ShapeError(f"weight blocks mismatch: missing {missing}, "
                             f"unexpected {extra}")
        for name, shape in expected.items():
            if tuple(weights[name].shape) != shape:
                raise ShapeError(f"block {name}: shape {weights[name].shape}, "
                                 f"expected {shape}")
        if len(set(label_vocab)) != len(label_vocab):
            raise ShapeError("label vocabulary entries must be distinct")
        self.spec = spec
        self.weights = weights
        self.label_vocab = list(label_vocab)
        self.alphabet = alphabet

    # -- construction -----------------------------------------------------

    @classmethod
    def initialize(cls, spec: ModelSpec, seed: int,
                   alphabet: Alphabet | None = None,
                   label_vocab: list[str] | None = None) -> "Model":
        """Fan-in scaled uniform weights, zero biases, LSTM forget-gate
        bias +1; fully determined by the seed."""
        rng = RngStream(seed).child("init")
        weights: dict[str, Tensor] = {}
        for name, shape in param_shapes(spec).items():
            weights[name] = Tensor(_init_block(name, shape, rng),
                                   requires_grad=True, name=name)
        return cls(spec, weights, label_vocab or [], alphabet or build_alphabet())

    def copy(self) -> "Model":
        weights = {n: Tensor(t.data.copy(), requires_grad=True, name=n)
                   for n, t in self.weights.items()}
        return Model(self.spec, weights, list(self.label_vocab), self.alphabet)

    def astype(self, dtype) -> "Model":
        weights = {n: Tensor(t.data.astype(dtype), requires_grad=True, name=n)
                   for n, t in self.weights.items()}
        return Model(self.spec, weights, list(self.label_vocab), self.alphabet)

    def parameter_count(self, block_names: Iterable[str] | None = None) -> int:
        names = self.weights if block_names is None else block_names
        return sum(self.weights[n].data.size for n in names)

    # -- forward passes ----------------------------------------------------

    def _lstm_params(self, base: str) -> tuple[LstmParams, LstmParams]:
        w = self.weights
        return (LstmParams(w[f"{base}.fwd.wx"], w[f"{base}.fwd.uh"], w[f"{base}.fwd.b"]),
                LstmParams(w[f"{base}.bwd.wx"], w[f"{base}.bwd.uh"], w[f"{base}.bwd.b"]))

    def _apply_stack(self, layers, prefix: str, x: Tensor, mode: str,
                     rng: RngStream | None):
        """Returns (output, input-to-last-layer)."""
        last_in = x
        for layer in layers:
            h = layer.hyper
            base = f"{prefix}.{layer.name}"
            last_in = x
            if layer.kind == "conv1d":
                x = ops.conv1d(x, self.weights[f"{base}.kernel"],
                               h["stride"], h["pad"])
                x = ops.add_bias(x, self.weights[f"{base}.bias"])
            elif layer.kind == "maxpool1d":
                x = ops.maxpool1d(x, h["window"], h["stride"])
            elif layer.kind == "dropout":
                x = ops.dropout(x, h["rate"], mode, rng)
            elif layer.kind == "activation":
                x = _ACTIVATION_FNS[h["fn"]](x)
            elif layer.kind == "bilstm":
                fwd, bwd = self._lstm_params(base)
                x = ops.bilstm(x, fwd, bwd)
                if h["readout"] == "final_states":
                    x = ops.final_state_read(x)
            elif layer.kind == "dense":
                x = ops.dense(x, self.weights[f"{base}.weight"],
                              self.weights[f"{base}.bias"])
                if h["activation"] != "none":
                    x = _ACTIVATION_FNS[h["activation"]](x)
            elif layer.kind == "last_step":
                x = ops.final_state_read(x)
        return x, last_in

    def forward_documents(self, docs_onehot: np.ndarray, mode: str = "eval",
                          rng: RngStream | None = None
                          ) -> tuple[Tensor, Tensor]:
        """Batched forward: [B, S, C, 71] one-hot -> (probabilities
        [B, n_classes], document features [B, feature_dim])."""
        enc = self.spec.encoding
        b, s, c, a = docs_onehot.shape
        if s != enc.max_sentences or c != enc.max_chars or a != ALPHABET_SIZE:
            raise ShapeError(
                f"documents shaped {docs_onehot.shape[1:]}, model expects "
                f"({enc.max_sentences}, {enc.max_chars}, {ALPHABET_SIZE})")
        if mode not in ("train", "eval"):
            raise ShapeError(f"mode must be train or eval, got {mode!r}")
        x = Tensor(docs_onehot.reshape(b * s, c, a))
        sent, _ = self._apply_stack(self.spec.encoder_layers, "encoder",
                                    x, mode, rng)
        stacked = ops.reshape(sent, (b, s, self.spec.sentence_dim))
        probs, feats = self._apply_stack(self.spec.classifier_layers,
                                         "classifier", stacked, mode, rng)
        return probs, feats

    def encode_sentence_features(self, sentence_onehot: np.ndarray) -> np.ndarray:
        """One encoded sentence [max_chars, 71] -> sentence vector."""
        enc = self.spec.encoding
        if sentence_onehot.shape != (enc.max_chars, ALPHABET_SIZE):
            raise ShapeError(f"sentence shaped {sentence_onehot.shape}, expected "
                             f"({enc.max_chars}, {ALPHABET_SIZE})")
        x = Tensor(sentence_onehot[None].astype(np.float32, copy=False))
        out, _ = self._apply_stack(self.spec.encoder_layers, "encoder",
                                   x, "eval", None)
        return out.data[0]

    def classify_document(self, doc_onehot: np.ndarray, mode: str = "eval",
                          rng: RngStream | None = None) -> np.ndarray:
        """One encoded document [max_sentences, max_chars, 71] ->
        per-class probabilities."""
        probs, _ = self.forward_documents(doc_onehot[None], mode, rng)
        return probs.data[0]

    def document_features(self, doc_onehot: np.ndarray) -> np.ndarray:
        """Penultimate-layer activation for one encoded document."""
        _, feats = self.forward_documents(doc_onehot[None], "eval", None)
        return feats.data[0]

    # -- text conveniences --------------------------------------------------

    def encode_text(self, text: str) -> np.ndarray:
        """Document index grid for this model's alphabet and encoding."""
        return document_indices(text, self.alphabet, self.spec.encoding)


def _init_block(name: str, shape: tuple[int, ...], rng: RngStream) -> np.ndarray:
    if name.endswith(".b"):  # lstm bias: zeros with forget gate at +1
        hid = shape[0] // 4
        b = np.zeros(shape, dtype=np.float32)
        b[hid:2 * hid] = 1.0
        return b
    if name.endswith(".bias"):
        return np.zeros(shape, dtype=np.float32)
    if name.endswith(".kernel"):  # [K, Cin, Cout]: fan-in = K * Cin
        fan_in = shape[0] * shape[1]
    else:  # dense weight [I, O] or lstm wx/uh [I, 4H]: fan-in = rows
        fan_in = shape[0]
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, shape)


_ACTIVATION_FNS = {
    "relu": ops.relu,
    "sigmoid": ops.sigmoid,
    "tanh": ops.tanh,
    "softmax": ops.softmax,
}


def predict_probs(model: Model, index_grids: np.ndarray,
                  batch_size: int = 64) -> np.ndarray:
    """Eval-mode probabilities for compact document grids [N, S, C]."""
    out = []
    for lo in range(0, len(index_grids), batch_size):
        batch = one_hot(index_grids[lo:lo + batch_size])
        probs, _ = model.forward_documents(batch, "eval", None)
        out.append(probs.data)
    return np.concatenate(out, axis=0) if out else np.zeros(
        (0, model.spec.n_classes), dtype=np.float32)


def extract_features(model: Model, index_grids: np.ndarray,
                     batch_size: int = 64) -> np.ndarray:
    """Eval-mode document features for compact grids [N, S, C]."""
    out = []
    for lo in range(0, len(index_grids), batch_size):
        batch = one_hot(index_grids[lo:lo + batch_size])
        _, feats = model.forward_documents(batch, "eval", None)
        out.append(feats.data)
    return np.concatenate(out, axis=0) if out else np.zeros(
        (0, model.spec.feature_dim), dtype=np.float32)
