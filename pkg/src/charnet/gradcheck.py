"""Finite-difference gradient checking.

The numeric route perturbs each parameter coordinate by +/-eps and
re-evaluates the loss closure (central differences). Because ops only
record when a tape is active, the probe evaluations run tape-free. The
closure must rebuild its graph from the parameter tensors on every call.

For double-accumulation checks, pass float64 parameter tensors; ops
follow the input dtype throughout.
"""

from __future__ import annotations

from typing import Callable, Mapping

import numpy as np

from .rng import RngStream
from .tensor import Tape, Tensor

RELATIVE_ERROR_FLOOR = 1e-8


def finite_difference_grads(f: Callable[[], Tensor],
                            params: Mapping[str, Tensor],
                            eps: float = 1e-3) -> dict[str, np.ndarray]:
    """Central-difference gradient of the scalar f() per coordinate."""
    if eps <= 0:
        raise ValueError(f"eps must be positive, got {eps}")
    out = {}
    for name, p in params.items():
        flat = p.data.reshape(-1)
        grad = np.zeros(flat.size, dtype=np.float64)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            step_up = flat[i]  # the step actually representable in this dtype
            f_plus = f().item()
            flat[i] = orig - eps
            step_down = flat[i]
            f_minus = f().item()
            flat[i] = orig
            grad[i] = (f_plus - f_minus) / float(step_up - step_down)
        out[name] = grad.reshape(p.shape)
    return out


def analytic_grads(f: Callable[[], Tensor],
                   params: Mapping[str, Tensor]) -> dict[str, np.ndarray]:
    """Reverse-mode gradient of the scalar f() on a fresh tape."""
    with Tape() as tape:
        loss = f()
        grads = tape.gradients(loss, params.values())
    return dict(zip(params.keys(), grads))


def max_relative_error(analytic: Mapping[str, np.ndarray],
                       numeric: Mapping[str, np.ndarray]) -> float:
    """max over coordinates of |a - n| / max(1e-8, |a| + |n|)."""
    worst = 0.0
    for name, a in analytic.items():
        a = np.asarray(a, dtype=np.float64)
        n = np.asarray(numeric[name], dtype=np.float64)
        denom = np.maximum(RELATIVE_ERROR_FLOOR, np.abs(a) + np.abs(n))
        if a.size:
            worst = max(worst, float(np.max(np.abs(a - n) / denom)))
    return worst


def grad_check(f: Callable[[], Tensor],
               params: Mapping[str, Tensor],
               eps: float = 1e-3) -> float:
    """Max relative error between the tape gradient and the
    finite-difference gradient of f over the given parameters."""
    analytic = analytic_grads(f, params)
    numeric = finite_difference_grads(f, params, eps)
    return max_relative_error(analytic, numeric)


def end_to_end_grad_check(scale: float = 0.05, encoding=None, draws: int = 20,
                          seed: int = 0, eps: float = 3e-5,
                          n_classes: int = 2, head: str = "sigmoid") -> float:
    """Worst relative error of the full encoder+classifier gradient over
    several random parameter/input draws.

    The model under test is the standard float32-storage model; the
    check upcasts it and runs both the tape backward pass and the
    finite-difference probes with float64 accumulation. The coordinate
    gradients of a 20-layer composition span ten orders of magnitude, so
    coordinates whose true gradient sits below float32's absolute noise
    floor make a float32-side max-relative-error comparison meaningless;
    the double-accumulation route checks the same dtype-generic backward
    code with the noise floor out of the way. Per-op float32 checks live
    in the unit tests, where gradient magnitudes are controlled.

    Draws are dense uniform inputs in [0, 2] and weights at twice the
    init bound, not one-hot grids at the conservative training init:
    init-scale activations cluster so close to zero that probes cross
    ReLU kinks and pooling ties (where finite differences measure a
    two-sided blend no analytic convention can match), and the tiniest
    coordinate gradients sink below the probes' rounding floor. The
    wider draw keeps the composition comfortably differentiable at every
    probe while exercising the identical code path. The kink and
    tie-break conventions have dedicated unit tests; dropout is the
    eval-mode identity here and has its own fixed-mask check.
    """
    # local import: this driver sits above the model layer
    from .alphabet import ALPHABET_SIZE
    from .encoding import EncodingConfig
    from .model import Model, build_default_spec
    from .training import loss

    encoding = encoding or EncodingConfig(max_chars=10, max_sentences=2)
    spec = build_default_spec(n_classes, encoding, scale, head)
    worst = 0.0
    for draw in range(draws):
        rng = RngStream(seed).child("gradcheck", draw)
        model = Model.initialize(spec, seed=seed * 1000 + draw)
        for name, t in model.weights.items():
            if not (name.endswith(".bias") or name.endswith(".b")):
                t.data = t.data * 2.0
        doc = rng.uniform(
            0.0, 2.0,
            (1, encoding.max_sentences, encoding.max_chars, ALPHABET_SIZE),
            dtype=np.float64)
        if head == "softmax":
            target = np.zeros((1, n_classes), dtype=np.float64)
            target[0, rng.generator.integers(0, n_classes)] = 1.0
        else:
            target = rng.generator.integers(0, 2, (1, n_classes)).astype(np.float64)

        model64 = model.astype(np.float64)

        def f() -> Tensor:
            probs, _ = model64.forward_documents(doc, "eval", None)
            return loss(probs, target, head)

        analytic = analytic_grads(f, model64.weights)
        numeric = finite_difference_grads(f, model64.weights, eps)
        worst = max(worst, max_relative_error(analytic, numeric))
    return worst
