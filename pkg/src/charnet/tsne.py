"""Exact t-SNE: conditional Gaussians calibrated per point by binary
search on the bandwidth, symmetrized joint probabilities, Student-t
similarities in 2-d, and KL gradient descent with momentum and early
exaggeration.

This is the O(N^2) algorithm, adequate and exactly testable at desk
scale (N up to a few thousand). Distances are plain Euclidean on the raw
feature rows; no pre-normalization. Initial coordinates are seeded per
point (keyed by the point's id when one is given, else by row index) so
permuting input rows permutes output rows.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass

import numpy as np

from .embedding import EmbeddingSet
from .errors import DataError
from .rng import RngStream

_EPS = 1e-12


@dataclass(frozen=True)
class TsneConfig:
    perplexity: float = 30.0
    iterations: int = 1000
    learning_rate: float = 200.0
    early_exaggeration: float = 12.0
    exaggeration_iters: int = 250
    momentum_start: float = 0.5
    momentum_final: float = 0.8
    momentum_switch: int = 250
    seed: int = 0

    def __post_init__(self):
        if self.perplexity <= 1:
            raise DataError(f"perplexity must exceed 1, got {self.perplexity}")
        if self.learning_rate <= 0:
            raise DataError("learning_rate must be positive")
        if self.early_exaggeration < 1:
            raise DataError("early_exaggeration must be >= 1")
        if self.iterations < 1 or self.exaggeration_iters < 0:
            raise DataError("iteration counts must be sensible")


def perplexity_calibration(distances_row: np.ndarray, target_perplexity: float,
                           tol: float = 1e-4, max_iter: int = 50) -> float:
    """Bandwidth sigma for one point's distances to its neighbors such
    that the conditional Gaussian row has perplexity 2^H within tol.
    Bracket-growing followed by bisection, at most max_iter halvings."""
    d = np.asarray(distances_row, dtype=np.float64)
    if d.size < 2:
        raise DataError("need at least 2 neighbors to calibrate")
    if target_perplexity >= d.size:
        raise DataError(f"target perplexity {target_perplexity} needs more "
                        f"than {d.size} neighbors")
    if not d.any():
        raise DataError("all neighbor distances are zero")

    def perp(sigma: float) -> float:
        p = conditional_probs(d, sigma)
        nz = p[p > 0]
        entropy = -(nz * np.log2(nz)).sum()
        return 2.0 ** entropy

    lo, hi = None, None
    sigma = float(np.median(d[d > 0])) or 1.0
    for _ in range(64):  # grow a bracket around the target
        if perp(sigma) < target_perplexity:
            lo = sigma
            sigma *= 2.0
            if perp(sigma) >= target_perplexity:
                hi = sigma
                break
        else:
            hi = sigma
            sigma /= 2.0
            if perp(sigma) < target_perplexity:
                lo = sigma
                break
    if lo is None or hi is None:
        return sigma  # saturated: every sigma under/overshoots
    for _ in range(max_iter):
        sigma = (lo + hi) / 2.0
        p = perp(sigma)
        if abs(p - target_perplexity) < tol:
            break
        if p < target_perplexity:
            lo = sigma
        else:
            hi = sigma
    return sigma


def conditional_probs(distances_row: np.ndarray, sigma: float) -> np.ndarray:
    """Gaussian conditional row p_j ~ exp(-d_j^2 / (2 sigma^2))."""
    d = np.asarray(distances_row, dtype=np.float64)
    logit = -(d * d) / (2.0 * sigma * sigma)
    logit -= logit.max()
    p = np.exp(logit)
    return p / p.sum()


def joint_probabilities(x: np.ndarray, perplexity: float,
                        tol: float = 1e-4) -> np.ndarray:
    """Symmetrized joint P: zero diagonal, P = P.T, sums to 1."""
    n = len(x)
    sq = ((x[:, None, :] - x[None, :, :]) ** 2).sum(-1)
    dist = np.sqrt(np.maximum(sq, 0.0))
    cond = np.zeros((n, n), dtype=np.float64)
    others = np.arange(n)
    for i in range(n):
        mask = others != i
        sigma = perplexity_calibration(dist[i, mask], perplexity, tol)
        cond[i, mask] = conditional_probs(dist[i, mask], sigma)
    joint = (cond + cond.T) / (2.0 * n)
    np.fill_diagonal(joint, 0.0)
    return joint


def kl_divergence(p: np.ndarray, q: np.ndarray) -> float:
    mask = p > 0
    return float((p[mask] * np.log(p[mask] / np.maximum(q[mask], _EPS))).sum())


def _student_t_q(y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    sq = ((y[:, None, :] - y[None, :, :]) ** 2).sum(-1)
    num = 1.0 / (1.0 + sq)
    np.fill_diagonal(num, 0.0)
    q = num / num.sum()
    return np.maximum(q, _EPS), num


def _seeded_init(n: int, ids: list[str] | None, seed: int) -> np.ndarray:
    y = np.empty((n, 2), dtype=np.float64)
    for i in range(n):
        key = zlib.crc32(ids[i].encode()) if ids is not None else i
        y[i] = RngStream(seed).child("tsne-init", key).normal(2) * 1e-4
    return y


def tsne(x: EmbeddingSet | np.ndarray, cfg: TsneConfig = TsneConfig()
         ) -> np.ndarray:
    """2-d coordinates minimizing KL(P || Q). Deterministic for a fixed
    seed; the final KL is checked to be below the initial one."""
    if isinstance(x, EmbeddingSet):
        data, ids = x.matrix, x.ids
    else:
        data, ids = np.asarray(x), None
    n = len(data)
    if n < 5:
        raise DataError(f"t-SNE needs at least 5 points, got {n}")
    if cfg.perplexity >= n / 3:
        raise DataError(f"perplexity {cfg.perplexity} too large for {n} points "
                        f"(needs perplexity < N/3)")

    p = joint_probabilities(np.asarray(data, dtype=np.float64), cfg.perplexity)
    y = _seeded_init(n, ids, cfg.seed)
    q0, _ = _student_t_q(y)
    initial_kl = kl_divergence(p, q0)

    y = _descend(p, y, cfg, cfg.iterations)

    final_kl = kl_divergence(p, _student_t_q(y)[0])
    if not np.isfinite(final_kl) or final_kl >= initial_kl:
        raise DataError(f"t-SNE failed to descend: KL {initial_kl} -> {final_kl}")
    return y


def _descend(p: np.ndarray, y: np.ndarray, cfg: TsneConfig,
             iterations: int) -> np.ndarray:
    # short runs still get an unexaggerated refinement phase
    exaggeration_iters = min(cfg.exaggeration_iters, cfg.iterations // 2)
    momentum_switch = min(cfg.momentum_switch, cfg.iterations // 2)
    update = np.zeros_like(y)
    for it in range(iterations):
        boost = cfg.early_exaggeration if it < exaggeration_iters else 1.0
        momentum = (cfg.momentum_start if it < momentum_switch
                    else cfg.momentum_final)
        q, num = _student_t_q(y)
        coeff = (boost * p - q) * num            # [N, N]
        grad = 4.0 * ((np.diag(coeff.sum(1)) - coeff) @ y)
        update = momentum * update - cfg.learning_rate * grad
        y = y + update
    return y
