"""Logistic classifiers read as fusions of simple mass functions.

A binary classifier ending in ``sigmoid(sum_j beta_j * phi_j(x) + beta_0)``
splits its logit into per-feature weights of evidence
``w_j = beta_j * phi_j(x) + alpha_j`` with ``sum_j alpha_j = beta_0``. Positive
weights support R, negative ones support notR; their Dempster fusion is a mass
function whose plausibility transform gives back the classifier output.

The stand-in classifier here is a one-hidden-layer network whose last stage
standardizes the hidden features (instance normalization with frozen
statistics) and sums ``beta_j * phi_j + alpha_j`` over features.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .evidential import MassFunction, dempster, fold_dempster

log = logging.getLogger(__name__)

ALPHA_SUM_TOL = 1e-9


@dataclass(frozen=True)
class LinearHead:
    betas: np.ndarray
    beta0: float
    alphas: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "betas", np.asarray(self.betas, dtype=float).reshape(-1))
        object.__setattr__(self, "alphas", np.asarray(self.alphas, dtype=float).reshape(-1))
        object.__setattr__(self, "beta0", float(self.beta0))
        if self.betas.shape != self.alphas.shape:
            raise ValueError("betas and alphas differ in length")
        if abs(self.alphas.sum() - self.beta0) > ALPHA_SUM_TOL * max(1.0, abs(self.beta0)):
            raise ValueError(f"alphas sum to {self.alphas.sum()!r}, expected beta0={self.beta0!r}")

    @property
    def dim(self) -> int:
        return len(self.betas)

    @classmethod
    def uniform(cls, betas, beta0: float) -> "LinearHead":
        betas = np.asarray(betas, dtype=float)
        return cls(betas, beta0, np.full(len(betas), beta0 / len(betas)))

    def logit(self, phi: np.ndarray) -> np.ndarray:
        return np.asarray(phi, dtype=float) @ self.betas + self.beta0


def sigmoid(z):
    z = np.asarray(z, dtype=float)
    ez = np.exp(-np.abs(z))
    return np.where(z >= 0, 1.0 / (1.0 + ez), ez / (1.0 + ez))


def weights_of_evidence(head: LinearHead, phi: np.ndarray) -> np.ndarray:
    """Per-feature weights ``beta_j * phi_j + alpha_j``; works row-wise on (n, d)."""
    phi = np.asarray(phi, dtype=float)
    if phi.shape[-1] != head.dim:
        raise ValueError(f"feature dimension {phi.shape[-1]} does not match head dimension {head.dim}")
    return head.betas * phi + head.alphas


def mass_from_weights_array(w: np.ndarray) -> np.ndarray:
    """Dempster fusion of the simple masses ``{R}^{w_j+}`` and ``{notR}^{w_j-}``.

    Returns (..., 3). Both numerator and normalizer are scaled by
    ``exp(min(w+, w-))`` so saturated logits do not produce 0/0.
    """
    w = np.asarray(w, dtype=float)
    wp = np.maximum(w, 0.0).sum(axis=-1)
    wm = np.maximum(-w, 0.0).sum(axis=-1)
    lo = np.minimum(wp, wm)
    ep = np.exp(lo - wp)       # e^{-w+} * e^{lo}
    em = np.exp(lo - wm)       # e^{-w-} * e^{lo}
    both = np.exp(lo - wp - wm)  # e^{-(w+ + w-)} * e^{lo}
    out = np.empty(w.shape[:-1] + (3,))
    # (1 - e^{-w+}) e^{-w-} scaled; -expm1 keeps precision for small weights
    out[..., 0] = -np.expm1(-wp) * em
    out[..., 1] = -np.expm1(-wm) * ep
    out[..., 2] = both
    # 1 - K = e^{-w+} + e^{-w-} - e^{-(w+ + w-)}
    norm = ep + em - both
    return out / norm[..., None]


def mass_from_weights(w) -> MassFunction:
    return MassFunction.from_array(mass_from_weights_array(np.asarray(w, dtype=float)))


def optimize_alpha_closed_form(head: LinearHead, feature_means) -> np.ndarray:
    """Alphas minimizing the summed squared weights of evidence over a dataset.

    Only the per-feature means of the dataset enter the solution.
    """
    fm = np.asarray(feature_means, dtype=float).reshape(-1)
    if fm.shape != head.betas.shape:
        raise ValueError("feature_means length does not match head")
    d = head.dim
    bm = head.betas * fm
    return head.beta0 / d + bm.sum() / d - bm


def optimize_alpha_on_dataset(head: LinearHead, features: np.ndarray) -> LinearHead:
    """Replace alphas by their optimum over ``features`` (n, d); beta0 is kept as is."""
    features = np.asarray(features, dtype=float)
    if features.ndim != 2 or len(features) == 0:
        raise ValueError("need a non-empty (n, d) feature array")
    alphas = optimize_alpha_closed_form(head, features.mean(axis=0))
    return LinearHead(head.betas, head.beta0, alphas)


def fuse_classifier_masses(masses: Sequence[MassFunction]) -> MassFunction:
    """Dempster fusion of per-classifier masses for one point."""
    return fold_dempster(masses)


def fuse_mass_arrays(arrays: Sequence[np.ndarray]) -> np.ndarray:
    """Point-wise Dempster fusion of (n, 3) mass arrays; total conflict resets to vacuous."""
    out = np.asarray(arrays[0], dtype=float)
    for a in arrays[1:]:
        out = dempster(out, a, on_total_conflict="vacuous")
    return out


# ---------------------------------------------------------------------------
# stand-in classifier


@dataclass(frozen=True)
class GlrClassifier:
    feature_names: tuple[str, ...]
    input_mean: np.ndarray
    input_std: np.ndarray
    hidden_weights: np.ndarray  # (d_in, d)
    hidden_bias: np.ndarray     # (d,)
    norm_mean: np.ndarray       # frozen instance-norm statistics, (d,)
    norm_var: np.ndarray
    head: LinearHead
    eps: float = 1e-5

    def hidden(self, x: np.ndarray) -> np.ndarray:
        xs = (np.asarray(x, dtype=float) - self.input_mean) / self.input_std
        return np.tanh(xs @ self.hidden_weights + self.hidden_bias)

    def features(self, x: np.ndarray) -> np.ndarray:
        """Penultimate features phi(x): hidden activations standardized with frozen stats."""
        return (self.hidden(x) - self.norm_mean) / np.sqrt(self.norm_var + self.eps)

    def predict_prob(self, x: np.ndarray) -> np.ndarray:
        return sigmoid(self.head.logit(self.features(x)))

    def weights(self, x: np.ndarray) -> np.ndarray:
        return weights_of_evidence(self.head, self.features(x))

    def masses(self, x: np.ndarray) -> np.ndarray:
        return mass_from_weights_array(self.weights(x))

    def with_head(self, head: LinearHead) -> "GlrClassifier":
        return replace(self, head=head)


@dataclass
class TrainConfig:
    hidden: int = 16
    l2: float = 1e-4
    learning_rate: float = 0.05
    max_epochs: int = 3000
    patience: int = 100
    min_improvement: float = 1e-7
    eps: float = 1e-5
    seed: int = 0


@dataclass
class TrainResult:
    classifier: GlrClassifier
    loss_history: list[float] = field(default_factory=list)
    best_epoch: int = 0


class TrainingError(ValueError):
    pass


def _forward(params, xs, eps):
    w1, b1, beta, alpha = params
    a = xs @ w1 + b1
    h = np.tanh(a)
    mu = h.mean(axis=0)
    var = h.var(axis=0)
    s = np.sqrt(var + eps)
    phi = (h - mu) / s
    z = phi @ beta + alpha.sum()
    return z, (h, mu, var, s, phi)


def _loss_and_grad(params, xs, y, cfg: TrainConfig):
    w1, b1, beta, alpha = params
    n = len(xs)
    z, (h, mu, var, s, phi) = _forward(params, xs, cfg.eps)
    # binary cross-entropy with soft targets, log-sum-exp form
    loss = np.mean(np.logaddexp(0.0, z) - y * z)
    loss += cfg.l2 * (np.sum(w1 ** 2) + np.sum(beta ** 2) + np.sum(alpha ** 2))
    dz = (sigmoid(z) - y) / n
    g_beta = phi.T @ dz + 2 * cfg.l2 * beta
    g_alpha = np.full_like(alpha, dz.sum()) + 2 * cfg.l2 * alpha
    g_phi = np.outer(dz, beta)
    # backprop through the batch standardization
    g_h = (g_phi - g_phi.mean(axis=0) - phi * (g_phi * phi).mean(axis=0)) / s
    g_a = g_h * (1.0 - h ** 2)
    g_w1 = xs.T @ g_a + 2 * cfg.l2 * w1
    g_b1 = g_a.sum(axis=0)
    return loss, (g_w1, g_b1, g_beta, g_alpha)


def train_glr(x: np.ndarray, y: np.ndarray, cfg: TrainConfig = TrainConfig(),
              feature_names: Sequence[str] | None = None) -> TrainResult:
    """Full-batch Adam on soft or hard binary targets.

    Training stops once the loss has not improved by ``min_improvement`` for
    ``patience`` epochs; the best parameters seen are kept and the
    normalization statistics are frozen on them.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float).reshape(-1)
    if x.ndim != 2 or len(x) != len(y):
        raise TrainingError("x must be (n, d_in) with one target per row")
    if np.any((y < 0) | (y > 1)):
        raise TrainingError("targets must lie in [0, 1]")
    hard = y > 0.5
    if hard.sum() < 2 or (~hard).sum() < 2:
        raise TrainingError("need at least two samples of each class")
    names = tuple(feature_names) if feature_names is not None else tuple(f"f{i}" for i in range(x.shape[1]))

    rng = np.random.default_rng(cfg.seed)
    in_mean = x.mean(axis=0)
    in_std = x.std(axis=0)
    in_std = np.where(in_std > 1e-12, in_std, 1.0)
    xs = (x - in_mean) / in_std
    d_in, d = x.shape[1], cfg.hidden
    params = [
        rng.normal(0.0, np.sqrt(2.0 / (d_in + d)), size=(d_in, d)),
        rng.normal(0.0, 0.1, size=d),
        rng.normal(0.0, np.sqrt(1.0 / d), size=d),
        np.zeros(d),
    ]
    m = [np.zeros_like(p) for p in params]
    v = [np.zeros_like(p) for p in params]
    b1_, b2_, tiny = 0.9, 0.999, 1e-8

    best_loss, best_params, best_epoch, history = np.inf, [p.copy() for p in params], 0, []
    for epoch in range(cfg.max_epochs):
        loss, grads = _loss_and_grad(params, xs, y, cfg)
        history.append(float(loss))
        if loss < best_loss - cfg.min_improvement:
            best_loss, best_params, best_epoch = loss, [p.copy() for p in params], epoch
        elif epoch - best_epoch >= cfg.patience:
            break
        t = epoch + 1
        for i, g in enumerate(grads):
            m[i] = b1_ * m[i] + (1 - b1_) * g
            v[i] = b2_ * v[i] + (1 - b2_) * g * g
            params[i] = params[i] - cfg.learning_rate * (m[i] / (1 - b1_ ** t)) / (np.sqrt(v[i] / (1 - b2_ ** t)) + tiny)
    log.info("glr training stopped after %d epochs, best loss %.6f at epoch %d", len(history), best_loss, best_epoch)

    w1, b1, beta, alpha = best_params
    h = np.tanh(xs @ w1 + b1)
    head = LinearHead(beta, float(alpha.sum()), alpha)
    clf = GlrClassifier(names, in_mean, in_std, w1, b1, h.mean(axis=0), h.var(axis=0), head, cfg.eps)
    return TrainResult(clf, history, best_epoch)


def f1_score(pred: np.ndarray, truth: np.ndarray) -> float:
    pred = np.asarray(pred, dtype=bool)
    truth = np.asarray(truth, dtype=bool)
    tp = np.sum(pred & truth)
    fp = np.sum(pred & ~truth)
    fn = np.sum(~pred & truth)
    return float(2 * tp / (2 * tp + fp + fn)) if tp + fp + fn else 1.0
