"""Synthetic featurizer and minimal differentiable perception models.

Two model families cover all three tasks: a shared per-position softmax
classifier for discrete symbols and a Gaussian distance regressor for graphs.
Gradients are written by hand (one hidden tanh layer each); there is no
autodiff engine here on purpose.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

_PROTOTYPE_STREAM = 101
_MODEL_STREAM = 202
_FEATURE_STREAM = 303

LOG_2PI = math.log(2.0 * math.pi)


def _rng(*entropy) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy))


class Featurizer:
    """Deterministic prototype-based stand-in for raw symbol images.

    Each class owns a fixed unit-vector prototype drawn once from ``seed``;
    a feature draw is ``scale * prototype + N(0, noise_sigma^2)`` per
    dimension, so classes are separable but individual draws are noisy.
    """

    def __init__(self, num_classes: int, feature_dim: int = 16, scale: float = 3.0,
                 noise_sigma: float = 0.6, seed: int = 0):
        if num_classes < 2:
            raise ValueError("need at least two classes")
        if noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")
        self.num_classes = num_classes
        self.feature_dim = feature_dim
        self.scale = scale
        self.noise_sigma = noise_sigma
        self.seed = seed
        rng = _rng(seed, _PROTOTYPE_STREAM)
        while True:
            raw = rng.normal(size=(num_classes, feature_dim))
            protos = raw / np.linalg.norm(raw, axis=1, keepdims=True)
            gram = protos @ protos.T
            np.fill_diagonal(gram, -1.0)
            # pairwise distinct with margin; a redraw is astronomically rare
            if gram.max() < 0.999:
                break
        self.prototypes = protos

    def features(self, symbol_class: int, rng: np.random.Generator) -> np.ndarray:
        """One noisy feature vector for ``symbol_class``."""
        if not 0 <= symbol_class < self.num_classes:
            raise ValueError(f"class {symbol_class} out of range [0, {self.num_classes})")
        base = self.scale * self.prototypes[symbol_class]
        if self.noise_sigma == 0:
            return base.copy()
        return base + rng.normal(0.0, self.noise_sigma, size=self.feature_dim)

    def features_for_classes(self, classes, feature_seed: int) -> np.ndarray:
        """Feature matrix for a class sequence, reproducible from one seed."""
        rng = _rng(feature_seed, _FEATURE_STREAM)
        return np.stack([self.features(c, rng) for c in classes])

    def nearest_prototype(self, feature: np.ndarray) -> int:
        dists = np.linalg.norm(self.scale * self.prototypes - feature, axis=1)
        return int(np.argmin(dists))


class Mlp:
    """One-hidden-layer tanh network with Glorot-uniform init."""

    def __init__(self, in_dim: int, hidden: int, out_dim: int, seed: int = 0):
        self.in_dim = in_dim
        self.hidden = hidden
        self.out_dim = out_dim
        self.seed = seed
        rng = _rng(seed, _MODEL_STREAM)
        l1 = math.sqrt(6.0 / (in_dim + hidden))
        l2 = math.sqrt(6.0 / (hidden + out_dim))
        self.params = {
            "w1": rng.uniform(-l1, l1, size=(in_dim, hidden)),
            "b1": np.zeros(hidden),
            "w2": rng.uniform(-l2, l2, size=(hidden, out_dim)),
            "b2": np.zeros(out_dim),
        }
        # bumped by every optimizer step; lets cached per-example scores
        # detect staleness
        self.version = 0

    def forward(self, x: np.ndarray) -> np.ndarray:
        h = np.tanh(x @ self.params["w1"] + self.params["b1"])
        return h @ self.params["w2"] + self.params["b2"]

    def forward_with_hidden(self, x: np.ndarray):
        h = np.tanh(x @ self.params["w1"] + self.params["b1"])
        return h @ self.params["w2"] + self.params["b2"], h

    def zero_like_params(self) -> dict:
        return {k: np.zeros_like(v) for k, v in self.params.items()}

    def flat_params(self) -> np.ndarray:
        return np.concatenate([v.ravel() for v in self.params.values()])


class ClassifierModel(Mlp):
    """Shared per-position symbol classifier: features -> class logits."""

    kind = "classifier"

    def __init__(self, feature_dim: int, hidden: int, num_classes: int, seed: int = 0):
        super().__init__(feature_dim, hidden, num_classes, seed)
        self.num_classes = num_classes


class RegressorModel(Mlp):
    """Distance regressor: flattened graph encoding -> one value per node."""

    kind = "regressor"

    def __init__(self, in_dim: int, hidden: int, num_nodes: int, seed: int = 0, sigma: float = 1.0):
        super().__init__(in_dim, hidden, num_nodes, seed)
        if sigma <= 0:
            raise ValueError("sigma must be positive")
        self.num_nodes = num_nodes
        self.sigma = sigma


def log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def logp_discrete(model: ClassifierModel, features: np.ndarray, tokens) -> float:
    """Sum of per-position log-probabilities of a token vector."""
    features = np.asarray(features, dtype=float)
    tokens = np.asarray(tokens, dtype=int)
    if features.shape[0] != tokens.shape[0]:
        raise ValueError(f"{features.shape[0]} feature rows but {tokens.shape[0]} tokens")
    if tokens.min() < 0 or tokens.max() >= model.num_classes:
        raise ValueError("token id out of range")
    ls = log_softmax(model.forward(features))
    return float(ls[np.arange(tokens.shape[0]), tokens].sum())


def logp_gaussian(model: RegressorModel, instance_features: np.ndarray, z: np.ndarray) -> float:
    """Diagonal-Gaussian log-density of a distance vector around the model mean."""
    mean = model.forward(np.asarray(instance_features, dtype=float))
    z = np.asarray(z, dtype=float)
    if z.shape != mean.shape:
        raise ValueError(f"state has shape {z.shape}, model emits {mean.shape}")
    d = z.shape[0]
    resid = z - mean
    var = model.sigma**2
    return float(-(resid @ resid) / (2.0 * var) - 0.5 * d * (LOG_2PI + math.log(var)))


def grad_nll(model: Mlp, batch) -> dict:
    """Mean negative-log-likelihood gradient over a batch.

    Classifier batches are ``(features (L,d), tokens (L,))`` pairs, with the
    per-position output signal softmax - onehot.  Regressor batches are
    ``(instance_features (d,), z (n,))`` pairs with the squared-error signal
    scaled by 1/sigma^2.
    """
    if len(batch) == 0:
        raise ValueError("empty batch")
    if model.kind == "classifier":
        xs = np.concatenate([np.asarray(f, dtype=float) for f, _ in batch], axis=0)
        ys = np.concatenate([np.asarray(t, dtype=int) for _, t in batch])
        logits, h = model.forward_with_hidden(xs)
        delta = softmax(logits)
        delta[np.arange(ys.shape[0]), ys] -= 1.0
        delta /= len(batch)
    else:
        xs = np.stack([np.asarray(f, dtype=float) for f, _ in batch])
        zs = np.stack([np.asarray(z, dtype=float) for _, z in batch])
        mean, h = model.forward_with_hidden(xs)
        delta = (mean - zs) / (model.sigma**2 * len(batch))
    grads = {
        "w2": h.T @ delta,
        "b2": delta.sum(axis=0),
    }
    dh = (delta @ model.params["w2"].T) * (1.0 - h**2)
    grads["w1"] = xs.T @ dh
    grads["b1"] = dh.sum(axis=0)
    return grads


@dataclass
class OptimState:
    """SGD or Adam state; Adam keeps bias-corrected moment estimates."""

    kind: str
    learning_rate: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    step_count: int = 0

    def __post_init__(self) -> None:
        if self.kind not in ("sgd", "adam"):
            raise ValueError(f"unknown optimizer {self.kind!r}")
        if self.learning_rate <= 0:
            raise ValueError("learning rate must be positive")


def optimizer_step(model: Mlp, opt: OptimState, grads: dict) -> None:
    """Apply one in-place parameter update and bump the model version."""
    for name, p in model.params.items():
        if name not in grads or grads[name].shape != p.shape:
            raise ValueError(f"gradient for {name!r} missing or mis-shaped")
    opt.step_count += 1
    if opt.kind == "sgd":
        for name, p in model.params.items():
            p -= opt.learning_rate * grads[name]
    else:
        if not opt.m:
            opt.m = {k: np.zeros_like(v) for k, v in model.params.items()}
            opt.v = {k: np.zeros_like(v) for k, v in model.params.items()}
        t = opt.step_count
        bc1 = 1.0 - opt.beta1**t
        bc2 = 1.0 - opt.beta2**t
        for name, p in model.params.items():
            g = grads[name]
            opt.m[name] = opt.beta1 * opt.m[name] + (1.0 - opt.beta1) * g
            opt.v[name] = opt.beta2 * opt.v[name] + (1.0 - opt.beta2) * g**2
            m_hat = opt.m[name] / bc1
            v_hat = opt.v[name] / bc2
            p -= opt.learning_rate * m_hat / (np.sqrt(v_hat) + opt.eps)
    model.version += 1


def predict_argmax(model: Mlp, features: np.ndarray) -> np.ndarray:
    """Deterministic decoding: per-position argmax (ties -> lowest class) for
    the classifier, the predicted mean for the regressor."""
    out = model.forward(np.asarray(features, dtype=float))
    if model.kind == "classifier":
        return np.argmax(out, axis=-1)
    return out


class DiscreteScorer:
    """Per-example log-probability lookup for the sampler's inner loop.

    Caches one forward pass (a positions-by-classes table of per-position
    log-softmax values) so scoring a proposed token vector is a table walk.
    ``value_offset`` maps state values to class indices (board digits 1..4
    are classes 0..3; formula tokens are their own classes).
    """

    __slots__ = ("table", "length", "offset")

    def __init__(self, log_table: np.ndarray, value_offset: int = 0):
        self.table = log_table.tolist()
        self.length = len(self.table)
        self.offset = value_offset

    def logp(self, state) -> float:
        table = self.table
        offset = self.offset
        total = 0.0
        for j in range(self.length):
            total += table[j][state[j] - offset]
        return total


class GaussianScorer:
    """Per-example Gaussian log-density around a cached predicted mean."""

    __slots__ = ("mean", "inv_two_var", "const")

    def __init__(self, mean: np.ndarray, sigma: float):
        self.mean = mean
        self.inv_two_var = 1.0 / (2.0 * sigma**2)
        d = mean.shape[0]
        self.const = -0.5 * d * (LOG_2PI + 2.0 * math.log(sigma))

    def logp(self, state) -> float:
        resid = state - self.mean
        return float(-(resid @ resid) * self.inv_two_var + self.const)


def discrete_scorer(model: ClassifierModel, features: np.ndarray,
                    value_offset: int = 0) -> DiscreteScorer:
    return DiscreteScorer(log_softmax(model.forward(features)), value_offset)


def gaussian_scorer(model: RegressorModel, instance_features: np.ndarray) -> GaussianScorer:
    return GaussianScorer(model.forward(instance_features), model.sigma)


def uniform_classifier(feature_dim: int, num_classes: int) -> ClassifierModel:
    """Zero-weight classifier: uniform softmax at every position."""
    model = ClassifierModel(feature_dim, 1, num_classes, seed=0)
    for p in model.params.values():
        p[...] = 0.0
    return model


def save_checkpoint(model: Mlp, path) -> None:
    """Dump parameter tensors with a shape-bearing header; loads bit-exactly."""
    sigma = model.sigma if model.kind == "regressor" else 0.0
    header = np.array([model.in_dim, model.hidden, model.out_dim, model.seed, model.version])
    np.savez(path, kind=np.array(model.kind), header=header, sigma=np.array(sigma),
             **model.params)


def load_checkpoint(path) -> Mlp:
    with np.load(path, allow_pickle=False) as data:
        kind = str(data["kind"])
        in_dim, hidden, out_dim, seed, version = (int(v) for v in data["header"])
        if kind == "classifier":
            model = ClassifierModel(in_dim, hidden, out_dim, seed)
        else:
            model = RegressorModel(in_dim, hidden, out_dim, seed, sigma=float(data["sigma"]))
        for name in model.params:
            model.params[name] = data[name].copy()
        model.version = version
    return model
