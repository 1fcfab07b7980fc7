"""Composite prediction model: per-party sub-models, sigmoid aggregation,
binary log loss and exact partial gradients.

All functions here are pure; they are called concurrently from worker
threads without synchronization.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

SIGMOID_CLAMP = 35.0
PROB_EPS = 1e-15


class ConfigurationError(ValueError):
    """Raised on dimension mismatches between parameters and features."""


@dataclass(frozen=True)
class LocalFeatureVector:
    """One party's sparse slice of a sample's features."""

    sample_id: int
    indices: np.ndarray  # strictly increasing local feature indices
    values: np.ndarray
    dim: int

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.int64)
        val = np.asarray(self.values, dtype=np.float64)
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "values", val)
        if idx.shape != val.shape:
            raise ConfigurationError("index/value length mismatch")
        if idx.size and (np.any(np.diff(idx) <= 0) or idx[0] < 0 or idx[-1] >= self.dim):
            raise ConfigurationError("feature indices must be strictly increasing and < dim")
        if not np.all(np.isfinite(val)):
            raise ConfigurationError("feature values must be finite")


@dataclass
class ParameterBlock:
    """One party's sub-model parameters; the only mutable learner state."""

    party_id: int
    values: np.ndarray

    @property
    def dimension(self) -> int:
        return self.values.size


def sigmoid(s):
    """Logistic function with the pre-activation clamped to avoid overflow."""
    return 1.0 / (1.0 + np.exp(-np.clip(s, -SIGMOID_CLAMP, SIGMOID_CLAMP)))


def aggregate(local_preds) -> float:
    """Final probability: sigmoid of the sum of per-party local predictions."""
    preds = np.asarray(local_preds, dtype=np.float64)
    s = 0.0
    for v in preds:  # fixed party-order accumulation
        s += v
    return float(sigmoid(s))


def log_loss(prediction, label):
    """Binary cross entropy with the probability clamped to [eps, 1-eps]."""
    p = np.clip(prediction, PROB_EPS, 1.0 - PROB_EPS)
    y = np.asarray(label, dtype=np.float64)
    return -(y * np.log(p) + (1.0 - y) * np.log1p(-p))


def h_term(aggregate_sum, label):
    """Chain-rule scalar multiplying each party's local Jacobian.

    For log loss composed with the sigmoid aggregator this collapses to
    sigmoid(sum) - y, always in (-1, 1).
    """
    return sigmoid(aggregate_sum) - np.asarray(label, dtype=np.float64)


class LinearLogit:
    """Linear sub-model: alpha = w . xi (+ bias).

    Parameter layout: [w_0 .. w_{d-1}, bias] when ``use_bias`` else just w.
    The bias is excluded from the L2 regularizer.
    """

    def __init__(self, use_bias: bool = True):
        self.use_bias = use_bias

    def param_dim(self, n_features: int) -> int:
        return n_features + (1 if self.use_bias else 0)

    def init_params(self, n_features: int, seed: int = 0) -> np.ndarray:
        # zeros regardless of seed; signature kept uniform with FeedForward
        return np.zeros(self.param_dim(n_features))

    def _split(self, params, n_features):
        if params.size != self.param_dim(n_features):
            raise ConfigurationError(
                f"parameter block of size {params.size} does not match "
                f"{self.param_dim(n_features)} for {n_features} features"
            )
        if self.use_bias:
            return params[:n_features], params[n_features]
        return params, 0.0

    def local_prediction(self, params: np.ndarray, feat: LocalFeatureVector) -> float:
        w, b = self._split(params, feat.dim)
        return float(np.dot(w[feat.indices], feat.values) + b)

    def batch_prediction(self, params: np.ndarray, x_csr) -> np.ndarray:
        w, b = self._split(params, x_csr.shape[1])
        return x_csr @ w + b

    def partial_gradient(self, params, feat: LocalFeatureVector, h: float, lam: float) -> np.ndarray:
        w, _ = self._split(params, feat.dim)
        g = np.zeros_like(params)
        g[feat.indices] = h * feat.values
        if self.use_bias:
            g[-1] = h
        if lam:
            g[: feat.dim] += lam * w
        return g

    def batch_gradient(self, params, x_csr, h: np.ndarray, lam: float, reduction: str) -> np.ndarray:
        w, _ = self._split(params, x_csr.shape[1])
        gw = x_csr.T @ h
        if reduction == "mean":
            gw = gw / h.size
        g = np.zeros_like(params)
        g[: x_csr.shape[1]] = gw
        if self.use_bias:
            g[-1] = h.mean() if reduction == "mean" else h.sum()
        if lam:
            g[: x_csr.shape[1]] += lam * w
        return g

    def regularizer(self, params, n_features: int) -> float:
        w, _ = self._split(params, n_features)
        return 0.5 * float(np.dot(w, w))

    def regularizer_gradient(self, params, n_features: int) -> np.ndarray:
        g = np.zeros_like(params)
        g[:n_features] = params[:n_features]
        return g


class FeedForward:
    """Two-layer fully connected sub-model with a scalar linear output.

    Layout: [W1 (d*h), b1 (h), w2 (h), b2]. Hidden width and activation are
    configurable; biases are excluded from the regularizer. Weights are
    initialized uniformly in +-sqrt(6/(fan_in+fan_out)).
    """

    def __init__(self, hidden: int = 64, activation: str = "relu"):
        if activation != "relu":
            raise ConfigurationError(f"unsupported activation: {activation}")
        self.hidden = hidden

    def param_dim(self, n_features: int) -> int:
        h = self.hidden
        return n_features * h + h + h + 1

    def init_params(self, n_features: int, seed: int = 0) -> np.ndarray:
        h = self.hidden
        rng = np.random.default_rng(seed)
        lim1 = np.sqrt(6.0 / (n_features + h))
        lim2 = np.sqrt(6.0 / (h + 1))
        params = np.zeros(self.param_dim(n_features))
        params[: n_features * h] = rng.uniform(-lim1, lim1, n_features * h)
        start = n_features * h + h
        params[start : start + h] = rng.uniform(-lim2, lim2, h)
        return params

    def _unpack(self, params, n_features):
        if params.size != self.param_dim(n_features):
            raise ConfigurationError(
                f"parameter block of size {params.size} does not match "
                f"{self.param_dim(n_features)} for {n_features} features"
            )
        h = self.hidden
        w1 = params[: n_features * h].reshape(n_features, h)
        b1 = params[n_features * h : n_features * h + h]
        w2 = params[n_features * h + h : n_features * h + 2 * h]
        b2 = params[-1]
        return w1, b1, w2, b2

    def local_prediction(self, params, feat: LocalFeatureVector) -> float:
        x = np.zeros(feat.dim)
        x[feat.indices] = feat.values
        w1, b1, w2, b2 = self._unpack(params, feat.dim)
        a = np.maximum(x @ w1 + b1, 0.0)
        return float(a @ w2 + b2)

    def batch_prediction(self, params, x_dense: np.ndarray) -> np.ndarray:
        w1, b1, w2, b2 = self._unpack(params, x_dense.shape[1])
        a = np.maximum(x_dense @ w1 + b1, 0.0)
        return a @ w2 + b2

    def partial_gradient(self, params, feat: LocalFeatureVector, h: float, lam: float) -> np.ndarray:
        x = np.zeros(feat.dim)
        x[feat.indices] = feat.values
        g = self.batch_gradient(params, x[None, :], np.array([h]), 0.0, "sum")
        if lam:
            g += lam * self.regularizer_gradient(params, feat.dim)
        return g

    def batch_gradient(self, params, x_dense, h: np.ndarray, lam: float, reduction: str) -> np.ndarray:
        d = x_dense.shape[1]
        w1, b1, w2, _ = self._unpack(params, d)
        z = x_dense @ w1 + b1
        a = np.maximum(z, 0.0)
        da = np.outer(h, w2) * (z > 0.0)
        scale = 1.0 / h.size if reduction == "mean" else 1.0
        g = np.empty_like(params)
        nh = self.hidden
        g[: d * nh] = (x_dense.T @ da).ravel() * scale
        g[d * nh : d * nh + nh] = da.sum(axis=0) * scale
        g[d * nh + nh : d * nh + 2 * nh] = (a.T @ h) * scale
        g[-1] = h.sum() * scale
        if lam:
            g += lam * self.regularizer_gradient(params, d)
        return g

    def regularizer(self, params, n_features: int) -> float:
        w1, _, w2, _ = self._unpack(params, n_features)
        return 0.5 * (float(np.sum(w1 * w1)) + float(np.dot(w2, w2)))

    def regularizer_gradient(self, params, n_features: int) -> np.ndarray:
        h = self.hidden
        g = params.copy()
        g[n_features * h : n_features * h + h] = 0.0  # b1
        g[-1] = 0.0  # b2
        return g


def submodel_from_name(name: str, hidden: int = 64, use_bias: bool = True):
    if name == "lr":
        return LinearLogit(use_bias=use_bias)
    if name == "nn":
        return FeedForward(hidden=hidden)
    raise ConfigurationError(f"unknown sub-model kind: {name}")


def local_prediction(block: ParameterBlock, features: LocalFeatureVector, kind) -> float:
    """Scalar local prediction of one party's sub-model."""
    return kind.local_prediction(block.values, features)


def partial_gradient(block: ParameterBlock, features: LocalFeatureVector,
                     h: float, lam: float, kind) -> np.ndarray:
    """Gradient of the per-sample objective restricted to one party's block."""
    return kind.partial_gradient(block.values, features, h, lam)


def regularizer_value(block: ParameterBlock, lam: float, kind, n_features: int) -> float:
    return lam * kind.regularizer(block.values, n_features)
