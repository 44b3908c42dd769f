"""Point feature extractor and primitive classifier head, with the backward
pass written out by hand.

The extractor is a small MLP over per-point input channels: leaky-ReLU
hidden layers, a linear output layer, then L2 row normalization so every
feature lands on the unit sphere (zero rows pass through). The head is one
linear layer from features to primitive logits. Training losses feed two
gradient streams back in — one with respect to the logits, one with respect
to the normalized features — and `backward` merges them, which is why this
is explicit numpy instead of an autograd framework: the merge point and the
normalization Jacobian are the parts worth being able to read.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cloud import PointCloud, nearest_neighbor_indices
from .errors import ConfigError
from .validation import as_float_matrix, check_superpoint_ids

LEAKY_SLOPE = 0.01


@dataclass
class NetworkParams:
    """Extractor layers followed by the head. weights[i]/biases[i] are the
    extractor layers, the last one linear into feature space."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]
    head_weight: np.ndarray  # (D, C)
    head_bias: np.ndarray  # (C,)

    def arrays(self) -> list[np.ndarray]:
        return [*self.weights, *self.biases, self.head_weight, self.head_bias]

    @property
    def n_features(self) -> int:
        return self.weights[-1].shape[1]

    @property
    def n_primitives(self) -> int:
        return self.head_weight.shape[1]


# gradients mirror the parameter structure array-for-array
Gradients = NetworkParams


@dataclass
class ForwardCache:
    """Everything the backward pass needs from one forward evaluation."""

    x: np.ndarray
    pre: list[np.ndarray]  # hidden-layer pre-activations
    hidden: list[np.ndarray]  # hidden-layer outputs after leaky ReLU
    raw: np.ndarray  # features before normalization
    norms: np.ndarray  # per-row L2 norm of raw
    features: np.ndarray  # normalized features (network output)
    logit_scale: float


def init_network(
    n_inputs: int,
    hidden_dims: tuple[int, ...],
    n_features: int,
    n_primitives: int,
    seed: int,
) -> NetworkParams:
    """He-initialized weights (variance matched to the linear output layers),
    zero biases."""
    if n_inputs < 1 or n_features < 1 or n_primitives < 2:
        raise ConfigError("network dimensions must be positive (and >= 2 primitives)")
    rng = np.random.default_rng(seed)
    dims = [n_inputs, *hidden_dims, n_features]
    weights, biases = [], []
    for i in range(len(dims) - 1):
        gain = 2.0 if i < len(dims) - 2 else 1.0  # last extractor layer is linear
        weights.append(rng.normal(0.0, np.sqrt(gain / dims[i]), size=(dims[i], dims[i + 1])))
        biases.append(np.zeros(dims[i + 1]))
    head_w = rng.normal(0.0, np.sqrt(1.0 / n_features), size=(n_features, n_primitives))
    return NetworkParams(weights, biases, head_w, np.zeros(n_primitives))


def forward(
    x: np.ndarray, params: NetworkParams, logit_scale: float = 1.0
) -> tuple[np.ndarray, np.ndarray, ForwardCache]:
    """Returns (unit-norm features (N, D), logits (N, C), cache).

    logits = logit_scale * (features @ head_weight + head_bias). Features
    live on the unit sphere, so without the scale the logits are bounded by
    the head row norms and the softmax cannot sharpen; the fixed scale plays
    the usual inverse-temperature role of cosine classifiers.
    """
    x = as_float_matrix(x, "x", n_cols=params.weights[0].shape[0])
    pre, hidden = [], []
    h = x
    for w, b in zip(params.weights[:-1], params.biases[:-1]):
        z = h @ w + b
        pre.append(z)
        h = np.where(z > 0, z, LEAKY_SLOPE * z)
        hidden.append(h)
    raw = h @ params.weights[-1] + params.biases[-1]
    norms = np.sqrt((raw**2).sum(axis=1))
    features = raw.copy()
    safe = norms > 0
    features[safe] = raw[safe] / norms[safe, None]
    logits = logit_scale * (features @ params.head_weight + params.head_bias)
    return features, logits, ForwardCache(x, pre, hidden, raw, norms, features, logit_scale)


def backward(
    params: NetworkParams,
    cache: ForwardCache,
    grad_logits: np.ndarray,
    grad_features: np.ndarray,
) -> Gradients:
    """Exact gradients of a scalar loss given its gradients at the two
    network outputs.

    The feature stream and the logit stream meet at the normalized features:
    total = grad_features + grad_logits @ head_weight^T. The normalization
    Jacobian for a row with norm n is (I - y y^T)/n; zero-norm rows pass the
    gradient through unchanged, matching the forward pass-through.
    """
    grad_scaled = cache.logit_scale * grad_logits
    g_head_w = cache.features.T @ grad_scaled
    g_head_b = grad_scaled.sum(axis=0)
    g = grad_features + grad_scaled @ params.head_weight.T
    delta = g.copy()
    safe = cache.norms > 0
    y, gs = cache.features[safe], g[safe]
    delta[safe] = (gs - y * (gs * y).sum(axis=1, keepdims=True)) / cache.norms[safe, None]
    grads_w: list[np.ndarray | None] = [None] * len(params.weights)
    grads_b: list[np.ndarray | None] = [None] * len(params.weights)
    for li in range(len(params.weights) - 1, -1, -1):
        inp = cache.x if li == 0 else cache.hidden[li - 1]
        grads_w[li] = inp.T @ delta
        grads_b[li] = delta.sum(axis=0)
        if li > 0:
            delta = delta @ params.weights[li].T
            delta = delta * np.where(cache.pre[li - 1] > 0, 1.0, LEAKY_SLOPE)
    return Gradients(grads_w, grads_b, g_head_w, g_head_b)


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def log_softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


# --- optimizer -------------------------------------------------------------


@dataclass
class MomentumState:
    velocities: list[np.ndarray]

    @classmethod
    def zeros_like(cls, params: NetworkParams) -> "MomentumState":
        return cls([np.zeros_like(a) for a in params.arrays()])


def optimizer_step(
    params: NetworkParams,
    grads: Gradients,
    state: MomentumState,
    lr: float,
    momentum: float = 0.9,
) -> bool:
    """SGD with momentum, in place: v <- m*v + g, w <- w - lr*v.

    If any gradient entry is non-finite the step is skipped entirely
    (params and velocities untouched) and False is returned so the caller
    can log the incident with its own context.
    """
    grad_arrays = grads.arrays()
    if not all(np.isfinite(g).all() for g in grad_arrays):
        return False
    for w, g, v in zip(params.arrays(), grad_arrays, state.velocities):
        v *= momentum
        v += g
        w -= lr * v
    return True


def flatten_params(params: NetworkParams) -> np.ndarray:
    return np.concatenate([a.ravel() for a in params.arrays()])


def unflatten_params(vec: np.ndarray, template: NetworkParams) -> NetworkParams:
    """Inverse of `flatten_params`, shaped after `template` (new arrays)."""
    arrays = []
    offset = 0
    for a in template.arrays():
        arrays.append(vec[offset : offset + a.size].reshape(a.shape).copy())
        offset += a.size
    if offset != vec.size:
        raise ConfigError(f"flat vector has {vec.size} entries, template needs {offset}")
    n_layers = len(template.weights)
    return NetworkParams(
        arrays[:n_layers], arrays[n_layers : 2 * n_layers], arrays[-2], arrays[-1]
    )


# --- superpoint pooling and input channels ---------------------------------


def pool_superpoints(values: np.ndarray, superpoint_ids: np.ndarray) -> np.ndarray:
    """Mean of `values` rows per superpoint: (N, D) -> (S, D), row s
    averaging exactly the points with id s."""
    values = as_float_matrix(values, "values")
    ids = check_superpoint_ids(superpoint_ids, values.shape[0])
    s = int(ids.max()) + 1
    sums = np.zeros((s, values.shape[1]), dtype=np.float64)
    np.add.at(sums, ids, values)
    return sums / np.bincount(ids, minlength=s)[:, None]


def broadcast_superpoints(pooled: np.ndarray, superpoint_ids: np.ndarray) -> np.ndarray:
    """Inverse direction of pooling: copy row s to every point with id s."""
    ids = check_superpoint_ids(superpoint_ids, int(np.asarray(superpoint_ids).size))
    return np.asarray(pooled)[ids]


def input_features(cloud: PointCloud, neighbor_k: int = 0) -> np.ndarray:
    """Per-point network input: position and color channels, optionally
    concatenated with their mean over the k nearest neighbors.

    The neighborhood-mean block gives the extractor a denoised view of the
    local geometry and appearance that no per-point transform can recover.
    """
    base = cloud.raw_channels()
    if neighbor_k <= 0:
        return base.copy()
    nbrs = nearest_neighbor_indices(cloud.positions, neighbor_k)
    return np.hstack([base, base[nbrs].mean(axis=1)])


def n_input_channels(has_colors: bool, neighbor_k: int) -> int:
    base = 6 if has_colors else 3
    return base * 2 if neighbor_k > 0 else base
