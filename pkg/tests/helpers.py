"""Shared test utilities: finite differences and small problem builders."""

import numpy as np

from protoseg.network import NetworkParams, flatten_params, forward, init_network, unflatten_params
from protoseg.reliability import SplitSets

FD_STEP = 1e-5
FD_TOL = 1e-4


def central_diff(f, x: np.ndarray, step: float = FD_STEP) -> np.ndarray:
    """Central finite differences of a scalar function, one coordinate at a
    time, in double precision."""
    x = np.asarray(x, dtype=np.float64)
    grad = np.zeros_like(x)
    for i in range(x.size):
        xp = x.copy()
        xm = x.copy()
        xp[i] += step
        xm[i] -= step
        grad[i] = (f(xp) - f(xm)) / (2.0 * step)
    return grad


def max_rel_err(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-6) -> float:
    """Largest |a - n| relative to the largest magnitude in either gradient
    (with an absolute floor so all-zero gradients compare absolutely)."""
    denom = max(np.abs(analytic).max(initial=0.0), np.abs(numeric).max(initial=0.0), floor)
    return float(np.abs(analytic - numeric).max(initial=0.0) / denom)


def fd_against(f, x: np.ndarray, analytic: np.ndarray, step: float = FD_STEP) -> float:
    return max_rel_err(np.asarray(analytic, dtype=np.float64).ravel(), central_diff(f, x.ravel(), step))


def small_network(seed: int, n_in: int = 6, hidden=(7,), n_features: int = 8, n_classes: int = 5):
    """A network sized for criterion-scale gradient checks (D=8, L=5)."""
    return init_network(n_in, hidden, n_features, n_classes, seed)


def network_loss_fn(x: np.ndarray, template: NetworkParams, loss_at_outputs, logit_scale: float = 1.0):
    """Wrap a loss defined at (features, logits) into a scalar function of the
    flattened parameter vector, for finite differences through the network."""

    def f(vec: np.ndarray) -> float:
        p = unflatten_params(vec, template)
        features, logits, _ = forward(x, p, logit_scale)
        return loss_at_outputs(features, logits)

    return f


def random_split(rng: np.random.Generator, n: int) -> SplitSets:
    """A random consistent/ambiguous partition with both sides non-empty."""
    mask = rng.random(n) < rng.uniform(0.2, 0.8)
    if n >= 2:
        i, j = rng.choice(n, size=2, replace=False)
        mask[i], mask[j] = True, False
    idx = np.arange(n)
    return SplitSets(idx[mask], idx[~mask])


def flat_size(params: NetworkParams) -> int:
    return flatten_params(params).size
