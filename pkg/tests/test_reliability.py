import numpy as np
import pytest

from protoseg.errors import ConfigError, DataError
from protoseg.reliability import reliability_mask, split


def rand_probs(rng, n, k):
    z = rng.normal(size=(n, k)) * rng.uniform(0.5, 3.0)
    e = np.exp(z - z.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


def test_truth_table():
    # rows: agree+confident, agree+unconfident, disagree+confident, disagree+unconfident
    probs = np.array(
        [
            [0.8, 0.1, 0.1],
            [0.4, 0.35, 0.25],
            [0.1, 0.8, 0.1],
            [0.25, 0.4, 0.35],
        ]
    )
    pseudo = np.array([0, 0, 0, 0])
    mask = reliability_mask(probs, pseudo, tau=0.7)
    assert mask.tolist() == [True, False, False, False]


def test_confidence_exactly_at_tau_counts():
    probs = np.array([[0.7, 0.2, 0.1]])
    assert reliability_mask(probs, np.array([0]), tau=0.7).tolist() == [True]


def test_argmax_tie_goes_to_lowest_index():
    probs = np.array([[0.45, 0.45, 0.10]])
    assert reliability_mask(probs, np.array([0]), tau=0.4).tolist() == [True]
    assert reliability_mask(probs, np.array([1]), tau=0.4).tolist() == [False]


def test_partition_and_monotonicity_randomized():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        n = int(rng.integers(1, 40))
        k = int(rng.integers(2, 8))
        probs = rand_probs(rng, n, k)
        pseudo = rng.integers(k, size=n)
        t1, t2 = sorted(rng.uniform(0.05, 0.95, size=2))
        m1 = reliability_mask(probs, pseudo, t1)
        m2 = reliability_mask(probs, pseudo, t2)
        # raising tau never adds a consistent point
        assert not (m2 & ~m1).any()
        s = split(m1)
        combined = np.sort(np.concatenate([s.consistent, s.ambiguous]))
        assert np.array_equal(combined, np.arange(n))
        assert np.intersect1d(s.consistent, s.ambiguous).size == 0
        assert s.consistent_fraction == pytest.approx(m1.mean())


def test_mask_ignores_other_entries():
    rng = np.random.default_rng(1)
    for _ in range(200):
        k = int(rng.integers(3, 7))
        probs = rand_probs(rng, 10, k)
        pseudo = rng.integers(k, size=10)
        mask = reliability_mask(probs, pseudo, 0.5)
        top = np.argmax(probs, axis=1)
        shuffled = probs.copy()
        for i in range(10):
            rest = [j for j in range(k) if j != top[i] and j != pseudo[i]]
            shuffled[i, rest] = probs[i, np.random.default_rng(i).permutation(rest)]
        assert np.array_equal(mask, reliability_mask(shuffled, pseudo, 0.5))


def test_split_counts():
    mask = np.array([True, False, True, True, False])
    s = split(mask)
    assert s.consistent.tolist() == [0, 2, 3]
    assert s.ambiguous.tolist() == [1, 4]
    assert s.n_total == 5
    assert s.consistent_fraction == pytest.approx(0.6)


def test_validation_errors():
    probs = np.array([[0.6, 0.4]])
    with pytest.raises(ConfigError):
        reliability_mask(probs, np.array([0]), tau=0.0)
    with pytest.raises(ConfigError):
        reliability_mask(probs, np.array([0]), tau=1.0)
    with pytest.raises(ConfigError):
        reliability_mask(probs, np.array([2]), tau=0.5)  # label out of range
    with pytest.raises(DataError):
        reliability_mask(np.array([[0.9, 0.3]]), np.array([0]), tau=0.5)  # not a distribution
