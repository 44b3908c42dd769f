import numpy as np
import pytest

from protoseg.clustering import class_centroids
from protoseg.errors import ConfigError, DataError
from protoseg.prototypes import PrototypeBank, effective_prototypes, ema_update, init_banks


def test_init_banks_copies():
    centers = np.arange(6.0).reshape(2, 3)
    c, a = init_banks(centers)
    assert np.array_equal(c.vectors, centers)
    assert np.array_equal(a.vectors, centers)
    c.vectors[0, 0] = 99.0
    assert a.vectors[0, 0] == 0.0  # independent copies
    assert centers[0, 0] == 0.0


def test_ema_exactness_reference_case():
    # momentum 0.99, bank at 0, batch at 1 -> exactly 0.01
    bank = PrototypeBank(np.zeros((1, 4)))
    out = ema_update(bank, np.ones((1, 4)), np.array([3]), momentum=0.99)
    assert np.abs(out.vectors - 0.01).max() <= 1e-15


def test_ema_absent_rows_untouched_and_hull_bound():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        k, d = int(rng.integers(1, 6)), int(rng.integers(1, 5))
        bank = PrototypeBank(rng.normal(size=(k, d)))
        cent = rng.normal(size=(k, d))
        counts = rng.integers(0, 3, size=k)
        m = float(rng.uniform(0.0, 0.999))
        out = ema_update(bank, cent, counts, m)
        for i in range(k):
            if counts[i] == 0:
                assert np.array_equal(out.vectors[i], bank.vectors[i])
            else:
                lo = np.minimum(bank.vectors[i], cent[i]) - 1e-12
                hi = np.maximum(bank.vectors[i], cent[i]) + 1e-12
                assert (out.vectors[i] >= lo).all() and (out.vectors[i] <= hi).all()


def test_effective_prototypes_agree_bitwise_with_update():
    rng = np.random.default_rng(1)
    for _ in range(1000):
        k, d = int(rng.integers(1, 7)), int(rng.integers(1, 6))
        bank = PrototypeBank(rng.normal(size=(k, d)))
        cent = rng.normal(size=(k, d))
        counts = rng.integers(0, 4, size=k)
        m = float(rng.uniform(0.0, 0.999))
        eff, present = effective_prototypes(bank, cent, counts, m)
        upd = ema_update(bank, cent, counts, m)
        assert np.array_equal(eff, upd.vectors)  # bitwise, not approx
        assert np.array_equal(present, counts > 0)


def test_ema_sequence_matches_closed_form():
    # repeated updates against a constant centroid converge geometrically
    bank = PrototypeBank(np.array([[1.0, 0.0]]))
    target = np.array([[0.0, 1.0]])
    counts = np.array([1])
    vecs = bank
    for step in range(1, 6):
        vecs = ema_update(vecs, target, counts, momentum=0.5)
        want = 0.5**step * bank.vectors + (1 - 0.5**step) * target
        assert np.allclose(vecs.vectors, want, atol=1e-14)


def test_momentum_range_checked():
    bank = PrototypeBank(np.zeros((2, 2)))
    cent = np.zeros((2, 2))
    counts = np.array([1, 1])
    with pytest.raises(ConfigError):
        ema_update(bank, cent, counts, momentum=1.0)
    with pytest.raises(ConfigError):
        ema_update(bank, cent, counts, momentum=-0.1)


def test_shape_mismatch_rejected():
    bank = PrototypeBank(np.zeros((2, 3)))
    with pytest.raises(DataError):
        ema_update(bank, np.zeros((3, 3)), np.array([1, 1, 1]), momentum=0.9)


def test_update_from_real_centroids():
    feats = np.array([[2.0, 0.0], [4.0, 0.0], [0.0, 8.0]])
    labels = np.array([0, 0, 1])
    cent, counts = class_centroids(feats, labels, 3)
    bank = PrototypeBank(np.ones((3, 2)))
    out = ema_update(bank, cent, counts, momentum=0.9)
    assert np.allclose(out.vectors[0], 0.9 * np.ones(2) + 0.1 * np.array([3.0, 0.0]))
    assert np.allclose(out.vectors[1], 0.9 * np.ones(2) + 0.1 * np.array([0.0, 8.0]))
    assert np.array_equal(out.vectors[2], np.ones(2))
