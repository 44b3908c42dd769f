import numpy as np
import pytest
from sklearn.base import clone

from protoseg.cloud import PointCloud, synth_suite
from protoseg.errors import DataError
from protoseg.segmenter import PrototypeSegmenter

SMALL = dict(
    n_categories=3,
    n_primitives=5,
    n_features=6,
    hidden_dims=(8,),
    epochs=6,
    lr=0.02,
    ema_momentum=0.9,
    voxel_size=0.08,
    recluster_interval=2,
    seed=0,
)


def scenes(n=2, seed=5):
    return synth_suite(n, 3, 40, 1.5, 0.12, seed=seed)


def test_get_set_params_and_clone():
    est = PrototypeSegmenter(**SMALL)
    params = est.get_params()
    assert params["n_primitives"] == 5
    assert params["tau"] == 0.7
    est2 = clone(est)
    assert est2.get_params() == params
    est3 = est.set_params(tau=0.6)
    assert est3 is est and est.tau == 0.6


def test_fit_predict_on_cloud_list():
    est = PrototypeSegmenter(**SMALL)
    data = scenes()
    est.fit(data)
    assert est.params_ is not None
    assert est.n_categories_ == 3
    preds = est.predict(data)
    assert isinstance(preds, list) and len(preds) == 2
    for p, c in zip(preds, data):
        assert p.shape == (c.n_points,)
        assert p.min() >= 0 and p.max() < 3
    single = est.predict(data[0])
    assert isinstance(single, np.ndarray)
    assert np.array_equal(single, preds[0])


def test_fit_on_bare_array():
    rng = np.random.default_rng(0)
    pts = np.concatenate(
        [rng.normal(loc=c, scale=0.1, size=(50, 3)) for c in ([0, 0, 0], [2, 0, 0], [0, 2, 0])]
    )
    est = PrototypeSegmenter(**SMALL)
    labels = est.fit_predict(pts)
    assert labels.shape == (150,)
    with pytest.raises(DataError):
        est.predict(np.zeros((4, 5)))


def test_transform_returns_unit_embeddings():
    est = PrototypeSegmenter(**SMALL)
    data = scenes()
    est.fit(data)
    feats = est.transform(data[0])
    assert feats.shape == (data[0].n_points, 6)
    assert np.allclose(np.linalg.norm(feats, axis=1), 1.0, atol=1e-9)


def test_score_against_ground_truth():
    est = PrototypeSegmenter(**SMALL)
    data = scenes()
    est.fit(data)
    s = est.score(data)
    assert 0.0 <= s <= 1.0
    # passing y explicitly must agree with the embedded labels
    y = [c.gt_labels for c in data]
    assert est.score(data, y) == pytest.approx(s)


def test_evaluate_requires_labels():
    est = PrototypeSegmenter(**SMALL)
    data = scenes()
    est.fit(data)
    bare = PointCloud(positions=data[0].positions, colors=data[0].colors)
    with pytest.raises(DataError):
        est.evaluate(bare)


def test_unfitted_predict_raises():
    from sklearn.exceptions import NotFittedError

    with pytest.raises(NotFittedError):
        PrototypeSegmenter(**SMALL).predict(scenes()[0])


def test_same_seed_same_predictions():
    data = scenes()
    a = PrototypeSegmenter(**SMALL).fit(data).predict(data[0])
    b = PrototypeSegmenter(**SMALL).fit(data).predict(data[0])
    assert np.array_equal(a, b)
