"""Estimator-style front end: fit on unlabeled clouds, predict per-point
categories, transform to the learned embedding.

This wraps the Trainer in the familiar fit/predict surface so the method
slots into existing tooling (grid search, pipelines, clone). Only the
commonly swept knobs are constructor parameters; anything else is reachable
by using `Config` and `Trainer` directly.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .cloud import PointCloud
from .config import Config
from .errors import DataError
from .metrics import MetricReport, align_and_score
from .network import forward
from .trainer import Trainer, evaluate_scenes, prepare_cloud, resolve_categories
from .validation import as_float_matrix


def _as_clouds(X) -> tuple[list[PointCloud], bool]:
    """Accept a PointCloud, a list of them, or an (N, 3|6) array; returns
    (clouds, input_was_single_scene)."""
    if isinstance(X, PointCloud):
        return [X], True
    if isinstance(X, np.ndarray):
        x = as_float_matrix(X, "X")
        if x.shape[1] == 3:
            return [PointCloud(x)], True
        if x.shape[1] == 6:
            return [PointCloud(x[:, :3], np.clip(x[:, 3:], 0.0, 1.0))], True
        raise DataError(f"array input must have 3 or 6 columns, got {x.shape[1]}")
    clouds = list(X)
    if not clouds or not all(isinstance(c, PointCloud) for c in clouds):
        raise DataError("X must be a PointCloud, an (N, 3|6) array, or a list of PointClouds")
    return clouds, False


class PrototypeSegmenter(BaseEstimator):
    """Unsupervised semantic segmentation of point clouds.

    fit() mines pseudo-labels by clustering pooled features, trains the
    extractor/classifier under the reliability-split prototype losses, and
    keeps the learned prototype memories. predict() assigns each point a
    category in [0, n_categories). No ground truth is ever consumed during
    fitting; labels on the clouds are used only by score().
    """

    def __init__(
        self,
        n_categories: int = 0,
        n_primitives: int = 24,
        n_features: int = 16,
        hidden_dims: tuple[int, ...] = (32, 32),
        tau: float = 0.7,
        ema_momentum: float = 0.99,
        temperature: float = 0.1,
        lambda_structure: float = 1.0,
        lambda_reasoning: float = 1.0,
        schedule_fraction: float = 0.5,
        epochs: int = 60,
        lr: float = 1e-2,
        voxel_size: float = 0.04,
        neighbor_k: int = 0,
        recluster_interval: int = 5,
        seed: int = 0,
    ):
        self.n_categories = n_categories
        self.n_primitives = n_primitives
        self.n_features = n_features
        self.hidden_dims = hidden_dims
        self.tau = tau
        self.ema_momentum = ema_momentum
        self.temperature = temperature
        self.lambda_structure = lambda_structure
        self.lambda_reasoning = lambda_reasoning
        self.schedule_fraction = schedule_fraction
        self.epochs = epochs
        self.lr = lr
        self.voxel_size = voxel_size
        self.neighbor_k = neighbor_k
        self.recluster_interval = recluster_interval
        self.seed = seed

    def _config(self) -> Config:
        return Config(
            n_categories=self.n_categories,
            n_primitives=self.n_primitives,
            n_features=self.n_features,
            hidden_dims=tuple(self.hidden_dims),
            tau=self.tau,
            ema_momentum=self.ema_momentum,
            temperature=self.temperature,
            lambda_structure=self.lambda_structure,
            lambda_reasoning=self.lambda_reasoning,
            schedule_fraction=self.schedule_fraction,
            epochs=self.epochs,
            lr=self.lr,
            voxel_size=self.voxel_size,
            neighbor_k=self.neighbor_k,
            recluster_interval=self.recluster_interval,
            seed=self.seed,
        ).validate()

    def fit(self, X, y=None) -> "PrototypeSegmenter":
        clouds, _ = _as_clouds(X)
        config = self._config()
        trainer = Trainer(config).setup(train_clouds=clouds)
        trainer.run()
        self.config_ = config
        self.params_ = trainer.params
        self.consistent_bank_ = trainer.consistent_bank
        self.ambiguous_bank_ = trainer.ambiguous_bank
        self.log_ = trainer.log
        self.n_categories_ = resolve_categories(config, trainer.train_scenes)
        return self

    def _prepared(self, X):
        clouds, single = _as_clouds(X)
        return [prepare_cloud(c, self.config_) for c in clouds], single

    def predict(self, X):
        """Per-point categories; a list input yields one array per cloud."""
        check_is_fitted(self, "params_")
        scenes, single = self._prepared(X)
        preds, _ = evaluate_scenes(
            self.params_, self.consistent_bank_, scenes, self.n_categories_, self.seed
        )
        return preds[0] if single else preds

    def fit_predict(self, X, y=None):
        return self.fit(X).predict(X)

    def transform(self, X):
        """Per-point unit-norm embeddings; a list input yields one array per
        cloud."""
        check_is_fitted(self, "params_")
        scenes, single = self._prepared(X)
        feats = [forward(s.inputs, self.params_)[0] for s in scenes]
        return feats[0] if single else feats

    def evaluate(self, X) -> MetricReport:
        """Aligned scores against the ground truth carried by the clouds."""
        check_is_fitted(self, "params_")
        scenes, _ = self._prepared(X)
        _, report = evaluate_scenes(
            self.params_, self.consistent_bank_, scenes, self.n_categories_, self.seed
        )
        if report is None:
            raise DataError("evaluate() needs clouds with gt_labels")
        return report

    def score(self, X, y=None) -> float:
        """Mean IoU after optimal alignment; y overrides embedded labels."""
        if y is None:
            return self.evaluate(X).mean_iou
        check_is_fitted(self, "params_")
        preds = self.predict(X)
        if isinstance(preds, list):
            preds = np.concatenate(preds)
            y = np.concatenate([np.asarray(v) for v in y])
        return align_and_score(y, preds, self.n_categories_).mean_iou
