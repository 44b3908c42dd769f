"""Training orchestration: scene preparation, the epoch loop, checkpoints,
and evaluation of trained checkpoints.

Epoch structure: every `recluster_interval` epochs, current features are
pooled over superpoints and clustered into primitives, and the resulting
assignments become the pseudo-labels until the next recluster. Every batch
then runs forward -> reliability split -> losses -> backward, updates both
prototype memories, and steps the optimizer. Everything is driven by the run
seed: two runs with the same config produce bitwise-identical loss columns.
"""

from __future__ import annotations

import hashlib
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .cloud import (
    AugmentParams,
    PointCloud,
    augment_colors,
    load_cloud,
    normalize,
    synth_suite,
    voxel_superpoints,
)
from .clustering import class_centroids, kmeans
from .config import Config, config_text
from .errors import ConfigError, DataError, NumericalAbort
from .losses import objective
from .metrics import (
    MetricReport,
    align_and_score,
    align_contingency,
    contingency,
    hungarian,
    metrics_from_confusion,
    primitives_to_categories,
)
from .network import (
    MomentumState,
    NetworkParams,
    backward,
    forward,
    init_network,
    input_features,
    optimizer_step,
    pool_superpoints,
    softmax,
)
from .prototypes import PrototypeBank, ema_update, init_banks
from .reliability import reliability_mask, split

log = logging.getLogger(__name__)

CHECKPOINT_VERSION = 1

# tags keeping the derived seed streams (clustering, batch order, color
# augmentation, evaluation) independent of each other
_SEED_CLUSTER, _SEED_ORDER, _SEED_AUGMENT, _SEED_EVAL = 11, 22, 33, 44


def _subseed(*parts: int) -> int:
    return int(np.random.SeedSequence(list(parts)).generate_state(1)[0])


# --- scene preparation -----------------------------------------------------


@dataclass
class SceneState:
    """A normalized scene with its cached network inputs and, during
    training, the current per-point pseudo-labels."""

    cloud: PointCloud
    inputs: np.ndarray
    pseudo: np.ndarray | None = None


def prepare_cloud(cloud: PointCloud, config: Config) -> SceneState:
    """Normalize, attach voxel superpoints when the cloud brings none, and
    build the input channels."""
    cloud = normalize(cloud)
    if cloud.superpoint_ids is None:
        cloud = PointCloud(
            cloud.positions,
            cloud.colors,
            cloud.gt_labels,
            voxel_superpoints(cloud, config.voxel_size),
        )
    return SceneState(cloud, input_features(cloud, config.neighbor_k))


def prepare_scenes(config: Config) -> tuple[list[SceneState], list[SceneState]]:
    """Training and test scenes per the [data] section."""
    if config.source == "synth":
        clouds = synth_suite(
            config.n_scenes + config.n_test_scenes,
            config.n_classes,
            config.points_per_class,
            config.separation,
            config.noise,
            config.synth_seed,
            class_noise_scale=config.class_noise_scale or None,
        )
        split_at = config.n_scenes
        train, test = clouds[:split_at], clouds[split_at:]
    else:
        train = [load_cloud(p) for p in config.train_files]
        test = [load_cloud(p) for p in config.test_files]
    return (
        [prepare_cloud(c, config) for c in train],
        [prepare_cloud(c, config) for c in test],
    )


# --- training log ----------------------------------------------------------


@dataclass
class EpochRecord:
    epoch: int
    lambda_structure: float
    lambda_reasoning: float
    lr: float
    loss_total: float
    loss_ce: float
    loss_structure: float
    loss_reasoning: float
    consistent_fraction: float
    drift_consistent: float
    drift_ambiguous: float
    n_shared_classes: float
    pseudo_hash: str
    wall_time: float


@dataclass
class TrainLog:
    records: list[EpochRecord] = field(default_factory=list)

    def column(self, name: str) -> list:
        return [getattr(r, name) for r in self.records]


# --- checkpoints -----------------------------------------------------------


@dataclass
class Checkpoint:
    params: NetworkParams
    consistent_bank: PrototypeBank
    ambiguous_bank: PrototypeBank
    epoch: int
    config_text: str


def save_checkpoint(
    path,
    params: NetworkParams,
    consistent_bank: PrototypeBank,
    ambiguous_bank: PrototypeBank,
    config: Config,
    epoch: int,
) -> None:
    arrays = {
        "format_version": np.int64(CHECKPOINT_VERSION),
        "epoch": np.int64(epoch),
        "n_layers": np.int64(len(params.weights)),
        "head_weight": params.head_weight,
        "head_bias": params.head_bias,
        "bank_consistent": consistent_bank.vectors,
        "bank_ambiguous": ambiguous_bank.vectors,
        "config": np.array(config_text(config)),
    }
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        arrays[f"weight_{i}"] = w
        arrays[f"bias_{i}"] = b
    np.savez(path, **arrays)


def load_checkpoint(path) -> Checkpoint:
    p = Path(path)
    if not p.exists():
        raise DataError(f"checkpoint not found: {p}")
    try:
        data = np.load(p)
    except Exception as exc:
        raise DataError(f"{p}: not a readable checkpoint ({exc})") from None
    if "format_version" not in data:
        raise DataError(f"{p}: missing format_version, not a checkpoint")
    version = int(data["format_version"])
    if version != CHECKPOINT_VERSION:
        raise DataError(f"{p}: unsupported checkpoint version {version}")
    n_layers = int(data["n_layers"])
    params = NetworkParams(
        [data[f"weight_{i}"] for i in range(n_layers)],
        [data[f"bias_{i}"] for i in range(n_layers)],
        data["head_weight"],
        data["head_bias"],
    )
    return Checkpoint(
        params,
        PrototypeBank(data["bank_consistent"]),
        PrototypeBank(data["bank_ambiguous"]),
        int(data["epoch"]),
        str(data["config"][()]),
    )


# --- trainer ---------------------------------------------------------------


class Trainer:
    """Owns the model state and runs the epoch loop for one config."""

    def __init__(self, config: Config):
        self.config = config.validate()
        self.train_scenes: list[SceneState] = []
        self.test_scenes: list[SceneState] = []
        self.params: NetworkParams | None = None
        self.velocity: MomentumState | None = None
        self.consistent_bank: PrototypeBank | None = None
        self.ambiguous_bank: PrototypeBank | None = None
        self.log = TrainLog()
        self.n_skipped_steps = 0

    def setup(
        self,
        train_clouds: list[PointCloud] | None = None,
        test_clouds: list[PointCloud] | None = None,
    ) -> "Trainer":
        """Prepare scenes (from the config, or from clouds handed in
        directly) and initialize the model state."""
        cfg = self.config
        if train_clouds is None:
            self.train_scenes, self.test_scenes = prepare_scenes(cfg)
        else:
            self.train_scenes = [prepare_cloud(c, cfg) for c in train_clouds]
            self.test_scenes = [prepare_cloud(c, cfg) for c in test_clouds or []]
        if not self.train_scenes:
            raise DataError("no training scenes")
        dims = {s.inputs.shape[1] for s in self.train_scenes + self.test_scenes}
        if len(dims) != 1:
            raise DataError(f"scenes disagree on input channels: {sorted(dims)}")
        self.params = init_network(
            dims.pop(), cfg.hidden_dims, cfg.n_features, cfg.n_primitives, cfg.seed
        )
        self.velocity = MomentumState.zeros_like(self.params)
        return self

    # -- pieces of the epoch loop --

    def _phase(self, epoch: int) -> tuple[float, float, float]:
        """(lambda_structure, lambda_reasoning, lr) for a 1-based epoch: the
        prototype terms and the lr decay switch on together after the
        configured fraction of training."""
        cfg = self.config
        switch = int(round(cfg.schedule_fraction * cfg.epochs))
        if epoch > switch:
            return cfg.lambda_structure, cfg.lambda_reasoning, cfg.lr * cfg.lr_decay
        return 0.0, 0.0, cfg.lr

    def _recluster(self, epoch: int) -> None:
        cfg = self.config
        pooled_parts = []
        for s in self.train_scenes:
            feats, _, _ = forward(s.inputs, self.params, cfg.logit_scale)
            pooled_parts.append(pool_superpoints(feats, s.cloud.superpoint_ids))
        pooled = np.vstack(pooled_parts)
        if pooled.shape[0] < cfg.n_primitives:
            raise DataError(
                f"{pooled.shape[0]} superpoints cannot seed {cfg.n_primitives} "
                "primitives; lower model.n_primitives or data.voxel_size"
            )
        km = kmeans(
            pooled,
            cfg.n_primitives,
            _subseed(cfg.seed, _SEED_CLUSTER, epoch),
            n_restarts=cfg.kmeans_restarts,
        )
        labels, centers = km.labels, km.centers
        if self.train_scenes[0].pseudo is not None:
            # cluster ids are arbitrary per run; relabel them to maximize
            # point overlap with the outgoing pseudo-labels, so the head and
            # the banks keep their class identities across reclusters
            labels, centers = self._align_cluster_ids(labels, centers)
        offset = 0
        for s, part in zip(self.train_scenes, pooled_parts):
            sp_labels = labels[offset : offset + part.shape[0]]
            s.pseudo = sp_labels[s.cloud.superpoint_ids]
            offset += part.shape[0]
        if self.consistent_bank is None or cfg.reinit_banks_on_recluster:
            self.consistent_bank, self.ambiguous_bank = init_banks(centers)
        log.info(
            "epoch %d: reclustered %d superpoints into %d primitives (inertia %.4g)",
            epoch, pooled.shape[0], cfg.n_primitives, km.inertia,
        )

    def _align_cluster_ids(
        self, sp_labels: np.ndarray, centers: np.ndarray
    ) -> tuple[np.ndarray, np.ndarray]:
        """Permute fresh cluster ids onto the previous pseudo-label ids by
        maximum point overlap (min-cost assignment on the negated counts)."""
        c = self.config.n_primitives
        old = np.concatenate([s.pseudo for s in self.train_scenes])
        new = np.concatenate(
            [
                sp_labels[off : off + s.cloud.superpoint_ids.max() + 1][
                    s.cloud.superpoint_ids
                ]
                for s, off in zip(self.train_scenes, self._superpoint_offsets())
            ]
        )
        overlap = np.zeros((c, c), dtype=np.int64)
        np.add.at(overlap, (new, old), 1)
        mapping = hungarian(-overlap.astype(np.float64)).col_for_row
        aligned_centers = np.empty_like(centers)
        aligned_centers[mapping] = centers
        return mapping[sp_labels], aligned_centers

    def _superpoint_offsets(self) -> list[int]:
        offsets, total = [], 0
        for s in self.train_scenes:
            offsets.append(total)
            total += int(s.cloud.superpoint_ids.max()) + 1
        return offsets

    def _pseudo_hash(self) -> str:
        h = hashlib.sha1()
        for s in self.train_scenes:
            h.update(s.pseudo.tobytes())
        return h.hexdigest()[:12]

    def _batch_inputs(self, scene_idx: int, epoch: int) -> np.ndarray:
        cfg = self.config
        if cfg.shift_range == 0 and cfg.contrast_range == 0 and cfg.jitter_sigma == 0:
            return self.train_scenes[scene_idx].inputs
        aug = augment_colors(
            self.train_scenes[scene_idx].cloud,
            AugmentParams(
                cfg.shift_range,
                cfg.contrast_range,
                cfg.jitter_sigma,
                _subseed(cfg.seed, _SEED_AUGMENT, epoch, scene_idx),
            ),
        )
        return input_features(aug, cfg.neighbor_k)

    def _epoch(self, epoch: int) -> EpochRecord:
        cfg = self.config
        lam1, lam2, lr = self._phase(epoch)
        order = np.random.default_rng(
            _subseed(cfg.seed, _SEED_ORDER, epoch)
        ).permutation(len(self.train_scenes))
        start_cons = self.consistent_bank.vectors.copy()
        start_amb = self.ambiguous_bank.vectors.copy()

        sums = np.zeros(5)  # total, ce, structure, reasoning, shared classes
        n_batches = 0
        n_consistent = n_points = 0
        for b_start in range(0, order.size, cfg.batch_scenes):
            group = order[b_start : b_start + cfg.batch_scenes]
            x = np.vstack([self._batch_inputs(si, epoch) for si in group])
            pseudo = np.concatenate([self.train_scenes[si].pseudo for si in group])
            feats, logits, cache = forward(x, self.params, cfg.logit_scale)
            if not (np.isfinite(logits).all() and np.isfinite(feats).all()):
                raise NumericalAbort(
                    f"non-finite network outputs at epoch {epoch}, "
                    f"batch {n_batches} (scenes {group.tolist()}); "
                    "the optimization has diverged - lower the learning rate"
                )
            mask = reliability_mask(softmax(logits), pseudo, cfg.tau)
            sets = split(mask)
            report = objective(
                feats, logits, pseudo, sets,
                self.consistent_bank, self.ambiguous_bank,
                momentum=cfg.ema_momentum,
                temperature=cfg.temperature,
                lambda_structure=lam1,
                lambda_reasoning=lam2,
                structure_per_point=cfg.structure_per_point,
                stop_gradient_consistent=cfg.stop_gradient_consistent,
            )
            if not np.isfinite(report.total):
                raise NumericalAbort(
                    f"non-finite loss {report.total!r} at epoch {epoch}, "
                    f"batch {n_batches} (scenes {group.tolist()})"
                )
            grads = backward(self.params, cache, report.grad_logits, report.grad_features)

            # memory updates precede the optimizer step; both use the
            # centroids the losses just saw
            c_cent, c_counts = class_centroids(
                feats[sets.consistent], pseudo[sets.consistent], cfg.n_primitives
            )
            a_cent, a_counts = class_centroids(
                feats[sets.ambiguous], pseudo[sets.ambiguous], cfg.n_primitives
            )
            self.consistent_bank = ema_update(
                self.consistent_bank, c_cent, c_counts, cfg.ema_momentum
            )
            self.ambiguous_bank = ema_update(
                self.ambiguous_bank, a_cent, a_counts, cfg.ema_momentum
            )
            if not optimizer_step(self.params, grads, self.velocity, lr, cfg.sgd_momentum):
                self.n_skipped_steps += 1
                log.warning(
                    "non-finite gradient at epoch %d batch %d: step skipped",
                    epoch, n_batches,
                )
            sums += (report.total, report.cross_entropy, report.structure,
                     report.reasoning, report.n_shared_classes)
            n_batches += 1
            n_consistent += sets.consistent.size
            n_points += sets.n_total

        means = sums / n_batches
        drift_c = float(
            np.sqrt(((self.consistent_bank.vectors - start_cons) ** 2).sum(axis=1)).mean()
        )
        drift_a = float(
            np.sqrt(((self.ambiguous_bank.vectors - start_amb) ** 2).sum(axis=1)).mean()
        )
        return EpochRecord(
            epoch, lam1, lam2, lr,
            float(means[0]), float(means[1]), float(means[2]), float(means[3]),
            n_consistent / n_points, drift_c, drift_a, float(means[4]),
            self._pseudo_hash(), 0.0,
        )

    def run(self, out_dir=None) -> TrainLog:
        """Train per the config; optionally write checkpoints and the log
        CSV under `out_dir`."""
        if self.params is None:
            self.setup()
        cfg = self.config
        out = Path(out_dir) if out_dir is not None else None
        if out is not None:
            out.mkdir(parents=True, exist_ok=True)
        for epoch in range(1, cfg.epochs + 1):
            t0 = time.perf_counter()
            if (epoch - 1) % cfg.recluster_interval == 0:
                self._recluster(epoch)
            record = self._epoch(epoch)
            record.wall_time = time.perf_counter() - t0
            self.log.records.append(record)
            log.info(
                "epoch %d/%d loss %.4f (ce %.4f sl %.4f cr %.4f) consistent %.3f",
                epoch, cfg.epochs, record.loss_total, record.loss_ce,
                record.loss_structure, record.loss_reasoning,
                record.consistent_fraction,
            )
            if (
                out is not None
                and cfg.checkpoint_interval
                and epoch % cfg.checkpoint_interval == 0
            ):
                self.save(out / f"checkpoint_{epoch:04d}.npz", epoch)
        if out is not None:
            self.save(out / "checkpoint.npz", cfg.epochs)
            from .reports import write_train_log

            write_train_log(self.log, out / "train_log.csv")
        return self.log

    def save(self, path, epoch: int) -> None:
        save_checkpoint(
            path, self.params, self.consistent_bank, self.ambiguous_bank,
            self.config, epoch,
        )


# --- evaluation / prediction ----------------------------------------------


def resolve_categories(config: Config, scenes: list[SceneState]) -> int:
    if config.n_categories:
        return config.n_categories
    if config.source == "synth":
        return config.n_classes
    labeled = [s.cloud.gt_labels for s in scenes if s.cloud.gt_labels is not None]
    if not labeled:
        raise ConfigError(
            "model.n_categories must be set when the data has no ground truth"
        )
    return int(max(g.max() for g in labeled)) + 1


def _check_compatible(params: NetworkParams, scenes: list[SceneState]) -> None:
    want = params.weights[0].shape[0]
    for s in scenes:
        if s.inputs.shape[1] != want:
            raise DataError(
                f"checkpoint expects {want} input channels, scene provides "
                f"{s.inputs.shape[1]} (colors / neighbor_k mismatch?)"
            )


def predict_categories(
    params: NetworkParams,
    bank: PrototypeBank,
    scenes: list[SceneState],
    n_categories: int,
    seed: int,
) -> list[np.ndarray]:
    """Per-scene category labels: head argmax picks the primitive, then
    primitives are clustered down to categories via the consistent bank."""
    _check_compatible(params, scenes)
    mapping = primitives_to_categories(bank.vectors, n_categories, _subseed(seed, _SEED_EVAL))
    out = []
    for s in scenes:
        _, logits, _ = forward(s.inputs, params)
        out.append(mapping[np.argmax(logits, axis=1)])
    return out


def evaluate_scenes(
    params: NetworkParams,
    bank: PrototypeBank,
    scenes: list[SceneState],
    n_categories: int,
    seed: int,
    per_scene_alignment: bool = False,
) -> tuple[list[np.ndarray], MetricReport | None]:
    """Predictions plus aligned scores; scores are None when any scene lacks
    ground truth.

    Default is one global alignment over all scenes; with per-scene
    alignment each scene is matched separately and the aligned confusion
    matrices are summed before scoring.
    """
    preds = predict_categories(params, bank, scenes, n_categories, seed)
    gts = [s.cloud.gt_labels for s in scenes]
    if not scenes or any(g is None for g in gts):
        return preds, None
    if per_scene_alignment:
        total = None
        for gt, pred in zip(gts, preds):
            _, conf = align_contingency(contingency(gt, pred, n_categories))
            total = conf if total is None else total + conf
        return preds, metrics_from_confusion(total)
    report = align_and_score(np.concatenate(gts), np.concatenate(preds), n_categories)
    return preds, report


def evaluate_run(
    config: Config, checkpoint: Checkpoint
) -> tuple[list[SceneState], list[np.ndarray], MetricReport | None]:
    """CLI-facing evaluation: build the test scenes for the config and score
    the checkpoint on them (falling back to training scenes when the config
    defines no test split)."""
    train, test = prepare_scenes(config)
    scenes = test or train
    if not scenes:
        raise DataError("config defines no scenes to evaluate")
    n_categories = resolve_categories(config, scenes)
    preds, report = evaluate_scenes(
        checkpoint.params,
        checkpoint.consistent_bank,
        scenes,
        n_categories,
        config.seed,
        config.per_scene_alignment,
    )
    return scenes, preds, report
