"""Point-cloud container, file IO, normalization, voxel superpoints, color
augmentation, and synthetic scene generation.

All operations are pure functions of their inputs plus an explicit seed, so
independent scenes can be processed in parallel without shared state.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError
from .validation import (
    check_colors,
    check_labels,
    check_positions,
    check_superpoint_ids,
    compact_ids,
)

log = logging.getLogger(__name__)


@dataclass
class PointCloud:
    """N points with positions and optional colors / ground-truth labels /
    superpoint ids.

    Positions are arbitrary scene units until `normalize` maps them into the
    unit cube. Colors, when present, are reals in [0, 1]. Superpoint ids,
    when present, cover a contiguous range 0..S-1. Instances are treated as
    immutable; operations return new clouds sharing unmodified arrays.
    """

    positions: np.ndarray
    colors: np.ndarray | None = None
    gt_labels: np.ndarray | None = None
    superpoint_ids: np.ndarray | None = None

    def __post_init__(self):
        self.positions = check_positions(self.positions)
        n = self.positions.shape[0]
        if self.colors is not None:
            self.colors = check_colors(self.colors, n)
        if self.gt_labels is not None:
            self.gt_labels = check_labels(self.gt_labels, n)
        if self.superpoint_ids is not None:
            self.superpoint_ids = check_superpoint_ids(self.superpoint_ids, n)

    @property
    def n_points(self) -> int:
        return self.positions.shape[0]

    @property
    def has_colors(self) -> bool:
        return self.colors is not None

    def raw_channels(self) -> np.ndarray:
        """Positions stacked with colors when present: (N, 3) or (N, 6)."""
        if self.colors is None:
            return self.positions
        return np.hstack([self.positions, self.colors])


@dataclass
class AugmentParams:
    """Photometric augmentation: per-scene shift and contrast, per-point jitter."""

    shift_range: float = 0.0
    contrast_range: float = 0.0
    jitter_sigma: float = 0.0
    seed: int = 0

    def __post_init__(self):
        for name in ("shift_range", "contrast_range", "jitter_sigma"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be non-negative")


def normalize(cloud: PointCloud) -> PointCloud:
    """Translate and uniformly scale positions so the bounding box fits [0,1]^3.

    Aspect ratio is preserved: the longest axis spans [0, 1], the others
    start at 0. A fully degenerate cloud (all points coincident) maps to the
    cube center. Colors, labels, and superpoints are unchanged. Idempotent.
    """
    if cloud.n_points < 1:
        raise DataError("cannot normalize an empty cloud")
    mins = cloud.positions.min(axis=0)
    extent = cloud.positions.max(axis=0) - mins
    span = extent.max()
    if span == 0.0:
        positions = np.full_like(cloud.positions, 0.5)
    else:
        positions = (cloud.positions - mins) / span
    return replace(cloud, positions=positions)


def voxel_superpoints(cloud: PointCloud, voxel_size: float) -> np.ndarray:
    """Assign each point the id of its occupied voxel, compacted to 0..S-1.

    Two points share an id iff floor(position / voxel_size) matches on every
    axis. Ids are ordered by lexicographically sorted voxel coordinates.
    """
    if voxel_size <= 0:
        raise ConfigError("voxel_size must be positive")
    cells = np.floor(cloud.positions / voxel_size).astype(np.int64)
    _, ids = np.unique(cells, axis=0, return_inverse=True)
    return ids.astype(np.int64)


def augment_colors(cloud: PointCloud, params: AugmentParams) -> PointCloud:
    """Random global color shift, contrast scale about the channel mean, and
    per-point Gaussian dithering, clamped to [0, 1].

    Shift and contrast are drawn once per scene, jitter per point.
    Deterministic given the seed; all-zero ranges reproduce the input
    exactly. A cloud without colors is returned unchanged with a warning.
    """
    if cloud.colors is None:
        log.warning("augment_colors: cloud has no colors, returning input unchanged")
        return cloud
    rng = np.random.default_rng(params.seed)
    shift = rng.uniform(-params.shift_range, params.shift_range, size=3)
    scale = rng.uniform(1.0 - params.contrast_range, 1.0 + params.contrast_range)
    jitter = rng.normal(0.0, params.jitter_sigma, size=cloud.colors.shape)
    mean = cloud.colors.mean(axis=0)
    out = cloud.colors * scale + (1.0 - scale) * mean + shift + jitter
    return replace(cloud, colors=np.clip(out, 0.0, 1.0))


def _sample_centers(
    rng: np.random.Generator, n_classes: int, separation: float
) -> np.ndarray:
    """Class centers in joint position+color space with pairwise distance
    >= separation. The position box grows if rejection keeps failing."""
    base = max(1.0, float(separation))
    for attempt in range(20000):
        box = base * (1.5 ** (attempt // 2000))
        pos = rng.uniform(0.0, box, size=(n_classes, 3))
        col = rng.uniform(0.15, 0.85, size=(n_classes, 3))
        centers = np.hstack([pos, col])
        diff = centers[:, None, :] - centers[None, :, :]
        d = np.sqrt((diff**2).sum(-1))
        np.fill_diagonal(d, np.inf)
        if d.min() >= separation:
            return centers
    raise DataError(
        f"could not place {n_classes} centers at separation {separation}"
    )


def _noise_scale(class_noise_scale, n_classes: int) -> np.ndarray:
    if class_noise_scale is None or len(class_noise_scale) == 0:
        return np.ones(n_classes)
    scale = np.asarray(class_noise_scale, dtype=np.float64)
    if scale.shape != (n_classes,):
        raise ConfigError(
            f"class_noise_scale needs one entry per class ({n_classes}), got {scale.shape}"
        )
    if (scale <= 0).any():
        raise ConfigError("class_noise_scale entries must be positive")
    return scale


def synth_scene(
    n_classes: int,
    points_per_class: int,
    separation: float,
    noise: float,
    seed: int,
    centers: np.ndarray | None = None,
    class_noise_scale=None,
) -> PointCloud:
    """Gaussian blobs in joint position+color space with ground-truth labels.

    Blob centers sit at pairwise distance >= separation; every point is its
    class center plus isotropic Gaussian noise of std noise (colors clamped
    to [0, 1]). `class_noise_scale` multiplies the noise per class, making
    some classes tight and easy and others diffuse — mirroring how real
    scenes mix crisp structures with scatter. Deterministic given the seed.
    Pre-drawn centers may be passed so several scenes share one layout.
    """
    if n_classes < 2:
        raise ConfigError("n_classes must be >= 2")
    if points_per_class < 1:
        raise ConfigError("points_per_class must be >= 1")
    scale = _noise_scale(class_noise_scale, n_classes)
    rng = np.random.default_rng(seed)
    if centers is None:
        centers = _sample_centers(rng, n_classes, separation)
    labels = np.repeat(np.arange(n_classes, dtype=np.int64), points_per_class)
    sigma = (noise * scale[labels])[:, None]
    pts = centers[labels] + sigma * rng.normal(0.0, 1.0, size=(labels.size, 6))
    return PointCloud(
        positions=pts[:, :3],
        colors=np.clip(pts[:, 3:], 0.0, 1.0),
        gt_labels=labels,
    )


def synth_suite(
    n_scenes: int,
    n_classes: int,
    points_per_class: int,
    separation: float,
    noise: float,
    seed: int,
    class_noise_scale=None,
) -> list[PointCloud]:
    """Scenes drawn around one shared class layout, so class k means the same
    thing in every scene. Scene i differs only in its per-point noise."""
    states = np.random.SeedSequence(seed).generate_state(n_scenes + 1)
    centers = _sample_centers(np.random.default_rng(int(states[0])), n_classes, separation)
    return [
        synth_scene(
            n_classes,
            points_per_class,
            separation,
            noise,
            int(states[i + 1]),
            centers=centers,
            class_noise_scale=class_noise_scale,
        )
        for i in range(n_scenes)
    ]


def nearest_neighbor_indices(positions: np.ndarray, k: int) -> np.ndarray:
    """Indices of the k nearest neighbors per point (self excluded), ordered
    by distance then index. Brute force in row chunks."""
    n = positions.shape[0]
    if not 1 <= k < n:
        raise ConfigError(f"neighbor count k={k} must satisfy 1 <= k < N={n}")
    sq = (positions**2).sum(axis=1)
    out = np.empty((n, k), dtype=np.int64)
    chunk = max(1, int(2**24 // max(n, 1)))
    for start in range(0, n, chunk):
        stop = min(start + chunk, n)
        d2 = sq[start:stop, None] - 2.0 * positions[start:stop] @ positions.T + sq[None, :]
        d2[np.arange(stop - start), np.arange(start, stop)] = np.inf
        part = np.argpartition(d2, k - 1, axis=1)[:, :k]
        order = np.argsort(np.take_along_axis(d2, part, axis=1), axis=1, kind="stable")
        out[start:stop] = np.take_along_axis(part, order, axis=1)
    return out


# --- file IO ---------------------------------------------------------------

_CSV_COLUMNS = ("x", "y", "z", "r", "g", "b", "label", "superpoint")


def _infer_format(path: Path, fmt: str | None) -> str:
    if fmt is not None:
        if fmt not in ("csv", "ply-ascii"):
            raise ConfigError(f"unknown cloud format {fmt!r} (expected 'csv' or 'ply-ascii')")
        return fmt
    suffix = path.suffix.lower()
    if suffix == ".csv":
        return "csv"
    if suffix == ".ply":
        return "ply-ascii"
    raise ConfigError(f"cannot infer format from suffix {suffix!r}; pass format explicitly")


def _parse_float(token: str, path: Path, lineno: int) -> float:
    try:
        return float(token)
    except ValueError:
        raise DataError(f"{path}:{lineno}: non-numeric field {token!r}") from None


def _build_cloud(rows: np.ndarray, index: dict[str, int], path: Path) -> PointCloud:
    positions = rows[:, [index["x"], index["y"], index["z"]]]
    colors = None
    if "r" in index:
        colors = rows[:, [index["r"], index["g"], index["b"]]]
        if colors.size and colors.max() > 1.0:
            colors = colors / 255.0
    gt = None
    if "label" in index:
        gt = rows[:, index["label"]].astype(np.int64)
    sp = None
    if "superpoint" in index:
        sp = compact_ids(rows[:, index["superpoint"]].astype(np.int64))
    try:
        return PointCloud(positions, colors, gt, sp)
    except DataError as exc:
        raise DataError(f"{path}: {exc}") from None


def _load_csv(path: Path) -> PointCloud:
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise DataError(f"{path}: empty file")
    header = [h.strip().lower() for h in lines[0].split(",")]
    for required in ("x", "y", "z"):
        if required not in header:
            raise DataError(f"{path}:1: header is missing required column {required!r}")
    color_cols = [c for c in ("r", "g", "b") if c in header]
    if color_cols and len(color_cols) != 3:
        raise DataError(f"{path}:1: color columns must appear as all of r,g,b")
    index = {name: header.index(name) for name in _CSV_COLUMNS if name in header}
    n_cols = len(header)
    data = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        fields = line.split(",")
        if len(fields) != n_cols:
            raise DataError(
                f"{path}:{lineno}: expected {n_cols} fields, got {len(fields)}"
            )
        data.append([_parse_float(f, path, lineno) for f in fields])
    if not data:
        raise DataError(f"{path}: no data rows")
    return _build_cloud(np.asarray(data, dtype=np.float64), index, path)


def _load_ply(path: Path) -> PointCloud:
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0].strip() != "ply":
        raise DataError(f"{path}:1: not an ascii PLY file (missing 'ply' magic)")
    n_vertices = None
    properties: list[str] = []
    in_vertex = False
    body_start = None
    for i, line in enumerate(lines[1:], start=2):
        parts = line.split()
        if not parts:
            continue
        if parts[0] == "format":
            if len(parts) < 2 or parts[1] != "ascii":
                raise DataError(f"{path}:{i}: only the ascii PLY variant is supported")
        elif parts[0] == "element":
            in_vertex = parts[1] == "vertex"
            if in_vertex:
                try:
                    n_vertices = int(parts[2])
                except (IndexError, ValueError):
                    raise DataError(f"{path}:{i}: malformed vertex element line") from None
        elif parts[0] == "property" and in_vertex:
            if len(parts) < 3:
                raise DataError(f"{path}:{i}: malformed property line")
            properties.append(parts[-1].lower())
        elif parts[0] == "end_header":
            body_start = i
            break
    if body_start is None:
        raise DataError(f"{path}: header has no end_header line")
    if n_vertices is None:
        raise DataError(f"{path}: header declares no vertex element")
    for required in ("x", "y", "z"):
        if required not in properties:
            raise DataError(f"{path}: vertex element is missing property {required!r}")

    rows = []
    lineno = body_start
    for line in lines[body_start:]:
        lineno += 1
        if not line.strip():
            continue
        if len(rows) == n_vertices:
            break
        fields = line.split()
        if len(fields) != len(properties):
            raise DataError(
                f"{path}:{lineno}: expected {len(properties)} values, got {len(fields)}"
            )
        rows.append([_parse_float(f, path, lineno) for f in fields])
    if len(rows) != n_vertices:
        raise DataError(
            f"{path}: header declares {n_vertices} vertices, found {len(rows)}"
        )
    arr = np.asarray(rows, dtype=np.float64)
    index = {"x": properties.index("x"), "y": properties.index("y"), "z": properties.index("z")}
    if all(c in properties for c in ("red", "green", "blue")):
        index["r"] = properties.index("red")
        index["g"] = properties.index("green")
        index["b"] = properties.index("blue")
    if "label" in properties:
        index["label"] = properties.index("label")
    return _build_cloud(arr, index, path)


def load_cloud(path, fmt: str | None = None) -> PointCloud:
    """Read a point cloud from an ascii PLY or CSV file.

    CSV needs a header row with x,y,z and optionally r,g,b (either [0,1]
    reals or [0,255] values, auto-detected by the maximum), label, and
    superpoint columns. PLY needs x,y,z float properties and optionally
    red,green,blue uchar and label. Parse failures report the line number.
    """
    p = Path(path)
    if not p.exists():
        raise DataError(f"cloud file not found: {p}")
    kind = _infer_format(p, fmt)
    return _load_csv(p) if kind == "csv" else _load_ply(p)


def save_cloud(cloud: PointCloud, path) -> None:
    """Write a cloud as CSV with full float precision (exact read-back)."""
    p = Path(path)
    cols = ["x", "y", "z"]
    parts = [cloud.positions]
    if cloud.colors is not None:
        cols += ["r", "g", "b"]
        parts.append(cloud.colors)
    int_cols = []
    if cloud.gt_labels is not None:
        int_cols.append(("label", cloud.gt_labels))
    if cloud.superpoint_ids is not None:
        int_cols.append(("superpoint", cloud.superpoint_ids))
    cols += [name for name, _ in int_cols]
    floats = np.hstack(parts)
    with open(p, "w", encoding="utf-8") as fh:
        fh.write(",".join(cols) + "\n")
        for i in range(cloud.n_points):
            row = [repr(float(v)) for v in floats[i]]
            row += [str(int(arr[i])) for _, arr in int_cols]
            fh.write(",".join(row) + "\n")
