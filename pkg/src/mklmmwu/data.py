"""LibSVM-format ingestion, [0,1] feature scaling, and seeded splits.

All functions are pure: datasets are immutable and every operation returns a
new one. `#` starts a comment that runs to end of line; files are UTF-8.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptyDataset, NonBinaryLabels, OneClassSplit, ParseError


@dataclass(frozen=True)
class Dataset:
    """n points in d dimensions with labels in {-1,+1}."""

    points: np.ndarray  # (n, d) float64
    labels: np.ndarray  # (n,) float64, entries -1.0 or +1.0

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        lab = np.asarray(self.labels, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[0] < 1:
            raise ValueError("points must be a non-empty 2-d array")
        if lab.shape != (pts.shape[0],):
            raise ValueError("labels length must match point count")
        if not np.isfinite(pts).all():
            raise ValueError("points must be finite")
        if not np.isin(lab, (-1.0, 1.0)).all():
            raise ValueError("labels must be -1 or +1")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "labels", lab)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def d(self) -> int:
        return self.points.shape[1]

    def has_both_classes(self) -> bool:
        return bool((self.labels > 0).any() and (self.labels < 0).any())

    def subset(self, indices) -> "Dataset":
        idx = np.asarray(indices, dtype=np.intp)
        return Dataset(self.points[idx].copy(), self.labels[idx].copy())


@dataclass(frozen=True)
class ScalingParams:
    """Per-dimension train min/max used to map features into [0,1]."""

    mins: np.ndarray  # (d,)
    maxs: np.ndarray  # (d,)

    def __post_init__(self):
        mins = np.asarray(self.mins, dtype=np.float64)
        maxs = np.asarray(self.maxs, dtype=np.float64)
        if mins.shape != maxs.shape or mins.ndim != 1:
            raise ValueError("mins/maxs must be matching 1-d arrays")
        if (maxs < mins).any():
            raise ValueError("max < min in scaling parameters")
        object.__setattr__(self, "mins", mins)
        object.__setattr__(self, "maxs", maxs)

    @property
    def d(self) -> int:
        return self.mins.shape[0]


# Raw label encodings accepted, each mapped with the larger raw label -> +1.
_LABEL_MAPS = (
    ({-1.0, 1.0}, {-1.0: -1.0, 1.0: 1.0}),
    ({0.0, 1.0}, {0.0: -1.0, 1.0: 1.0}),
    ({1.0, 2.0}, {1.0: -1.0, 2.0: 1.0}),
)


def _map_labels(raw: list) -> np.ndarray:
    seen = set(raw)
    for domain, mapping in _LABEL_MAPS:
        if seen <= domain:
            return np.array([mapping[v] for v in raw], dtype=np.float64)
    raise NonBinaryLabels(f"label set {sorted(seen)} is not a supported binary encoding")


def parse_libsvm(source, n_features: int | None = None) -> Dataset:
    """Parse LibSVM text into a dense, unscaled Dataset.

    `source` is a string or a text file object. Each record reads
    `<label> <index>:<value> ...` with strictly increasing 1-based indices;
    absent indices are zero. The width is the largest index seen, or
    `n_features` when given (it must cover every index in the file).
    """
    text = source.read() if hasattr(source, "read") else source
    raw_labels: list[float] = []
    rows: list[list[tuple[int, float]]] = []
    max_index = 0
    for line_no, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        try:
            label = float(tokens[0])
        except ValueError:
            raise ParseError(line_no, f"bad label {tokens[0]!r}") from None
        feats: list[tuple[int, float]] = []
        prev = 0
        for tok in tokens[1:]:
            idx_s, _, val_s = tok.partition(":")
            if not _:
                raise ParseError(line_no, f"expected index:value, got {tok!r}")
            try:
                idx = int(idx_s)
                val = float(val_s)
            except ValueError:
                raise ParseError(line_no, f"bad feature token {tok!r}") from None
            if idx < 1:
                raise ParseError(line_no, f"feature index {idx} is not 1-based")
            if idx <= prev:
                raise ParseError(line_no, f"feature index {idx} not strictly increasing")
            if not np.isfinite(val):
                raise ParseError(line_no, f"non-finite value in {tok!r}")
            prev = idx
            feats.append((idx, val))
        raw_labels.append(label)
        rows.append(feats)
        max_index = max(max_index, prev)
    if not rows:
        raise EmptyDataset("no data records found")
    if n_features is not None:
        if n_features < max_index:
            raise ParseError(0, f"file uses index {max_index} > n_features={n_features}")
        max_index = n_features
    d = max(max_index, 1)
    points = np.zeros((len(rows), d))
    for i, feats in enumerate(rows):
        for idx, val in feats:
            points[i, idx - 1] = val
    return Dataset(points, _map_labels(raw_labels))


def serialize_libsvm(dataset: Dataset) -> str:
    """Render a Dataset back to LibSVM text (zeros omitted, 17 significant digits)."""
    lines = []
    for x, y in zip(dataset.points, dataset.labels):
        parts = ["+1" if y > 0 else "-1"]
        parts.extend(f"{j + 1}:{v:.17g}" for j, v in enumerate(x) if v != 0.0)
        lines.append(" ".join(parts))
    return "\n".join(lines) + "\n"


def fit_scaling(dataset: Dataset) -> ScalingParams:
    return ScalingParams(dataset.points.min(axis=0), dataset.points.max(axis=0))


def apply_scaling(dataset: Dataset, params: ScalingParams) -> Dataset:
    """Map features to [0,1] with the given train ranges.

    Constant dimensions go to 0; out-of-range values (unseen test points)
    are clamped so downstream kernels stay in their calibrated regime.
    """
    if dataset.d != params.d:
        raise ValueError(f"dataset has {dataset.d} features, scaling has {params.d}")
    span = params.maxs - params.mins
    safe = np.where(span > 0.0, span, 1.0)
    scaled = (dataset.points - params.mins) / safe
    scaled[:, span == 0.0] = 0.0
    np.clip(scaled, 0.0, 1.0, out=scaled)
    return Dataset(scaled, dataset.labels.copy())


def split(dataset: Dataset, train_fraction: float, seed: int) -> tuple[Dataset, Dataset]:
    """Disjoint, exhaustive train/test partition, deterministic for a fixed seed."""
    if not 0.0 < train_fraction < 1.0:
        raise ValueError("train_fraction must lie strictly between 0 and 1")
    n = dataset.n
    if n < 2:
        raise ValueError("need at least 2 points to split")
    k = int(round(train_fraction * n))
    k = min(max(k, 1), n - 1)
    perm = np.random.default_rng(seed).permutation(n)
    train_idx = np.sort(perm[:k])
    test_idx = np.sort(perm[k:])
    train = dataset.subset(train_idx)
    if not train.has_both_classes():
        raise OneClassSplit("training side of the split has a single class")
    return train, dataset.subset(test_idx)
