"""Shared numerical kernels and point-set containers.

Distance and soft-assignment primitives plus the on-disk point formats
used by every other module.  Everything here is a pure function over
immutable inputs and safe to call from multiple threads.
"""

import csv
import io
import os
import struct
import tempfile
from dataclasses import dataclass

import numpy as np

POINTS_MAGIC = b"PTS1"
LABELS_MAGIC = b"LBL1"


class FormatError(Exception):
    """A point-set file does not match its declared layout."""


@dataclass(frozen=True)
class Dataset:
    """N points in R^D with optional integer class labels.

    points: (N, D) float array, finite.
    labels: optional (N,) int array with values in [0, class_count).
    class_count: number of classes; inferred from labels when omitted.
    """

    points: np.ndarray
    labels: np.ndarray | None = None
    class_count: int = 0

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[0] < 1 or pts.shape[1] < 1:
            raise ValueError(f"points must be (N, D) with N, D >= 1, got shape {pts.shape}")
        if not np.isfinite(pts).all():
            raise ValueError("points contain NaN or Inf")
        object.__setattr__(self, "points", pts)
        if self.labels is not None:
            lab = np.asarray(self.labels, dtype=np.int64)
            if lab.shape != (pts.shape[0],):
                raise ValueError(
                    f"labels must be length N={pts.shape[0]}, got shape {lab.shape}"
                )
            count = self.class_count if self.class_count > 0 else int(lab.max()) + 1
            if lab.min() < 0 or lab.max() >= count:
                raise ValueError(f"labels must lie in [0, {count})")
            object.__setattr__(self, "labels", lab)
            object.__setattr__(self, "class_count", count)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]


def l2_distance(x, c) -> float:
    """Euclidean distance between two D-vectors."""
    x = np.asarray(x, dtype=np.float64)
    c = np.asarray(c, dtype=np.float64)
    if x.shape != c.shape:
        raise ValueError(f"dimension mismatch: {x.shape} vs {c.shape}")
    if not (np.isfinite(x).all() and np.isfinite(c).all()):
        raise ValueError("non-finite input")
    return float(np.linalg.norm(x - c))


def pairwise_distances(points, centers) -> np.ndarray:
    """All Euclidean distances between rows of points (n, D) and centers (K, D).

    Returns an (n, K) matrix.  Computed from explicit differences rather
    than the expanded dot-product identity, which can go negative under
    cancellation.
    """
    points = np.asarray(points, dtype=np.float64)
    centers = np.asarray(centers, dtype=np.float64)
    if points.shape[1] != centers.shape[1]:
        raise ValueError(
            f"dimension mismatch: points D={points.shape[1]}, centers D={centers.shape[1]}"
        )
    diff = points[:, None, :] - centers[None, :, :]
    return np.sqrt(np.einsum("nkd,nkd->nk", diff, diff))


def softmin_weights(distances, tau: float, exponent: int = 1) -> np.ndarray:
    """Temperature-controlled soft assignment over the last axis.

    Row i, column k of the result is
        exp(-d_ik^e / tau) / sum_j exp(-d_ij^e / tau)
    computed with a max-shift so that large distance gaps cannot
    underflow the whole row.  exponent e is 1 (plain distances) or 2
    (squared distances).  Rows sum to 1; as tau -> 0 the rows approach
    the indicator of the minimum-distance column, as tau -> inf they
    approach the uniform vector.
    """
    if tau <= 0:
        raise ValueError(f"tau must be positive, got {tau}")
    if exponent not in (1, 2):
        raise ValueError(f"exponent must be 1 or 2, got {exponent}")
    d = np.asarray(distances, dtype=np.float64)
    if not np.isfinite(d).all():
        raise ValueError("distances contain NaN or Inf")
    logits = -(d if exponent == 1 else d * d) / tau
    logits -= logits.max(axis=-1, keepdims=True)
    w = np.exp(logits)
    w /= w.sum(axis=-1, keepdims=True)
    return w


# --- point-set file formats ---------------------------------------------
#
# Binary points: magic "PTS1", u32 LE D, u64 LE N, N*D float32 LE row-major.
# Companion labels (same stem, .lbl): magic "LBL1", u64 LE N, N int32 LE.
# CSV alternative: header "x0,...,x{D-1}[,label]", one row per point.


def atomic_write_bytes(path, data: bytes):
    """Write a file via temp + rename so readers never see partial output."""
    path = os.fspath(path)
    directory = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix="." + os.path.basename(path) + ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text: str):
    atomic_write_bytes(path, text.encode("utf-8"))


def labels_path_for(path) -> str:
    """Companion labels file: same name with the extension replaced by .lbl."""
    base, _ = os.path.splitext(os.fspath(path))
    return base + ".lbl"


def write_points(dataset: Dataset, path):
    """Write a Dataset to path; .csv extension selects CSV, else binary.

    Binary float32 payload means coordinates not representable in float32
    are rounded; synthesizers in this package emit float32-exact data so
    round trips are bit-exact.
    """
    path = os.fspath(path)
    if path.endswith(".csv"):
        _write_csv(dataset, path)
        return
    pts = dataset.points.astype("<f4")
    header = POINTS_MAGIC + struct.pack("<IQ", dataset.dim, dataset.n)
    atomic_write_bytes(path, header + pts.tobytes(order="C"))
    if dataset.labels is not None:
        lab = dataset.labels.astype("<i4")
        atomic_write_bytes(
            labels_path_for(path), LABELS_MAGIC + struct.pack("<Q", dataset.n) + lab.tobytes()
        )


def read_points(path) -> Dataset:
    """Read a Dataset written by write_points (binary or CSV)."""
    path = os.fspath(path)
    if path.endswith(".csv"):
        return _read_csv(path)
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 16 or raw[:4] != POINTS_MAGIC:
        raise FormatError(f"{path}: bad magic, expected {POINTS_MAGIC!r}")
    dim, n = struct.unpack_from("<IQ", raw, 4)
    payload = raw[16:]
    expected = n * dim * 4
    if len(payload) != expected:
        raise FormatError(
            f"{path}: truncated payload, expected {expected} bytes, got {len(payload)}"
        )
    pts = np.frombuffer(payload, dtype="<f4").reshape(n, dim).astype(np.float64)
    labels = None
    lbl_path = labels_path_for(path)
    if os.path.exists(lbl_path):
        labels = _read_labels(lbl_path, n)
    return Dataset(points=pts, labels=labels)


def _read_labels(path, expected_n: int) -> np.ndarray:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 12 or raw[:4] != LABELS_MAGIC:
        raise FormatError(f"{path}: bad magic, expected {LABELS_MAGIC!r}")
    (n,) = struct.unpack_from("<Q", raw, 4)
    if n != expected_n:
        raise FormatError(f"{path}: label count {n} does not match point count {expected_n}")
    payload = raw[12:]
    if len(payload) != n * 4:
        raise FormatError(f"{path}: truncated labels, expected {n * 4} bytes, got {len(payload)}")
    return np.frombuffer(payload, dtype="<i4").astype(np.int64)


def _write_csv(dataset: Dataset, path):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    cols = [f"x{j}" for j in range(dataset.dim)]
    if dataset.labels is not None:
        cols.append("label")
    writer.writerow(cols)
    for i in range(dataset.n):
        row = [format(v, ".17g") for v in dataset.points[i]]
        if dataset.labels is not None:
            row.append(str(int(dataset.labels[i])))
        writer.writerow(row)
    atomic_write_text(path, buf.getvalue())


def _read_csv(path) -> Dataset:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise FormatError(f"{path}: empty CSV")
    header = rows[0]
    has_label = header and header[-1] == "label"
    dim = len(header) - (1 if has_label else 0)
    expected = [f"x{j}" for j in range(dim)] + (["label"] if has_label else [])
    if header != expected:
        raise FormatError(f"{path}: bad CSV header {header!r}")
    body = rows[1:]
    if not body:
        raise FormatError(f"{path}: CSV has no data rows")
    try:
        pts = np.array([[float(v) for v in row[:dim]] for row in body])
        labels = np.array([int(row[dim]) for row in body]) if has_label else None
    except (ValueError, IndexError) as exc:
        raise FormatError(f"{path}: malformed CSV row ({exc})") from exc
    return Dataset(points=pts, labels=labels)
