"""Deterministic synthetic dataset generators.

All generators round coordinates to float32 so that written point files
round-trip bit-exactly, and are fully determined by their spec's seed.
"""

from dataclasses import dataclass, replace

import numpy as np

from .core import Dataset

GENERATORS = ("toy_outliers", "xor_gaussians", "segmentation3", "ood_probe")


@dataclass(frozen=True)
class SyntheticSpec:
    generator: str = "toy_outliers"
    clusters: int = 5
    per_cluster: int = 200
    outliers: int = 20
    spread: float = 0.05
    seed: int = 7

    def __post_init__(self):
        if self.generator not in GENERATORS:
            raise ValueError(f"unknown generator {self.generator!r}")
        if self.clusters < 0 or self.per_cluster < 0 or self.outliers < 0:
            raise ValueError("counts must be >= 0")
        if self.spread <= 0:
            raise ValueError("spread must be > 0")


def default_spec(generator: str, seed: int | None = None) -> SyntheticSpec:
    """Per-generator default shapes; pass seed to override the default."""
    base = {
        "toy_outliers": SyntheticSpec("toy_outliers", clusters=5, per_cluster=200, outliers=20, spread=0.05, seed=7),
        "xor_gaussians": SyntheticSpec("xor_gaussians", clusters=4, per_cluster=150, outliers=0, spread=0.3, seed=7),
        "segmentation3": SyntheticSpec("segmentation3", clusters=3, per_cluster=500, outliers=0, spread=0.35, seed=7),
        "ood_probe": SyntheticSpec("ood_probe", clusters=3, per_cluster=200, outliers=0, spread=0.35, seed=7),
    }[generator]
    if seed is not None:
        base = replace(base, seed=seed)
    return base


def _f32(a: np.ndarray) -> np.ndarray:
    return a.astype(np.float32).astype(np.float64)


def _truncated_blob(rng, center, sigma, count, max_radius_sigmas=3.5):
    """Gaussian blob with draws beyond the radius cap redrawn.

    Keeps every cluster point within a known radius of its center, so
    'isolated' (outlier) points are well defined by a distance scan.
    """
    out = np.empty((count, 2))
    filled = 0
    while filled < count:
        cand = center + rng.standard_normal((count - filled, 2)) * sigma
        ok = np.linalg.norm(cand - center, axis=1) <= max_radius_sigmas * sigma
        kept = cand[ok]
        out[filled : filled + len(kept)] = kept
        filled += len(kept)
    return out


def _spread_centers(rng, count, low=0.15, high=0.85, min_sep=0.28):
    """Cluster centers uniform in a margin box with minimum separation."""
    centers = []
    while len(centers) < count:
        cand = rng.uniform(low, high, size=2)
        if all(np.linalg.norm(cand - c) >= min_sep for c in centers):
            centers.append(cand)
    return np.array(centers)


def toy_outliers(spec: SyntheticSpec) -> Dataset:
    """Unlabeled 2D clusters in the unit box plus uniformly scattered
    isolated points (each at least 4 sigma from every cluster center)."""
    rng = np.random.default_rng(spec.seed)
    total = spec.clusters * spec.per_cluster + spec.outliers
    if total == 0:
        raise ValueError("zero total points")
    centers = _spread_centers(rng, spec.clusters) if spec.clusters else np.empty((0, 2))
    parts = [_truncated_blob(rng, c, spec.spread, spec.per_cluster) for c in centers]
    picked = 0
    outs = []
    while picked < spec.outliers:
        cand = rng.uniform(0.0, 1.0, size=2)
        if centers.size == 0 or np.linalg.norm(centers - cand, axis=1).min() >= 4.0 * spec.spread:
            outs.append(cand)
            picked += 1
    if outs:
        parts.append(np.array(outs))
    return Dataset(points=_f32(np.concatenate(parts)))


def xor_gaussians(spec: SyntheticSpec) -> Dataset:
    """Four blobs at (+-1, +-1); diagonal pairs share a class label.

    The two classes are not linearly separable, which is the point.
    """
    rng = np.random.default_rng(spec.seed)
    if spec.per_cluster == 0:
        raise ValueError("zero total points")
    corners = np.array([[1.0, 1.0], [-1.0, -1.0], [1.0, -1.0], [-1.0, 1.0]])
    labels_by_corner = np.array([0, 0, 1, 1])
    parts, labels = [], []
    for corner, lab in zip(corners, labels_by_corner):
        parts.append(corner + rng.standard_normal((spec.per_cluster, 2)) * spec.spread)
        labels.append(np.full(spec.per_cluster, lab))
    return Dataset(points=_f32(np.concatenate(parts)), labels=np.concatenate(labels), class_count=2)


_SEG_CENTERS = np.array([[0.0, 0.0], [4.0, 0.0], [0.0, 4.0]])
_SEG_OOD_CENTER = np.array([10.0, 10.0])


def segmentation3(spec: SyntheticSpec) -> tuple[Dataset, Dataset]:
    """Three labeled 2D clusters plus a held-out far cluster.

    Returns (labeled ID dataset, unlabeled held-out dataset); the
    held-out cluster plays the role of anomalous data and has
    per_cluster points as well.
    """
    rng = np.random.default_rng(spec.seed)
    if spec.per_cluster == 0:
        raise ValueError("zero total points")
    parts, labels = [], []
    for lab, center in enumerate(_SEG_CENTERS):
        parts.append(center + rng.standard_normal((spec.per_cluster, 2)) * spec.spread)
        labels.append(np.full(spec.per_cluster, lab))
    ood = _SEG_OOD_CENTER + rng.standard_normal((spec.per_cluster, 2)) * spec.spread
    ident = Dataset(points=_f32(np.concatenate(parts)), labels=np.concatenate(labels), class_count=3)
    return ident, Dataset(points=_f32(ood))


def ood_probe(spec: SyntheticSpec) -> tuple[Dataset, Dataset]:
    """Fresh draws from the segmentation3 layout for scoring.

    Returns (ID probe, OOD probe) — unlabeled evaluation sets drawn from
    the same cluster layout and from the held-out cluster respectively.
    """
    rng = np.random.default_rng(spec.seed + 1_000_003)
    if spec.per_cluster == 0:
        raise ValueError("zero total points")
    parts = [c + rng.standard_normal((spec.per_cluster, 2)) * spec.spread for c in _SEG_CENTERS]
    ood = _SEG_OOD_CENTER + rng.standard_normal((spec.per_cluster, 2)) * spec.spread
    return Dataset(points=_f32(np.concatenate(parts))), Dataset(points=_f32(ood))
