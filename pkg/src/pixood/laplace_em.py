"""Expectation-maximization for equal-prior spherical Laplace mixtures.

The mixture has K components with centers ``c_k`` and per-component scales
``beta_k``; every component carries the same prior weight 1/K.  Component
densities fall off as ``exp(-||x - c_k|| / beta_k)`` with a normalization
that depends on ``beta`` through ``beta ** -density_exponent``.
"""

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .core import FormatError, atomic_write_text, pairwise_distances

__all__ = [
    "LaplaceMixture",
    "e_step",
    "m_step",
    "log_likelihood",
    "jensen_bound",
    "geometric_median",
    "em_fit",
    "write_mixture",
    "read_mixture",
]


@dataclass
class LaplaceMixture:
    """Equal-prior spherical Laplace mixture parameters."""

    centers: np.ndarray  # (K, D)
    scales: np.ndarray  # (K,), strictly positive
    density_exponent: int = 1

    def __post_init__(self):
        self.centers = np.asarray(self.centers, dtype=np.float64)
        self.scales = np.asarray(self.scales, dtype=np.float64)
        if self.centers.ndim != 2:
            raise ValueError("centers must be 2-D (K, D)")
        if self.scales.shape != (self.centers.shape[0],):
            raise ValueError("scales must be 1-D with one entry per center")
        if not np.all(self.scales > 0):
            raise ValueError("scales must be strictly positive")
        if self.density_exponent < 1:
            raise ValueError("density_exponent must be >= 1")

    @property
    def k(self) -> int:
        return self.centers.shape[0]

    @property
    def dim(self) -> int:
        return self.centers.shape[1]


def _log_component_densities(points: np.ndarray, mix: LaplaceMixture) -> np.ndarray:
    # log density up to a beta-free additive constant: -e*log(beta) - d/beta
    d = pairwise_distances(points, mix.centers)
    e = mix.density_exponent
    return -e * np.log(mix.scales)[None, :] - d / mix.scales[None, :]


def e_step(points: np.ndarray, mix: LaplaceMixture) -> np.ndarray:
    """Posterior responsibilities, one row per point; rows sum to 1.

    With equal priors the posterior over components is the softmax of the
    per-component log densities, so the shared normalizer cancels.
    """
    logp = _log_component_densities(points, mix)
    logp -= logp.max(axis=1, keepdims=True)
    w = np.exp(logp)
    w /= w.sum(axis=1, keepdims=True)
    return w


def geometric_median(
    points: np.ndarray,
    weights: np.ndarray,
    start: np.ndarray | None = None,
    tol: float = 1e-8,
    max_iter: int = 200,
    damping: float = 0.5,
) -> np.ndarray:
    """Weighted geometric median via damped iteratively-reweighted averaging.

    Each iteration blends the current point with the inverse-distance
    weighted mean; a point coinciding with the iterate is perturbed by a
    tiny offset so the reweighting stays finite.
    """
    points = np.asarray(points, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    if start is None:
        total = weights.sum()
        if total <= 0:
            raise ValueError("weights must have positive sum")
        c = (weights[:, None] * points).sum(axis=0) / total
    else:
        c = np.asarray(start, dtype=np.float64).copy()
    for _ in range(max_iter):
        d = np.linalg.norm(points - c[None, :], axis=1)
        d = np.maximum(d, 1e-12)
        inv = weights / d
        denom = inv.sum()
        if denom <= 0:
            break
        proposal = (inv[:, None] * points).sum(axis=0) / denom
        new = (1.0 - damping) * c + damping * proposal
        if np.linalg.norm(new - c) <= tol * max(1.0, np.linalg.norm(c)):
            c = new
            break
        c = new
    return c


def m_step(points: np.ndarray, weights: np.ndarray, mix: LaplaceMixture) -> LaplaceMixture:
    """Maximize the expected complete-data log likelihood.

    Centers move to the responsibility-weighted geometric median of the
    data; scales are then refit against the new centers as the weighted
    mean distance divided by the density exponent.  Starting the median
    search at the incumbent center keeps the update a descent step, so the
    overall EM likelihood never decreases.
    """
    points = np.asarray(points, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    e = mix.density_exponent
    centers = np.empty_like(mix.centers)
    scales = np.empty_like(mix.scales)
    for k in range(mix.k):
        w = weights[:, k]
        total = w.sum()
        if total < 1e-12:
            centers[k] = mix.centers[k]
            scales[k] = mix.scales[k]
            warnings.warn(f"component {k} has negligible total weight; left unchanged")
            continue
        centers[k] = geometric_median(points, w, start=mix.centers[k])
        d = np.linalg.norm(points - centers[k][None, :], axis=1)
        scales[k] = max((w * d).sum() / (e * total), 1e-12)
    return LaplaceMixture(centers, scales, density_exponent=e)


def log_likelihood(points: np.ndarray, mix: LaplaceMixture) -> float:
    """Total log likelihood of the sample under the mixture (up to the
    beta-free normalization constant shared by every component)."""
    logp = _log_component_densities(points, mix) - np.log(mix.k)
    return float(logsumexp(logp, axis=1).sum())


def jensen_bound(points: np.ndarray, weights: np.ndarray, mix: LaplaceMixture) -> float:
    """Lower bound on the total log likelihood for any responsibilities.

    Expected complete-data log likelihood plus the entropy of the
    responsibilities; equality holds when the weights are the exact
    posteriors.  Zero-weight entries contribute zero.
    """
    logp = _log_component_densities(points, mix) - np.log(mix.k)
    w = np.asarray(weights, dtype=np.float64)
    logw = np.where(w > 0, np.log(np.where(w > 0, w, 1.0)), 0.0)
    return float((w * (logp - logw)).sum())


def em_fit(
    data,
    k: int,
    iterations: int = 100,
    seed: int = 0,
    density_exponent: int = 1,
    tol: float = 1e-10,
    on_iteration=None,
) -> LaplaceMixture:
    """Fit a K-component mixture by alternating e_step/m_step.

    Initial centers are drawn uniformly from the data without replacement;
    initial scales are each component's mean distance to the sample.  Stops
    early once the log-likelihood gain falls below ``tol`` (relative).  The
    optional ``on_iteration(i, mixture, log_likelihood)`` callback observes
    the trace, which is non-decreasing up to numerical noise.
    """
    points = np.asarray(getattr(data, "points", data), dtype=np.float64)
    if k < 1:
        raise ValueError("k must be >= 1")
    if k > points.shape[0]:
        raise ValueError("k exceeds the number of data points")
    rng = np.random.default_rng(seed)
    centers = points[rng.choice(points.shape[0], size=k, replace=False)]
    d = pairwise_distances(points, centers)
    scales = np.maximum(d.mean(axis=0) / density_exponent, 1e-12)
    mix = LaplaceMixture(centers, scales, density_exponent=density_exponent)
    prev = log_likelihood(points, mix)
    if on_iteration is not None:
        on_iteration(-1, mix, prev)
    for i in range(iterations):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            mix = m_step(points, e_step(points, mix), mix)
        cur = log_likelihood(points, mix)
        if on_iteration is not None:
            on_iteration(i, mix, cur)
        if cur - prev < tol * max(1.0, abs(prev)):
            break
        prev = cur
    return mix


def write_mixture(path, mix: LaplaceMixture) -> None:
    """Dump mixture parameters as CSV: one row per component."""
    d = mix.dim
    header = "k," + ",".join(f"c_{j}" for j in range(d)) + ",beta"
    lines = [header]
    for k in range(mix.k):
        row = [str(k)] + ["%.17g" % v for v in mix.centers[k]] + ["%.17g" % mix.scales[k]]
        lines.append(",".join(row))
    atomic_write_text(path, "\n".join(lines) + "\n")


def read_mixture(path, density_exponent: int = 1) -> LaplaceMixture:
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if not lines:
        raise FormatError(f"{path}: empty mixture file")
    cols = lines[0].split(",")
    if cols[0] != "k" or cols[-1] != "beta" or any(
        c != f"c_{j}" for j, c in enumerate(cols[1:-1])
    ):
        raise FormatError(f"{path}: bad mixture header {lines[0]!r}")
    d = len(cols) - 2
    centers, scales = [], []
    for i, ln in enumerate(lines[1:]):
        vals = ln.split(",")
        if len(vals) != d + 2:
            raise FormatError(f"{path}: row {i} has {len(vals)} fields, expected {d + 2}")
        centers.append([float(v) for v in vals[1:-1]])
        scales.append(float(vals[-1]))
    return LaplaceMixture(
        np.asarray(centers), np.asarray(scales), density_exponent=density_exponent
    )
