"""Calibrated ID/OOD decisions in a 2D projection space.

The in-distribution density is a fitted Gaussian; the out-distribution
surrogate is a zero-mean Gaussian inflated to cover it.  Thresholding
their likelihood ratio gives the false-negative-constrained decision
rule, and a grid-quadrature calibration turns raw ratios into scores
with an operational meaning: the ID mass a threshold there would reject.
"""

from dataclasses import dataclass, field

import numpy as np

from .core import FormatError, atomic_write_text

__all__ = [
    "Gaussian2",
    "CalibrationTable",
    "Strategy",
    "fit_id_gaussian",
    "make_ood_gaussian",
    "likelihood_ratio",
    "calibrate",
    "id_score",
    "ood_score",
    "np_threshold",
    "write_calibration",
    "read_calibration",
    "write_strategy",
    "read_strategy",
]


@dataclass
class Gaussian2:
    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=np.float64).reshape(2)
        self.cov = np.asarray(self.cov, dtype=np.float64).reshape(2, 2)
        if abs(self.cov[0, 1] - self.cov[1, 0]) > 1e-12:
            raise ValueError("covariance must be symmetric")
        if np.linalg.eigvalsh(self.cov).min() <= 0:
            raise ValueError("covariance must be positive definite")

    def log_density(self, z: np.ndarray) -> np.ndarray:
        z = np.atleast_2d(np.asarray(z, dtype=np.float64))
        a, b, d = self.cov[0, 0], self.cov[0, 1], self.cov[1, 1]
        det = a * d - b * b
        diff = z - self.mean
        # closed-form 2x2 inverse quadratic form
        quad = (d * diff[:, 0] ** 2 - 2 * b * diff[:, 0] * diff[:, 1] + a * diff[:, 1] ** 2) / det
        return -np.log(2.0 * np.pi) - 0.5 * np.log(det) - 0.5 * quad


@dataclass
class CalibrationTable:
    """(ratio, rejected-ID-mass) knots sorted by ratio ascending."""

    ratios: np.ndarray
    epsilons: np.ndarray
    bounds: tuple = ()  # (x_lo, x_hi, y_lo, y_hi)
    resolution: tuple = ()  # (nx, ny)

    def __post_init__(self):
        self.ratios = np.asarray(self.ratios, dtype=np.float64)
        self.epsilons = np.asarray(self.epsilons, dtype=np.float64)
        if self.ratios.shape != self.epsilons.shape or self.ratios.ndim != 1:
            raise ValueError("ratios and epsilons must be matching 1-D arrays")
        if self.ratios.size and np.any(np.diff(self.ratios) < 0):
            raise ValueError("ratios must be sorted ascending")
        if self.epsilons.size and (
            self.epsilons.min() < 0 or self.epsilons.max() > 1 or np.any(np.diff(self.epsilons) < 0)
        ):
            raise ValueError("epsilons must be non-decreasing within [0,1]")


@dataclass
class Strategy:
    id_gaussian: Gaussian2
    ood_gaussian: Gaussian2
    epsilon: float = 0.05
    threshold: float = 1.0

    def __post_init__(self):
        if not 0 < self.epsilon < 1:
            raise ValueError("epsilon must lie in (0,1)")
        if self.threshold <= 0:
            raise ValueError("threshold must be positive")


def fit_id_gaussian(points: np.ndarray) -> Gaussian2:
    """Maximum-likelihood Gaussian with a small conditioning ridge."""
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise ValueError("points must be (N, 2)")
    if pts.shape[0] < 3:
        raise ValueError(f"need at least 3 points, got {pts.shape[0]}")
    mean = pts.mean(axis=0)
    diff = pts - mean
    cov = diff.T @ diff / pts.shape[0]
    # trace can vanish for coincident points; floor keeps the ridge alive
    ridge = 1e-9 * max(np.trace(cov), 1.0)
    return Gaussian2(mean, cov + ridge * np.eye(2))


def make_ood_gaussian(id_gaussian: Gaussian2, inflation: float = 100.0) -> Gaussian2:
    """Zero-mean diagonal Gaussian wide enough to dominate the ID support."""
    if inflation <= 0:
        raise ValueError("inflation must be positive")
    var = np.diag(id_gaussian.cov) + id_gaussian.mean**2
    return Gaussian2(np.zeros(2), np.diag(inflation**2 * var))


def likelihood_ratio(z, strategy: Strategy):
    """ID density over OOD density, via exp of the log-density gap."""
    z = np.asarray(z, dtype=np.float64)
    single = z.ndim == 1
    out = np.exp(
        strategy.id_gaussian.log_density(z) - strategy.ood_gaussian.log_density(z)
    )
    return float(out[0]) if single else out


def _default_grid(g: Gaussian2, resolution=(200, 200), sigmas: float = 6.0):
    sd = np.sqrt(np.diag(g.cov))
    return (
        (
            g.mean[0] - sigmas * sd[0],
            g.mean[0] + sigmas * sd[0],
            g.mean[1] - sigmas * sd[1],
            g.mean[1] + sigmas * sd[1],
        ),
        tuple(resolution),
    )


def calibrate(strategy: Strategy, resolution=(200, 200), bounds=None) -> CalibrationTable:
    """Tabulate rejected-ID-mass against ratio thresholds over a grid.

    Each grid sample contributes its ID-density quadrature weight; the mass
    with ratio at or below a knot is the knot's epsilon.  Ties share the
    group's final value and a cumulative-max pass absorbs rounding noise.
    """
    if bounds is None:
        bounds, resolution = _default_grid(strategy.id_gaussian, resolution)
    nx, ny = resolution
    if nx * ny < 100:
        raise ValueError("grid must contain at least 100 samples")
    x_lo, x_hi, y_lo, y_hi = bounds
    if not (x_hi > x_lo and y_hi > y_lo):
        raise ValueError("degenerate grid bounds")
    xs = np.linspace(x_lo, x_hi, nx)
    ys = np.linspace(y_lo, y_hi, ny)
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    samples = np.column_stack([gx.ravel(), gy.ravel()])

    r = likelihood_ratio(samples, strategy)
    w = np.exp(strategy.id_gaussian.log_density(samples))
    w = w / w.sum()

    order = np.argsort(r, kind="stable")
    r_sorted = r[order]
    mass = np.cumsum(w[order])
    # equal ratios must expose the whole tie group's accumulated mass
    boundary = np.r_[r_sorted[1:] != r_sorted[:-1], True]
    idx = np.arange(r_sorted.size)
    last = idx[boundary]
    group_end = last[np.searchsorted(last, idx, side="left")]
    eps = np.minimum(np.maximum.accumulate(mass[group_end]), 1.0)
    return CalibrationTable(r_sorted, eps, bounds=tuple(bounds), resolution=(nx, ny))


def id_score(table: CalibrationTable, r_value):
    """Piecewise-linear epsilon at the given ratio, clamped at the ends."""
    if table.ratios.size == 0:
        raise ValueError("empty calibration table")
    out = np.interp(np.asarray(r_value, dtype=np.float64), table.ratios, table.epsilons)
    return float(out) if np.isscalar(r_value) or np.asarray(r_value).ndim == 0 else out


def ood_score(table: CalibrationTable, r_value):
    return 1.0 - id_score(table, r_value)


def np_threshold(table: CalibrationTable, epsilon: float) -> float:
    """Largest tabulated ratio whose rejected-ID mass stays within budget."""
    if not 0 < epsilon < 1:
        raise ValueError("epsilon must lie in (0,1)")
    ok = table.epsilons <= epsilon
    if not ok.any():
        raise ValueError(f"no threshold achieves epsilon <= {epsilon}")
    return float(table.ratios[np.nonzero(ok)[0][-1]])


def write_calibration(path, table: CalibrationTable) -> None:
    lines = ["r,epsilon"]
    for r, e in zip(table.ratios, table.epsilons):
        lines.append("%.17g,%.17g" % (r, e))
    atomic_write_text(path, "\n".join(lines) + "\n")


def read_calibration(path) -> CalibrationTable:
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if not lines or lines[0] != "r,epsilon":
        raise FormatError(f"{path}: bad calibration header")
    vals = np.array([[float(v) for v in ln.split(",")] for ln in lines[1:]])
    if vals.size == 0:
        raise FormatError(f"{path}: empty calibration table")
    if vals.shape[1] != 2:
        raise FormatError(f"{path}: expected 2 columns")
    return CalibrationTable(vals[:, 0], vals[:, 1])


def _gaussian_items(prefix: str, g: Gaussian2):
    return [
        (f"{prefix}_mean_0", g.mean[0]),
        (f"{prefix}_mean_1", g.mean[1]),
        (f"{prefix}_cov_00", g.cov[0, 0]),
        (f"{prefix}_cov_01", g.cov[0, 1]),
        (f"{prefix}_cov_11", g.cov[1, 1]),
    ]


def write_strategy(path, strategy: Strategy) -> None:
    items = (
        _gaussian_items("id", strategy.id_gaussian)
        + _gaussian_items("ood", strategy.ood_gaussian)
        + [("epsilon", strategy.epsilon), ("threshold", strategy.threshold)]
    )
    atomic_write_text(path, "".join("%s = %.17g\n" % kv for kv in items))


def read_strategy(path) -> Strategy:
    kv = {}
    with open(path, "r", encoding="utf-8") as fh:
        for ln in fh:
            ln = ln.strip()
            if not ln or ln.startswith("#"):
                continue
            if "=" not in ln:
                raise FormatError(f"{path}: bad line {ln!r}")
            key, val = ln.split("=", 1)
            kv[key.strip()] = float(val.strip())
    try:
        def gauss(prefix):
            return Gaussian2(
                [kv[f"{prefix}_mean_0"], kv[f"{prefix}_mean_1"]],
                [
                    [kv[f"{prefix}_cov_00"], kv[f"{prefix}_cov_01"]],
                    [kv[f"{prefix}_cov_01"], kv[f"{prefix}_cov_11"]],
                ],
            )

        return Strategy(gauss("id"), gauss("ood"), kv["epsilon"], kv["threshold"])
    except KeyError as exc:
        raise FormatError(f"{path}: missing field {exc}") from exc
