"""Incremental soft-to-hard data condensation.

Trains a budget of K etalons (representative points, optionally with
per-etalon positive scales) under a soft assignment whose temperature
anneals from soft to hard on a cosine schedule.  Three objectives are
supported:

  soft_kmeans    -- squared distances, soft assignment over d^2
  soft_kmedians  -- plain distances, soft assignment over d
  condensation   -- per-etalon scaled exponential model: the per-pair
                    term is w * (log beta_k + d / beta_k), so etalons
                    learn both a position and a spread

Per-etalon support (total soft-assignment weight received per batch) is
tracked with an init-unbiased exponential weighted average; etalons whose
smoothed support falls below a threshold after a warm-up period can be
re-initialized onto random data points, recycling dead capacity.
"""

import math
from dataclasses import dataclass

import numpy as np

from .core import Dataset, FormatError, atomic_write_text, pairwise_distances, softmin_weights
from .optim import AdamW

VARIANTS = ("soft_kmeans", "soft_kmedians", "condensation")


@dataclass
class EtalonSet:
    """K etalon centers plus log-domain scales (beta_k = exp(log_scale_k) > 0)."""

    centers: np.ndarray            # (K, D)
    log_scales: np.ndarray         # (K,)
    variant: str = "condensation"

    def __post_init__(self):
        self.centers = np.asarray(self.centers, dtype=np.float64)
        self.log_scales = np.asarray(self.log_scales, dtype=np.float64)
        if self.centers.ndim != 2:
            raise ValueError("centers must be (K, D)")
        if self.log_scales.shape != (self.centers.shape[0],):
            raise ValueError("log_scales must be length K")
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")

    @property
    def k(self) -> int:
        return self.centers.shape[0]

    @property
    def scales(self) -> np.ndarray:
        return np.exp(self.log_scales)


@dataclass
class CondenseConfig:
    budget: int = 50               # K
    epochs: int = 100
    warmup_epochs: int = 5
    learning_rate: float = 0.1     # cosine-decayed to 0 over the epochs
    batch_size: int = 128
    tau_start: float = 1.0         # schedule endpoints, in units of the
    tau_end: float = 1e-3          # first batch's median pairwise distance
    ewa_decay: float = 0.1         # q of the support average
    reinit_threshold: float = 1.0  # theta_r
    reinit_noise_scale: float = 1e-3
    seed: int = 0
    variant: str = "condensation"
    reinit: bool = False
    weight_decay: float = 0.0

    def __post_init__(self):
        if self.budget < 1:
            raise ValueError("budget must be >= 1")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if not 0.0 < self.ewa_decay <= 1.0:
            raise ValueError("ewa_decay must be in (0, 1]")
        if self.reinit_threshold < 0:
            raise ValueError("reinit_threshold must be >= 0")
        if not self.tau_start >= self.tau_end > 0:
            raise ValueError("need tau_start >= tau_end > 0")
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")


@dataclass
class SupportTracker:
    """Init-unbiased running average of per-etalon batch support."""

    s: np.ndarray                  # (K,) smoothed supports
    t: int = 0                     # update counter

    def __post_init__(self):
        self.s = np.asarray(self.s, dtype=np.float64)


def _points_of(data) -> np.ndarray:
    return data.points if isinstance(data, Dataset) else np.asarray(data, dtype=np.float64)


def kmeans_objective(data, etalons: EtalonSet) -> float:
    """Hard-assignment reference objective: mean over points of min_k d^2."""
    pts = _points_of(data)
    if pts.shape[0] == 0:
        raise ValueError("empty dataset")
    d = pairwise_distances(pts, etalons.centers)
    return float((d.min(axis=1) ** 2).mean())


def _loss_and_grads(batch, etalons, tau):
    """Loss, gradients, and the soft-assignment weights for one batch.

    Gradients treat the assignment weights as a function of the
    parameters (fully differentiated), using the softmax identity
    d/du_k sum_j w_j g_j = w_k (g_k - sum_j w_j g_j) for logits u.
    Scale gradients are chain-ruled through the log parameterization.
    """
    pts = np.asarray(batch, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[0] == 0:
        raise ValueError("batch must be a nonempty (n, D) array")
    if not np.isfinite(pts).all():
        raise ValueError("batch contains NaN or Inf")
    n = pts.shape[0]
    variant = etalons.variant
    exponent = 2 if variant == "soft_kmeans" else 1

    d = pairwise_distances(pts, etalons.centers)
    w = softmin_weights(d, tau, exponent)

    if variant == "soft_kmeans":
        g = d * d
    elif variant == "soft_kmedians":
        g = d
    else:
        beta = etalons.scales
        g = etalons.log_scales[None, :] + d / beta[None, :]
    per_point = (w * g).sum(axis=1)
    loss = float(per_point.mean())

    # dL/dd_ik: the direct term plus the softmax coupling -w (g - F)/tau,
    # where the kmeans variant's logits carry d^2 (extra factor 2 d).
    coupling = (g - per_point[:, None]) / tau
    if variant == "soft_kmeans":
        dldd = w * (2.0 * d) * (1.0 - coupling)
    elif variant == "soft_kmedians":
        dldd = w * (1.0 - coupling)
    else:
        dldd = w * (1.0 / beta[None, :] - coupling)
    dldd /= n

    # dd/dc_k = (c_k - x_i)/d_ik; the ratio is zeroed at coincident pairs,
    # where the difference vector vanishes anyway.
    ratio = np.divide(dldd, d, out=np.zeros_like(dldd), where=d > 0)
    diff = etalons.centers[None, :, :] - pts[:, None, :]
    grad_centers = np.einsum("nk,nkd->kd", ratio, diff)

    if variant == "condensation":
        grad_log_scales = (w * (1.0 - d / beta[None, :])).sum(axis=0) / n
    else:
        grad_log_scales = np.zeros(etalons.k)
    return loss, grad_centers, grad_log_scales, w


def batch_loss_and_gradients(batch, etalons: EtalonSet, tau: float):
    """Batch-mean objective and analytic gradients for the etalon variant.

    Returns (loss, grad_centers (K, D), grad_log_scales (K,)).  The scale
    gradient is identically zero for the scale-free variants.
    """
    loss, gc, gls, _ = _loss_and_grads(batch, etalons, tau)
    return loss, gc, gls


def tau_schedule(epoch: int, config: CondenseConfig) -> float:
    """Cosine decay from tau_start (epoch 0) to tau_end (last epoch)."""
    if not 0 <= epoch < config.epochs:
        raise ValueError(f"epoch {epoch} outside [0, {config.epochs})")
    if config.epochs == 1:
        return config.tau_start
    frac = epoch / (config.epochs - 1)
    return config.tau_end + 0.5 * (config.tau_start - config.tau_end) * (1.0 + math.cos(math.pi * frac))


def _cosine_lr(epoch: int, config: CondenseConfig) -> float:
    if config.epochs == 1:
        return config.learning_rate
    frac = epoch / (config.epochs - 1)
    return config.learning_rate * 0.5 * (1.0 + math.cos(math.pi * frac))


def update_support(tracker: SupportTracker, weights, q: float) -> SupportTracker:
    """Fold one batch's raw supports sum_i w(k, i) into the running average.

    The step size q_t = q / (1 - (1-q)^t) makes the very first update
    adopt the raw support outright (q_1 = 1), so initialization does not
    bias the average.
    """
    if not 0.0 < q <= 1.0:
        raise ValueError(f"q must be in (0, 1], got {q}")
    raw = np.asarray(weights).sum(axis=0)
    tracker.t += 1
    q_t = q / (1.0 - (1.0 - q) ** tracker.t)
    tracker.s = (1.0 - q_t) * tracker.s + q_t * raw
    return tracker


def select_reinits(tracker: SupportTracker, config: CondenseConfig, epoch: int):
    """Indices of etalons whose smoothed support fell below the threshold.

    Empty during warm-up (epoch <= warmup_epochs); no support is negative,
    so a zero threshold disables re-inits entirely.
    """
    if epoch <= config.warmup_epochs:
        return []
    return np.flatnonzero(tracker.s < config.reinit_threshold).tolist()


def reinit_etalons(etalons: EtalonSet, indices, batch, noise_scale: float, rng) -> EtalonSet:
    """Reset the listed etalons onto random batch points plus a little noise.

    Noise is isotropic Gaussian with standard deviation
    noise_scale * RMS norm of the batch; scales reset to 1 (log 0).
    """
    pts = np.asarray(batch, dtype=np.float64)
    if pts.shape[0] == 0:
        raise ValueError("batch must be nonempty")
    indices = list(indices)
    if not indices:
        return etalons
    rms = float(np.sqrt((pts**2).sum(axis=1).mean()))
    picks = rng.integers(0, pts.shape[0], size=len(indices))
    noise = rng.standard_normal((len(indices), pts.shape[1])) * (noise_scale * rms)
    etalons.centers[indices] = pts[picks] + noise
    etalons.log_scales[indices] = 0.0
    return etalons


def init_etalons(batch, config: CondenseConfig, rng) -> EtalonSet:
    """K etalons sampled uniformly from the batch (distinct while possible)."""
    pts = np.asarray(batch, dtype=np.float64)
    k = config.budget
    replace = k > pts.shape[0]
    picks = rng.choice(pts.shape[0], size=k, replace=replace)
    return EtalonSet(
        centers=pts[picks].copy(),
        log_scales=np.zeros(k),
        variant=config.variant,
    )


def _median_pairwise(pts, cap=256) -> float:
    sub = pts[:cap]
    d = pairwise_distances(sub, sub)
    vals = d[np.triu_indices(len(sub), k=1)]
    med = float(np.median(vals)) if vals.size else 0.0
    return med if med > 0 else 1.0


def nearest_etalon(x, etalons: EtalonSet):
    """(index, distance) of the closest etalon; ties go to the lowest index."""
    d = np.linalg.norm(etalons.centers - np.asarray(x, dtype=np.float64)[None, :], axis=1)
    idx = int(np.argmin(d))
    return idx, float(d[idx])


def nearest_distances(points, etalons: EtalonSet) -> np.ndarray:
    """Distance from each row of points to its nearest etalon."""
    return pairwise_distances(_points_of(points), etalons.centers).min(axis=1)


def count_useful(tracker: SupportTracker, threshold: float) -> int:
    """Number of etalons whose smoothed support meets the threshold."""
    return int((tracker.s >= threshold).sum())


def condense(data, config: CondenseConfig, on_epoch=None):
    """Run the full soft-to-hard condensation loop.

    Per epoch: shuffle, iterate full batches, take an adaptive-moment
    gradient step per batch at the epoch's temperature, fold batch
    supports into the tracker; after warm-up, recycle under-supported
    etalons (when config.reinit is set).  Temperature and learning rate
    both follow cosine decay.  Bit-reproducible for a fixed seed.

    on_epoch, when given, is called as on_epoch(epoch, etalons, tracker)
    after initialization (epoch -1) and after every epoch.

    Returns (EtalonSet, SupportTracker).
    """
    pts = _points_of(data)
    if pts.shape[0] < 1:
        raise ValueError("need at least one point")
    rng = np.random.default_rng(config.seed)
    n = pts.shape[0]
    bs = min(config.batch_size, n)

    order = rng.permutation(n)
    first_batch = pts[order[:bs]]
    # Schedule endpoints are in units of the first batch's median pairwise
    # distance, raised to the assignment exponent so the temperature carries
    # the same units as the distance power it divides.  This keeps the
    # schedule defaults scale-free for every objective.
    exponent = 2 if config.variant == "soft_kmeans" else 1
    tau_unit = _median_pairwise(first_batch) ** exponent
    etalons = init_etalons(first_batch, config, rng)
    tracker = SupportTracker(s=np.zeros(config.budget), t=0)
    opt = AdamW(
        [etalons.centers, etalons.log_scales],
        lr=config.learning_rate,
        weight_decay=config.weight_decay,
    )
    if on_epoch is not None:
        on_epoch(-1, etalons, tracker)

    # Incomplete trailing batches are dropped (when a full one exists) so
    # raw supports always sum to the same batch size.
    batches_per_epoch = max(n // bs, 1)
    for epoch in range(config.epochs):
        tau = tau_schedule(epoch, config) * tau_unit
        lr = _cosine_lr(epoch, config)
        order = rng.permutation(n)
        for b in range(batches_per_epoch):
            batch = pts[order[b * bs : (b + 1) * bs]]
            _, grad_c, grad_ls, w = _loss_and_grads(batch, etalons, tau)
            opt.step([grad_c, grad_ls], lr=lr)
            update_support(tracker, w, config.ewa_decay)
        assert np.isfinite(etalons.log_scales).all()  # beta stays positive/finite
        # No reset on the final epoch: nothing would train the fresh etalon,
        # and the final supports must reflect what the data actually assigns.
        if config.reinit and epoch < config.epochs - 1:
            dead = select_reinits(tracker, config, epoch)
            if dead:
                reinit_etalons(etalons, dead, pts, config.reinit_noise_scale, rng)
                tracker.s[dead] = config.reinit_threshold
                opt.reset_rows(0, dead)
                opt.reset_rows(1, dead)
        if on_epoch is not None:
            on_epoch(epoch, etalons, tracker)
    return etalons, tracker


def write_etalons(path, etalons: EtalonSet, tracker: SupportTracker) -> None:
    """Dump etalons as CSV: index, center coordinates, scale, support."""
    d = etalons.centers.shape[1]
    header = "k," + ",".join(f"c_{j}" for j in range(d)) + ",beta,support"
    lines = [header]
    scales = etalons.scales
    for k in range(etalons.centers.shape[0]):
        row = (
            [str(k)]
            + ["%.17g" % v for v in etalons.centers[k]]
            + ["%.17g" % scales[k], "%.17g" % tracker.s[k]]
        )
        lines.append(",".join(row))
    atomic_write_text(path, "\n".join(lines) + "\n")


def read_etalons(path, variant: str = "condensation"):
    """Read an etalon CSV back into (EtalonSet, SupportTracker)."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if not lines:
        raise FormatError(f"{path}: empty etalon file")
    cols = lines[0].split(",")
    if (
        cols[0] != "k"
        or cols[-2:] != ["beta", "support"]
        or any(c != f"c_{j}" for j, c in enumerate(cols[1:-2]))
    ):
        raise FormatError(f"{path}: bad etalon header {lines[0]!r}")
    d = len(cols) - 3
    centers, scales, support = [], [], []
    for i, ln in enumerate(lines[1:]):
        vals = ln.split(",")
        if len(vals) != d + 3:
            raise FormatError(f"{path}: row {i} has {len(vals)} fields, expected {d + 3}")
        centers.append([float(v) for v in vals[1:-2]])
        scales.append(float(vals[-2]))
        support.append(float(vals[-1]))
    scales = np.asarray(scales)
    if np.any(scales <= 0):
        raise FormatError(f"{path}: scales must be positive")
    etalons = EtalonSet(np.asarray(centers), np.log(scales), variant=variant)
    tracker = SupportTracker(s=np.asarray(support), t=0)
    return etalons, tracker
