"""End-to-end orchestration: shared classifier, per-class condensation,
per-class 2D projections, and calibrated anomaly decisions.

Training builds one model per class around the jointly-trained classifier.
Each class's projection space pairs the class logit with the distance to
the nearest of that class's etalons; a Gaussian fitted there, an inflated
zero-mean Gaussian, and a calibration table turn likelihood ratios into
anomaly scores with a false-negative-rate meaning.
"""

import os
from dataclasses import dataclass, replace

import numpy as np

from .classifier import (
    MLPParams,
    TrainConfig,
    forward,
    read_params,
    train_mlp,
    write_params,
)
from .condense import (
    CondenseConfig,
    condense,
    nearest_distances,
    read_etalons,
    write_etalons,
)
from .core import Dataset, FormatError, atomic_write_text
from .decision import (
    CalibrationTable,
    Strategy,
    calibrate,
    fit_id_gaussian,
    likelihood_ratio,
    make_ood_gaussian,
    np_threshold,
    ood_score,
)

__all__ = [
    "PipelineConfig",
    "ClassModel",
    "PixOODModel",
    "filter_by_purity",
    "train",
    "project",
    "infer",
    "relabel_ood",
    "save_model",
    "load_model",
]

_FORMAT_VERSION = 1


@dataclass(frozen=True)
class PipelineConfig:
    """Hyperparameters for the full training pipeline.

    The condensation template's seed/budget apply per class (seed offset by
    class id so classes draw distinct streams deterministically).
    """

    classifier: TrainConfig = TrainConfig(
        epochs=200, learning_rate=0.01, batch_size=128, hidden_width=64
    )
    condense: CondenseConfig = CondenseConfig(
        budget=32, epochs=60, batch_size=128, reinit=True
    )
    inflation: float = 100.0
    epsilon: float = 0.05
    grid_resolution: tuple = (200, 200)
    aggregate: str = "predicted"  # or "min": score under every class, take the minimum
    seed: int = 0

    def __post_init__(self):
        if self.aggregate not in ("predicted", "min"):
            raise ValueError("aggregate must be 'predicted' or 'min'")
        if self.inflation <= 0 or not 0 < self.epsilon < 1:
            raise ValueError("bad inflation or epsilon")


@dataclass
class ClassModel:
    class_id: int
    etalons: object
    tracker: object
    strategy: Strategy
    calibration: CalibrationTable


@dataclass
class PixOODModel:
    classifier: MLPParams
    class_models: list
    config: PipelineConfig

    @property
    def class_count(self) -> int:
        return len(self.class_models)


def filter_by_purity(histograms: np.ndarray, threshold: float = 0.9):
    """Keep rows whose dominant class covers strictly more than ``threshold``.

    Returns (mask, dominant labels); dominant label ties resolve to the
    lowest class index.
    """
    h = np.asarray(histograms, dtype=np.float64)
    totals = h.sum(axis=1)
    if np.any(totals <= 0):
        raise ValueError("histogram rows must be nonempty")
    fractions = h / totals[:, None]
    dominant = fractions.argmax(axis=1)
    mask = fractions.max(axis=1) > threshold
    return mask, dominant


def _project_class(classifier, etalons, pts, class_id):
    logits = forward(classifier, pts)
    return np.column_stack([logits[:, class_id], nearest_distances(pts, etalons)])


def train(data: Dataset, config: PipelineConfig = PipelineConfig()) -> PixOODModel:
    """Train the classifier jointly, then one decision stack per class."""
    if data.labels is None:
        raise ValueError("training requires labels")
    classes = int(data.labels.max()) + 1
    if classes < 2:
        raise ValueError("need at least two classes")
    clf_config = replace(config.classifier, seed=config.classifier.seed + config.seed)
    classifier = train_mlp(data, clf_config)

    class_models = []
    for c in range(classes):
        pts = data.points[data.labels == c]
        if pts.shape[0] < 3:
            raise ValueError(f"class {c} has only {pts.shape[0]} points; need at least 3")
        ccfg = replace(config.condense, seed=config.condense.seed + config.seed + c)
        etalons, tracker = condense(Dataset(pts), ccfg)
        z = _project_class(classifier, etalons, pts, c)
        id_gaussian = fit_id_gaussian(z)
        ood_gaussian = make_ood_gaussian(id_gaussian, config.inflation)
        strategy = Strategy(id_gaussian, ood_gaussian, epsilon=config.epsilon)
        table = calibrate(strategy, resolution=config.grid_resolution)
        strategy.threshold = np_threshold(table, config.epsilon)
        class_models.append(ClassModel(c, etalons, tracker, strategy, table))
    return PixOODModel(classifier, class_models, config)


def project(model: PixOODModel, x, class_id: int) -> np.ndarray:
    """A point's 2D coordinates in one class's projection space."""
    if not 0 <= class_id < model.class_count:
        raise ValueError(f"unknown class {class_id}")
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    pts = x[None, :] if single else x
    z = _project_class(model.classifier, model.class_models[class_id].etalons, pts, class_id)
    return z[0] if single else z


def _scores_for(model, pts, class_ids):
    out = np.empty(pts.shape[0])
    for c in np.unique(class_ids):
        cm = model.class_models[int(c)]
        sel = class_ids == c
        z = _project_class(model.classifier, cm.etalons, pts[sel], int(c))
        r = likelihood_ratio(z, cm.strategy)
        out[sel] = ood_score(cm.calibration, r)
    return out


def infer(model: PixOODModel, x):
    """Predicted class and anomaly score, single point or batch."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    pts = x[None, :] if single else x
    logits = forward(model.classifier, pts)
    predicted = logits.argmax(axis=1)
    if model.config.aggregate == "min":
        all_scores = np.column_stack(
            [_scores_for(model, pts, np.full(pts.shape[0], c)) for c in range(model.class_count)]
        )
        scores = all_scores.min(axis=1)
    else:
        scores = _scores_for(model, pts, predicted)
    if single:
        return int(predicted[0]), float(scores[0])
    return predicted, scores


def relabel_ood(predictions, scores, score_threshold: float, fallback_class: int):
    """Swap in the fallback class wherever the anomaly score exceeds the bar."""
    predictions = np.asarray(predictions)
    scores = np.asarray(scores)
    if predictions.shape != scores.shape:
        raise ValueError("predictions and scores must have equal length")
    out = predictions.copy()
    out[scores > score_threshold] = fallback_class
    return out


def _manifest_items(model: PixOODModel):
    cfg = model.config
    return [
        ("format_version", _FORMAT_VERSION),
        ("class_count", model.class_count),
        ("seed", cfg.seed),
        ("classifier_seed", cfg.classifier.seed),
        ("condense_seed", cfg.condense.seed),
        ("condense_variant", cfg.condense.variant),
        ("inflation", "%.17g" % cfg.inflation),
        ("epsilon", "%.17g" % cfg.epsilon),
        ("grid_nx", cfg.grid_resolution[0]),
        ("grid_ny", cfg.grid_resolution[1]),
        ("aggregate", cfg.aggregate),
    ]


def save_model(dirpath, model: PixOODModel) -> None:
    """Write the bundle: MLP binary, per-class etalon CSVs and strategy
    files, plus a manifest.  Calibration tables are recomputed on load."""
    os.makedirs(dirpath, exist_ok=True)
    write_params(os.path.join(dirpath, "classifier.bin"), model.classifier)
    from .decision import write_strategy

    for cm in model.class_models:
        write_etalons(os.path.join(dirpath, f"etalons_{cm.class_id}.csv"), cm.etalons, cm.tracker)
        write_strategy(os.path.join(dirpath, f"strategy_{cm.class_id}.txt"), cm.strategy)
    atomic_write_text(
        os.path.join(dirpath, "manifest.txt"),
        "".join("%s = %s\n" % kv for kv in _manifest_items(model)),
    )


def _read_manifest(path):
    kv = {}
    with open(path, "r", encoding="utf-8") as fh:
        for ln in fh:
            ln = ln.strip()
            if not ln or ln.startswith("#"):
                continue
            if "=" not in ln:
                raise FormatError(f"{path}: bad manifest line {ln!r}")
            key, val = ln.split("=", 1)
            kv[key.strip()] = val.strip()
    return kv


def load_model(dirpath) -> PixOODModel:
    from .decision import read_strategy

    manifest = _read_manifest(os.path.join(dirpath, "manifest.txt"))
    if int(manifest.get("format_version", -1)) != _FORMAT_VERSION:
        raise FormatError(f"unsupported bundle version {manifest.get('format_version')}")
    classes = int(manifest["class_count"])
    resolution = (int(manifest["grid_nx"]), int(manifest["grid_ny"]))
    classifier = read_params(os.path.join(dirpath, "classifier.bin"))
    class_models = []
    for c in range(classes):
        etalons, tracker = read_etalons(
            os.path.join(dirpath, f"etalons_{c}.csv"), variant=manifest["condense_variant"]
        )
        strategy = read_strategy(os.path.join(dirpath, f"strategy_{c}.txt"))
        table = calibrate(strategy, resolution=resolution)
        class_models.append(ClassModel(c, etalons, tracker, strategy, table))
    config = PipelineConfig(
        classifier=TrainConfig(seed=int(manifest["classifier_seed"])),
        condense=CondenseConfig(
            seed=int(manifest["condense_seed"]), variant=manifest["condense_variant"]
        ),
        inflation=float(manifest["inflation"]),
        epsilon=float(manifest["epsilon"]),
        grid_resolution=resolution,
        aggregate=manifest["aggregate"],
        seed=int(manifest["seed"]),
    )
    return PixOODModel(classifier, class_models, config)
