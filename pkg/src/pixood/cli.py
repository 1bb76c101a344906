"""Command-line front end.

Subcommands cover synthetic data generation, condensation runs, mixture
fitting, pipeline training, scoring, calibration export, and the
four-variant toy comparison.  Every subcommand is deterministic for a
fixed --seed and writes outputs atomically; report paths emit a figure
next to each CSV.

Exit codes: 0 success, 1 runtime failure (bad file, bad data), 2 usage.
"""

import argparse
import os
import sys
from dataclasses import fields, replace

import numpy as np

from . import synth
from .condense import CondenseConfig, condense, write_etalons
from .core import FormatError, atomic_write_text, read_points, write_points
from .decision import write_calibration
from .laplace_em import em_fit, write_mixture
from .metrics import auroc
from .pipeline import PipelineConfig, infer, load_model, save_model, train
from .report import TOY_SEEDS, render_score_histogram, run_toy_comparison, toy_condense_config
from .synth import GENERATORS, default_spec

__all__ = ["main"]


def _read_config_file(path: str) -> dict:
    """key = value lines; unknown keys rejected against CondenseConfig."""
    valid = {f.name: f.type for f in fields(CondenseConfig)}
    out = {}
    with open(path, "r", encoding="utf-8") as fh:
        for ln in fh:
            ln = ln.strip()
            if not ln or ln.startswith("#"):
                continue
            if "=" not in ln:
                raise FormatError(f"{path}: bad config line {ln!r}")
            key, val = (part.strip() for part in ln.split("=", 1))
            if key not in valid:
                raise FormatError(f"{path}: unknown config key {key!r}")
            if key in ("variant",):
                out[key] = val
            elif key in ("reinit",):
                out[key] = val.lower() in ("1", "true", "yes", "on")
            elif key in ("budget", "epochs", "warmup_epochs", "batch_size", "seed"):
                out[key] = int(val)
            else:
                out[key] = float(val)
    return out


def _condense_config(args) -> CondenseConfig:
    overrides = {}
    if args.config:
        overrides.update(_read_config_file(args.config))
    if getattr(args, "k", None) is not None:
        overrides["budget"] = args.k
    if getattr(args, "variant", None) is not None:
        overrides["variant"] = args.variant
    if args.seed is not None:
        overrides["seed"] = args.seed
    return replace(CondenseConfig(), **overrides)


def _cmd_synth(args) -> int:
    spec = default_spec(args.generator, seed=args.seed)
    os.makedirs(args.out, exist_ok=True)
    produced = getattr(synth, args.generator)(spec)
    if isinstance(produced, tuple):
        id_data, ood_data = produced
        write_points(id_data, os.path.join(args.out, f"{args.generator}_id.pts"))
        write_points(ood_data, os.path.join(args.out, f"{args.generator}_ood.pts"))
    else:
        write_points(produced, os.path.join(args.out, f"{args.generator}.pts"))
    return 0


def _cmd_eval_toy(args) -> int:
    data = read_points(args.inp)
    seeds = tuple(int(s) for s in args.seeds.split(",")) if args.seeds else TOY_SEEDS
    base = toy_condense_config()
    if args.config:
        base = replace(base, **_read_config_file(args.config))
    rows = run_toy_comparison(data, args.out, seeds=seeds, theta=args.theta, base_config=base)
    by_variant = {}
    for r in rows:
        by_variant.setdefault(r["variant"], []).append(r["useful_count"])
    for name, counts in by_variant.items():
        print(f"{name}: useful={counts}")
    return 0


def _cmd_condense(args) -> int:
    data = read_points(args.inp)
    config = _condense_config(args)
    etalons, tracker = condense(data, config)
    os.makedirs(args.out, exist_ok=True)
    write_etalons(os.path.join(args.out, "etalons.csv"), etalons, tracker)
    return 0


def _cmd_em_fit(args) -> int:
    data = read_points(args.inp)
    mix = em_fit(data.points, args.k, seed=args.seed or 0)
    os.makedirs(args.out, exist_ok=True)
    write_mixture(os.path.join(args.out, "mixture.csv"), mix)
    return 0


def _cmd_train(args) -> int:
    data = read_points(args.inp)
    config = PipelineConfig(seed=args.seed or 0, epsilon=args.epsilon)
    if args.k is not None:
        config = replace(config, condense=replace(config.condense, budget=args.k))
    if args.config:
        config = replace(
            config, condense=replace(config.condense, **_read_config_file(args.config))
        )
    model = train(data, config)
    save_model(args.out, model)
    return 0


def _cmd_score(args) -> int:
    model = load_model(args.model)
    data = read_points(args.inp)
    predicted, scores = infer(model, data.points)
    os.makedirs(args.out, exist_ok=True)

    def dump(name, preds, vals):
        lines = ["index,class,ood_score"]
        for i, (p, s) in enumerate(zip(preds, vals)):
            lines.append("%d,%d,%.17g" % (i, p, s))
        atomic_write_text(os.path.join(args.out, name), "\n".join(lines) + "\n")

    dump("scores.csv", predicted, scores)
    render_score_histogram(scores, os.path.join(args.out, "scores.png"))
    if args.id_probe:
        id_data = read_points(args.id_probe)
        id_pred, id_scores = infer(model, id_data.points)
        dump("id_scores.csv", id_pred, id_scores)
        print("auroc = %.6f" % auroc(scores, id_scores))
    return 0


def _cmd_calib_dump(args) -> int:
    model = load_model(args.model)
    if not 0 <= args.class_id < model.class_count:
        raise ValueError(f"class {args.class_id} not in [0, {model.class_count})")
    os.makedirs(args.out, exist_ok=True)
    write_calibration(
        os.path.join(args.out, f"calibration_{args.class_id}.csv"),
        model.class_models[args.class_id].calibration,
    )
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pixood", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out_required=True):
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--config", default=None, help="key = value config file")
        p.add_argument("--out", required=out_required, help="output directory")

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    p.add_argument("--generator", choices=GENERATORS, required=True)
    common(p)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("eval-toy", help="four-variant condensation comparison")
    p.add_argument("--in", dest="inp", required=True, help="toy points file")
    p.add_argument("--theta", type=float, default=1.0, help="useful-support threshold")
    p.add_argument("--seeds", default=None, help="comma-separated seed list")
    common(p)
    p.set_defaults(func=_cmd_eval_toy)

    p = sub.add_parser("condense", help="run one condensation")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--k", type=int, default=None, help="etalon budget")
    p.add_argument("--variant", choices=("soft_kmeans", "soft_kmedians", "condensation"))
    common(p)
    p.set_defaults(func=_cmd_condense)

    p = sub.add_parser("em-fit", help="fit a Laplace mixture by EM")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--k", type=int, required=True)
    common(p)
    p.set_defaults(func=_cmd_em_fit)

    p = sub.add_parser("train", help="train the full pipeline")
    p.add_argument("--in", dest="inp", required=True, help="labeled points file")
    p.add_argument("--k", type=int, default=None, help="per-class etalon budget")
    p.add_argument("--epsilon", type=float, default=0.05)
    common(p)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("score", help="score points with a trained bundle")
    p.add_argument("--model", required=True, help="model bundle directory")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--id-probe", default=None, help="ID points; also print AUROC")
    common(p)
    p.set_defaults(func=_cmd_score)

    p = sub.add_parser("calib-dump", help="export one class's calibration table")
    p.add_argument("--model", required=True)
    p.add_argument("--class-id", type=int, required=True)
    common(p)
    p.set_defaults(func=_cmd_calib_dump)

    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (OSError, FormatError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
