"""Command-line entry point: simulate, train, eval, ablate, stress.

Exit codes: 0 success, 1 usage error, 2 data or configuration error.
Every run writes a JSON snapshot of its resolved settings next to its
outputs, so any artifact can be regenerated from the snapshot alone.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from typing import Sequence

from spectraloc import __version__
from spectraloc.dataset import DatasetError, NoiseModel, read_log, split_leave_one_group_out, write_log
from spectraloc.evaluation import (
    EvaluationError,
    PipelineConfig,
    ablate_sensor_count,
    ablate_subbands,
    evaluate_model,
    run_leave_one_out,
    stress_test,
)
from spectraloc.lightsim import DegenerateGeometryError, SceneError, generate_dataset, load_scene, save_scene
from spectraloc.models.localizer import ConfigurationError, Localizer, fit_localizer
from spectraloc.models.training import TrainConfig, TrainingError
from spectraloc.preprocess import PreprocessError
from spectraloc.scenes import cubicle_office
from spectraloc.spectral import SpectralError

BUILTIN_SCENES = {"cubicle-office": cubicle_office}
SEEDED = ("simulate", "train")


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _csv_ints(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(t) for t in text.split(",") if t.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _csv_strs(text: str) -> tuple[str, ...]:
    return tuple(t.strip() for t in text.split(",") if t.strip())


def _holdout(text: str) -> tuple[str, str]:
    key, sep, value = text.partition("=")
    if not sep or key not in ("day", "condition") or not value:
        raise argparse.ArgumentTypeError(f"expected day=<n> or condition=<tag>, got {text!r}")
    return key, value


def _pipeline_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("pipeline")
    g.add_argument("--sensors", type=_csv_strs, help="comma-separated sensor labels (default: all)")
    g.add_argument("--mask", type=_csv_ints, help="comma-separated band indices (default: all)")
    g.add_argument("--mode", choices=("spectral", "intensity"), default="spectral")
    g.add_argument("--raw", action="store_true", help="skip min-max normalization")
    g.add_argument("--scope", choices=("sample", "sensor"), default="sample")
    g.add_argument("--kind", choices=("network", "knn"), default="network")
    g.add_argument("--k", type=int, default=5, help="neighbours for --kind knn")
    g.add_argument("--val-fraction", type=float, default=0.1)
    t = p.add_argument_group("training")
    defaults = TrainConfig()
    t.add_argument("--lr", type=float, default=defaults.learning_rate)
    t.add_argument("--batch-size", type=int, default=defaults.batch_size)
    t.add_argument("--epochs", type=int, default=defaults.max_epochs)
    t.add_argument("--patience", type=int, default=defaults.patience)
    t.add_argument("--hidden", type=int, default=defaults.hidden)
    t.add_argument("--dropout", type=float, default=defaults.dropout)
    t.add_argument("--loss", choices=("mse", "ce"), default=defaults.loss)
    t.add_argument("--bn-first", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="spectraloc", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"spectraloc {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, seeded: bool):
        p.add_argument("--config", help="JSON file of flag values; explicit flags win")
        p.add_argument("--seed", type=int, required=False,
                       help="random seed" + (" (required)" if seeded else ""))

    p = sub.add_parser("simulate", help="render a scene into a noisy fingerprint CSV")
    common(p, True)
    src = p.add_mutually_exclusive_group()
    src.add_argument("--scene", help="scene JSON file")
    src.add_argument("--builtin", choices=sorted(BUILTIN_SCENES), help="built-in scene")
    p.add_argument("--samples", type=int, default=30, help="samples per spot and day")
    p.add_argument("--days", type=int, default=1)
    p.add_argument("--first-day", type=int, default=0)
    p.add_argument("--condition", default="default")
    p.add_argument("--light-drift", type=float, default=0.0)
    p.add_argument("--stray-rate", type=float, default=0.0)
    p.add_argument("--jitter", type=float, default=0.0)
    p.add_argument("--accuracy", type=float, default=NoiseModel().relative_accuracy)
    p.add_argument("--precision-floor", type=float, default=NoiseModel().precision_floor)
    p.add_argument("--dim", type=float, default=1.0, help="scale every reading (global dimming)")
    p.add_argument("--save-scene", help="also write the scene as JSON")
    p.add_argument("--out", help="output CSV")

    p = sub.add_parser("train", help="fit a localizer and write a checkpoint")
    common(p, True)
    p.add_argument("--data", help="fingerprint CSV")
    p.add_argument("--holdout", type=_holdout, help="exclude a group, e.g. day=3")
    _pipeline_flags(p)
    p.add_argument("--out", help="checkpoint path")

    p = sub.add_parser("eval", help="score a checkpoint, or run leave-one-group-out")
    common(p, False)
    p.add_argument("--data", help="fingerprint CSV")
    p.add_argument("--model", help="checkpoint to score")
    p.add_argument("--holdout", type=_holdout, help="score only this group, e.g. day=3")
    p.add_argument("--loo", choices=("day", "condition"), help="train per held-out group instead")
    _pipeline_flags(p)
    p.add_argument("--out-dir", help="report directory")
    p.add_argument("--name", default="eval")

    p = sub.add_parser("ablate", help="sensor-count or sub-band sweep")
    common(p, False)
    p.add_argument("--data", help="fingerprint CSV")
    p.add_argument("--what", choices=("sensors", "subbands"), default="subbands")
    p.add_argument("--policy", choices=("random", "rgb"), default="random")
    p.add_argument("--sizes", type=_csv_ints, help="subset sizes (bands, sensors or rgb k)")
    p.add_argument("--trials", type=int, default=250)
    p.add_argument("--cap", type=int, default=500)
    p.add_argument("--holdout", type=_holdout, help="held-out group (default: first)")
    _pipeline_flags(p)
    p.add_argument("--out-dir", help="report directory")
    p.add_argument("--name", default="ablation")

    p = sub.add_parser("stress", help="train on one condition, test on another")
    common(p, False)
    p.add_argument("--train-data", help="CSV of the training condition")
    p.add_argument("--test-data", help="CSV of the test condition")
    _pipeline_flags(p)
    p.add_argument("--out-dir", help="report directory")
    p.add_argument("--name", default="stress")
    return parser


def _parse(argv: Sequence[str]) -> argparse.Namespace:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as f:
                values = json.load(f)
        except OSError as exc:
            raise DataError(f"cannot read config {args.config}: {exc.strerror}")
        except json.JSONDecodeError as exc:
            raise DataError(f"config {args.config} is not valid JSON: {exc.msg} (line {exc.lineno})")
        if not isinstance(values, dict):
            raise DataError(f"config {args.config} must hold a JSON object")
        # snapshots written by earlier runs are valid config files
        if values.get("command", args.command) != args.command:
            raise DataError(f"config {args.config} is for '{values['command']}', not '{args.command}'")
        values = {k: v for k, v in values.items() if k not in ("command", "config", "spectraloc_version")}
        known = set(vars(args)) - {"command", "config"}
        unknown = sorted(set(k.replace("-", "_") for k in values) - known)
        if unknown:
            raise DataError(f"config {args.config}: unknown keys {unknown} for '{args.command}'")
        sub = parser._subparsers._group_actions[0].choices[args.command]
        sub.set_defaults(**{k.replace("-", "_"): v for k, v in values.items()})
        args = parser.parse_args(argv)
        for key in ("sensors", "mask", "sizes"):
            if isinstance(getattr(args, key, None), list):
                setattr(args, key, tuple(getattr(args, key)))
        if isinstance(getattr(args, "holdout", None), str):
            args.holdout = _holdout(args.holdout)
    if args.command in SEEDED and args.seed is None:
        raise UsageError(f"{args.command}: --seed is required")
    return args


def _require(args, *names: str) -> None:
    missing = [n for n in names if getattr(args, n.replace("-", "_"), None) in (None, "")]
    if missing:
        raise UsageError(f"{args.command}: missing " + ", ".join(f"--{n}" for n in missing))


def _pipeline(args) -> PipelineConfig:
    train = TrainConfig(
        batch_size=args.batch_size, learning_rate=args.lr, max_epochs=args.epochs,
        patience=args.patience, seed=args.seed if args.seed is not None else 0,
        dropout=args.dropout, hidden=args.hidden, loss=args.loss, bn_first=args.bn_first,
    )
    return PipelineConfig(
        sensors=args.sensors, mask=args.mask, normalized=not args.raw, mode=args.mode,
        scope=args.scope, kind=args.kind, knn_k=args.k, val_fraction=args.val_fraction, train=train,
    )


def _snapshot(args, path: str) -> None:
    snap = {k: (list(v) if isinstance(v, tuple) else v) for k, v in sorted(vars(args).items())}
    snap["spectraloc_version"] = __version__
    with open(path, "w", encoding="utf-8") as f:
        json.dump(snap, f, sort_keys=True, indent=1)
        f.write("\n")


def _out_dir(path: str) -> str:
    try:
        os.makedirs(path, exist_ok=True)
    except OSError as exc:
        raise DataError(f"cannot create output directory {path}: {exc.strerror}")
    if not os.access(path, os.W_OK):
        raise DataError(f"output directory {path} is not writable")
    return path


def _parent(path: str) -> None:
    _out_dir(os.path.dirname(os.path.abspath(path)))


def _read(path: str):
    if not os.path.exists(path):
        raise DataError(f"no such file: {path}")
    return read_log(path)


def _split(d, holdout):
    if holdout is None:
        return d, None
    return split_leave_one_group_out(d, *holdout)


def cmd_simulate(args) -> None:
    _require(args, "out")
    if args.scene:
        if not os.path.exists(args.scene):
            raise DataError(f"no such file: {args.scene}")
        scene = load_scene(args.scene)
    elif args.builtin:
        scene = BUILTIN_SCENES[args.builtin]()
    else:
        raise UsageError("simulate: give --scene or --builtin")
    noise = NoiseModel(args.accuracy, args.precision_floor)
    d = generate_dataset(scene, args.samples, noise, args.seed, days=args.days,
                         condition=args.condition, light_drift=args.light_drift,
                         first_day=args.first_day, position_jitter=args.jitter,
                         stray_rate=args.stray_rate)
    if args.dim != 1.0:
        d = d.scaled(args.dim)
    _parent(args.out)
    write_log(d, args.out)
    if args.save_scene:
        save_scene(scene, args.save_scene)
    _snapshot(args, args.out + ".config.json")
    print(f"wrote {len(d)} fingerprints ({len(d) * len(d.sensors)} rows) to {args.out}")


def cmd_train(args) -> None:
    _require(args, "data", "out")
    d = _read(args.data)
    train, _ = _split(d, args.holdout)
    cfg = _pipeline(args)
    model = fit_localizer(train, cfg.preprocessing(train), kind=cfg.kind, train_config=cfg.train,
                          val_fraction=cfg.val_fraction, knn_k=cfg.knn_k, spots=d.spots)
    _parent(args.out)
    model.save(args.out)
    stem = os.path.splitext(args.out)[0]
    if model.history is not None:
        h = model.history
        with open(stem + ".history.json", "w", encoding="utf-8") as f:
            json.dump({"train_loss": h.train_loss, "val_loss": h.val_loss,
                       "best_epoch": h.best_epoch, "stopped_early": h.stopped_early},
                      f, sort_keys=True)
            f.write("\n")
    _snapshot(args, stem + ".config.json")
    for note in model.notes:
        print(f"note: {note}")
    print(f"wrote checkpoint {args.out}")


def _emit(report, args) -> None:
    out = _out_dir(args.out_dir)
    report.save(out, args.name)
    _snapshot(args, os.path.join(out, f"{args.name}.config.json"))
    s = report.summary
    print(f"{args.name}: median {s['median']:.3f} m, p75 {s['p75']:.3f} m, p90 {s['p90']:.3f} m "
          f"over {len(report.truth)} samples")
    for name, pts in report.curves.items():
        for p in pts:
            print(f"  {name} x={p.x:g}: mean {p.mean:.3f} +- {p.ci:.3f} (n={p.count})")
    for label, v in report.variants.items():
        if "p90" in v:
            print(f"  {label}: median {v['median']:.3f}, p90 {v['p90']:.3f}")


def cmd_eval(args) -> None:
    _require(args, "data", "out_dir")
    if bool(args.model) == bool(args.loo):
        raise UsageError("eval: give exactly one of --model or --loo")
    d = _read(args.data)
    if args.loo:
        report = run_leave_one_out(d, args.loo, _pipeline(args), name=args.name)
    else:
        if not os.path.exists(args.model):
            raise DataError(f"no such file: {args.model}")
        _, test = _split(d, args.holdout)
        report = evaluate_model(Localizer.load(args.model), test if test is not None else d, args.name)
    _emit(report, args)


def cmd_ablate(args) -> None:
    _require(args, "data", "out_dir")
    d = _read(args.data)
    cfg = _pipeline(args)
    holdout = args.holdout[1] if args.holdout else None
    key = args.holdout[0] if args.holdout else "day"
    seed = args.seed if args.seed is not None else 0
    if args.what == "sensors":
        report = ablate_sensor_count(d, cfg, group_key=key, holdout=holdout, sizes=args.sizes,
                                     cap=args.cap, seed=seed, name=args.name)
    else:
        report = ablate_subbands(d, cfg, args.policy, group_key=key, holdout=holdout,
                                 sizes=args.sizes, trials=args.trials, seed=seed, name=args.name)
    _emit(report, args)


def cmd_stress(args) -> None:
    _require(args, "train_data", "test_data", "out_dir")
    report = stress_test(_read(args.train_data), _read(args.test_data), _pipeline(args), name=args.name)
    _emit(report, args)


COMMANDS = {"simulate": cmd_simulate, "train": cmd_train, "eval": cmd_eval,
            "ablate": cmd_ablate, "stress": cmd_stress}

DATA_ERRORS = (DataError, DatasetError, SceneError, DegenerateGeometryError, SpectralError,
               PreprocessError, ConfigurationError, EvaluationError, TrainingError, KeyError,
               json.JSONDecodeError, OSError, ValueError)


def dispatch(argv: Sequence[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = _parse(argv)
        COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"usage error: {exc} (see --help)", file=sys.stderr)
        return 1
    except DATA_ERRORS as exc:
        msg = str(exc) or exc.__class__.__name__
        print(f"error: {msg}", file=sys.stderr)
        return 2
    return 0


def main() -> None:
    sys.exit(dispatch())


if __name__ == "__main__":
    main()
