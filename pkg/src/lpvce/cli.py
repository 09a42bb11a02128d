"""Command-line entry point: ``lpvce <command> [options]``.

Option precedence is flags > ``--config`` JSON file > built-in defaults.
The default output directory comes from ``$LPVCE_OUTPUT_DIR`` (else ``.``).
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import geometry
from .errors import LpVceError
from .evaluation import (BUDGETS, CONSTANT_GRID, DECAYING_GRID, benchmark_csv, benchmark_schedules,
                         change_distribution, lmo_scaling_probe, localization_metrics)
from .io import (load_idx_dataset, load_mask, load_model, load_png, panel, save_model, save_png)
from .model import (TrainConfig, accuracy, calibrate_temperature, ece, make_blobs,
                    pick_target_second, train_mlp)
from .optim import METHODS
from .oracles import run_oracle_check
from .vce import (DEFAULT_ITERATIONS, DEFAULT_P, DEFAULT_RESTARTS, VceRequest, difference_map,
                  generate_penalized, generate_vce, radius_sweep)

OUTPUT_ENV = "LPVCE_OUTPUT_DIR"
TOLERANCES = ("FEASIBILITY_RTOL", "BRACKET_RTOL", "MIN_SMOOTH_EXPONENT")


def _floats(text):
    return [float(t) for t in str(text).split(",") if t.strip()]


def _ints(text):
    return [int(t) for t in str(text).split(",") if t.strip()]


def _add_common(p):
    p.add_argument("--config", help="JSON file with option defaults")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1, help="thread pool size for independent work")
    p.add_argument("--out", default=None, help=f"output directory (default ${OUTPUT_ENV} or .)")
    p.add_argument("--tol", action="append", default=[], metavar="NAME=VALUE",
                   help=f"override a numeric tolerance ({', '.join(TOLERANCES)})")
    p.add_argument("-v", "--verbose", action="store_true")


def _add_data(p):
    p.add_argument("--images", help="IDX image file (otherwise the synthetic blob generator)")
    p.add_argument("--labels", help="IDX label file")
    p.add_argument("--data-seed", type=int, default=0)
    p.add_argument("--n-per-class", type=int, default=100)
    p.add_argument("--classes", type=int, default=4)
    p.add_argument("--size", type=int, default=8)
    p.add_argument("--label-noise", type=float, default=0.0)


def _add_vce_opts(p, radii=False):
    p.add_argument("--model", required=True)
    p.add_argument("--image", required=True, help="PNG input image")
    p.add_argument("--target", default="second", help="class index or 'second'")
    p.add_argument("--p", default=str(DEFAULT_P))
    if radii:
        p.add_argument("--radii", required=True, help="comma separated, ascending")
    else:
        p.add_argument("--eps", type=float, default=1.0)
    p.add_argument("--method", choices=METHODS, default="afw")
    p.add_argument("--gamma0", type=float, default=None)
    p.add_argument("--iters", type=int, default=DEFAULT_ITERATIONS)
    p.add_argument("--restarts", type=int, default=DEFAULT_RESTARTS)


def build_parser():
    parser = argparse.ArgumentParser(prog="lpvce", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train the MLP classifier")
    _add_common(p)
    _add_data(p)
    p.add_argument("--model", required=True, help="output model file")
    p.add_argument("--hidden", default="32")
    p.add_argument("--epochs", type=int, default=30)
    p.add_argument("--lr", type=float, default=0.1)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--export-samples", type=int, default=0,
                   help="write this many test images as PNG into OUT/samples")

    p = sub.add_parser("calibrate", help="fit the temperature by ECE minimization")
    _add_common(p)
    _add_data(p)
    p.add_argument("--model", required=True)
    p.add_argument("--bins", type=int, default=15)

    p = sub.add_parser("vce", help="generate one counterfactual")
    _add_common(p)
    _add_vce_opts(p)
    p.add_argument("--mode", choices=("budget", "penalized"), default="budget")
    p.add_argument("--lam", type=float, default=0.1, help="penalty weight in penalized mode")

    p = sub.add_parser("sweep", help="counterfactuals for several radii, as a panel")
    _add_common(p)
    _add_vce_opts(p, radii=True)

    p = sub.add_parser("bench", help="AFW vs fixed-step FW schedules")
    _add_common(p)
    _add_data(p)
    p.add_argument("--model", required=True)
    p.add_argument("--n", type=int, default=100, help="number of test images")
    p.add_argument("--p", default=str(DEFAULT_P))
    p.add_argument("--eps", type=float, default=1.0)
    p.add_argument("--budgets", default=",".join(map(str, BUDGETS)))
    p.add_argument("--constant-grid", default=",".join(map(str, CONSTANT_GRID)))
    p.add_argument("--decaying-grid", default=",".join(map(str, DECAYING_GRID)))
    p.add_argument("--restarts", type=int, default=1)

    p = sub.add_parser("metrics", help="localization metrics of a change against a mask")
    _add_common(p)
    p.add_argument("--original", required=True)
    p.add_argument("--counterfactual", required=True)
    p.add_argument("--mask", required=True, help="PNG, nonzero = inside")

    p = sub.add_parser("oracle-check", help="closed-form LMO and projections vs brute force")
    _add_common(p)
    p.add_argument("--trials", type=int, default=1000)
    p.add_argument("--no-cross-check", action="store_true")

    p = sub.add_parser("scaling", help="time the LMO across dimensions")
    _add_common(p)
    p.add_argument("--dims", default="1000,10000,100000,1000000")
    p.add_argument("--trials", type=int, default=5)
    p.add_argument("--p", type=float, default=DEFAULT_P)
    return parser


def parse_args(argv):
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "config", None):
        cfg = json.loads(Path(args.config).read_text())
        if not isinstance(cfg, dict):
            raise LpVceError("config file must hold a JSON object")
        sub = parser._subparsers._group_actions[0].choices[args.command]
        known = {a.dest for a in sub._actions}
        unknown = set(cfg) - known
        if unknown:
            raise LpVceError(f"unknown config keys: {sorted(unknown)}")
        sub.set_defaults(**cfg)
        args = parser.parse_args(argv)
    return args


def _apply_tolerances(pairs):
    for item in pairs:
        name, _, value = item.partition("=")
        if name not in TOLERANCES:
            raise LpVceError(f"unknown tolerance {name!r}")
        setattr(geometry, name, float(value))


def _outdir(args) -> Path:
    out = Path(args.out or os.environ.get(OUTPUT_ENV, "."))
    out.mkdir(parents=True, exist_ok=True)
    return out


def _dataset(args):
    if args.images or args.labels:
        if not (args.images and args.labels):
            raise LpVceError("--images and --labels go together")
        return load_idx_dataset(args.images, args.labels, seed=args.data_seed)
    return make_blobs(args.n_per_class, args.classes, args.size, args.data_seed,
                      label_noise=args.label_noise)


def _write_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _load_input(args):
    model = load_model(args.model)
    img = load_png(args.image)
    if img.size != model.input_dim:
        raise LpVceError(f"image has {img.size} values, model expects {model.input_dim}")
    x = img.ravel()
    target = pick_target_second(model, x) if args.target == "second" else int(args.target)
    return model, img.shape, x, target


def cmd_train(args):
    data = _dataset(args)
    cfg = TrainConfig(hidden=tuple(_ints(args.hidden)), epochs=args.epochs,
                      learning_rate=args.lr, batch_size=args.batch_size, seed=args.seed)
    model = train_mlp(cfg, data)
    save_model(model, args.model)
    report = {split: accuracy(model, *data.part(split))
              for split in ("train", "calibration", "test")}
    report["loss_history"] = model.history
    out = _outdir(args)
    _write_json(out / "train_report.json", report)
    if args.export_samples:
        Xt, yt = data.part("test")
        sd = out / "samples"
        sd.mkdir(exist_ok=True)
        for i in range(min(args.export_samples, len(yt))):
            save_png(sd / f"{i:04d}_label{yt[i]}.png", Xt[i], data.image_shape)
    print(json.dumps({k: v for k, v in report.items() if k != "loss_history"}))
    return 0


def cmd_calibrate(args):
    data = _dataset(args)
    model = load_model(args.model)
    X, y = data.part("calibration")
    before = ece(model, X, y, args.bins)
    pred = model.predict(X)
    model.temperature = calibrate_temperature(model, X, y, args.bins)
    after = ece(model, X, y, args.bins)
    if not np.array_equal(pred, model.predict(X)):
        raise LpVceError("temperature changed predictions")
    save_model(model, args.model)
    report = {"temperature": model.temperature, "ece_before": before, "ece_after": after}
    _write_json(_outdir(args) / "calibration.json", report)
    print(json.dumps(report))
    return 0


def _result_record(res, x0, shape):
    rec = res.to_dict()
    rec["image_shape"] = list(shape)
    rec["original"] = x0.tolist()
    rec["counterfactual"] = res.counterfactual.tolist()
    return rec


def cmd_vce(args):
    model, shape, x, target = _load_input(args)
    if args.mode == "penalized":
        res = generate_penalized(model, x, target, args.lam, args.p, steps=args.iters)
    else:
        res = generate_vce(model, VceRequest(x, target, args.p, args.eps, args.method,
                                             args.iters, args.restarts, args.seed, args.gamma0,
                                             args.workers))
    out = _outdir(args)
    save_png(out / "cf.png", res.counterfactual, shape)
    save_png(out / "diff.png", difference_map(x, res.counterfactual, shape))
    _write_json(out / "result.json", _result_record(res, x, shape))
    print(json.dumps(res.to_dict()))
    return 0


def cmd_sweep(args):
    model, shape, x, target = _load_input(args)
    results = radius_sweep(model, x, target, args.p, _floats(args.radii), args.method,
                           args.iters, args.restarts, args.seed, args.gamma0, args.workers)
    out = _outdir(args)
    tiles = [x.reshape(shape)] + [r.counterfactual.reshape(shape) for r in results]
    save_png(out / "panel.png", panel(tiles))
    _write_json(out / "sweep.json", [_result_record(r, x, shape) for r in results])
    for r in results:
        print(json.dumps(r.to_dict()))
    return 0


def cmd_bench(args):
    data = _dataset(args)
    model = load_model(args.model)
    X, _ = data.part("test")
    rows = benchmark_schedules(model, X[:args.n], args.p, args.eps, _ints(args.budgets),
                               _floats(args.constant_grid), _floats(args.decaying_grid),
                               restarts=args.restarts, seed=args.seed, workers=args.workers)
    text = benchmark_csv(rows)
    (_outdir(args) / "bench.csv").write_text(text)
    sys.stdout.write(text)
    return 0


def cmd_metrics(args):
    a, b = load_png(args.original), load_png(args.counterfactual)
    mask = load_mask(args.mask)
    rep = localization_metrics(change_distribution(a, b), mask)
    _write_json(_outdir(args) / "metrics.json", rep.to_dict())
    print(json.dumps(rep.to_dict()))
    return 0


def cmd_oracle_check(args):
    counts = run_oracle_check(args.trials, args.seed, cross_check=not args.no_cross_check)
    n = counts.pop("trials")
    failed = 0
    for name, ok in counts.items():
        print(f"{name}: {ok}/{n} pass, {n - ok} fail")
        failed += n - ok
    return 0 if failed == 0 else 1


def cmd_scaling(args):
    rep = lmo_scaling_probe(_ints(args.dims), args.trials, args.p, args.seed)
    for r in rep["rows"]:
        print(f"d={r['d']}: median {r['median_seconds']:.6f} s")
    print(f"log-log slope: {rep['slope']:.3f}")
    _write_json(_outdir(args) / "scaling.json", rep)
    return 0


COMMANDS = {"train": cmd_train, "calibrate": cmd_calibrate, "vce": cmd_vce, "sweep": cmd_sweep,
            "bench": cmd_bench, "metrics": cmd_metrics, "oracle-check": cmd_oracle_check,
            "scaling": cmd_scaling}


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    try:
        args = parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    except (LpVceError, OSError, ValueError) as e:
        print(f"lpvce: error: {e}", file=sys.stderr)
        return 2
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    saved = {name: getattr(geometry, name) for name in TOLERANCES}
    try:
        _apply_tolerances(args.tol)
        return COMMANDS[args.command](args)
    except (LpVceError, OSError, ValueError, ArithmeticError) as e:
        print(f"lpvce: error: {e}", file=sys.stderr)
        return 1
    finally:
        for name, value in saved.items():
            setattr(geometry, name, value)


if __name__ == "__main__":
    sys.exit(main())
