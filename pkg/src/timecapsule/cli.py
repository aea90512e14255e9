"""``timecapsule`` command line.

Settings come from an optional ``--config`` file of ``section.key = value``
lines; any key can be overridden with ``--section.key VALUE``.

Exit codes: 0 ok, 2 config error, 3 data error, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from .config import ConfigError, RunConfig, parse_value
from .data import DataError
from .training import NumericError

OUTPUT_ENV = "TIMECAPSULE_OUTPUT_DIR"
EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4

log = logging.getLogger("timecapsule")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="timecapsule",
        description="TimeCapsule forecaster: train, evaluate, export and verify.",
        epilog="Any config key may be overridden as --section.key VALUE, e.g. --model.d 32.",
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="key-value config file")
    common.add_argument("--out", type=Path, help=f"output directory (default ${OUTPUT_ENV} or ./runs)")
    common.add_argument("-v", "--verbose", action="count", default=0)

    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    sub.add_parser("train", parents=[common], help="train and save a checkpoint")
    p = sub.add_parser("eval", parents=[common], help="evaluate a checkpoint on the test split")
    p.add_argument("--checkpoint", type=Path, help="checkpoint path (random init when omitted)")
    p.add_argument("--split", default="test", choices=["train", "val", "test"])
    p = sub.add_parser("forecast", parents=[common], help="forecast after the last lookback window")
    p.add_argument("--checkpoint", type=Path, required=True)
    p = sub.add_parser("decompose", parents=[common], help="export level sub-series")
    p.add_argument("--checkpoint", type=Path, required=True)
    sub.add_parser("gradcheck", parents=[common], help="finite-difference gradient checks")
    sub.add_parser("bench", parents=[common], help="parameter and FLOP report")
    p = sub.add_parser("ablate", parents=[common], help="train and compare ablation arms")
    p.add_argument("--axis", required=True,
                   choices=["residual_info", "noise", "positional_encoding", "compression_dims",
                            "jepa"])
    return parser


def parse_overrides(extra):
    """Turn ``--a.b 1 --c.d=x`` into ``{"a.b": 1, "c.d": "x"}``."""
    overrides = {}
    i = 0
    while i < len(extra):
        token = extra[i]
        if not token.startswith("--") or "." not in token:
            raise ConfigError(f"unrecognized argument {token!r}")
        key, eq, value = token[2:].partition("=")
        if not eq:
            if i + 1 >= len(extra):
                raise ConfigError(f"missing value for --{key}")
            value = extra[i + 1]
            i += 1
        overrides[key] = parse_value(value)
        i += 1
    return overrides


def load_config(args, extra) -> RunConfig:
    cfg = RunConfig()
    if args.config is not None:
        if not args.config.exists():
            raise ConfigError(f"config file not found: {args.config}")
        cfg = RunConfig.from_text(args.config.read_text())
    return cfg.with_overrides(parse_overrides(extra))


def output_dir(args) -> Path:
    out = args.out or Path(os.environ.get(OUTPUT_ENV, "runs"))
    out.mkdir(parents=True, exist_ok=True)
    return out


def _print_metrics(label, m):
    print(f"{label:16s} mse={m.mse:.6f} mae={m.mae:.6f}")


def cmd_train(args, cfg):
    from .training import train

    out = output_dir(args)
    result = train(cfg, output_dir=out)
    print(f"best epoch {result.best_epoch}  val mse {result.best_val_mse:.6f}")
    _print_metrics("model", result.test)
    for name, m in result.baselines.items():
        _print_metrics(name, m)
    print(f"checkpoint: {result.checkpoint}")
    return EXIT_OK


def cmd_eval(args, cfg):
    from .model import TimeCapsule
    from .training import baseline_metrics, evaluate_model, load_model, prepare_data

    if args.checkpoint is not None:
        model, cfg, manifest = load_model(args.checkpoint)
        data = prepare_data(cfg)
        _restore_scaler(data, manifest)
    else:
        log.warning("no checkpoint given; evaluating a randomly initialized model")
        model = TimeCapsule(cfg.model, cfg.train.seed)
        data = prepare_data(cfg)
    values = {"train": data.train, "val": data.val, "test": data.test}[args.split]
    metrics = evaluate_model(model, values, cfg, data.scaler)
    baselines = baseline_metrics(values, cfg, data.scaler)
    _print_metrics("model", metrics)
    for name, m in baselines.items():
        _print_metrics(name, m)
    summary = {"split": args.split, "model": metrics.__dict__,
               "baselines": {k: v.__dict__ for k, v in baselines.items()}}
    (output_dir(args) / f"eval_{args.split}.json").write_text(json.dumps(summary, indent=2) + "\n")
    return EXIT_OK


def cmd_forecast(args, cfg):
    from .training import last_window_forecast, load_model, prepare_data

    model, cfg, manifest = load_model(args.checkpoint)
    data = prepare_data(cfg)
    _restore_scaler(data, manifest)
    y = last_window_forecast(model, cfg, data)
    path = output_dir(args) / "forecast.csv"
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", *data.names])
        for step, row in enumerate(y, 1):
            writer.writerow([step, *(repr(float(v)) for v in row)])
    print(f"wrote {path}")
    return EXIT_OK


def cmd_decompose(args, cfg):
    from .model import decompose_levels
    from .revin import revin_normalize
    from .training import load_model, prepare_data

    model, cfg, manifest = load_model(args.checkpoint)
    data = prepare_data(cfg)
    _restore_scaler(data, manifest)
    t_x = cfg.model.t_x
    x = data.test[-t_x:].T[:, :, None]
    x0, _ = revin_normalize(x[None], cfg.model.revin_eps)
    subs, total, m_sum = decompose_levels(x0[0], model.level_factor())
    path = output_dir(args) / "decompose.csv"
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        levels = [f"level_{k + 1}" for k in range(subs.shape[0])]
        writer.writerow(["variate", "step", "input", *levels, "sum"])
        for i, name in enumerate(data.names):
            for t in range(t_x):
                writer.writerow([name, t, repr(float(x0[0, i, t, 0])),
                                 *(repr(float(subs[k, i, t])) for k in range(subs.shape[0])),
                                 repr(float(total[i, t]))])
    print(f"sum of level weights: {m_sum:.6f}")
    print(f"wrote {path}")
    return EXIT_OK


def cmd_gradcheck(args, cfg):
    from .diagnostics import run_suite

    results = run_suite()
    worst = max(results.values())
    for name, err in results.items():
        print(f"{name:20s} {err:.3e}")
    print(f"max relative error: {worst:.3e}")
    (output_dir(args) / "gradcheck.json").write_text(json.dumps(results, indent=2) + "\n")
    return EXIT_OK if worst < 1e-5 else EXIT_NUMERIC


def cmd_bench(args, cfg):
    from .model import count_params_flops

    params, flops = count_params_flops(cfg.model)
    print(f"parameters: {params}")
    print(f"forward FLOPs per instance: {flops}")
    report = {"parameters": params, "flops": flops, "param_mb": params * 4 / 2**20,
              "gflops": flops / 1e9}
    (output_dir(args) / "bench.json").write_text(json.dumps(report, indent=2) + "\n")
    return EXIT_OK


def cmd_ablate(args, cfg):
    from .training import run_ablation

    rows = run_ablation(cfg, args.axis, output_dir=output_dir(args))
    for row in rows:
        print(f"{row['arm']:12s} val={row['val_mse']:.6f} test mse={row['test_mse']:.6f} "
              f"mae={row['test_mae']:.6f}")
    return EXIT_OK


def _restore_scaler(data, manifest):
    from .data import Scaler

    info = manifest.get("extra", {}).get("scaler")
    if info is not None:
        data.scaler = Scaler(np.asarray(info["mean"]), np.asarray(info["std"]))


COMMANDS = {
    "train": cmd_train, "eval": cmd_eval, "forecast": cmd_forecast, "decompose": cmd_decompose,
    "gradcheck": cmd_gradcheck, "bench": cmd_bench, "ablate": cmd_ablate,
}


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args, extra = parser.parse_known_args(argv)
    except SystemExit as exc:  # argparse: usage errors exit 2, --help exits 0
        return int(exc.code or 0)
    if not args.command:
        parser.print_usage(sys.stderr)
        return EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args, extra)
        return COMMANDS[args.command](args, cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NumericError, FloatingPointError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
