"""Command-line entry point: data generation, training, evaluation, accounting."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import streams
from .accountant import sigma_for_epsilon, training_epsilon
from .data import GENERATORS, SplitSpec, read_csv, split, write_csv
from .dp_optim import PrivacyConfig
from .harness import (
    MODELS,
    TASKS,
    TASKS_2D,
    ConfigError,
    TrainConfig,
    boundary_grid,
    build_data,
    evaluate,
    load_model,
    predict,
    train,
    write_outputs,
)

log = logging.getLogger("dpqml")


def _train_config(args) -> TrainConfig:
    if args.config:
        base = json.loads(Path(args.config).read_text())
    else:
        base = {}
    flags = {
        "task": args.task,
        "model": args.model,
        "epochs": args.epochs,
        "batch_size": args.batch_size,
        "lr": args.lr,
        "momentum": args.momentum,
        "seed": args.seed,
        "n_samples": args.n_samples,
        "mnist_dir": args.mnist_dir,
        "train_subset": args.train_subset,
        "test_subset": args.test_subset,
    }
    base.update({k: v for k, v in flags.items() if v is not None})
    if args.full_mnist:
        base["full_mnist"] = True

    private = args.sigma is not None or args.target_epsilon is not None
    if private:
        priv = dict(base.get("privacy") or {})
        if args.clip is not None:
            priv["clip_S"] = args.clip
        if args.microbatch is not None:
            priv["microbatch_size"] = args.microbatch
        if args.delta is not None:
            priv["delta"] = args.delta
        if args.sigma is not None:
            priv["noise_multiplier"] = args.sigma
        base["privacy"] = priv
    cfg = TrainConfig.from_dict(base)

    if args.target_epsilon is not None:
        if args.sigma is not None:
            raise ConfigError("give either --sigma or --target-epsilon, not both")
        n_train = len(build_data(cfg)[0])
        sigma = sigma_for_epsilon(args.target_epsilon, n_train, cfg.batch_size, cfg.epochs, cfg.privacy.delta)
        log.info("calibrated sigma %.6g for epsilon %.4g", sigma, args.target_epsilon)
        priv = cfg.privacy
        cfg = TrainConfig.from_dict({**cfg.to_dict(), "privacy": PrivacyConfig(
            priv.clip_S, sigma, priv.microbatch_size, priv.delta)})
    return cfg


def cmd_gen_data(args) -> int:
    ds = GENERATORS[args.task](args.n, streams.stream(args.seed, streams.DATA))
    write_csv(ds, args.out if args.out else sys.stdout)
    return 0


def cmd_train(args) -> int:
    cfg = _train_config(args)
    report, model = train(cfg)
    if args.out:
        write_outputs(args.out, report, model)
        print(f"final_test_acc {report.final_test_acc:.4f}" +
              (f"  epsilon {report.epsilon:.4f}" if report.epsilon is not None else ""))
    else:
        sys.stdout.write(report.to_json())
    return 0


def cmd_eval(args) -> int:
    model, meta = load_model(args.model)
    if args.data:
        ds = read_csv(args.data)
    else:
        task = args.task or meta.get("task")
        if task not in TASKS_2D:
            raise ConfigError("eval needs --data or a 2D --task to regenerate the test split")
        seed = args.seed if args.seed is not None else meta.get("seed", 0)
        n = args.n_samples or meta.get("n_samples", 200)
        full = GENERATORS[task](n, streams.stream(seed, streams.DATA))
        ds = split(full, SplitSpec((0.6, 0.2, 0.2)), rng=streams.stream(seed, streams.SPLIT))[2]
    acc = evaluate(lambda X: predict(model, X), ds)
    print(f"accuracy {acc:.6f} n {len(ds)}")
    return 0


def cmd_epsilon(args) -> int:
    res = training_epsilon(args.n, args.batch, args.epochs, args.sigma, args.delta)
    print(f"epsilon {res.epsilon:.6f} order {res.best_order:g}")
    return 0


def cmd_boundary(args) -> int:
    model, _ = load_model(args.model)
    grid = boundary_grid(lambda X: predict(model, X), args.bounds, args.resolution)
    lines = ["x1,x2,p1"] + [f"{a!r},{b!r},{p!r}" for a, b, p in grid.tolist()]
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dpqml", description="Differentially private variational quantum classifiers")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-data", help="write a synthetic 2D dataset as CSV")
    g.add_argument("--task", choices=TASKS_2D, required=True)
    g.add_argument("--n", type=int, default=200)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", help="output CSV (default stdout)")
    g.set_defaults(func=cmd_gen_data)

    t = sub.add_parser("train", help="train a model and report metrics")
    t.add_argument("--config", help="JSON file with TrainConfig fields; flags override it")
    t.add_argument("--task", choices=TASKS)
    t.add_argument("--model", choices=MODELS)
    t.add_argument("--epochs", type=int)
    t.add_argument("--batch-size", type=int)
    t.add_argument("--lr", type=float)
    t.add_argument("--momentum", type=float)
    t.add_argument("--seed", type=int)
    t.add_argument("--n-samples", type=int)
    t.add_argument("--sigma", type=float, help="noise multiplier; enables private training")
    t.add_argument("--target-epsilon", type=float, help="calibrate sigma to this epsilon")
    t.add_argument("--clip", type=float, help="L2 clip bound (default 1.0)")
    t.add_argument("--microbatch", type=int, help="microbatch size (default 1)")
    t.add_argument("--delta", type=float, help="target delta (default 1e-5)")
    t.add_argument("--mnist-dir")
    t.add_argument("--train-subset", type=int)
    t.add_argument("--test-subset", type=int)
    t.add_argument("--full-mnist", action="store_true")
    t.add_argument("--out", help="directory for report.json, metrics.csv and model.json")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="score a saved model")
    e.add_argument("--model", required=True)
    e.add_argument("--data", help="CSV with x1,x2,label")
    e.add_argument("--task", choices=TASKS_2D)
    e.add_argument("--seed", type=int)
    e.add_argument("--n-samples", type=int)
    e.set_defaults(func=cmd_eval)

    a = sub.add_parser("epsilon", help="privacy spent by DP training")
    a.add_argument("--n", type=int, required=True)
    a.add_argument("--batch", type=int, required=True)
    a.add_argument("--epochs", type=int, required=True)
    a.add_argument("--sigma", type=float, required=True)
    a.add_argument("--delta", type=float, default=1e-5)
    a.set_defaults(func=cmd_epsilon)

    b = sub.add_parser("boundary", help="class-1 probability over a 2D grid")
    b.add_argument("--model", required=True)
    b.add_argument("--bounds", type=float, nargs=4, default=(-2.0, 2.0, -2.0, 2.0),
                   metavar=("XMIN", "XMAX", "YMIN", "YMAX"))
    b.add_argument("--resolution", type=int, default=50)
    b.add_argument("--out")
    b.set_defaults(func=cmd_boundary)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ValueError, OSError, KeyError) as exc:
        print(f"dpqml: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
