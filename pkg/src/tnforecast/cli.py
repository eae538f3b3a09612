"""Command-line driver: ``tnforecast {generate,train,evaluate,forecast,sweep}``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from .config import ConfigError, ExperimentConfig, SweepConfig, load_config
from .dataset import prepare
from .dynamics import read_trajectory_csv, write_trajectory_csv
from .experiments import (
    build_data,
    evaluate,
    forecast,
    run_sweep,
    train_model,
    trajectory_for,
    write_fit_csv,
    write_sweep_csv,
)
from .forecast_metrics import write_json
from .model import load_model, save_model

log = logging.getLogger("tnforecast")


def _experiment_config(args) -> ExperimentConfig:
    doc = load_config(args.config) if args.config else {}
    cfg = ExperimentConfig.from_dict(doc)
    return apply_overrides(cfg, args)


def apply_overrides(cfg: ExperimentConfig, args) -> ExperimentConfig:
    model, train, flow, ev = cfg.model, cfg.train, cfg.flow, cfg.eval
    if getattr(args, "bond_dim", None) is not None:
        model = replace(model, D=args.bond_dim)
    if getattr(args, "mode", None) is not None:
        model = replace(model, mode=args.mode)
    if getattr(args, "seed", None) is not None:
        model = replace(model, seed=args.seed)
        train = replace(train, seed=args.seed)
    if getattr(args, "epochs", None) is not None:
        train = replace(train, epochs=args.epochs)
    if getattr(args, "flow", None) is not None:
        flow = flow.with_(kind=args.flow)
    if getattr(args, "steps", None) is not None:
        ev = replace(ev, forecast_steps=args.steps)
    if getattr(args, "threshold", None) is not None:
        ev = replace(ev, horizon_threshold=args.threshold)
    if getattr(args, "split", None) is not None:
        ev = replace(ev, split=args.split)
    out = args.out if getattr(args, "out", None) is not None else cfg.output_dir
    cfg = replace(cfg, model=model, train=train, flow=flow, eval=ev, output_dir=out)
    cfg.validate()
    return cfg


def _outdir(cfg: ExperimentConfig) -> Path:
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _data(cfg: ExperimentConfig, args):
    if getattr(args, "trajectory", None):
        return prepare(read_trajectory_csv(args.trajectory))
    return build_data(cfg)


def cmd_generate(cfg: ExperimentConfig, args) -> dict:
    traj = trajectory_for(cfg.flow)
    path = _outdir(cfg) / "trajectory.csv"
    write_trajectory_csv(traj, path)
    return {"trajectory": str(path), "n_samples": len(traj), "dt": traj.dt_sample}


def cmd_train(cfg: ExperimentConfig, args) -> dict:
    out = _outdir(cfg)
    data = _data(cfg, args)
    model, report = train_model(cfg, data, progress=log.info)
    save_model(model, out / "model.json")
    report.write_csv(out / "loss.csv")
    write_fit_csv(model, data, out / "fit.csv", cfg.flow.dt_sample)
    (out / "config.json").write_text(cfg.dumps())
    return {
        "model": str(out / "model.json"),
        "epochs": len(report.train_loss),
        "final_train_loss": report.train_loss[-1] if report.train_loss else None,
        "final_val_loss": report.val_loss[-1] if report.val_loss else None,
        "wall_time": report.wall_time,
    }


def _load(cfg: ExperimentConfig, args):
    path = Path(args.model) if args.model else Path(cfg.output_dir) / "model.json"
    model = load_model(path)
    if model.d != cfg.model.d:
        raise ValueError(f"model has d={model.d} but config has d={cfg.model.d}")
    return model


def cmd_evaluate(cfg: ExperimentConfig, args) -> dict:
    out = _outdir(cfg)
    model = _load(cfg, args)
    data = _data(cfg, args)
    report = evaluate(model, data, cfg.eval.split)
    report.write_parity_csv(out / f"parity_{cfg.eval.split}.csv")
    report.write_cdf_csv(out / f"cdf_{cfg.eval.split}.csv")
    report.write_histogram_csv(out / f"histogram_{cfg.eval.split}.csv")
    summary = {"split": cfg.eval.split, **report.summary()}
    write_json(summary, out / f"eval_{cfg.eval.split}.json")
    return summary


def cmd_forecast(cfg: ExperimentConfig, args) -> dict:
    out = _outdir(cfg)
    model = _load(cfg, args)
    data = _data(cfg, args)
    # horizon defaults follow the loaded model's mode, not the config's
    cfg = replace(cfg, model=replace(cfg.model, mode=model.mode.value))
    report = forecast(model, data, cfg)
    report.write_csv(out / "forecast.csv")
    summary = report.summary()
    write_json(summary, out / "forecast.json")
    return summary


def cmd_sweep(args) -> dict:
    doc = load_config(args.config) if args.config else {}
    sweep = SweepConfig.from_dict(doc)
    base = apply_overrides(sweep.base, args)
    sweep = replace(sweep, base=base)
    if args.epochs is not None:
        sweep = replace(sweep, epochs=args.epochs)
    if args.bond_dims:
        sweep = replace(sweep, bond_dimensions=args.bond_dims)
    if args.seeds:
        sweep = replace(sweep, seeds=args.seeds)
    if args.mode is not None:
        sweep = replace(sweep, modes=[args.mode])
    rows = run_sweep(sweep, jobs=args.jobs)
    out = _outdir(base)
    write_sweep_csv(rows, out / "sweep.csv")
    failed = sum(r["status"] != "ok" for r in rows)
    return {"sweep": str(out / "sweep.csv"), "rows": len(rows), "failed": failed}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tnforecast", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true", help="log per-epoch losses")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="experiment config (JSON)")
        sp.add_argument("--bond-dim", type=int)
        sp.add_argument("--mode", choices=["homogeneous", "inhomogeneous"])
        sp.add_argument("--epochs", type=int)
        sp.add_argument("--seed", type=int)
        sp.add_argument("--flow", choices=["lorenz", "rossler"])
        sp.add_argument("--out", help="output directory")
        return sp

    common(sub.add_parser("generate", help="integrate the flow and write trajectory.csv"))
    tr = common(sub.add_parser("train", help="train a model, write model.json and loss.csv"))
    tr.add_argument("--trajectory", help="use this trajectory CSV instead of integrating")
    ev = common(sub.add_parser("evaluate", help="one-step metrics, parity and error distributions"))
    ev.add_argument("--model")
    ev.add_argument("--trajectory")
    ev.add_argument("--split", choices=["train", "val", "test"])
    fc = common(sub.add_parser("forecast", help="recursive forecast over the test block"))
    fc.add_argument("--model")
    fc.add_argument("--trajectory")
    fc.add_argument("--steps", type=int)
    fc.add_argument("--threshold", type=float)
    sw = common(sub.add_parser("sweep", help="train over a grid of bond dimensions, modes and seeds"))
    sw.add_argument("--bond-dims", type=int, nargs="+")
    sw.add_argument("--seeds", type=int, nargs="+")
    sw.add_argument("--jobs", type=int, default=1)
    return p


COMMANDS = {"generate": cmd_generate, "train": cmd_train, "evaluate": cmd_evaluate, "forecast": cmd_forecast}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "sweep":
            result = cmd_sweep(args)
        else:
            result = COMMANDS[args.command](_experiment_config(args), args)
    except (ConfigError, ValueError, RuntimeError, OSError) as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 1
    print(json.dumps(result, indent=2, sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
