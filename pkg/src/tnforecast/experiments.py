"""End-to-end runs: data -> training -> evaluation / forecasting / bond-dimension sweeps."""

from __future__ import annotations

import csv
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from functools import lru_cache

import numpy as np

from .config import ExperimentConfig, SweepConfig
from .dataset import SplitDataset, prepare
from .dynamics import FlowSpec, Trajectory, fmt, generate_trajectory
from .forecast_metrics import EvalReport, ForecastReport, predict_one_step, recursive_forecast
from .model import TnmModel, build_model, predict
from .training import TrainReport, fit

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class _FlowKey:
    kind: str
    params: tuple
    h: float
    sample_every: int
    n_samples: int
    x0: tuple
    transient_steps: int

    @classmethod
    def of(cls, f: FlowSpec) -> "_FlowKey":
        params = tuple(sorted((f.lorenz if f.kind == "lorenz" else f.rossler).items()))
        return cls(f.kind, params, f.h, f.sample_every, f.n_samples, tuple(f.x0), f.transient_steps)

    def flow(self) -> FlowSpec:
        p = dict(self.params)
        kw = {"lorenz": p} if self.kind == "lorenz" else {"rossler": p}
        return FlowSpec(kind=self.kind, h=self.h, sample_every=self.sample_every, n_samples=self.n_samples,
                        x0=self.x0, transient_steps=self.transient_steps, **kw)


@lru_cache(maxsize=8)
def _cached_by_key(key: _FlowKey) -> Trajectory:
    return generate_trajectory(key.flow())


def trajectory_for(flow: FlowSpec) -> Trajectory:
    # FlowSpec holds dicts, so cache on a frozen view of its fields
    return _cached_by_key(_FlowKey.of(flow))


def build_data(cfg: ExperimentConfig, traj: Trajectory | None = None) -> SplitDataset:
    return prepare(trajectory_for(cfg.flow) if traj is None else traj)


def train_model(cfg: ExperimentConfig, data: SplitDataset, progress=None) -> tuple[TnmModel, TrainReport]:
    m = cfg.model
    model = build_model(m.d, m.D, m.mode, m.seed, activation=m.activation)
    model.scaler = data.scaler
    report = fit(model, data, cfg.train_config(), log=progress)
    return model, report


def evaluate(model: TnmModel, data: SplitDataset, split: str = "val") -> EvalReport:
    return predict_one_step(model, getattr(data, split), data.scaler)


def forecast(model: TnmModel, data: SplitDataset, cfg: ExperimentConfig,
             n_steps: int | None = None, start: int = 0) -> ForecastReport:
    """Autonomous forecast seeded by the ``start``-th window of the test block."""
    test = data.test
    n_steps = cfg.eval.forecast_steps if n_steps is None else n_steps
    available = len(test) - start
    if n_steps > available:
        raise ValueError(f"test block supports at most {available} forecast steps from index {start}, "
                         f"{n_steps} requested")
    sc = data.scaler
    seed_window = sc.inverse_state(test.windows[start])
    truth = sc.inverse_state(test.targets[start:start + n_steps])
    return recursive_forecast(model, seed_window, n_steps, truth, sc, threshold=cfg.threshold(),
                              lambda1=cfg.eval.lambda1, dt=cfg.flow.dt_sample)


def write_fit_csv(model: TnmModel, data: SplitDataset, path, dt: float) -> None:
    """One-step predictions over train and val in original units (x(t) reconstruction plots)."""
    sc = data.scaler
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "split", "true_x", "true_y", "true_z", "pred_x", "pred_y", "pred_z"])
        offset = 7
        for name in ("train", "val"):
            pairs = getattr(data, name)
            pred = sc.inverse_state(predict(model, pairs.windows))
            true = sc.inverse_state(pairs.targets)
            for k in range(len(pairs)):
                w.writerow([fmt((offset + k) * dt), name, *map(fmt, true[k]), *map(fmt, pred[k])])
            offset += len(pairs)


# -- sweeps --------------------------------------------------------------

SWEEP_HEADER = ["D", "mode", "seed", "train_loss", "val_loss", "status"]


def sweep_cell(base: ExperimentConfig, D: int, mode: str, seed: int, epochs: int) -> dict:
    cfg = replace(base,
                  model=replace(base.model, D=D, mode=mode, seed=seed),
                  train=replace(base.train, epochs=epochs, seed=seed))
    row = {"D": D, "mode": mode, "seed": seed, "train_loss": float("nan"), "val_loss": float("nan")}
    try:
        data = build_data(cfg)
        _, report = train_model(cfg, data)
        row.update(train_loss=report.train_loss[-1] if report.train_loss else float("nan"),
                   val_loss=report.val_loss[-1] if report.val_loss else float("nan"),
                   status="ok")
    except Exception as exc:  # a failed cell is recorded, the sweep continues
        log.warning("sweep cell D=%s mode=%s seed=%s failed: %s", D, mode, seed, exc)
        row["status"] = f"failed: {type(exc).__name__}: {exc}"
    return row


def run_sweep(sweep: SweepConfig, jobs: int = 1) -> list[dict]:
    cells = [(D, mode, seed) for D in sweep.bond_dimensions for mode in sweep.modes for seed in sweep.seeds]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = [pool.submit(sweep_cell, sweep.base, D, m, s, sweep.epochs) for D, m, s in cells]
            rows = [f.result() for f in futures]
    else:
        rows = [sweep_cell(sweep.base, D, m, s, sweep.epochs) for D, m, s in cells]
    return sorted(rows, key=lambda r: (r["D"], r["mode"], r["seed"]))


def write_sweep_csv(rows: list[dict], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SWEEP_HEADER)
        for r in rows:
            w.writerow([r["D"], r["mode"], r["seed"], fmt(r["train_loss"]), fmt(r["val_loss"]), r["status"]])


def sweep_medians(rows: list[dict]) -> dict:
    """{(mode, D): (median train_loss, median val_loss)} over successful seeds."""
    out = {}
    for key in sorted({(r["mode"], r["D"]) for r in rows}):
        ok = [r for r in rows if (r["mode"], r["D"]) == key and r["status"] == "ok"]
        if ok:
            out[key] = (float(np.median([r["train_loss"] for r in ok])),
                        float(np.median([r["val_loss"] for r in ok])))
    return out
