"""One-step evaluation, recursive forecasting and the error statistics reported on them.

All metrics are computed in original (de-standardized) units.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .dataset import Pairs, Scaler
from .dynamics import fmt
from .model import WINDOW, TnmModel, predict

LORENZ_LAMBDA1 = 0.9056
ERROR_THRESHOLD = 1.0


class ScalerMismatchError(ValueError):
    pass


def _resolve(model, scaler: Scaler | None) -> tuple[Callable, Scaler]:
    """Return (standardized predictor, scaler) for a TnmModel or a plain callable."""
    if isinstance(model, TnmModel):
        own = model.scaler
        if scaler is None:
            scaler = own
        elif own is not None and not (np.array_equal(own.mean, scaler.mean)
                                      and np.array_equal(own.std, scaler.std)):
            raise ScalerMismatchError("data scaler differs from the scaler stored with the model")
        fn = lambda w: predict(model, w)  # noqa: E731
    else:
        fn = model
    if scaler is None:
        raise ScalerMismatchError("no scaler available to return to original units")
    return fn, scaler


def euclidean_errors(pred, truth) -> np.ndarray:
    return np.linalg.norm(np.asarray(pred) - np.asarray(truth), axis=-1)


def rmse(pred, truth) -> float:
    delta = euclidean_errors(pred, truth)
    return float(np.sqrt(np.mean(delta * delta)))


def cdf(errors) -> list[tuple[float, float]]:
    """Empirical CDF sampled at each distinct error value."""
    e = np.sort(np.asarray(errors, dtype=np.float64).ravel())
    if e.size == 0:
        raise ValueError("cdf of an empty error list")
    values, counts = np.unique(e, return_counts=True)
    frac = np.cumsum(counts) / e.size
    frac[-1] = 1.0
    return list(zip(values.tolist(), frac.tolist()))


def histogram(errors, bins: int = 40):
    counts, edges = np.histogram(np.asarray(errors, dtype=np.float64), bins=bins)
    return counts, edges


@dataclass
class EvalReport:
    rmse: float
    errors: np.ndarray
    cdf_points: list
    fraction_below_1: float
    predicted: np.ndarray
    truth: np.ndarray

    def summary(self) -> dict:
        return {"rmse": self.rmse, "fraction_below_1": self.fraction_below_1, "n": int(len(self.errors))}

    def write_parity_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["index", "true_x", "true_y", "true_z", "pred_x", "pred_y", "pred_z", "delta"])
            for i, (t, p, e) in enumerate(zip(self.truth, self.predicted, self.errors)):
                w.writerow([i, *map(fmt, t), *map(fmt, p), fmt(e)])

    def write_cdf_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["delta", "fraction"])
            for v, f in self.cdf_points:
                w.writerow([fmt(v), fmt(f)])

    def write_histogram_csv(self, path, bins: int = 40) -> None:
        counts, edges = histogram(self.errors, bins)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["bin_left", "bin_right", "count"])
            for lo, hi, c in zip(edges[:-1], edges[1:], counts):
                w.writerow([fmt(lo), fmt(hi), int(c)])


def evaluate_arrays(pred, truth, threshold: float = ERROR_THRESHOLD) -> EvalReport:
    pred = np.asarray(pred, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    delta = euclidean_errors(pred, truth)
    return EvalReport(
        rmse=float(np.sqrt(np.mean(delta * delta))),
        errors=delta,
        cdf_points=cdf(delta),
        fraction_below_1=float(np.mean(delta <= threshold)),
        predicted=pred,
        truth=truth,
    )


def predict_one_step(model, pairs: Pairs, scaler: Scaler | None = None) -> EvalReport:
    """Forecast every window of standardized ``pairs`` one step ahead.

    ``model`` is a TnmModel (its stored scaler is used) or any callable
    mapping standardized windows ``(B, 7, d)`` to predictions ``(B, d)``, in
    which case ``scaler`` is required.
    """
    fn, scaler = _resolve(model, scaler)
    if len(pairs) == 0:
        raise ValueError("no pairs to evaluate")
    pred = scaler.inverse_state(fn(pairs.windows))
    truth = scaler.inverse_state(pairs.targets)
    return evaluate_arrays(pred, truth)


def crmse_series(errors) -> np.ndarray:
    """Running RMSE: entry k-1 is the RMSE of the first k errors."""
    e = np.asarray(errors, dtype=np.float64)
    if e.size == 0:
        return np.zeros(0)
    return np.sqrt(np.cumsum(e * e) / np.arange(1, e.size + 1))


def horizon(crmse, threshold: float) -> int:
    """Number of leading steps whose CRMSE stays strictly below ``threshold``."""
    if not threshold > 0:
        raise ValueError("threshold must be positive")
    above = np.flatnonzero(np.asarray(crmse) >= threshold)
    return int(above[0]) if above.size else int(len(crmse))


def lyapunov_times(steps: int, dt: float, lambda1: float = LORENZ_LAMBDA1) -> float:
    if not dt > 0:
        raise ValueError("dt must be positive")
    return steps * dt * lambda1


@dataclass
class ForecastReport:
    predicted: np.ndarray
    truth: np.ndarray
    errors: np.ndarray
    crmse: np.ndarray
    horizon_steps: int
    horizon_lyapunov: float
    threshold: float
    lambda1: float = LORENZ_LAMBDA1
    dt: float = 0.1
    extra: dict = field(default_factory=dict)

    def summary(self) -> dict:
        return {
            "n_steps": int(len(self.predicted)),
            "threshold": self.threshold,
            "horizon_steps": self.horizon_steps,
            "horizon_lyapunov": self.horizon_lyapunov,
            "lambda1": self.lambda1,
            "dt": self.dt,
            "final_crmse": float(self.crmse[-1]) if len(self.crmse) else 0.0,
            **self.extra,
        }

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["step", "true_x", "true_y", "true_z", "pred_x", "pred_y", "pred_z", "delta", "crmse"])
            for k in range(len(self.predicted)):
                w.writerow([k + 1, *map(fmt, self.truth[k]), *map(fmt, self.predicted[k]),
                            fmt(self.errors[k]), fmt(self.crmse[k])])


def recursive_forecast(model, seed_window, n_steps: int, truth, scaler: Scaler | None = None,
                       threshold: float = 2.1, lambda1: float = LORENZ_LAMBDA1,
                       dt: float = 0.1) -> ForecastReport:
    """Roll the model forward from a 7-state seed window given in original units.

    Each prediction is appended to the window (oldest state dropped) and fed
    back as input; ``truth`` holds the ``n_steps`` states that actually follow
    the seed window.
    """
    fn, scaler = _resolve(model, scaler)
    seed_window = np.asarray(seed_window, dtype=np.float64)
    if seed_window.shape[0] != WINDOW:
        raise ValueError(f"seed window must hold {WINDOW} states, got {seed_window.shape[0]}")
    if n_steps < 0:
        raise ValueError("n_steps must be >= 0")
    truth = np.asarray(truth, dtype=np.float64).reshape(-1, seed_window.shape[1])
    if n_steps > len(truth):
        raise ValueError(f"{n_steps} steps requested but only {len(truth)} true states available")
    truth = truth[:n_steps]

    window = scaler.transform_state(seed_window)
    out = np.empty((n_steps, seed_window.shape[1]))
    for k in range(n_steps):
        nxt = np.asarray(fn(window[None]))[0]
        out[k] = nxt
        window = np.vstack([window[1:], nxt])
    pred = scaler.inverse_state(out)
    delta = euclidean_errors(pred, truth) if n_steps else np.zeros(0)
    cr = crmse_series(delta)
    steps = horizon(cr, threshold)
    return ForecastReport(
        predicted=pred, truth=truth, errors=delta, crmse=cr,
        horizon_steps=steps, horizon_lyapunov=lyapunov_times(steps, dt, lambda1),
        threshold=threshold, lambda1=lambda1, dt=dt,
    )


def write_json(obj: dict, path) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")
