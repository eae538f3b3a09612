"""Lorenz and Rossler flows, a fixed-step RK4 integrator and trajectory sampling."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable

import numpy as np

BLOWUP_LIMIT = 1e6

LORENZ_DEFAULTS = {"sigma": 10.0, "rho": 28.0, "beta": 8.0 / 3.0}
ROSSLER_DEFAULTS = {"a": 0.2, "b": 0.2, "c": 5.7}


class IntegrationError(RuntimeError):
    def __init__(self, step: int, state):
        super().__init__(f"integration blew up at step {step}: state={list(state)}")
        self.step = step


def lorenz_rhs(s, sigma=10.0, rho=28.0, beta=8.0 / 3.0) -> np.ndarray:
    x, y, z = s
    return np.array([sigma * (y - x), x * (rho - z) - y, x * y - beta * z])


def rossler_rhs(s, a=0.2, b=0.2, c=5.7) -> np.ndarray:
    x, y, z = s
    return np.array([-y - z, x + a * y, b + z * (x - c)])


@dataclass(frozen=True)
class FlowSpec:
    kind: str = "lorenz"
    lorenz: dict = field(default_factory=lambda: dict(LORENZ_DEFAULTS))
    rossler: dict = field(default_factory=lambda: dict(ROSSLER_DEFAULTS))
    h: float = 0.01
    sample_every: int = 10
    n_samples: int = 3000
    x0: tuple = (1.0, 1.0, 1.0)
    transient_steps: int = 1000

    def __post_init__(self):
        if self.kind not in ("lorenz", "rossler"):
            raise ValueError(f"unknown flow kind {self.kind!r}")
        if not self.h > 0:
            raise ValueError("h must be positive")
        if self.sample_every < 1:
            raise ValueError("sample_every must be >= 1")
        if self.n_samples < 1:
            raise ValueError("n_samples must be >= 1")
        if self.transient_steps < 0:
            raise ValueError("transient_steps must be >= 0")
        if len(self.x0) != 3 or not np.all(np.isfinite(self.x0)):
            raise ValueError("x0 must be three finite numbers")

    @property
    def dt_sample(self) -> float:
        return self.h * self.sample_every

    def rhs(self) -> Callable[[np.ndarray], np.ndarray]:
        if self.kind == "lorenz":
            p = self.lorenz
            return lambda s: lorenz_rhs(s, p["sigma"], p["rho"], p["beta"])
        p = self.rossler
        return lambda s: rossler_rhs(s, p["a"], p["b"], p["c"])

    def with_(self, **kw) -> "FlowSpec":
        return replace(self, **kw)


def rk4_step_fn(f: Callable, s: np.ndarray, h: float) -> np.ndarray:
    """One classical RK4 step of ds/dt = f(s)."""
    k1 = f(s)
    k2 = f(s + 0.5 * h * k1)
    k3 = f(s + 0.5 * h * k2)
    k4 = f(s + h * k3)
    return s + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def rk4_step(flow: FlowSpec, s, step_index: int = 0) -> np.ndarray:
    out = rk4_step_fn(flow.rhs(), np.asarray(s, dtype=np.float64), flow.h)
    if not np.all(np.isfinite(out)) or np.max(np.abs(out)) > BLOWUP_LIMIT:
        raise IntegrationError(step_index, out)
    return out


@dataclass(frozen=True)
class Trajectory:
    dt_sample: float
    states: np.ndarray  # (n_samples, 3)

    def __len__(self):
        return len(self.states)

    @property
    def times(self) -> np.ndarray:
        return np.arange(len(self.states)) * self.dt_sample


def generate_trajectory(flow: FlowSpec) -> Trajectory:
    """Discard ``transient_steps`` RK4 steps, then record every ``sample_every``-th state.

    The first recorded state is the post-transient state itself.
    """
    f = flow.rhs()
    h = flow.h
    s = np.asarray(flow.x0, dtype=np.float64)
    step = 0

    def advance(s):
        nonlocal step
        step += 1
        s = rk4_step_fn(f, s, h)
        if not (np.all(np.isfinite(s)) and np.max(np.abs(s)) <= BLOWUP_LIMIT):
            raise IntegrationError(step, s)
        return s

    for _ in range(flow.transient_steps):
        s = advance(s)
    states = np.empty((flow.n_samples, 3))
    states[0] = s
    for i in range(1, flow.n_samples):
        for _ in range(flow.sample_every):
            s = advance(s)
        states[i] = s
    return Trajectory(dt_sample=flow.dt_sample, states=states)


def fmt(x: float) -> str:
    """17 significant digits: round-trips any double."""
    return format(float(x), ".17g")


def write_trajectory_csv(traj: Trajectory, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "x", "y", "z"])
        for i, s in enumerate(traj.states):
            w.writerow([fmt(i * traj.dt_sample), *(fmt(v) for v in s)])


def read_trajectory_csv(path) -> Trajectory:
    with open(Path(path), newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != ["t", "x", "y", "z"]:
        raise ValueError(f"{path}: expected header t,x,y,z")
    data = np.array([[float(v) for v in r] for r in rows[1:]], dtype=np.float64).reshape(-1, 4)
    dt = float(data[1, 0] - data[0, 0]) if len(data) > 1 else 0.0
    return Trajectory(dt_sample=dt, states=data[:, 1:].copy())
