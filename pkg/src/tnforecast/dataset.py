"""Windowed (7 past states -> next state) pairs, chronological splits, standardization."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .dynamics import Trajectory, fmt

WINDOW = 7
STD_FLOOR = 1e-8


class InsufficientDataError(ValueError):
    pass


class ConfigurationError(ValueError):
    pass


@dataclass(frozen=True)
class Pairs:
    """A block of window/target pairs stored as arrays.

    ``windows`` has shape ``(P, 7, d)`` and ``targets`` ``(P, d)``.
    """

    windows: np.ndarray
    targets: np.ndarray

    def __len__(self):
        return len(self.targets)

    def __getitem__(self, idx):
        if isinstance(idx, slice):
            return Pairs(self.windows[idx], self.targets[idx])
        return self.windows[idx], self.targets[idx]

    def states(self) -> np.ndarray:
        """Every state appearing in a window or as a target (with repeats)."""
        d = self.targets.shape[-1]
        return np.concatenate([self.windows.reshape(-1, d), self.targets])


def build_windows(traj, window: int = WINDOW) -> Pairs:
    states = traj.states if isinstance(traj, Trajectory) else np.asarray(traj, dtype=np.float64)
    n = len(states)
    if n < window + 1:
        raise InsufficientDataError(f"need at least {window + 1} states, got {n}")
    idx = np.arange(n - window)[:, None] + np.arange(window)[None, :]
    return Pairs(states[idx].copy(), states[window:].copy())


@dataclass(frozen=True)
class Scaler:
    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "mean", np.asarray(self.mean, dtype=np.float64))
        object.__setattr__(self, "std", np.asarray(self.std, dtype=np.float64))
        if self.mean.shape != self.std.shape or np.any(self.std <= 0):
            raise ValueError("scaler needs matching mean/std with std > 0")

    def transform_state(self, s):
        return (np.asarray(s, dtype=np.float64) - self.mean) / self.std

    def inverse_state(self, s):
        return np.asarray(s, dtype=np.float64) * self.std + self.mean

    def to_dict(self) -> dict:
        return {"mean": [float(v) for v in self.mean], "std": [float(v) for v in self.std]}

    @classmethod
    def from_dict(cls, doc) -> "Scaler":
        return cls(np.array(doc["mean"], dtype=np.float64), np.array(doc["std"], dtype=np.float64))

    @classmethod
    def identity(cls, d: int = 3) -> "Scaler":
        return cls(np.zeros(d), np.ones(d))


def fit_scaler(train: Pairs) -> Scaler:
    """Per-feature mean and population std over all training window and target states."""
    if len(train) == 0:
        raise InsufficientDataError("cannot fit a scaler on an empty training set")
    s = train.states()
    return Scaler(s.mean(axis=0), np.maximum(s.std(axis=0), STD_FLOOR))


def transform(scaler: Scaler, pairs: Pairs) -> Pairs:
    return Pairs(scaler.transform_state(pairs.windows), scaler.transform_state(pairs.targets))


def inverse_transform(scaler: Scaler, state):
    return scaler.inverse_state(state)


def split_counts(total: int, fractions=(0.4, 0.5, 0.1)) -> tuple[int, int, int]:
    if len(fractions) != 3 or any(f <= 0 for f in fractions) or abs(sum(fractions) - 1) > 1e-9:
        raise ConfigurationError(f"fractions must be three positive numbers summing to 1, got {fractions}")
    n_train = math.floor(fractions[0] * total)
    n_val = math.floor(fractions[1] * total)
    n_test = total - n_train - n_val
    if min(n_train, n_val, n_test) < 1:
        raise ConfigurationError(f"{total} pairs give an empty split ({n_train}, {n_val}, {n_test})")
    return n_train, n_val, n_test


@dataclass(frozen=True)
class SplitDataset:
    train: Pairs
    val: Pairs
    test: Pairs
    scaler: Scaler | None = None

    @property
    def counts(self) -> tuple[int, int, int]:
        return len(self.train), len(self.val), len(self.test)


def split_chronological(pairs: Pairs, fractions=(0.4, 0.5, 0.1)) -> SplitDataset:
    n_train, n_val, _ = split_counts(len(pairs), fractions)
    return SplitDataset(
        train=pairs[:n_train],
        val=pairs[n_train:n_train + n_val],
        test=pairs[n_train + n_val:],
    )


def prepare(traj, fractions=(0.4, 0.5, 0.1)) -> SplitDataset:
    """Window, split, fit the scaler on the training block and standardize all three blocks."""
    raw = split_chronological(build_windows(traj), fractions)
    scaler = fit_scaler(raw.train)
    return SplitDataset(
        train=transform(scaler, raw.train),
        val=transform(scaler, raw.val),
        test=transform(scaler, raw.test),
        scaler=scaler,
    )


def write_pairs_csv(pairs: Pairs, path) -> None:
    d = pairs.targets.shape[-1]
    names = "xyz" if d == 3 else [f"f{i}" for i in range(d)]
    header = [f"w{k}_{c}" for k in range(WINDOW) for c in names] + [f"target_{c}" for c in names]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for win, tgt in zip(pairs.windows, pairs.targets):
            w.writerow([fmt(v) for v in win.ravel()] + [fmt(v) for v in tgt])


def read_pairs_csv(path) -> Pairs:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    width = len(rows[0])
    if width % (WINDOW + 1):
        raise ValueError(f"{path}: {width} columns is not a multiple of {WINDOW + 1}")
    d = width // (WINDOW + 1)
    data = np.array([[float(v) for v in r] for r in rows[1:]], dtype=np.float64).reshape(-1, width)
    return Pairs(data[:, : WINDOW * d].reshape(-1, WINDOW, d), data[:, WINDOW * d:].copy())
