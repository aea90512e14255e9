"""CSV ingestion, chronological splits, train-only scaling and window batching."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

TIME_COLUMNS = ("date", "time", "timestamp", "datetime")


class DataError(ValueError):
    pass


@dataclass
class SeriesFrame:
    values: np.ndarray  # (time, variates)
    names: list
    timestamps: np.ndarray | None = None
    freq: str | None = None

    def __len__(self):
        return self.values.shape[0]

    @property
    def n_variates(self):
        return self.values.shape[1]

    def slice(self, start, stop):
        ts = None if self.timestamps is None else self.timestamps[start:stop]
        return SeriesFrame(self.values[start:stop], list(self.names), ts, self.freq)


def load_csv(path, time_column: str | None = None) -> SeriesFrame:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"dataset not found: {path}")
    try:
        df = pd.read_csv(path)
    except pd.errors.EmptyDataError as exc:
        raise DataError(f"{path} is empty") from exc
    if df.shape[0] == 0 or df.shape[1] == 0:
        raise DataError(f"{path} has no data rows")

    timestamps = None
    first = df.columns[0]
    if time_column is None and str(first).strip().lower() in TIME_COLUMNS:
        time_column = first
    if time_column is not None:
        timestamps = pd.to_datetime(df.pop(time_column)).to_numpy()
        if len(timestamps) > 1 and not np.all(timestamps[1:] > timestamps[:-1]):
            raise DataError("timestamps are not strictly increasing")
    if df.shape[1] < 1:
        raise DataError("no variate columns")

    numeric = df.apply(pd.to_numeric, errors="coerce")
    bad = numeric.isna() & df.notna()
    if bad.any().any():
        col = bad.any()[bad.any()].index[0]
        raise DataError(f"non-numeric value in column {col!r}")
    values = numeric.to_numpy(dtype=np.float64)
    if not np.all(np.isfinite(values)):
        raise DataError("dataset contains NaN or Inf; imputation is not performed")
    freq = None
    if timestamps is not None and len(timestamps) > 2:
        freq = pd.infer_freq(pd.DatetimeIndex(timestamps[:100]))
    return SeriesFrame(values, [str(c) for c in df.columns], timestamps, freq)


def split_bounds(n, ratios):
    a, b, c = ratios
    total = a + b + c
    return int(n * a // total), int(n * (a + b) // total)


def split(frame: SeriesFrame, ratios=(6, 2, 2), min_len: int = 1):
    """Contiguous chronological (train, val, test) partition."""
    if len(ratios) != 3 or any(r <= 0 for r in ratios):
        raise DataError(f"ratios must be three positive numbers, got {ratios}")
    n = len(frame)
    i, j = split_bounds(n, ratios)
    parts = (frame.slice(0, i), frame.slice(i, j), frame.slice(j, n))
    for label, part in zip(("train", "val", "test"), parts):
        if len(part) < min_len:
            raise DataError(f"{label} split has {len(part)} rows, need at least {min_len}")
    return parts


@dataclass
class Scaler:
    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, values):
        values = np.asarray(values, dtype=np.float64)
        std = values.std(axis=0)
        if np.any(std == 0):
            raise DataError(f"constant variate(s) in train split: {np.flatnonzero(std == 0).tolist()}")
        return cls(values.mean(axis=0), std)

    def transform(self, values):
        return (np.asarray(values) - self.mean) / self.std

    def inverse(self, values):
        return np.asarray(values) * self.std + self.mean


def standardize(train: SeriesFrame, val: SeriesFrame, test: SeriesFrame):
    scaler = Scaler.fit(train.values)
    out = []
    for part in (train, val, test):
        out.append(SeriesFrame(scaler.transform(part.values), list(part.names), part.timestamps,
                               part.freq))
    return tuple(out), scaler


@dataclass
class WindowBatch:
    x: np.ndarray  # (batch, v, t_x, 1)
    y: np.ndarray  # (batch, v, t_y, 1)
    starts: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))


def window_starts(n, t_x, t_y, stride=1):
    if stride < 1:
        raise DataError("stride must be >= 1")
    if n < t_x + t_y:
        raise DataError(f"series of length {n} is shorter than t_x + t_y = {t_x + t_y}")
    return np.arange(0, n - t_x - t_y + 1, stride)


def make_batch(values, starts, t_x, t_y, dtype=np.float64):
    values = np.asarray(values)
    idx_x = starts[:, None] + np.arange(t_x)[None, :]
    idx_y = starts[:, None] + t_x + np.arange(t_y)[None, :]
    # (batch, time, v) -> (batch, v, time, 1)
    x = values[idx_x].transpose(0, 2, 1)[..., None].astype(dtype)
    y = values[idx_y].transpose(0, 2, 1)[..., None].astype(dtype)
    return WindowBatch(x, y, starts)


def window(frame, t_x, t_y, stride=1, batch_size=None, shuffle=False, rng=None, dtype=np.float64):
    """Yield WindowBatches covering every (lookback, horizon) pair of ``frame``.

    Order is chronological unless ``shuffle`` is set, in which case the
    permutation comes from ``rng`` so iteration is reproducible.
    """
    values = frame.values if isinstance(frame, SeriesFrame) else np.asarray(frame)
    starts = window_starts(len(values), t_x, t_y, stride)
    if shuffle:
        if rng is None:
            raise ValueError("shuffling needs a seeded generator")
        starts = starts[rng.permutation(len(starts))]
    batch_size = batch_size or len(starts)
    for i in range(0, len(starts), batch_size):
        yield make_batch(values, starts[i:i + batch_size], t_x, t_y, dtype)


def synthetic_sinusoids(n=2000, noise_std=0.1, seed=0, periods=(24, 48, 12)):
    """Three sine mixtures plus Gaussian noise; returns (noisy, clean) arrays (n, 3)."""
    rng = np.random.default_rng(seed)
    t = np.arange(n)[:, None]
    clean = np.zeros((n, 3))
    for k in range(3):
        p1, p2 = periods[k % len(periods)], periods[(k + 1) % len(periods)]
        clean[:, k] = (np.sin(2 * np.pi * t[:, 0] / p1 + k)
                       + 0.5 * np.sin(2 * np.pi * t[:, 0] / p2 + 2 * k))
    noisy = clean + noise_std * rng.standard_normal(clean.shape)
    return noisy, clean


def write_synthetic_csv(path, n=2000, noise_std=0.1, seed=0):
    noisy, _ = synthetic_sinusoids(n, noise_std, seed)
    dates = pd.date_range("2020-01-01", periods=n, freq="h")
    df = pd.DataFrame(noisy, columns=[f"s{k}" for k in range(noisy.shape[1])])
    df.insert(0, "date", dates.strftime("%Y-%m-%d %H:%M:%S"))
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    df.to_csv(path, index=False)
    return Path(path)
