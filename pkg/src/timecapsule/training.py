"""Training loop, evaluation, naive baselines and ablation runs.

Random streams all derive from one integer seed:

* parameter init: ``default_rng([seed, crc32(parameter name)])``
* batch shuffling: ``default_rng([seed, crc32(b"shuffle")])``
* encoder noise: ``default_rng([seed, crc32(b"noise")])``
"""

from __future__ import annotations

import csv
import json
import logging
import math
import zlib
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .config import ConfigError, RunConfig
from .data import DataError, Scaler, load_csv, split, standardize, window
from .jepa import JepaState
from .model import TimeCapsule, noise_generator
from .nn import autograd as ag
from .nn.checkpoint import load_checkpoint, save_checkpoint
from .nn.optim import AdamW

log = logging.getLogger(__name__)

DEFAULT_SEED = 2021


class NumericError(RuntimeError):
    pass


@dataclass
class Seeds:
    seed: int
    shuffle: np.random.Generator
    noise: np.random.Generator


def set_seed(seed: int = DEFAULT_SEED) -> Seeds:
    """Fresh shuffle and noise generators for ``seed``.

    Parameter init does not need a generator here: each parameter seeds its
    own from ``(seed, name)``.
    """
    seed = int(seed)
    return Seeds(seed, np.random.default_rng([seed, zlib.crc32(b"shuffle")]), noise_generator(seed))


# metrics -----------------------------------------------------------------

@dataclass
class Metrics:
    mse: float
    mae: float
    per_horizon_mse: list = field(default_factory=list)
    per_horizon_mae: list = field(default_factory=list)
    count: int = 0

    @classmethod
    def from_arrays(cls, pred, true):
        pred = np.asarray(pred, dtype=np.float64)
        true = np.asarray(true, dtype=np.float64)
        if pred.shape != true.shape:
            raise ValueError(f"prediction/target shape mismatch: {pred.shape} vs {true.shape}")
        if pred.size == 0:
            raise ValueError("cannot compute metrics on an empty set")
        err = pred - true
        # (batch, v, t_y, 1): horizon is axis 2
        per_mse = (err**2).mean(axis=(0, 1, 3)) if err.ndim == 4 else np.atleast_1d((err**2).mean())
        per_mae = np.abs(err).mean(axis=(0, 1, 3)) if err.ndim == 4 else np.atleast_1d(np.abs(err).mean())
        return cls(float((err**2).mean()), float(np.abs(err).mean()),
                   per_mse.tolist(), per_mae.tolist(), int(err.size))


class _Accumulator:
    def __init__(self):
        self.sq = None
        self.ab = None
        self.n = 0

    def add(self, pred, true):
        err = np.asarray(pred, dtype=np.float64) - np.asarray(true, dtype=np.float64)
        sq = (err**2).sum(axis=(0, 1, 3))
        ab = np.abs(err).sum(axis=(0, 1, 3))
        self.sq = sq if self.sq is None else self.sq + sq
        self.ab = ab if self.ab is None else self.ab + ab
        self.n += err.shape[0] * err.shape[1] * err.shape[3]

    def metrics(self):
        if not self.n:
            raise ValueError("cannot compute metrics on an empty set")
        per_mse = self.sq / self.n
        per_mae = self.ab / self.n
        return Metrics(float(per_mse.mean()), float(per_mae.mean()), per_mse.tolist(),
                       per_mae.tolist(), int(self.n * len(per_mse)))


def repeat_last(x, t_y):
    """Repeat the final lookback value over the horizon. ``x``: (B, v, t_x, 1)."""
    x = np.asarray(x)
    return np.repeat(x[:, :, -1:, :], t_y, axis=2)


def seasonal_naive(x, t_y, period):
    """Repeat the last full period of the lookback over the horizon."""
    x = np.asarray(x)
    t_x = x.shape[2]
    period = min(int(period), t_x)
    idx = t_x - period + (np.arange(t_y) % period)
    return x[:, :, idx, :]


# evaluation --------------------------------------------------------------

def _unscale(arr, scaler):
    # (B, v, t, 1) in standardized space -> raw units
    return arr * scaler.std[None, :, None, None] + scaler.mean[None, :, None, None]


def predict_fn_metrics(predict, values, t_x, t_y, batch_size=256, stride=1, scaler=None,
                       space="standardized", dtype=np.float64):
    acc = _Accumulator()
    for batch in window(values, t_x, t_y, stride=stride, batch_size=batch_size, dtype=dtype):
        pred = predict(batch.x)
        true = batch.y
        if space == "raw":
            pred, true = _unscale(pred, scaler), _unscale(true, scaler)
        acc.add(pred, true)
    return acc.metrics()


def evaluate_model(model, values, cfg: RunConfig, scaler=None, space=None, stride=None):
    """Noise-free metrics of ``model`` over every window of ``values``."""
    space = space or cfg.train.metrics_space
    m = cfg.model

    def predict(x):
        return model(x, training=False).y_hat.data

    return predict_fn_metrics(predict, values, m.t_x, m.t_y, stride=stride or cfg.data.stride,
                              scaler=scaler, space=space, dtype=model.dtype)


def baseline_metrics(values, cfg: RunConfig, scaler=None, space=None):
    space = space or cfg.train.metrics_space
    m = cfg.model
    out = {}
    out["repeat_last"] = predict_fn_metrics(lambda x: repeat_last(x, m.t_y), values, m.t_x, m.t_y,
                                            stride=cfg.data.stride, scaler=scaler, space=space)
    out["seasonal_naive"] = predict_fn_metrics(
        lambda x: seasonal_naive(x, m.t_y, cfg.data.season), values, m.t_x, m.t_y,
        stride=cfg.data.stride, scaler=scaler, space=space)
    return out


# training ----------------------------------------------------------------

@dataclass
class PreparedData:
    train: np.ndarray
    val: np.ndarray
    test: np.ndarray
    scaler: object
    names: list


def prepare_data(cfg: RunConfig, frame=None) -> PreparedData:
    if frame is None:
        if not cfg.data.path:
            raise ConfigError("data.path is not set")
        frame = load_csv(cfg.data.path)
    m = cfg.model
    if frame.n_variates != m.v:
        raise DataError(f"dataset has {frame.n_variates} variates but model.v = {m.v}")
    (train, val, test), scaler = standardize(*split(frame, tuple(cfg.data.ratios), m.t_x + m.t_y))
    return PreparedData(train.values, val.values, test.values, scaler, list(frame.names))


@dataclass
class TrainResult:
    model: TimeCapsule
    logs: list
    best_epoch: int
    best_val_mse: float
    test: Metrics | None = None
    baselines: dict | None = None
    jepa: JepaState | None = None
    checkpoint: Path | None = None
    data: PreparedData | None = None


LOG_FIELDS = ("epoch", "train_loss", "val_mse", "val_mae", "jepa_loss")


def train(cfg: RunConfig, frame=None, output_dir=None, evaluate_test=True) -> TrainResult:
    """Seeded mini-batch AdamW on Huber(forecast, truth) + weight * JEPA.

    The best epoch by validation MSE is restored before returning; with
    ``output_dir`` set, checkpoint, epoch log CSV and a metrics JSON are written.
    """
    data = prepare_data(cfg, frame)
    tc, mc, jc = cfg.train, cfg.model, cfg.jepa
    seeds = set_seed(tc.seed)
    model = TimeCapsule(mc, seed=tc.seed)
    model.noise_rng = seeds.noise
    opt = AdamW(model.parameters(), lr=tc.lr, betas=(tc.beta1, tc.beta2),
                weight_decay=tc.weight_decay)
    jepa = JepaState(model.encoder, jc) if jc.enabled else None
    dtype = model.dtype

    best = (math.inf, -1, model.state_dict(), None)
    logs = []
    stale = 0
    for epoch in range(1, tc.epochs + 1):
        losses, jlosses = [], []
        batches = window(data.train, mc.t_x, mc.t_y, stride=cfg.data.train_stride,
                         batch_size=tc.batch_size, shuffle=True, rng=seeds.shuffle, dtype=dtype)
        for i, batch in enumerate(batches):
            if tc.max_batches_per_epoch and i >= tc.max_batches_per_epoch:
                break
            out = model(batch.x, training=True)
            loss = ag.huber_loss(out.y_hat, batch.y, tc.huber_delta)
            total = loss
            if jepa is not None:
                jl = jepa.loss(out, batch.y, mc.t_x, mc.revin_eps, tc.huber_delta)
                jlosses.append(float(jl.data))
                if jc.weight > 0:
                    total = loss + jc.weight * jl
            if not np.isfinite(total.data):
                raise NumericError(f"non-finite loss at epoch {epoch}, batch {i}")
            opt.zero_grad()
            total.backward()
            opt.step()
            if jepa is not None:
                jepa.update(model.encoder)
            losses.append(float(loss.data))

        val = evaluate_model(model, data.val, cfg, data.scaler)
        jmean = float(np.mean(jlosses)) if jlosses else float("nan")
        if jepa is not None:
            jepa.log.append(jmean)
        row = {"epoch": epoch, "train_loss": float(np.mean(losses)), "val_mse": val.mse,
               "val_mae": val.mae, "jepa_loss": jmean}
        logs.append(row)
        log.info("epoch %d train %.5f val mse %.5f mae %.5f jepa %.5f", epoch, row["train_loss"],
                 val.mse, val.mae, jmean)
        if val.mse < best[0]:
            target_state = jepa.target.state_dict() if jepa is not None else None
            best = (val.mse, epoch, model.state_dict(), target_state)
            stale = 0
        else:
            stale += 1
            if tc.patience and stale >= tc.patience:
                break

    model.load_state_dict(best[2])
    if jepa is not None and best[3] is not None:
        jepa.target.load_state_dict(best[3])
    result = TrainResult(model, logs, best[1], best[0], jepa=jepa, data=data)
    if evaluate_test:
        result.test = evaluate_model(model, data.test, cfg, data.scaler)
        result.baselines = baseline_metrics(data.test, cfg, data.scaler)
    if output_dir is not None:
        result.checkpoint = write_run(result, cfg, output_dir)
    return result


def checkpoint_state(model, jepa=None):
    state = model.state_dict()
    frozen = []
    if jepa is not None:
        for name, value in jepa.target.state_dict().items():
            key = f"target_encoder.{name}"
            state[key] = value
            frozen.append(key)
    return state, frozen


def save_model(path, model, cfg: RunConfig, scaler=None, jepa=None, extra=None):
    state, frozen = checkpoint_state(model, jepa)
    info = dict(extra or {})
    if scaler is not None:
        info["scaler"] = {"mean": scaler.mean.tolist(), "std": scaler.std.tolist()}
    return save_checkpoint(path, state, cfg.to_text(), info, frozen)


def load_model(path):
    """Rebuild ``(model, cfg, manifest)`` from a checkpoint."""
    state, manifest = load_checkpoint(path)
    cfg = RunConfig.from_text(manifest["config"])
    model = TimeCapsule(cfg.model, seed=cfg.train.seed)
    model.load_state_dict({k: v for k, v in state.items() if not k.startswith("target_encoder.")})
    return model, cfg, manifest


def write_logs(path, logs):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=LOG_FIELDS)
        writer.writeheader()
        for row in logs:
            writer.writerow({k: repr(row[k]) if isinstance(row[k], float) else row[k]
                             for k in LOG_FIELDS})
    return path


def write_run(result: TrainResult, cfg: RunConfig, output_dir):
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    ckpt = save_model(out / "checkpoint", result.model, cfg, result.data.scaler, result.jepa,
                      {"best_epoch": result.best_epoch})
    write_logs(out / "train_log.csv", result.logs)
    summary = {"best_epoch": result.best_epoch, "best_val_mse": result.best_val_mse}
    if result.test is not None:
        summary["test"] = asdict(result.test)
        summary["baselines"] = {k: asdict(v) for k, v in result.baselines.items()}
    (out / "metrics.json").write_text(json.dumps(summary, indent=2) + "\n")
    return ckpt


def evaluate(checkpoint, split_name="test", frame=None, space=None):
    """Metrics of a saved checkpoint on one split of its configured dataset."""
    model, cfg, manifest = load_model(checkpoint)
    data = prepare_data(cfg, frame)
    scaler_info = manifest.get("extra", {}).get("scaler")
    if scaler_info is not None:
        data.scaler = Scaler(np.asarray(scaler_info["mean"]), np.asarray(scaler_info["std"]))
    values = {"train": data.train, "val": data.val, "test": data.test}.get(split_name)
    if values is None:
        raise ConfigError(f"unknown split {split_name!r}")
    return evaluate_model(model, values, cfg, data.scaler, space)


def last_window_forecast(model, cfg: RunConfig, data: PreparedData):
    """Forecast the horizon after the final lookback of the test split, in raw units."""
    values = data.test
    t_x = cfg.model.t_x
    if len(values) < t_x:
        raise DataError("test split shorter than the lookback window")
    x = values[-t_x:].T[None, :, :, None]
    y = model(x, training=False).y_hat.data[0, :, :, 0].T
    return data.scaler.inverse(y)


# ablations ---------------------------------------------------------------

ABLATIONS = {
    "residual_info": [
        ("residual", {"model.residual_info": "residual"}),
        ("original", {"model.residual_info": "original"}),
        ("off", {"model.residual_info": "off"}),
    ],
    "noise": [("on", {"model.noise": True}), ("off", {"model.noise": False})],
    "positional_encoding": [
        ("on", {"model.positional_encoding": True}),
        ("off", {"model.positional_encoding": False}),
    ],
    "compression_dims": [
        ("(4, 8, 4)", {"model.t_c": 4, "model.l": 8, "model.v_c": 4}),
        ("(4, 1, 4)", {"model.t_c": 4, "model.l": 1, "model.v_c": 4}),
        ("(1, 1, 1)", {"model.t_c": 1, "model.l": 1, "model.v_c": 1}),
    ],
    "jepa": [
        ("on", {"jepa.enabled": True}),
        ("weight0", {"jepa.enabled": True, "jepa.weight": 0.0}),
        ("off", {"jepa.enabled": False}),
    ],
}


def ablation_arms(cfg: RunConfig, axis: str):
    if axis not in ABLATIONS:
        raise ConfigError(f"unknown ablation axis {axis!r}; choose from {sorted(ABLATIONS)}")
    arms = []
    for label, overrides in ABLATIONS[axis]:
        if axis == "compression_dims" and overrides["model.v_c"] > cfg.model.v:
            overrides = dict(overrides, **{"model.v_c": cfg.model.v})
        arms.append((label, cfg.with_overrides(overrides)))
    return arms


def run_ablation(cfg: RunConfig, axis: str, frame=None, output_dir=None):
    """Train every arm of ``axis``; returns rows of label/val/test metrics."""
    rows = []
    for label, arm_cfg in ablation_arms(cfg, axis):
        sub = None if output_dir is None else Path(output_dir) / f"{axis}_{_slug(label)}"
        res = train(arm_cfg, frame=frame, output_dir=sub)
        rows.append({"axis": axis, "arm": label, "best_epoch": res.best_epoch,
                     "val_mse": res.best_val_mse, "test_mse": res.test.mse,
                     "test_mae": res.test.mae})
    if output_dir is not None:
        path = Path(output_dir) / f"ablation_{axis}.csv"
        with open(path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=list(rows[0]))
            writer.writeheader()
            writer.writerows(rows)
    return rows


def _slug(label):
    return "".join(c if c.isalnum() else "_" for c in label).strip("_")
