"""Stacked-LSTM throughput forecaster with a train/retrain/replace lifecycle."""

from __future__ import annotations

import copy
from dataclasses import dataclass, field

import numpy as np

from . import nn
from .errors import ShapeError, StateError, TrainingError
from .stream import Bounds, denormalize, normalize


@dataclass
class ForecasterConfig:
    lookback: int = 10
    hidden: int = 100
    layers: int = 3
    epochs: int = 15
    batch_size: int = 64
    learning_rate: float = 0.001
    max_history: int = 1500
    retrain_epochs: int = 20
    seed: int = 0


@dataclass
class RetrainCost:
    """Simulated retraining time: collection delay, then base + per-sample cost."""

    collect_ticks: int = 50
    base_ticks: float = 54.0
    per_sample_ticks: float = 0.1

    def training_ticks(self, n_samples):
        return int(round(self.base_ticks + self.per_sample_ticks * n_samples))


@dataclass
class Forecaster:
    net: nn.Sequential
    lookback: int
    bounds: Bounds
    version: int = 1
    losses: list = field(default_factory=list)

    def parameters(self):
        return self.net.parameters()


@dataclass
class RetrainJob:
    trigger: dict
    n_samples: int
    start_tick: int
    completion_tick: int
    model: Forecaster | None = None
    initial_params: dict | None = None
    losses: list = field(default_factory=list)

    def __post_init__(self):
        if self.completion_tick < self.start_tick:
            raise ValueError("completion_tick precedes start_tick")
        if self.n_samples <= 0:
            raise TrainingError("retrain job without training samples")

    @property
    def complete(self):
        return self.model is not None


def build_net(cfg: ForecasterConfig, rng):
    layers = []
    n_in = 1
    for k in range(cfg.layers):
        cell = nn.RecurrentCell.init(n_in, cfg.hidden, rng)
        layers.append(nn.RecurrentLayer(cell, return_sequences=k < cfg.layers - 1))
        n_in = cfg.hidden
    layers.append(nn.DenseLayer.init(cfg.hidden, 1, "linear", rng))
    return nn.Sequential(layers)


def _sequences(series, lookback):
    n = len(series) - lookback
    idx = np.arange(lookback)[None, :] + np.arange(n)[:, None]
    return series[idx][:, :, None], series[lookback:][:, None]


def _fit(net, X, y, epochs, cfg, rng):
    opt = nn.Adam(cfg.learning_rate)
    params = net.parameters()
    losses = []
    for _ in range(epochs):
        order = rng.permutation(len(X))
        total = 0.0
        for s in range(0, len(X), cfg.batch_size):
            b = order[s : s + cfg.batch_size]
            loss, grads = nn.compute_gradients(net, X[b], y[b], "mse")
            nn.clip_grads(grads, 1.0)
            opt.update(params, grads)
            total += loss * len(b)
        losses.append(total / len(X))
        if not np.isfinite(losses[-1]):
            raise TrainingError("forecaster loss diverged")
    return losses


def train_forecaster(history, config: ForecasterConfig | None = None):
    """Fit 1-step-ahead prediction over sliding lookback windows."""
    cfg = config or ForecasterConfig()
    x = np.asarray(history, dtype=np.float64)
    if len(x) < cfg.lookback + 1:
        raise TrainingError(
            f"need at least lookback + 1 = {cfg.lookback + 1} samples, got {len(x)}"
        )
    if cfg.epochs < 1:
        raise TrainingError("epochs must be >= 1")
    x = x[-cfg.max_history :]
    bounds = Bounds.of(x)
    rng = np.random.default_rng([cfg.seed, 5])
    net = build_net(cfg, rng)
    X, y = _sequences(normalize(x, bounds), cfg.lookback)
    losses = _fit(net, X, y, cfg.epochs, cfg, rng)
    return Forecaster(net, cfg.lookback, bounds, 1, losses)


def _check_recent(model, recent):
    r = np.asarray(recent, dtype=np.float64)
    if r.shape[-1] != model.lookback:
        raise ShapeError(f"expected {model.lookback} recent samples, got {r.shape[-1]}")
    return r


def predict(model: Forecaster, recent):
    """Next KPI value from exactly ``lookback`` recent samples."""
    r = _check_recent(model, recent)
    if r.ndim != 1:
        raise ShapeError("predict takes one sample sequence; use predict_many for batches")
    return float(predict_many(model, r[None, :])[0])


def predict_many(model: Forecaster, recent):
    r = _check_recent(model, recent)
    out = model.net(normalize(r, model.bounds)[:, :, None])[:, 0]
    return denormalize(out, model.bounds)


def rolling_predictions(model: Forecaster, series, start, stop):
    """Predictions for ticks ``start..stop-1`` of ``series`` (needs start >= lookback)."""
    L = model.lookback
    if start < L:
        raise ShapeError("rolling predictions need a full lookback")
    idx = np.arange(start, stop)[:, None] - L + np.arange(L)[None, :]
    return predict_many(model, np.asarray(series)[idx])


def retrain(model: Forecaster, new_data, config: ForecasterConfig | None = None,
            start_tick=0, cost: RetrainCost | None = None, trigger=None):
    """Warm-start optimization from the current weights on ``new_data``.

    Normalization bounds are refit to the new data. The returned job holds
    the updated model; its completion tick follows the simulated cost model.
    """
    cfg = config or ForecasterConfig()
    cost = cost or RetrainCost()
    x = np.asarray(new_data, dtype=np.float64)
    if x.size == 0:
        raise TrainingError("retrain called without data")
    job = RetrainJob(
        trigger=dict(trigger or {}),
        n_samples=len(x),
        start_tick=int(start_tick),
        completion_tick=int(start_tick) + cost.training_ticks(len(x)),
    )
    net = copy.deepcopy(model.net)
    job.initial_params = {k: v.copy() for k, v in net.parameters().items()}
    bounds = Bounds.of(x)
    if len(x) > model.lookback:
        rng = np.random.default_rng([cfg.seed, 6, int(start_tick)])
        X, y = _sequences(normalize(x, bounds), model.lookback)
        job.losses = _fit(net, X, y, cfg.retrain_epochs, cfg, rng)
    job.model = Forecaster(net, model.lookback, bounds, model.version, job.losses)
    return job


def replace(active: Forecaster, job: RetrainJob):
    """Return the retrained model as the new active one, version bumped."""
    if not job.complete:
        raise StateError("retrain job has not produced a model")
    new = copy.copy(job.model)
    new.version = active.version + 1
    return new


def save_forecaster(model: Forecaster, path):
    cell0 = model.net.layers[0].cell
    meta = {
        "kind": "forecaster",
        "lookback": model.lookback,
        "hidden": cell0.hidden_size,
        "layers": len(model.net.layers) - 1,
        "bounds": [model.bounds.lo, model.bounds.hi],
        "version": model.version,
    }
    nn.save_params(path, model.parameters(), meta)


def load_forecaster(path):
    arrays, meta = nn.load_params(path)
    if meta.get("kind") != "forecaster":
        raise ValueError(f"{path}: not a forecaster container")
    cfg = ForecasterConfig(lookback=meta["lookback"], hidden=meta["hidden"], layers=meta["layers"])
    net = build_net(cfg, np.random.default_rng(0))
    for key, arr in net.parameters().items():
        arr[...] = arrays[key]
    return Forecaster(net, meta["lookback"], Bounds(*meta["bounds"]), meta["version"])
