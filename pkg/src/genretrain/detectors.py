"""Windowed change detectors behind one streaming contract.

Every detector consumes one :class:`Window` at a time through ``step`` and
returns a :class:`Verdict`. The generative detectors compare each window with
freshly generated data using the two-sample KS test; the LOF and RMSE
detectors are the baselines.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import ConfigError, ShapeError
from .genai import GanModel, VaeModel, discriminator_scores, gan_generate, vae_generate
from .stats import LofModel, ks_two_sample, rmse

DETECTOR_KINDS = ("vae", "gan", "lof", "threshold")


class VerdictKind(str, Enum):
    NO_CHANGE = "NoChange"
    WARNING = "Warning"
    RETRAIN = "RetrainTrigger"


@dataclass
class Window:
    index: int
    samples: np.ndarray  # normalized to [0, 1]
    start_tick: int
    raw: np.ndarray | None = None

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)

    def __len__(self):
        return len(self.samples)


@dataclass(frozen=True)
class Verdict:
    kind: VerdictKind
    window_index: int
    detector: str
    evidence: dict

    @property
    def triggered(self):
        return self.kind is VerdictKind.RETRAIN

    def to_dict(self):
        return {
            "kind": self.kind.value,
            "window_index": self.window_index,
            "detector": self.detector,
            "evidence": self.evidence,
        }


@dataclass
class DetectorState:
    kind: str
    window_size: int
    config: dict
    counters: dict = field(default_factory=dict)
    buffer: deque = field(default_factory=lambda: deque(maxlen=50))

    def clear(self):
        for key in self.counters:
            self.counters[key] = 0
        self.buffer.clear()


def consecutive_windows(t_ds, t_e2e):
    """Outlier windows needed before the LOF baseline triggers."""
    if t_ds is None or t_e2e is None or t_e2e <= 0 or t_ds <= 0:
        raise ConfigError("LOF detector needs positive T_ds and T_e2e (or an explicit N)")
    return math.ceil(t_ds / t_e2e)


def noise_seed(base_seed, generation, window_index):
    """Seed of the generated data compared against window ``window_index``."""
    return (int(base_seed), int(generation), int(window_index))


class _Detector:
    kind = ""

    def __init__(self, window_size, config, buffer_capacity=50):
        self.state = DetectorState(
            self.kind, int(window_size), dict(config), buffer=deque(maxlen=buffer_capacity)
        )

    @property
    def buffer(self):
        return self.state.buffer

    def _check(self, window):
        if len(window) != self.state.window_size:
            raise ConfigError(
                f"window has {len(window)} samples but detector expects {self.state.window_size}"
            )

    def _verdict(self, kind, window, evidence):
        return Verdict(kind, window.index, self.kind, evidence)

    def reset_after_retrain(self, model=None):
        """Clear counters and the retrain buffer; optionally swap the model."""
        self.state.clear()
        if model is not None:
            self._swap(model)
        return self.state

    def _swap(self, model):
        raise NotImplementedError


class _GenerativeDetector(_Detector):
    def __init__(self, model, window_size=None, p_kstest=None, seed=0, buffer_capacity=50):
        ws = window_size or model.window_size
        super().__init__(ws, {"p_kstest_override": p_kstest, "seed": seed}, buffer_capacity)
        if model.window_size != ws:
            raise ConfigError(f"model window size {model.window_size} != detector window size {ws}")
        self.model = model
        self.state.counters.update({"triggers": 0, "generation": 0})
        self.generation = 0

    @property
    def threshold(self):
        override = self.state.config["p_kstest_override"]
        return self.model.p_kstest if override is None else override

    def refresh(self, model):
        """Swap in a refit model without touching counters or the buffer."""
        self._swap(model)

    def release_overrides(self):
        """Fall back to the thresholds calibrated with the current model."""
        for key in ("p_kstest_override", "d_score_override"):
            if key in self.state.config:
                self.state.config[key] = None

    def seed_for(self, window_index):
        return noise_seed(self.state.config["seed"], self.generation, window_index)

    def _swap(self, model):
        if model.window_size != self.state.window_size:
            raise ConfigError("replacement model has a different window size")
        self.model = model
        self.generation += 1


class VaeDetector(_GenerativeDetector):
    """Decoder output vs. incoming window; trigger when the KS p-value is low."""

    kind = "vae"

    def generated(self, window_index):
        return vae_generate(self.model, self.seed_for(window_index))

    def step(self, window):
        self._check(window)
        gd = self.generated(window.index)
        ks = ks_two_sample(gd, window.samples)
        thr = self.threshold
        evidence = {"p_value": ks.p_value, "statistic": ks.statistic, "threshold": thr}
        if ks.p_value < thr:
            self.state.counters["triggers"] += 1
            self.buffer.append(window)
            return self._verdict(VerdictKind.RETRAIN, window, evidence)
        return self._verdict(VerdictKind.NO_CHANGE, window, evidence)


class GanDetector(_GenerativeDetector):
    """Discriminator warning zone plus generator-vs-window KS test.

    A window whose per-sample scores leave ``d_score`` raises a warning and
    is buffered as retraining data; a low KS p-value triggers retraining and
    takes precedence in the returned verdict.
    """

    kind = "gan"

    def __init__(self, model: GanModel, window_size=None, p_kstest=None, seed=0,
                 buffer_capacity=50, d_score=None):
        super().__init__(model, window_size, p_kstest, seed, buffer_capacity)
        self.state.config["d_score_override"] = d_score
        self.state.counters["warnings"] = 0

    @property
    def d_score(self):
        override = self.state.config["d_score_override"]
        return self.model.d_score if override is None else override

    def generated(self, window_index):
        return gan_generate(self.model, self.seed_for(window_index))

    def step(self, window):
        self._check(window)
        scores = discriminator_scores(self.model, window.samples)
        lo, hi = self.d_score
        outside = int(np.sum((scores < lo) | (scores > hi)))
        warning = outside > 0
        if warning:
            self.state.counters["warnings"] += 1
            self.buffer.append(window)
        gg = self.generated(window.index)
        ks = ks_two_sample(gg, window.samples)
        thr = self.threshold
        evidence = {
            "p_value": ks.p_value,
            "statistic": ks.statistic,
            "threshold": thr,
            "warning": warning,
            "scores_outside": outside,
            "score_min": float(scores.min()),
            "score_max": float(scores.max()),
            "score_mean": float(scores.mean()),
        }
        if ks.p_value < thr:
            self.state.counters["triggers"] += 1
            if not warning:
                self.buffer.append(window)
            return self._verdict(VerdictKind.RETRAIN, window, evidence)
        if warning:
            return self._verdict(VerdictKind.WARNING, window, evidence)
        return self._verdict(VerdictKind.NO_CHANGE, window, evidence)


class LofDetector(_Detector):
    """Trigger after ``n_windows`` consecutive outlier windows.

    A window is an outlier when at least half of its samples have a local
    outlier factor above ``factor_threshold`` with respect to the reference.
    """

    kind = "lof"

    def __init__(self, reference, window_size, n_windows=None, t_ds=None, t_e2e=None,
                 k=20, factor_threshold=1.5, buffer_capacity=50):
        if n_windows is None:
            n_windows = consecutive_windows(t_ds, t_e2e)
        if n_windows < 1:
            raise ConfigError("n_windows must be >= 1")
        super().__init__(
            window_size,
            {"n_windows": int(n_windows), "k": k, "factor_threshold": factor_threshold,
             "t_ds": t_ds, "t_e2e": t_e2e},
            buffer_capacity,
        )
        self.state.counters.update({"consecutive": 0, "triggers": 0})
        self._swap(reference)

    def _swap(self, reference):
        ref = np.asarray(reference, dtype=np.float64).ravel()
        if ref.size < 2:
            raise ConfigError("LOF reference needs at least two points")
        k = min(self.state.config["k"], ref.size - 1)
        self.lof = LofModel(ref, k)

    def step(self, window):
        self._check(window)
        values = window.raw if window.raw is not None else window.samples
        factors = self.lof.score_samples(values)
        n_out = int(np.sum(factors > self.state.config["factor_threshold"]))
        outlier = 2 * n_out >= len(values)
        c = self.state.counters
        evidence = {"outliers": n_out, "max_factor": float(factors.max()), "consecutive": 0}
        if not outlier:
            c["consecutive"] = 0
            return self._verdict(VerdictKind.NO_CHANGE, window, evidence)
        c["consecutive"] += 1
        evidence["consecutive"] = c["consecutive"]
        self.buffer.append(window)
        if c["consecutive"] >= self.state.config["n_windows"]:
            c["triggers"] += 1
            return self._verdict(VerdictKind.RETRAIN, window, evidence)
        return self._verdict(VerdictKind.WARNING, window, evidence)


class ThresholdDetector(_Detector):
    """RMSE of the forecaster on the window (raw units) against a threshold.

    ``thresholds`` may be a sequence: the i-th entry applies after the i-th
    retraining, the last one repeating.
    """

    kind = "threshold"

    def __init__(self, thresholds=15.0, window_size=10, buffer_capacity=50):
        ts = [float(t) for t in np.atleast_1d(thresholds)]
        if not ts or any(t < 0 for t in ts):
            raise ConfigError("RMSE thresholds must be nonnegative")
        super().__init__(window_size, {"thresholds": ts}, buffer_capacity)
        self.state.counters.update({"triggers": 0})
        self.retrains = 0

    @property
    def threshold(self):
        ts = self.state.config["thresholds"]
        return ts[min(self.retrains, len(ts) - 1)]

    def step(self, window, predictions):
        self._check(window)
        actual = window.raw if window.raw is not None else window.samples
        pred = np.asarray(predictions, dtype=np.float64)
        if pred.shape != actual.shape:
            raise ShapeError(f"{pred.shape[0] if pred.ndim else 0} predictions for {len(actual)} samples")
        err = rmse(pred, actual)
        thr = self.threshold
        evidence = {"rmse": err, "threshold": thr}
        if err > thr:
            self.state.counters["triggers"] += 1
            self.buffer.append(window)
            return self._verdict(VerdictKind.RETRAIN, window, evidence)
        return self._verdict(VerdictKind.NO_CHANGE, window, evidence)

    def reset_after_retrain(self, model=None):
        self.state.clear()
        self.retrains += 1
        return self.state


def vae_detector_step(detector: VaeDetector, window: Window) -> Verdict:
    return detector.step(window)


def gan_detector_step(detector: GanDetector, window: Window) -> Verdict:
    return detector.step(window)


def lof_detector_step(detector: LofDetector, window: Window) -> Verdict:
    return detector.step(window)


def threshold_detector_step(detector: ThresholdDetector, window: Window, predictions) -> Verdict:
    return detector.step(window, predictions)


def reset_after_retrain(detector, model=None):
    return detector.reset_after_retrain(model)
