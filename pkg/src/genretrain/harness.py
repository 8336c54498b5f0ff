"""Closed-loop simulation: serve forecasts, monitor windows, retrain, replace.

One run walks a scenario window by window in simulated ticks. The forecaster
answers every tick; the detector sees each window once it is complete, i.e.
window ``i`` (ticks ``i*WS .. (i+1)*WS - 1``) is judged at tick ``(i+1)*WS``.
A trigger schedules a retrain job: data collection for ``collect_ticks``,
then training whose simulated duration follows :class:`RetrainCost`. The old
forecaster keeps serving until the job completes; triggers raised while a
job is in flight are suppressed and recorded.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .detectors import (
    DETECTOR_KINDS,
    GanDetector,
    LofDetector,
    ThresholdDetector,
    VaeDetector,
    VerdictKind,
    Window,
)
from .errors import AggregationError, ConfigError
from .forecaster import (
    Forecaster,
    ForecasterConfig,
    RetrainCost,
    replace,
    retrain,
    rolling_predictions,
    train_forecaster,
)
from .genai import GenConfig, gan_train, vae_train
from .stream import Bounds, ScenarioSpec, build_scenario, normalize, windows_of

log = logging.getLogger(__name__)

EVENT_KINDS = ("ChangeInjected", "Warning", "RetrainTriggered", "RetrainStarted", "ModelReplaced")
# canonical ordering of trigger delays, fastest first
ORDERING = ("gan", "vae", "lof", "threshold")


@dataclass
class HarnessConfig:
    window_size: int = 10
    p_vae_kstest: float | None = None
    p_gan_kstest: float | None = None
    d_score: tuple | None = None
    rmse_thresholds: tuple = (15.0,)
    t_ds: float = 20.0
    t_e2e: float = 5.0
    lof_windows: int | None = None
    lof_k: int = 20
    lof_factor: float = 1.5
    lof_reference_size: int = 1000
    buffer_capacity: int = 50
    retrain_cap: int = 500
    collect_ticks: int = 50
    base_ticks: float = 54.0
    per_sample_ticks: float = 0.1
    refit_generative: bool = True
    # explicit p/d thresholds describe the initially trained models only
    overrides_after_refit: bool = False
    refit_epochs: int = 100
    # further silent refits once the new regime has this many samples
    refresh_samples: tuple = (400,)
    training_stride: int = 3
    gen: GenConfig = field(default_factory=GenConfig)
    forecaster: ForecasterConfig = field(default_factory=ForecasterConfig)

    def __post_init__(self):
        if self.window_size < 2:
            raise ConfigError("window_size must be >= 2")
        if isinstance(self.gen, dict):
            self.gen = GenConfig(**self.gen)
        if isinstance(self.forecaster, dict):
            self.forecaster = ForecasterConfig(**self.forecaster)
        if self.d_score is not None:
            self.d_score = tuple(self.d_score)
            if len(self.d_score) != 2 or self.d_score[0] > self.d_score[1]:
                raise ConfigError("d_score must be an interval [low, high]")
        self.rmse_thresholds = tuple(float(t) for t in np.atleast_1d(self.rmse_thresholds))
        self.refresh_samples = tuple(sorted(int(n) for n in self.refresh_samples))
        self.forecaster.lookback = self.window_size

    @property
    def cost(self):
        return RetrainCost(self.collect_ticks, self.base_ticks, self.per_sample_ticks)

    def to_dict(self):
        d = asdict(self)
        d["d_score"] = list(self.d_score) if self.d_score is not None else None
        d["rmse_thresholds"] = list(self.rmse_thresholds)
        d["refresh_samples"] = list(self.refresh_samples)
        d["gen"]["d_percentiles"] = list(self.gen.d_percentiles)
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


@dataclass
class TrainedModels:
    vae: object
    gan: object
    forecaster: Forecaster
    reference: np.ndarray  # raw training samples for the LOF baseline
    bounds: Bounds
    window_size: int
    reports: dict = field(default_factory=dict)


def training_windows(samples, bounds, ws, stride):
    return windows_of(normalize(samples, bounds), ws, stride)


def train_models(samples, config: HarnessConfig | None = None, kinds=("vae", "gan", "forecaster")):
    """Fit the generative models and the forecaster on an observed stream."""
    cfg = config or HarnessConfig()
    x = np.asarray(samples, dtype=np.float64)
    bounds = Bounds.of(x)
    wins = training_windows(x, bounds, cfg.window_size, cfg.training_stride)
    vae = gan = fc = None
    reports = {}
    if "vae" in kinds:
        vae, rep = vae_train(wins, cfg.gen, bounds.as_tuple())
        reports["vae"] = rep
    if "gan" in kinds:
        gan, rep = gan_train(wins, cfg.gen, bounds.as_tuple())
        reports["gan"] = rep
    if "forecaster" in kinds:
        fc = train_forecaster(x, cfg.forecaster)
    return TrainedModels(vae, gan, fc, x, bounds, cfg.window_size, reports)


@dataclass(frozen=True)
class RunEvent:
    tick: int
    kind: str
    detector: str
    payload: dict

    def __post_init__(self):
        if self.kind not in EVENT_KINDS:
            raise ValueError(f"unknown event kind {self.kind!r}")

    def to_dict(self):
        return {"tick": self.tick, "kind": self.kind, "detector": self.detector, "payload": self.payload}


@dataclass
class RunReport:
    scenario: dict
    detector: str
    seed: int
    window_size: int
    tick_period_ms: float
    change_points: list
    events: list
    actual: np.ndarray
    predicted: np.ndarray
    served_version: np.ndarray
    verdicts: list  # one kind string per window
    suppressed: list
    efficacy: list
    config: dict
    refreshes: list = field(default_factory=list)

    @property
    def triggers(self):
        return [e.tick for e in self.events if e.kind == "RetrainTriggered"]

    def to_dict(self):
        return {
            "scenario": self.scenario,
            "detector": self.detector,
            "seed": self.seed,
            "window_size": self.window_size,
            "tick_period_ms": self.tick_period_ms,
            "change_points": list(self.change_points),
            "events": [e.to_dict() for e in self.events],
            "mrtt": compute_mrtt(self),
            "mrpt": compute_mrpt(self),
            "false_positives": false_positives(self),
            "suppressed_triggers": list(self.suppressed),
            "efficacy": self.efficacy,
            "generative_refreshes": self.refreshes,
            "config": self.config,
        }


class _Job:
    def __init__(self, trigger_tick, first_tick, start_tick):
        self.trigger_tick = trigger_tick
        self.first_tick = first_tick
        self.start_tick = start_tick
        self.retrain = None


def _episode_start(buffer, trigger_window, ws):
    """First tick of the warning episode that ends in the trigger window.

    Buffered windows count only while they form an unbroken run of windows
    leading up to the trigger; older ones are stale.
    """
    indices = {w.index for w in buffer}
    first = trigger_window.index
    while first - 1 in indices:
        first -= 1
    return first * ws


def _make_detector(kind, models: TrainedModels, cfg: HarnessConfig, seed):
    ws = cfg.window_size
    if kind == "vae":
        return VaeDetector(models.vae, ws, cfg.p_vae_kstest, seed, cfg.buffer_capacity)
    if kind == "gan":
        return GanDetector(models.gan, ws, cfg.p_gan_kstest, seed, cfg.buffer_capacity, cfg.d_score)
    if kind == "lof":
        ref = _subsample(models.reference, cfg.lof_reference_size)
        return LofDetector(
            ref, ws, cfg.lof_windows, cfg.t_ds, cfg.t_e2e, cfg.lof_k, cfg.lof_factor, cfg.buffer_capacity
        )
    if kind == "threshold":
        return ThresholdDetector(cfg.rmse_thresholds, ws, cfg.buffer_capacity)
    raise ConfigError(f"unknown detector {kind!r}; expected one of {', '.join(DETECTOR_KINDS)}")


def _subsample(x, size):
    x = np.asarray(x, dtype=np.float64)
    if len(x) <= size:
        return x
    idx = np.linspace(0, len(x) - 1, size).round().astype(int)
    return x[idx]


def _check_models(kind, models: TrainedModels, cfg: HarnessConfig):
    if models.window_size != cfg.window_size:
        raise ConfigError(f"models use WS={models.window_size}, config has {cfg.window_size}")
    if models.forecaster is None:
        raise ConfigError("a trained forecaster is required")
    if models.forecaster.lookback != cfg.window_size:
        raise ConfigError("forecaster lookback must equal the window size")
    needed = {"vae": models.vae, "gan": models.gan}.get(kind, True)
    if needed is None:
        raise ConfigError(f"detector {kind!r} needs a trained {kind.upper()} model")


def _refit(kind, data, cfg: HarnessConfig, seed):
    """New generative model on the data seen since the episode began."""
    bounds = Bounds.of(data)
    wins = training_windows(data, bounds, cfg.window_size, 1)
    if len(wins) < 50:
        log.info("refit skipped: %d windows", len(wins))
        return None
    gen = GenConfig(**{**asdict(cfg.gen), "epochs": cfg.refit_epochs,
                       "min_gan_epochs": min(cfg.gen.min_gan_epochs, cfg.refit_epochs),
                       "seed": seed})
    train = vae_train if kind == "vae" else gan_train
    model, _ = train(wins, gen, bounds.as_tuple())
    return model


def _pad_history(samples, lookback):
    x = np.asarray(samples, dtype=np.float64)
    return np.concatenate([np.full(lookback, x[0]), x])


def _serve(versions, padded, lookback, start, stop):
    """Predictions for ticks start..stop-1 by whichever version was active."""
    out = np.empty(stop - start)
    ver = np.empty(stop - start, dtype=int)
    bounds = [v[0] for v in versions] + [math.inf]
    for k, (since, model) in enumerate(versions):
        a, b = max(start, since), min(stop, bounds[k + 1])
        if a >= b:
            continue
        out[a - start : b - start] = rolling_predictions(model, padded, a + lookback, b + lookback)
        ver[a - start : b - start] = model.version
    return out, ver


def run_scenario(spec, detector, models: TrainedModels, config: HarnessConfig | None = None,
                 seed=0, samples=None):
    """Stream a scenario through one detector and the retraining loop.

    ``spec`` is a :class:`ScenarioSpec`; ``samples`` may override its
    generated stream (e.g. replayed CSV data) while keeping its change points.
    """
    cfg = config or HarnessConfig()
    _check_models(detector, models, cfg)
    ws = cfg.window_size
    if samples is None:
        x, changes = build_scenario(spec)
    else:
        x, changes = np.asarray(samples, dtype=np.float64), spec.change_points
    T = len(x)
    det = _make_detector(detector, models, cfg, seed)
    gen_bounds = {"vae": models.vae, "gan": models.gan}.get(detector)
    gen_bounds = Bounds(*gen_bounds.bounds) if gen_bounds is not None else None
    fc = models.forecaster
    versions = [(0, fc)]
    L = fc.lookback
    padded = _pad_history(x, L)
    predicted = np.empty(T)
    served = np.empty(T, dtype=int)
    events = [RunEvent(c, "ChangeInjected", detector, {"change_index": k}) for k, c in enumerate(changes)]
    verdicts = []
    suppressed = []
    efficacy = []
    job = None
    refits = 0
    refreshes = []
    regime = None  # [first tick of the current regime, pending refresh sizes]

    def advance(now):
        nonlocal job, fc, gen_bounds, refits, regime
        if job is None:
            return
        if job.retrain is None and job.start_tick <= now:
            lo = max(job.first_tick, job.start_tick - cfg.retrain_cap)
            data = x[lo : job.start_tick]
            job.retrain = retrain(fc, data, cfg.forecaster, job.start_tick, cfg.cost,
                                  {"tick": job.trigger_tick})
            events.append(RunEvent(job.start_tick, "RetrainStarted", detector,
                                   {"trigger_tick": job.trigger_tick, "n_samples": len(data),
                                    "data_from": int(lo)}))
        if job.retrain is not None and job.retrain.completion_tick <= now:
            done = job.retrain.completion_tick
            old = fc
            fc = replace(fc, job.retrain)
            versions.append((done, fc))
            efficacy.append(_tail_efficacy(old, fc, padded, L, done, changes, T))
            events.append(RunEvent(done, "ModelReplaced", detector,
                                   {"trigger_tick": job.trigger_tick, "version": fc.version}))
            new_model = None
            # the regime after the change starts with the triggering window
            fresh = x[job.trigger_tick - ws : done]
            if detector in ("vae", "gan") and cfg.refit_generative:
                refits += 1
                new_model = _refit(detector, fresh, cfg, [seed, refits])
                if new_model is not None:
                    gen_bounds = Bounds(*new_model.bounds)
                    if not cfg.overrides_after_refit:
                        det.release_overrides()
                    regime = [job.trigger_tick - ws, [n for n in cfg.refresh_samples if n > len(fresh)]]
            elif detector == "lof":
                new_model = _subsample(fresh, cfg.lof_reference_size)
            det.reset_after_retrain(new_model)
            job = None

    def refresh(now):
        nonlocal gen_bounds, refits
        start, pending = regime
        if job is not None or not pending or now - start < pending[0]:
            return
        pending.pop(0)
        refits += 1
        model = _refit(detector, x[start:now], cfg, [seed, refits])
        if model is not None:
            det.refresh(model)
            gen_bounds = Bounds(*model.bounds)
            refreshes.append({"tick": now, "n_samples": now - start})

    for i in range(T // ws):
        a, b = i * ws, (i + 1) * ws
        advance(b)
        if regime is not None:
            refresh(b)
        predicted[a:b], served[a:b] = _serve(versions, padded, L, a, b)
        raw = x[a:b]
        norm = normalize(raw, gen_bounds) if gen_bounds is not None else raw
        win = Window(i, norm, a, raw)
        v = det.step(win, predicted[a:b]) if detector == "threshold" else det.step(win)
        verdicts.append(v.kind.value)
        if v.kind is VerdictKind.WARNING:
            events.append(RunEvent(b, "Warning", detector, _jsonable(v.evidence)))
        elif v.kind is VerdictKind.RETRAIN:
            if job is not None:
                suppressed.append(b)
                continue
            first = _episode_start(det.buffer, win, ws)
            job = _Job(b, first, b + cfg.collect_ticks)
            events.append(RunEvent(b, "RetrainTriggered", detector, _jsonable(v.evidence)))
    tail = (T // ws) * ws
    if tail < T:
        advance(T)
        predicted[tail:], served[tail:] = _serve(versions, padded, L, tail, T)
    else:
        advance(T)
    events.sort(key=lambda e: e.tick)
    scen = spec.to_dict() if isinstance(spec, ScenarioSpec) else dict(spec)
    return RunReport(
        scenario=scen,
        detector=detector,
        seed=int(seed),
        window_size=ws,
        tick_period_ms=float(getattr(spec, "tick_period_ms", 1.0)),
        change_points=list(changes),
        events=events,
        actual=x,
        predicted=predicted,
        served_version=served,
        verdicts=verdicts,
        suppressed=suppressed,
        efficacy=efficacy,
        config=cfg.to_dict(),
        refreshes=refreshes,
    )


def _tail_efficacy(old, new, padded, L, done, changes, T):
    """Old vs new forecaster RMSE on the rest of the current traffic segment."""
    end = min([c for c in changes if c > done] + [T])
    if end - done < 1:
        return {"replaced_at": done, "tail": [done, end], "rmse_old": None, "rmse_new": None}
    actual = padded[done + L : end + L]
    r_old = rolling_predictions(old, padded, done + L, end + L)
    r_new = rolling_predictions(new, padded, done + L, end + L)
    return {
        "replaced_at": done,
        "tail": [done, end],
        "rmse_old": float(np.sqrt(np.mean((r_old - actual) ** 2))),
        "rmse_new": float(np.sqrt(np.mean((r_new - actual) ** 2))),
    }


def _jsonable(d):
    out = {}
    for k, v in d.items():
        if isinstance(v, (np.floating, float)):
            out[k] = float(v)
        elif isinstance(v, (np.integer, int)) and not isinstance(v, bool):
            out[k] = int(v)
        elif isinstance(v, (tuple, list)):
            out[k] = [float(t) for t in v]
        else:
            out[k] = v
    return out


# ---------------------------------------------------------------- metrics


def compute_mrtt(report: RunReport):
    """Per change: delay until the first trigger that follows it.

    A trigger at tick ``t`` belongs to the latest change ``c < t``; a change
    with no trigger before the next change (or the end) is untriggered.
    """
    changes = list(report.change_points)
    if not changes:
        return []
    triggers = report.triggers
    out = []
    for k, c in enumerate(changes):
        nxt = changes[k + 1] if k + 1 < len(changes) else math.inf
        hits = [t for t in triggers if c < t <= nxt]
        if hits:
            d = hits[0] - c
            out.append({"change_tick": c, "trigger_tick": hits[0], "mrtt_ticks": d,
                        "mrtt_ms": d * report.tick_period_ms, "triggered": True})
        else:
            out.append({"change_tick": c, "trigger_tick": None, "mrtt_ticks": None,
                        "mrtt_ms": None, "triggered": False})
    return out


def false_positives(report: RunReport):
    first = min(report.change_points) if report.change_points else math.inf
    return [t for t in report.triggers if t <= first]


def compute_mrpt(report: RunReport):
    """Per trigger: delay until its replacement, or an open-job marker."""
    replaced = {e.payload["trigger_tick"]: e.tick for e in report.events if e.kind == "ModelReplaced"}
    out = []
    for t in report.triggers:
        if t in replaced:
            d = replaced[t] - t
            out.append({"trigger_tick": t, "replaced_tick": replaced[t], "mrpt_ticks": d,
                        "mrpt_ms": d * report.tick_period_ms, "open": False})
        else:
            out.append({"trigger_tick": t, "replaced_tick": None, "mrpt_ticks": None,
                        "mrpt_ms": None, "open": True})
    return out


@dataclass
class PmfSummary:
    scenario: str
    detector: str
    bucket_ticks: float
    instances: int
    untriggered: int
    mass: dict  # windows -> percentage of instances

    def percent_within(self, windows):
        return sum(p for w, p in self.mass.items() if w <= windows)

    def to_dict(self):
        return {
            "scenario": self.scenario,
            "detector": self.detector,
            "bucket_ticks": self.bucket_ticks,
            "instances": self.instances,
            "untriggered": self.untriggered,
            "mass": {str(k): v for k, v in sorted(self.mass.items())},
        }


def pmf_over_trials(reports, change_index=None):
    """MRTT histogram in window-size buckets, as percent of change instances."""
    reports = list(reports)
    if not reports:
        raise AggregationError("no reports to aggregate")
    scen = {r.scenario.get("name") for r in reports}
    dets = {r.detector for r in reports}
    if len(scen) > 1 or len(dets) > 1:
        raise AggregationError(f"reports mix scenarios {sorted(scen)} / detectors {sorted(dets)}")
    ws = reports[0].window_size
    counts = {}
    n = untriggered = 0
    for r in reports:
        rows = compute_mrtt(r)
        if change_index is not None:
            rows = rows[change_index : change_index + 1]
        for row in rows:
            n += 1
            if not row["triggered"]:
                untriggered += 1
                continue
            w = int(math.ceil(row["mrtt_ticks"] / ws))
            counts[w] = counts.get(w, 0) + 1
    mass = {w: 100.0 * c / n for w, c in sorted(counts.items())} if n else {}
    return PmfSummary(scen.pop(), dets.pop(), ws * reports[0].tick_period_ms, n, untriggered, mass)


# ---------------------------------------------------------------- comparison


@dataclass
class Comparison:
    scenario: str
    detectors: list
    seeds: list
    rows: list
    pmfs: list
    ordering: dict
    reports: list  # per detector, list of RunReport

    def to_dict(self):
        return {
            "scenario": self.scenario,
            "detectors": list(self.detectors),
            "seeds": list(self.seeds),
            "rows": self.rows,
            "pmf": [p.to_dict() for p in self.pmfs],
            "ordering": self.ordering,
        }


def _trial(args):
    spec, detector, models, cfg, seed = args
    return run_scenario(spec.with_seed(seed), detector, models, cfg, seed)


def trigger_windows(report: RunReport):
    """Trigger delay in windows per change (``inf`` when untriggered)."""
    return [math.ceil(r["mrtt_ticks"] / report.window_size) if r["triggered"] else math.inf
            for r in compute_mrtt(report)]


def check_ordering(delays: dict):
    """Whether per-change delays respect GAN <= VAE <= LOF <= Threshold."""
    present = [d for d in ORDERING if d in delays]
    for a, b in zip(present, present[1:]):
        if any(x > y for x, y in zip(delays[a], delays[b])):
            return False
    return True


def compare_detectors(spec: ScenarioSpec, detectors, trials, models: TrainedModels,
                      config: HarnessConfig | None = None, seed=0, parallel=1):
    """Run every detector over ``trials`` seeded variants of one scenario."""
    cfg = config or HarnessConfig()
    detectors = list(detectors)
    if len(detectors) < 2:
        raise ConfigError("comparison needs at least two detectors")
    if trials < 2:
        raise ConfigError("comparison needs at least two trials")
    for d in detectors:
        _check_models(d, models, cfg)
    seeds = [int(seed) + k for k in range(trials)]
    jobs = [(spec, d, models, cfg, s) for d in detectors for s in seeds]
    if parallel and parallel > 1:
        with ProcessPoolExecutor(max_workers=parallel) as pool:
            flat = list(pool.map(_trial, jobs))
    else:
        flat = [_trial(j) for j in jobs]
    per_det = [flat[k * trials : (k + 1) * trials] for k in range(len(detectors))]
    rows, pmfs = [], []
    for d, reps in zip(detectors, per_det):
        mrtt = [r["mrtt_ms"] for rep in reps for r in compute_mrtt(rep) if r["triggered"]]
        mrpt = [r["mrpt_ms"] for rep in reps for r in compute_mrpt(rep) if not r["open"]]
        n_changes = sum(len(rep.change_points) for rep in reps)
        rows.append({
            "detector": d,
            "mean_mrtt_ms": float(np.mean(mrtt)) if mrtt else None,
            "mean_mrpt_ms": float(np.mean(mrpt)) if mrpt else None,
            "triggered_changes": len(mrtt),
            "changes": n_changes,
            "false_positives": sum(len(false_positives(rep)) for rep in reps),
            "suppressed": sum(len(rep.suppressed) for rep in reps),
        })
        pmfs.append(pmf_over_trials(reps))
    per_trial = []
    for k, s in enumerate(seeds):
        delays = {d: trigger_windows(per_det[j][k]) for j, d in enumerate(detectors)}
        per_trial.append({"seed": s, "delays": {d: [_finite(x) for x in v] for d, v in delays.items()},
                          "holds": check_ordering(delays)})
    ordering = {
        "order": [d for d in ORDERING if d in detectors],
        "trials_holding": sum(t["holds"] for t in per_trial),
        "trials": len(per_trial),
        "passed": all(t["holds"] for t in per_trial),
        "per_trial": per_trial,
    }
    name = spec.name if isinstance(spec, ScenarioSpec) else str(spec)
    return Comparison(name, detectors, seeds, rows, pmfs, ordering, per_det)


def _finite(x):
    return None if x == math.inf else int(x)


# ---------------------------------------------------------------- output


def _dump_json(obj, path):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _write_csv(path, header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    Path(path).write_text(buf.getvalue(), encoding="utf-8")


def trace_rows(report: RunReport):
    ws = report.window_size
    rows = []
    for t in range(len(report.actual)):
        i = t // ws
        verdict = report.verdicts[i] if (t + 1) % ws == 0 and i < len(report.verdicts) else ""
        rows.append([t, repr(float(report.actual[t])), repr(float(report.predicted[t])),
                     int(report.served_version[t]), verdict])
    return rows


def write_run_report(report: RunReport, out_dir, stem=None):
    """``<stem>.json`` with events and metrics plus ``<stem>_trace.csv``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    stem = stem or f"{report.scenario.get('name', 'run')}_{report.detector}_seed{report.seed}"
    _dump_json(report.to_dict(), out / f"{stem}.json")
    _write_csv(out / f"{stem}_trace.csv", ["tick", "actual", "predicted", "model_version", "verdict"],
               trace_rows(report))
    return [out / f"{stem}.json", out / f"{stem}_trace.csv"]


def write_comparison(comp: Comparison, out_dir, figures=True):
    """Comparison JSON, bar/PMF/timeline plot data and (optionally) figures."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    _dump_json(comp.to_dict(), out / "comparison.json")
    _write_csv(out / "mrtt_mrpt.csv", ["detector", "mean_mrtt_ms", "mean_mrpt_ms"],
               [[r["detector"], _fmt(r["mean_mrtt_ms"]), _fmt(r["mean_mrpt_ms"])] for r in comp.rows])
    pmf_rows = []
    for p in comp.pmfs:
        for w, pct in sorted(p.mass.items()):
            pmf_rows.append([p.detector, w, w * p.bucket_ticks, repr(pct)])
        pmf_rows.append([p.detector, "untriggered", "", repr(100.0 * p.untriggered / max(p.instances, 1))])
    _write_csv(out / "pmf.csv", ["detector", "windows", "mrtt_ms", "percent"], pmf_rows)
    # timeline overlay of the first trial for every detector
    first = [reps[0] for reps in comp.reports]
    header = ["tick", "actual"] + [f"predicted_{r.detector}" for r in first]
    rows = [[t, repr(float(first[0].actual[t]))] + [repr(float(r.predicted[t])) for r in first]
            for t in range(len(first[0].actual))]
    _write_csv(out / "timeline.csv", header, rows)
    _write_csv(out / "timeline_events.csv", ["detector", "tick", "kind"],
               [[r.detector, e.tick, e.kind] for r in first for e in r.events if e.kind != "Warning"])
    written += [out / n for n in ("comparison.json", "mrtt_mrpt.csv", "pmf.csv", "timeline.csv",
                                  "timeline_events.csv")]
    for reps in comp.reports:
        written += write_run_report(reps[0], out / "runs")
    if figures:
        from .plotting import plot_bars, plot_pmf, plot_timeline

        written.append(plot_timeline(first, out / "timeline.png"))
        written.append(plot_bars(comp.rows, out / "mrtt_mrpt.png"))
        written.append(plot_pmf(comp.pmfs, out / "pmf.png"))
    return written


def _fmt(x):
    return "" if x is None else repr(float(x))


def cpu_workers(requested):
    if requested is None or requested < 1:
        return 1
    return min(int(requested), os.cpu_count() or 1)
