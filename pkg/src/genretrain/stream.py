"""KPI sources: synthetic slice-traffic generators, scenarios and CSV replay."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, IngestionError

log = logging.getLogger(__name__)

UNIT_SCALE = {"Mbps": 1.0, "kbps": 1000.0}


@dataclass(frozen=True)
class CBR:
    """Constant bit rate plus Gaussian noise."""

    rate_mbps: float
    noise_std: float = 0.0
    kind = "cbr"

    def __post_init__(self):
        if self.rate_mbps <= 0 or self.noise_std < 0:
            raise ConfigError("CBR needs rate_mbps > 0 and noise_std >= 0")


@dataclass(frozen=True)
class Poisson:
    """Poisson packet arrivals converted to a per-tick rate.

    ``count_interval_ms`` is the interval over which each tick's packet count
    is measured; ``None`` means the tick period itself.
    """

    pkt_rate: float  # packets per second
    pkt_size: int  # bytes
    noise_std: float = 0.0
    count_interval_ms: float | None = None
    kind = "poisson"

    def __post_init__(self):
        if self.pkt_rate <= 0 or self.pkt_size <= 0 or self.noise_std < 0:
            raise ConfigError("Poisson needs positive pkt_rate and pkt_size")
        if self.count_interval_ms is not None and self.count_interval_ms <= 0:
            raise ConfigError("count_interval_ms must be positive")

    @property
    def mean_mbps(self):
        return self.pkt_rate * self.pkt_size * 8 / 1e6


@dataclass(frozen=True)
class PedestrianQoS:
    """Slow AR(1) drift around ``base_mbps`` plus clipped white jitter.

    ``trend_per_tick`` adds a linear ramp, used for the elevated multi-UE
    load after a change.
    """

    base_mbps: float
    jitter: float = 1.0
    drift_std: float = 0.5
    smoothing: float = 0.95
    jitter_bound: float = 2.0  # in units of jitter std
    trend_per_tick: float = 0.0
    noise_std: float = 0.0
    kind = "pedestrian"

    def __post_init__(self):
        if self.base_mbps <= 0 or self.jitter < 0 or self.drift_std < 0 or self.noise_std < 0:
            raise ConfigError("PedestrianQoS needs base_mbps > 0 and nonnegative noise terms")
        if not 0 <= self.smoothing < 1:
            raise ConfigError("smoothing must lie in [0, 1)")


TrafficModel = CBR | Poisson | PedestrianQoS

_KINDS = {"cbr": CBR, "poisson": Poisson, "pedestrian": PedestrianQoS}


def traffic_from_dict(d):
    d = dict(d)
    kind = d.pop("kind", None)
    if kind not in _KINDS:
        raise ConfigError(f"unknown traffic kind {kind!r}; expected one of {sorted(_KINDS)}")
    try:
        return _KINDS[kind](**d)
    except TypeError as exc:
        raise ConfigError(f"bad {kind} traffic parameters: {exc}") from None


def traffic_to_dict(model):
    out = {"kind": model.kind}
    out.update({k: v for k, v in model.__dict__.items()})
    return out


def generate_segment(model, ticks, seed, tick_period_ms=1.0):
    """Per-tick throughput in Mbps for ``ticks`` samples."""
    if ticks <= 0:
        raise ConfigError("ticks must be positive")
    rng = np.random.default_rng(seed)
    if isinstance(model, CBR):
        out = np.full(ticks, float(model.rate_mbps))
    elif isinstance(model, Poisson):
        interval = model.count_interval_ms or tick_period_ms
        counts = rng.poisson(model.pkt_rate * interval / 1000.0, size=ticks)
        out = counts * model.pkt_size * 8 / (interval * 1000.0)
    elif isinstance(model, PedestrianQoS):
        a = model.smoothing
        innov = rng.standard_normal(ticks) * model.drift_std * np.sqrt(1 - a * a)
        drift = np.empty(ticks)
        level = rng.standard_normal() * model.drift_std
        for t in range(ticks):
            level = a * level + innov[t]
            drift[t] = level
        jit = np.clip(rng.standard_normal(ticks), -model.jitter_bound, model.jitter_bound)
        out = model.base_mbps + drift + model.jitter * jit + model.trend_per_tick * np.arange(ticks)
    else:
        raise ConfigError(f"unsupported traffic model {model!r}")
    if model.noise_std > 0:
        out = out + rng.normal(0.0, model.noise_std, size=ticks)
    return np.maximum(out, 0.0)


@dataclass
class ScenarioSpec:
    segments: list  # [(traffic model, duration ticks)]
    tick_period_ms: float = 1.0
    seed: int = 0
    unit: str = "Mbps"
    name: str = "custom"

    def __post_init__(self):
        if self.unit not in UNIT_SCALE:
            raise ConfigError(f"unit must be one of {sorted(UNIT_SCALE)}")
        if self.tick_period_ms <= 0:
            raise ConfigError("tick_period_ms must be positive")
        for _, dur in self.segments:
            if int(dur) <= 0:
                raise ConfigError("segment durations must be positive")

    @property
    def change_points(self):
        ticks = np.cumsum([int(d) for _, d in self.segments])[:-1]
        return [int(t) for t in ticks]

    @property
    def length(self):
        return int(sum(int(d) for _, d in self.segments))

    def with_seed(self, seed):
        return ScenarioSpec(list(self.segments), self.tick_period_ms, seed, self.unit, self.name)

    def to_dict(self):
        return {
            "name": self.name,
            "seed": self.seed,
            "tick_period_ms": self.tick_period_ms,
            "unit": self.unit,
            "segments": [
                {"traffic": traffic_to_dict(m), "ticks": int(d)} for m, d in self.segments
            ],
        }

    @classmethod
    def from_dict(cls, d):
        segs = [(traffic_from_dict(s["traffic"]), int(s["ticks"])) for s in d.get("segments", [])]
        return cls(
            segs,
            float(d.get("tick_period_ms", 1.0)),
            int(d.get("seed", 0)),
            d.get("unit", "Mbps"),
            d.get("name", "custom"),
        )


def build_scenario(spec: ScenarioSpec):
    """Concatenate segments; returns ``(samples, change_points)``."""
    if not spec.segments:
        raise ConfigError("scenario has no segments")
    seeds = np.random.SeedSequence(spec.seed).spawn(len(spec.segments))
    scale = UNIT_SCALE[spec.unit]
    parts = [
        generate_segment(model, int(dur), s, spec.tick_period_ms) * scale
        for (model, dur), s in zip(spec.segments, seeds)
    ]
    return np.concatenate(parts), spec.change_points


# ---------------------------------------------------------------- presets

PEDESTRIAN = PedestrianQoS(base_mbps=20.0, jitter=1.0, drift_std=0.5)
MULTI_UE = PedestrianQoS(base_mbps=29.0, jitter=1.0, drift_std=0.5, trend_per_tick=0.06)
EMBB = CBR(rate_mbps=1.0, noise_std=0.005)
# per-tick rates come from packet counts over a 4 s reporting interval
MMTC = Poisson(pkt_rate=30, pkt_size=125, count_interval_ms=4000.0)
URLLC = Poisson(pkt_rate=10, pkt_size=125, count_interval_ms=4000.0)

_PRESETS = {
    "qos": lambda: ScenarioSpec([(PEDESTRIAN, 140), (MULTI_UE, 360)], name="qos"),
    "qos-stationary": lambda: ScenarioSpec([(PEDESTRIAN, 10000)], name="qos-stationary"),
    "ns-slow-close": lambda: ScenarioSpec(
        [(EMBB, 500), (MMTC, 500), (URLLC, 500)], unit="kbps", name="ns-slow-close"
    ),
    "ns-embb-mmtc": lambda: ScenarioSpec(
        [(EMBB, 500), (MMTC, 500)], unit="kbps", name="ns-embb-mmtc"
    ),
}

# training streams: observed data from the first regime of each preset
_TRAINING = {
    "qos": lambda: ScenarioSpec([(PEDESTRIAN, 3000)], name="qos-train"),
    "qos-stationary": lambda: ScenarioSpec([(PEDESTRIAN, 3000)], name="qos-train"),
    "ns-slow-close": lambda: ScenarioSpec([(EMBB, 3000)], unit="kbps", name="ns-train"),
    "ns-embb-mmtc": lambda: ScenarioSpec([(EMBB, 3000)], unit="kbps", name="ns-train"),
}

PRESET_NAMES = tuple(_PRESETS)


def preset(name, seed=0):
    if name not in _PRESETS:
        raise ConfigError(f"unknown scenario {name!r}; expected one of {sorted(_PRESETS)}")
    return _PRESETS[name]().with_seed(seed)


def training_preset(name, seed=0):
    if name not in _TRAINING:
        raise ConfigError(f"no training stream for scenario {name!r}")
    return _TRAINING[name]().with_seed(seed)


# ---------------------------------------------------------------- CSV replay


@dataclass
class DatasetSchema:
    timestamp: str = "timestamp_ms"
    slice_id: str = "slice_id"
    metric: str = "tx_brate"
    units: dict = field(default_factory=lambda: {"timestamp_ms": "ms", "tx_brate": "Mbps"})

    @property
    def required(self):
        return [self.timestamp, self.slice_id, self.metric]


def load_dataset(path, schema: DatasetSchema | None = None, slice_filter=None):
    """Read one slice's metric column from a headered UTF-8 CSV.

    Empty metric cells are forward-filled. Timestamps must increase strictly
    within the selected slice; the first offending data row (1-based, header
    excluded) is reported otherwise.
    """
    schema = schema or DatasetSchema()
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise IngestionError(f"{path}: empty file")
        missing = [c for c in schema.required if c not in reader.fieldnames]
        if missing:
            raise IngestionError(f"{path}: missing columns {missing}")
        values = []
        last_ts = None
        last_val = None
        filled = 0
        for row_no, row in enumerate(reader, start=1):
            if slice_filter is not None and row[schema.slice_id].strip() != str(slice_filter):
                continue
            try:
                ts = float(row[schema.timestamp])
            except ValueError:
                raise IngestionError(f"bad timestamp {row[schema.timestamp]!r}", row_no) from None
            if last_ts is not None and ts <= last_ts:
                raise IngestionError(
                    f"timestamp {ts:g} not after previous {last_ts:g}", row_no
                )
            last_ts = ts
            cell = row[schema.metric].strip()
            if cell == "":
                if last_val is None:
                    raise IngestionError("leading gap cannot be forward-filled", row_no)
                filled += 1
                values.append(last_val)
                continue
            try:
                last_val = float(cell)
            except ValueError:
                raise IngestionError(f"bad {schema.metric} value {cell!r}", row_no) from None
            values.append(last_val)
    if filled:
        log.info("%s: forward-filled %d gaps", path, filled)
    return np.asarray(values, dtype=np.float64)


# ---------------------------------------------------------------- scaling


@dataclass(frozen=True)
class Bounds:
    lo: float
    hi: float

    def __post_init__(self):
        if not np.isfinite(self.lo) or not np.isfinite(self.hi) or self.hi <= self.lo:
            raise ConfigError(f"degenerate normalization bounds ({self.lo}, {self.hi})")

    @classmethod
    def of(cls, samples, pad=0.0):
        x = np.asarray(samples, dtype=np.float64)
        lo, hi = float(x.min()), float(x.max())
        if hi - lo < 1e-12:
            half = max(abs(lo), 1.0) * 0.5
            return cls(lo - half, hi + half)
        span = hi - lo
        return cls(lo - pad * span, hi + pad * span)

    def as_tuple(self):
        return (self.lo, self.hi)


def normalize(samples, bounds):
    b = bounds if isinstance(bounds, Bounds) else Bounds(*bounds)
    x = np.asarray(samples, dtype=np.float64)
    return np.clip((x - b.lo) / (b.hi - b.lo), 0.0, 1.0)


def denormalize(values, bounds):
    b = bounds if isinstance(bounds, Bounds) else Bounds(*bounds)
    return b.lo + np.asarray(values, dtype=np.float64) * (b.hi - b.lo)


def windows_of(samples, ws, stride=None):
    """Windows of ``ws`` consecutive samples (non-overlapping by default)."""
    x = np.asarray(samples, dtype=np.float64)
    stride = stride or ws
    if len(x) < ws:
        return np.empty((0, ws))
    starts = np.arange(0, len(x) - ws + 1, stride)
    return np.stack([x[s : s + ws] for s in starts])
