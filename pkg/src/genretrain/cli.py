"""``genretrain`` command line: train, run, compare, report.

Exit codes: 0 success, 1 configuration or usage error, 2 I/O error or
missing artifacts.
"""

from __future__ import annotations

import argparse
import copy
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np
import yaml

from . import nn
from .detectors import DETECTOR_KINDS
from .errors import ConfigError, GenRetrainError, IngestionError
from .forecaster import load_forecaster, save_forecaster
from .genai import load_model, save_model
from .harness import (
    HarnessConfig,
    TrainedModels,
    compare_detectors,
    compute_mrpt,
    compute_mrtt,
    cpu_workers,
    run_scenario,
    train_models,
    write_comparison,
    write_run_report,
)
from .stream import (
    PRESET_NAMES,
    Bounds,
    DatasetSchema,
    ScenarioSpec,
    build_scenario,
    load_dataset,
    preset,
    training_preset,
)

log = logging.getLogger("genretrain")

ENV_PREFIX = "GENRETRAIN_"
EXIT_OK, EXIT_CONFIG, EXIT_IO = 0, 1, 2

# per-scenario inputs; preset p-value thresholds apply unless use_reference_thresholds is false
PRESET_CONFIG = {
    "qos": {
        "harness": {"window_size": 10, "rmse_thresholds": [15.0], "t_ds": 20.0, "t_e2e": 5.0},
        "reference_thresholds": {"p_vae_kstest": 0.00182, "p_gan_kstest": 0.00206},
    },
    "qos-stationary": {
        "harness": {"window_size": 10, "rmse_thresholds": [15.0], "t_ds": 20.0, "t_e2e": 5.0},
        "reference_thresholds": {"p_vae_kstest": 0.00182, "p_gan_kstest": 0.00206},
    },
    "ns-slow-close": {
        "harness": {"window_size": 10, "rmse_thresholds": [15.0, 5.0, 15.0], "t_ds": 20.0, "t_e2e": 5.0},
        "reference_thresholds": {"p_vae_kstest": 0.01235, "p_gan_kstest": 0.01568},
    },
    "ns-embb-mmtc": {
        "harness": {"window_size": 10, "rmse_thresholds": [15.0, 5.0], "t_ds": 20.0, "t_e2e": 5.0},
        "reference_thresholds": {"p_vae_kstest": 0.01235, "p_gan_kstest": 0.01568},
    },
}

DEFAULTS = {
    "scenario": "qos",
    "seed": 0,
    "out": "out",
    "models_dir": None,
    "detector": "gan",
    "detectors": list(DETECTOR_KINDS),
    "trials": 20,
    "parallel": 1,
    "figures": True,
    "use_reference_thresholds": True,
    "data": None,
    "scenario_spec": None,
    "harness": {},
}

FLAG_KEYS = ("config", "detector", "scenario", "seed", "trials", "out", "parallel", "models_dir")
_INT_KEYS = {"seed", "trials", "parallel"}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser():
    p = _Parser(prog="genretrain", description="Generative-model retraining triggers for KPI forecasters")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    helps = {
        "train": "train VAE, GAN and forecaster and calibrate thresholds",
        "run": "stream one scenario through one detector",
        "compare": "compare detectors over seeded trials",
        "report": "summarize and plot run reports found in --out",
    }
    for name, text in helps.items():
        sp = sub.add_parser(name, help=text)
        sp.add_argument("--config", help="YAML config file")
        sp.add_argument("--scenario", help=f"scenario preset ({', '.join(PRESET_NAMES)})")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--out", help="output directory")
        sp.add_argument("--models", dest="models_dir", help="model artifact directory (default <out>/models)")
        if name in ("run",):
            sp.add_argument("--detector", help=f"one of {', '.join(DETECTOR_KINDS)}")
        if name == "compare":
            sp.add_argument("--detector", help="comma-separated detector list")
            sp.add_argument("--trials", type=int)
            sp.add_argument("--parallel", type=int)
    return p


def _env_overrides(environ):
    out = {}
    for key in FLAG_KEYS:
        val = environ.get(ENV_PREFIX + key.upper().replace("_DIR", ""))
        if val is None:
            continue
        if key in _INT_KEYS:
            try:
                val = int(val)
            except ValueError:
                raise ConfigError(f"{ENV_PREFIX}{key.upper()} must be an integer") from None
        out[key] = val
    return out


def _merge(base, extra):
    out = copy.deepcopy(base)
    for k, v in extra.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def load_config(args, environ=None):
    """Defaults < preset < config file < environment < flags."""
    environ = os.environ if environ is None else environ
    env = _env_overrides(environ)
    flags = {k: getattr(args, k, None) for k in FLAG_KEYS}
    flags = {k: v for k, v in flags.items() if v is not None}
    path = flags.get("config") or env.get("config")
    file_cfg = {}
    if path:
        p = Path(path)
        if not p.is_file():
            raise FileNotFoundError(f"config file not found: {p}")
        try:
            file_cfg = yaml.safe_load(p.read_text(encoding="utf-8")) or {}
        except yaml.YAMLError as exc:
            raise ConfigError(f"config {p}: {exc}") from None
        if not isinstance(file_cfg, dict):
            raise ConfigError(f"config {p}: top level must be a mapping")
        unknown = set(file_cfg) - set(DEFAULTS)
        if unknown:
            raise ConfigError(f"unknown config field(s): {', '.join(sorted(unknown))}")
    layered = _merge(DEFAULTS, file_cfg)
    layered = _merge(layered, {k: v for k, v in env.items() if k != "config"})
    layered = _merge(layered, {k: v for k, v in flags.items() if k != "config"})
    scen = layered["scenario"]
    if layered["scenario_spec"] is None and scen not in PRESET_NAMES:
        raise ConfigError(f"scenario: unknown preset {scen!r}; expected one of {', '.join(PRESET_NAMES)}")
    pre = PRESET_CONFIG.get(scen, {})
    harness = _merge(pre.get("harness", {}), layered.get("harness") or {})
    if layered["use_reference_thresholds"]:
        harness = _merge(pre.get("reference_thresholds", {}), harness)
    layered["harness"] = harness
    return _validate(layered)


def _validate(cfg):
    for key in ("seed", "trials", "parallel"):
        if not isinstance(cfg[key], int) or isinstance(cfg[key], bool):
            raise ConfigError(f"{key}: expected an integer, got {cfg[key]!r}")
    if isinstance(cfg["detectors"], str):
        cfg["detectors"] = [d.strip() for d in cfg["detectors"].split(",") if d.strip()]
    try:
        cfg["harness_config"] = HarnessConfig(**cfg["harness"])
    except TypeError as exc:
        raise ConfigError(f"harness: {exc}") from None
    if cfg["models_dir"] is None:
        cfg["models_dir"] = str(Path(cfg["out"]) / "models")
    return cfg


def _check_detector(name):
    if name not in DETECTOR_KINDS:
        raise ConfigError(f"detector: unknown {name!r}; valid names are {{{', '.join(DETECTOR_KINDS)}}}")


def scenario_of(cfg):
    if cfg["scenario_spec"] is not None:
        return ScenarioSpec.from_dict(cfg["scenario_spec"]).with_seed(cfg["seed"])
    return preset(cfg["scenario"], cfg["seed"])


def _training_samples(cfg):
    data = cfg["data"]
    if data:
        if not isinstance(data, dict) or "path" not in data:
            raise ConfigError("data: expected a mapping with a 'path' field")
        schema = DatasetSchema(**data.get("schema", {}))
        return load_dataset(data["path"], schema, data.get("slice"))
    if cfg["scenario_spec"] is not None:
        spec = ScenarioSpec.from_dict(cfg["scenario_spec"])
        first = ScenarioSpec([spec.segments[0]], spec.tick_period_ms, cfg["seed"] + 1000, spec.unit, "train")
        return build_scenario(first)[0]
    return build_scenario(training_preset(cfg["scenario"], cfg["seed"] + 1000))[0]


def _echo(cfg):
    # where the files land does not affect their content
    out = {k: v for k, v in cfg.items() if k not in ("harness_config", "out")}
    out["harness"] = cfg["harness_config"].to_dict()
    return out


def _dump(obj, path):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


# ---------------------------------------------------------------- artifacts

MODEL_FILES = {"vae": "vae.grt", "gan": "gan.grt", "forecaster": "forecaster.grt",
               "reference": "reference.grt"}


def save_artifacts(models: TrainedModels, out_dir, cfg):
    d = Path(out_dir)
    d.mkdir(parents=True, exist_ok=True)
    save_model(models.vae, d / MODEL_FILES["vae"])
    save_model(models.gan, d / MODEL_FILES["gan"])
    save_forecaster(models.forecaster, d / MODEL_FILES["forecaster"])
    nn.save_params(d / MODEL_FILES["reference"], {"reference": models.reference},
                   {"kind": "reference", "bounds": list(models.bounds.as_tuple())})
    calibration = {
        "window_size": models.window_size,
        "bounds": list(models.bounds.as_tuple()),
        "vae": {"p_kstest": models.vae.p_kstest, "epochs": models.reports["vae"].epochs},
        "gan": {"p_kstest": models.gan.p_kstest, "d_score": list(models.gan.d_score),
                "epochs": models.reports["gan"].epochs, "warnings": models.reports["gan"].warnings},
        "config": _echo(cfg),
    }
    _dump(calibration, d / "calibration.json")
    return calibration


def load_artifacts(models_dir):
    d = Path(models_dir)
    missing = [str(d / f) for f in list(MODEL_FILES.values()) + ["calibration.json"] if not (d / f).is_file()]
    if missing:
        raise FileNotFoundError(f"missing model artifacts: {', '.join(missing)}")
    cal = json.loads((d / "calibration.json").read_text(encoding="utf-8"))
    arrays, _ = nn.load_params(d / MODEL_FILES["reference"])
    return TrainedModels(
        vae=load_model(d / MODEL_FILES["vae"]),
        gan=load_model(d / MODEL_FILES["gan"]),
        forecaster=load_forecaster(d / MODEL_FILES["forecaster"]),
        reference=arrays["reference"],
        bounds=Bounds(*cal["bounds"]),
        window_size=int(cal["window_size"]),
    )


# ---------------------------------------------------------------- commands


def cmd_train(cfg):
    samples = _training_samples(cfg)
    hc = cfg["harness_config"]
    models = train_models(samples, hc)
    cal = save_artifacts(models, cfg["models_dir"], cfg)
    print(f"trained on {len(samples)} samples -> {cfg['models_dir']}")
    print(f"  WS={cal['window_size']}  P_VAE-kstest={cal['vae']['p_kstest']:.6g}  "
          f"P_GAN-kstest={cal['gan']['p_kstest']:.6g}  D_score={cal['gan']['d_score']}")
    return EXIT_OK


def cmd_run(cfg):
    det = cfg["detector"]
    _check_detector(det)
    models = load_artifacts(cfg["models_dir"])
    report = run_scenario(scenario_of(cfg), det, models, cfg["harness_config"], cfg["seed"])
    out = Path(cfg["out"])
    files = write_run_report(report, out)
    _dump(_echo(cfg), out / "config_echo.json")
    for row in compute_mrtt(report):
        print(f"change {row['change_tick']}: trigger {row['trigger_tick']} MRTT {row['mrtt_ms']}")
    for row in compute_mrpt(report):
        print(f"trigger {row['trigger_tick']}: replaced {row['replaced_tick']} MRPT {row['mrpt_ms']}")
    print(f"wrote {', '.join(str(f) for f in files)}")
    return EXIT_OK


def cmd_compare(cfg):
    dets = cfg["detectors"]
    for d in dets:
        _check_detector(d)
    if len(dets) < 2:
        raise ConfigError("detector: compare needs at least two detectors")
    if cfg["trials"] < 2:
        raise ConfigError("trials: compare needs at least 2 trials")
    models = load_artifacts(cfg["models_dir"])
    comp = compare_detectors(scenario_of(cfg).with_seed(0), dets, cfg["trials"], models,
                             cfg["harness_config"], cfg["seed"], cpu_workers(cfg["parallel"]))
    out = Path(cfg["out"])
    write_comparison(comp, out, figures=cfg["figures"])
    _dump(_echo(cfg), out / "config_echo.json")
    for row in comp.rows:
        print(f"{row['detector']:>9}: mean MRTT {row['mean_mrtt_ms']} ms, mean MRPT {row['mean_mrpt_ms']} ms")
    o = comp.ordering
    status = "PASS" if o["passed"] else "FAIL"
    print(f"ordering {' <= '.join(o['order'])}: {status} ({o['trials_holding']}/{o['trials']} trials)")
    return EXIT_OK


def cmd_report(cfg):
    out = Path(cfg["out"])
    runs = sorted(p for p in out.rglob("*.json")
                  if p.name not in ("comparison.json", "config_echo.json", "calibration.json", "summary.json"))
    runs = [p for p in runs if (p.parent / f"{p.stem}_trace.csv").is_file()]
    if not runs:
        raise FileNotFoundError(f"no run reports under {out}")
    summary = []
    for p in runs:
        rep = json.loads(p.read_text(encoding="utf-8"))
        summary.append({
            "file": str(p.relative_to(out)),
            "detector": rep["detector"],
            "seed": rep["seed"],
            "mrtt_ms": [r["mrtt_ms"] for r in rep["mrtt"]],
            "mrpt_ms": [r["mrpt_ms"] for r in rep["mrpt"]],
            "false_positives": len(rep["false_positives"]),
        })
        _plot_trace(p.parent / f"{p.stem}_trace.csv", rep, p.parent / f"{p.stem}.png", cfg["figures"])
    _dump(summary, out / "summary.json")
    for s in summary:
        print(f"{s['file']}: detector={s['detector']} MRTT={s['mrtt_ms']} MRPT={s['mrpt_ms']}")
    return EXIT_OK


def _plot_trace(trace_csv, rep, png, figures):
    if not figures:
        return
    from types import SimpleNamespace

    from .harness import RunEvent
    from .plotting import plot_timeline

    data = np.genfromtxt(trace_csv, delimiter=",", skip_header=1, usecols=(1, 2))
    shim = SimpleNamespace(
        actual=data[:, 0], predicted=data[:, 1], detector=rep["detector"],
        change_points=rep["change_points"], tick_period_ms=rep["tick_period_ms"],
        events=[RunEvent(e["tick"], e["kind"], e["detector"], e["payload"]) for e in rep["events"]],
    )
    plot_timeline([shim], png)


COMMANDS = {"train": cmd_train, "run": cmd_run, "compare": cmd_compare, "report": cmd_report}


def main(argv=None, environ=None):
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(f"genretrain: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        env = os.environ if environ is None else environ
        detector_flag = getattr(args, "detector", None) or env.get(ENV_PREFIX + "DETECTOR")
        if args.command == "compare":
            args.detector = None
        cfg = load_config(args, environ)
        if args.command == "compare" and detector_flag:
            cfg["detectors"] = [d.strip() for d in detector_flag.split(",") if d.strip()]
        return COMMANDS[args.command](cfg)
    except (ConfigError, UsageError) as exc:
        print(f"genretrain: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (FileNotFoundError, IngestionError, OSError) as exc:
        print(f"genretrain: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except GenRetrainError as exc:
        print(f"genretrain: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())


def main_entry():
    sys.exit(main())
