import json

import pytest
import yaml

from genretrain.cli import EXIT_CONFIG, EXIT_IO, EXIT_OK, build_parser, load_config, main

TINY = {
    "gen": {"epochs": 4, "min_gan_epochs": 2, "select_after": 1, "latent_dim": 4, "vae_hidden": 8,
            "gen_hidden": 4, "gen_dense": 8, "disc_hidden": 8, "calibration_draws": 2},
    "forecaster": {"hidden": 8, "layers": 1, "epochs": 1},
    "refit_epochs": 2,
    "refresh_samples": [],
}


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    cfg = root / "tiny.yaml"
    cfg.write_text(yaml.safe_dump({"harness": TINY, "figures": False}), encoding="utf-8")
    assert main(["train", "--config", str(cfg), "--out", str(root)], environ={}) == EXIT_OK
    return root, cfg


def test_train_writes_artifacts(workspace):
    root, _ = workspace
    names = {p.name for p in (root / "models").iterdir()}
    assert {"vae.grt", "gan.grt", "forecaster.grt", "calibration.json"} <= names
    cal = json.loads((root / "models" / "calibration.json").read_text())
    assert cal["window_size"] == 10
    # the qos preset echoes its table parameters
    assert cal["config"]["harness"]["p_vae_kstest"] == 0.00182
    assert cal["config"]["harness"]["p_gan_kstest"] == 0.00206
    assert cal["config"]["harness"]["rmse_thresholds"] == [15.0]


def test_run_and_report(workspace, capsys):
    root, cfg = workspace
    out = root / "run"
    args = ["run", "--config", str(cfg), "--detector", "lof", "--models", str(root / "models"), "--out", str(out)]
    assert main(args, environ={}) == EXIT_OK
    assert (out / "qos_lof_seed0.json").exists() and (out / "qos_lof_seed0_trace.csv").exists()
    assert (out / "config_echo.json").exists()
    assert main(["report", "--config", str(cfg), "--out", str(out)], environ={}) == EXIT_OK
    summary = json.loads((out / "summary.json").read_text())
    assert summary[0]["detector"] == "lof"


def test_compare_deterministic(workspace):
    root, cfg = workspace
    outs = []
    for k in range(2):
        out = root / f"cmp{k}"
        args = ["compare", "--config", str(cfg), "--detector", "lof,threshold", "--trials", "2",
                "--models", str(root / "models"), "--out", str(out)]
        assert main(args, environ={}) == EXIT_OK
        outs.append(out)
    files = sorted(p.relative_to(outs[0]) for p in outs[0].rglob("*") if p.is_file())
    assert files
    for rel in files:
        assert (outs[0] / rel).read_bytes() == (outs[1] / rel).read_bytes()


def test_exit_codes(workspace, tmp_path, capsys):
    root, cfg = workspace
    models = ["--models", str(root / "models")]
    assert main(["run", "--detector", "bogus", *models, "--out", str(tmp_path)], environ={}) == EXIT_CONFIG
    assert "vae, gan, lof, threshold" in capsys.readouterr().err
    assert main(["compare", "--trials", "1", *models, "--out", str(tmp_path)], environ={}) == EXIT_CONFIG
    assert main(["run", "--out", str(tmp_path / "none")], environ={}) == EXIT_IO
    assert main(["run", "--config", str(tmp_path / "missing.yaml")], environ={}) == EXIT_IO
    assert main(["frobnicate"], environ={}) == EXIT_CONFIG
    assert main(["run", "--seed", "x"], environ={}) == EXIT_CONFIG


def test_missing_data_path_names_it(tmp_path, capsys):
    cfg = tmp_path / "c.yaml"
    cfg.write_text(yaml.safe_dump({"data": {"path": str(tmp_path / "nope.csv")}}), encoding="utf-8")
    assert main(["train", "--config", str(cfg), "--out", str(tmp_path)], environ={}) == EXIT_IO
    assert "nope.csv" in capsys.readouterr().err


def test_invalid_config_names_field(tmp_path, capsys):
    cfg = tmp_path / "c.yaml"
    cfg.write_text(yaml.safe_dump({"harness": {"window_size": 1}}), encoding="utf-8")
    assert main(["train", "--config", str(cfg), "--out", str(tmp_path)], environ={}) == EXIT_CONFIG
    assert "window_size" in capsys.readouterr().err
    cfg.write_text(yaml.safe_dump({"bogus_key": 1}), encoding="utf-8")
    assert main(["train", "--config", str(cfg)], environ={}) == EXIT_CONFIG
    assert "bogus_key" in capsys.readouterr().err


def test_precedence_flags_env_file(tmp_path):
    cfg = tmp_path / "c.yaml"
    cfg.write_text(yaml.safe_dump({"seed": 1, "trials": 5, "out": "from_file"}), encoding="utf-8")
    parser = build_parser()
    env = {"GENRETRAIN_SEED": "2", "GENRETRAIN_OUT": "from_env"}
    c = load_config(parser.parse_args(["compare", "--config", str(cfg), "--seed", "3"]), env)
    assert (c["seed"], c["trials"], c["out"]) == (3, 5, "from_env")
    c = load_config(parser.parse_args(["compare", "--config", str(cfg)]), {})
    assert c["seed"] == 1
    c = load_config(parser.parse_args(["compare"]), {"GENRETRAIN_CONFIG": str(cfg)})
    assert c["trials"] == 5


def test_preset_thresholds_can_be_disabled(tmp_path):
    cfg = tmp_path / "c.yaml"
    cfg.write_text(yaml.safe_dump({"use_reference_thresholds": False, "scenario": "ns-slow-close"}), encoding="utf-8")
    c = load_config(build_parser().parse_args(["run", "--config", str(cfg)]), {})
    assert c["harness_config"].p_vae_kstest is None
    assert c["harness_config"].rmse_thresholds == (15.0, 5.0, 15.0)
    c = load_config(build_parser().parse_args(["run", "--scenario", "ns-slow-close"]), {})
    assert (c["harness_config"].p_vae_kstest, c["harness_config"].p_gan_kstest) == (0.01235, 0.01568)
