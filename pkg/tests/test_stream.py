import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from genretrain.errors import ConfigError, IngestionError
from genretrain.stream import (
    CBR,
    EMBB,
    MMTC,
    PRESET_NAMES,
    Bounds,
    DatasetSchema,
    Poisson,
    ScenarioSpec,
    build_scenario,
    denormalize,
    generate_segment,
    load_dataset,
    normalize,
    preset,
    windows_of,
)


def test_presets_have_expected_change_points():
    assert preset("qos").change_points == [140]
    assert preset("ns-slow-close").change_points == [500, 1000]
    assert preset("ns-embb-mmtc").change_points == [500]
    assert preset("qos-stationary").change_points == []
    with pytest.raises(ConfigError):
        preset("nope")


@pytest.mark.parametrize("name", PRESET_NAMES)
def test_scenarios_deterministic_per_seed(name):
    a, _ = build_scenario(preset(name, 3))
    b, _ = build_scenario(preset(name, 3))
    c, _ = build_scenario(preset(name, 4))
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)
    assert np.all(a >= 0)


def test_slice_levels_in_kbps():
    x, _ = build_scenario(preset("ns-slow-close", 0))
    assert abs(np.mean(x[:500]) - 1000) < 5
    assert abs(np.mean(x[500:1000]) - 30) < 3
    assert abs(np.mean(x[1000:]) - 10) < 2


def test_poisson_mean_rate():
    x = generate_segment(MMTC, 20000, 1)
    assert np.mean(x) == pytest.approx(MMTC.mean_mbps, rel=0.02)


def test_cbr_noise_free_is_constant():
    assert np.all(generate_segment(CBR(2.0), 10, 0) == 2.0)
    assert np.std(generate_segment(EMBB, 1000, 0)) == pytest.approx(EMBB.noise_std, rel=0.1)


def test_traffic_validation():
    with pytest.raises(ConfigError):
        CBR(-1.0)
    with pytest.raises(ConfigError):
        Poisson(0, 100)
    with pytest.raises(ConfigError):
        ScenarioSpec([(CBR(1.0), 0)])
    with pytest.raises(ConfigError):
        ScenarioSpec([(CBR(1.0), 5)], unit="bps")


def test_spec_dict_roundtrip():
    spec = preset("ns-slow-close", 9)
    back = ScenarioSpec.from_dict(spec.to_dict())
    assert back.to_dict() == spec.to_dict()
    assert np.array_equal(build_scenario(back)[0], build_scenario(spec)[0])


@given(st.lists(st.floats(-1e3, 1e3, allow_nan=False), min_size=2, max_size=50))
def test_normalize_roundtrip_and_range(x):
    b = Bounds.of(x)
    z = normalize(x, b)
    assert np.all((z >= 0) & (z <= 1))
    assert np.allclose(denormalize(z, b), x, atol=1e-9 * max(1.0, np.max(np.abs(x))))


def test_normalize_clamps_out_of_range():
    assert list(normalize([-5, 15], (0, 10))) == [0.0, 1.0]
    with pytest.raises(ConfigError):
        Bounds(1.0, 1.0)
    b = Bounds.of([3.0, 3.0])
    assert b.lo < 3.0 < b.hi


@given(st.integers(2, 12), st.integers(0, 60))
def test_windows_partition(ws, n):
    x = np.arange(float(n))
    w = windows_of(x, ws)
    assert w.shape == (n // ws, ws)
    if len(w):
        assert np.array_equal(w.ravel(), x[: (n // ws) * ws])


def _csv(tmp_path, text):
    p = tmp_path / "kpi.csv"
    p.write_text(text, encoding="utf-8")
    return p


def test_load_dataset_filters_and_fills(tmp_path):
    p = _csv(tmp_path, "timestamp_ms,slice_id,tx_brate\n0,0,1.5\n1,1,9\n2,0,\n3,0,2.5\n")
    assert list(load_dataset(p, slice_filter=0)) == [1.5, 1.5, 2.5]


def test_load_dataset_errors(tmp_path):
    with pytest.raises(IngestionError, match="missing columns"):
        load_dataset(_csv(tmp_path, "a,b\n1,2\n"))
    with pytest.raises(IngestionError) as exc:
        load_dataset(_csv(tmp_path, "timestamp_ms,slice_id,tx_brate\n0,0,1\n0,0,2\n"))
    assert "row 2" in str(exc.value)
    with pytest.raises(IngestionError):
        load_dataset(_csv(tmp_path, "timestamp_ms,slice_id,tx_brate\n0,0,\n"))
    with pytest.raises(FileNotFoundError):
        load_dataset(tmp_path / "missing.csv")


def test_custom_schema(tmp_path):
    p = _csv(tmp_path, "t,s,rate\n0,a,1\n5,a,2\n")
    assert list(load_dataset(p, DatasetSchema("t", "s", "rate"), "a")) == [1.0, 2.0]
