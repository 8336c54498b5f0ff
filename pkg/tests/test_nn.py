import numpy as np
import pytest

from genretrain import nn
from genretrain.errors import DomainError, ShapeError

from oracles import central_difference, gaussian_kl_quadrature, max_relative_error


def _dense_model(rng, act, n_in=4, n_out=3):
    return nn.Sequential([nn.DenseLayer.init(n_in, 5, "relu", rng), nn.DenseLayer.init(5, n_out, act, rng)])


@pytest.mark.parametrize("act", nn.ACTIVATIONS)
@pytest.mark.parametrize("loss", ["mse", "bce"])
def test_dense_gradients(act, loss):
    rng = np.random.default_rng(7)
    if loss == "bce":
        act = "sigmoid"
    model = _dense_model(rng, act)
    x = rng.normal(size=(6, 4))
    y = rng.random((6, 3)) if loss == "bce" else rng.normal(size=(6, 3))
    _, grads = nn.compute_gradients(model, x, y, loss)
    num = central_difference(lambda: nn.compute_gradients(model, x, y, loss)[0], model.parameters())
    assert max_relative_error(grads, num) < 1e-4


def test_recurrent_chain_gradients():
    rng = np.random.default_rng(3)
    cell = nn.RecurrentCell.init(2, 4, rng)
    model = nn.Sequential([nn.RecurrentLayer(cell, return_sequences=False), nn.DenseLayer.init(4, 1, "linear", rng)])
    x = rng.normal(size=(3, 10, 2))
    y = rng.normal(size=(3, 1))
    _, grads = nn.compute_gradients(model, x, y)
    num = central_difference(lambda: nn.compute_gradients(model, x, y)[0], model.parameters())
    assert max_relative_error(grads, num) < 1e-4


def test_input_gradient_of_dense():
    rng = np.random.default_rng(0)
    layer = nn.DenseLayer.init(3, 2, "sigmoid", rng)
    x = rng.normal(size=(1, 3))
    y, cache = layer.forward(x)
    dx, _ = layer.backward(np.ones_like(y), cache)
    num = central_difference(lambda: float(layer.forward(x)[0].sum()), {"x": x})["x"]
    assert np.allclose(dx, num, atol=1e-8)


def test_recurrent_step_matches_sequence():
    rng = np.random.default_rng(1)
    cell = nn.RecurrentCell.init(2, 3, rng)
    xs = rng.normal(size=(1, 5, 2))
    hs, _ = cell.forward_sequence(xs)
    state = cell.zero_state()
    for t in range(5):
        out, state = nn.recurrent_step(cell, xs[0, t], state)
        assert np.allclose(out, hs[0, t])


def test_zero_initialized_lstm_outputs_zero():
    cell = nn.RecurrentCell.init(1, 4, zeros=True)
    hs, _ = cell.forward_sequence(np.ones((2, 6, 1)))
    assert np.all(hs == 0.0)


def test_shape_errors():
    layer = nn.DenseLayer.init(3, 2)
    with pytest.raises(ShapeError):
        layer.forward(np.zeros(4))
    with pytest.raises(ShapeError):
        nn.DenseLayer(np.zeros((2, 3)), np.zeros(3))
    cell = nn.RecurrentCell.init(2, 3)
    with pytest.raises(ShapeError):
        cell.step(np.zeros(1), cell.zero_state())
    with pytest.raises(ShapeError):
        nn.loss_mse([1.0, 2.0], [1.0])
    with pytest.raises(DomainError):
        nn.loss_mse([], [])


def test_losses_at_known_points():
    assert nn.loss_mse([1.0, 3.0], [1.0, 1.0]) == 2.0
    assert nn.loss_bce([0.5], [1.0]) == pytest.approx(np.log(2))
    assert nn.loss_gaussian_kl([0.0, 0.0], [0.0, 0.0]) == 0.0
    # saturated predictions stay finite
    assert np.isfinite(nn.loss_bce([0.0, 1.0], [1.0, 0.0]))


@pytest.mark.parametrize("seed", range(5))
def test_kl_matches_quadrature(seed):
    rng = np.random.default_rng(seed)
    mu, lv = rng.normal(size=3), rng.uniform(-2, 2, size=3)
    assert nn.loss_gaussian_kl(mu, lv) == pytest.approx(gaussian_kl_quadrature(mu, lv), abs=1e-6)


def test_kl_gradient():
    rng = np.random.default_rng(2)
    mu, lv = rng.normal(size=4), rng.normal(size=4)
    gmu, glv = nn.grad_gaussian_kl(mu, lv)
    num = central_difference(lambda: nn.loss_gaussian_kl(mu, lv), {"mu": mu, "lv": lv})
    assert max_relative_error({"mu": gmu, "lv": glv}, num) < 1e-6


def test_adam_reduces_quadratic():
    p = {"w": np.array([3.0, -2.0])}
    opt = nn.Adam(0.1)
    for _ in range(300):
        nn.apply_update(opt, p, {"w": 2 * p["w"]})
    assert np.linalg.norm(p["w"]) < 1e-2


def test_sgd_step_and_shape_check():
    p = {"w": np.array([1.0])}
    nn.apply_update(nn.SGD(0.5), p, {"w": np.array([1.0])})
    assert p["w"][0] == 0.5
    with pytest.raises(ShapeError):
        nn.apply_update(nn.SGD(0.5), p, {"w": np.zeros(2)})
    with pytest.raises(ValueError):
        nn.SGD(0.0)


def test_clip_grads():
    g = {"a": np.array([3.0, 4.0])}
    nn.clip_grads(g, 1.0)
    assert np.linalg.norm(g["a"]) == pytest.approx(1.0)


def test_param_container_roundtrip(tmp_path):
    arrays = {"w": np.arange(6.0).reshape(2, 3), "b": np.array([np.pi])}
    path = tmp_path / "p.grt"
    nn.save_params(path, arrays, {"kind": "x"})
    back, meta = nn.load_params(path)
    assert meta["kind"] == "x"
    for k in arrays:
        assert np.array_equal(back[k], arrays[k])
    first = path.read_bytes()
    nn.save_params(path, arrays, {"kind": "x"})
    assert path.read_bytes() == first


def test_param_container_rejects_garbage(tmp_path):
    path = tmp_path / "bad.grt"
    path.write_bytes(b"not a container")
    with pytest.raises(Exception):
        nn.load_params(path)
