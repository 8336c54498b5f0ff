"""Small numpy neural-network core: dense and LSTM layers, losses, optimizers.

Everything runs in float64. Layers expose ``forward`` (returning an output and
a cache) and ``backward`` (consuming the cache), which is all the VAE, GAN and
forecaster need; there is no general autograd graph.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DomainError, ShapeError

ACTIVATIONS = ("sigmoid", "relu", "linear")
BCE_EPS = 1e-7


def sigmoid(x):
    # split by sign so exp never overflows
    out = np.empty_like(x, dtype=np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _activate(kind, z):
    if kind == "sigmoid":
        return sigmoid(z)
    if kind == "relu":
        return np.maximum(z, 0.0)
    return z


def _activation_grad(kind, z, y, dy):
    if kind == "sigmoid":
        return dy * y * (1.0 - y)
    if kind == "relu":
        return dy * (z > 0)
    return dy


def glorot_uniform(rng, fan_in, fan_out, shape=None):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape or (fan_out, fan_in))


@dataclass
class DenseLayer:
    """Fully connected layer computing ``activation(W @ x + b)``.

    ``weights`` has shape (out, in). Inputs may carry any number of leading
    batch dimensions; only the last axis is contracted.
    """

    weights: np.ndarray
    biases: np.ndarray
    activation: str = "linear"

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.biases = np.asarray(self.biases, dtype=np.float64)
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.weights.ndim != 2 or self.biases.shape != (self.weights.shape[0],):
            raise ShapeError(
                f"weights {self.weights.shape} and biases {self.biases.shape} disagree"
            )

    @classmethod
    def init(cls, n_in, n_out, activation="linear", rng=None, zeros=False):
        if zeros:
            w = np.zeros((n_out, n_in))
        else:
            w = glorot_uniform(rng or np.random.default_rng(0), n_in, n_out)
        return cls(w, np.zeros(n_out), activation)

    @property
    def n_in(self):
        return self.weights.shape[1]

    @property
    def n_out(self):
        return self.weights.shape[0]

    def params(self):
        return {"weights": self.weights, "biases": self.biases}

    def forward(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != self.n_in:
            raise ShapeError(f"expected input size {self.n_in}, got {x.shape[-1]}")
        z = x @ self.weights.T + self.biases
        y = _activate(self.activation, z)
        return y, (x, z, y)

    def backward(self, dy, cache):
        x, z, y = cache
        dz = _activation_grad(self.activation, z, y, dy)
        dz2 = dz.reshape(-1, self.n_out)
        x2 = x.reshape(-1, self.n_in)
        grads = {"weights": dz2.T @ x2, "biases": dz2.sum(axis=0)}
        return dz @ self.weights, grads


def dense_forward(layer: DenseLayer, x):
    return layer.forward(x)[0]


@dataclass
class RecurrentCell:
    """LSTM cell. Gate rows of ``weights`` are stacked as input, forget, output,
    candidate; columns act on ``[input, hidden]``."""

    weights: np.ndarray  # (4H, I + H)
    biases: np.ndarray  # (4H,)
    hidden_size: int

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.biases = np.asarray(self.biases, dtype=np.float64)
        h = self.hidden_size
        if h <= 0:
            raise ValueError("hidden_size must be positive")
        if self.weights.ndim != 2 or self.weights.shape[0] != 4 * h or self.weights.shape[1] <= h:
            raise ShapeError(f"weights {self.weights.shape} inconsistent with hidden_size {h}")
        if self.biases.shape != (4 * h,):
            raise ShapeError(f"biases {self.biases.shape} inconsistent with hidden_size {h}")

    @classmethod
    def init(cls, n_in, hidden_size, rng=None, zeros=False):
        h = hidden_size
        if zeros:
            return cls(np.zeros((4 * h, n_in + h)), np.zeros(4 * h), h)
        rng = rng or np.random.default_rng(0)
        w = np.concatenate(
            [glorot_uniform(rng, n_in + h, h) for _ in range(4)], axis=0
        )
        b = np.zeros(4 * h)
        b[h : 2 * h] = 1.0  # forget-gate bias
        return cls(w, b, h)

    @property
    def n_in(self):
        return self.weights.shape[1] - self.hidden_size

    def gate(self, name):
        k = ("input", "forget", "output", "candidate").index(name)
        h = self.hidden_size
        return self.weights[k * h : (k + 1) * h]

    def params(self):
        return {"weights": self.weights, "biases": self.biases}

    def _split(self, a):
        h = self.hidden_size
        i = sigmoid(a[..., :h])
        f = sigmoid(a[..., h : 2 * h])
        o = sigmoid(a[..., 2 * h : 3 * h])
        g = np.tanh(a[..., 3 * h :])
        return i, f, o, g

    def step(self, x, state):
        h_prev, c_prev = state
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != self.n_in:
            raise ShapeError(f"expected input size {self.n_in}, got {x.shape[-1]}")
        if h_prev.shape[-1] != self.hidden_size or c_prev.shape[-1] != self.hidden_size:
            raise ShapeError("state size does not match hidden_size")
        a = np.concatenate([x, h_prev], axis=-1) @ self.weights.T + self.biases
        i, f, o, g = self._split(a)
        c = f * c_prev + i * g
        h = o * np.tanh(c)
        return h, (h, c)

    def zero_state(self, batch=None):
        shape = (self.hidden_size,) if batch is None else (batch, self.hidden_size)
        return np.zeros(shape), np.zeros(shape)

    def forward_sequence(self, xs, state=None):
        """Run over ``xs`` of shape (B, T, I); returns hidden states (B, T, H)."""
        xs = np.asarray(xs, dtype=np.float64)
        if xs.ndim != 3 or xs.shape[2] != self.n_in:
            raise ShapeError(f"expected (B, T, {self.n_in}) input, got {xs.shape}")
        B, T, _ = xs.shape
        H = self.hidden_size
        w_x = self.weights[:, : self.n_in]
        w_h = self.weights[:, self.n_in :]
        xproj = xs @ w_x.T + self.biases
        h, c = state if state is not None else self.zero_state(B)
        hs = np.empty((B, T, H))
        cs = np.empty((B, T + 1, H))
        cs[:, 0] = c
        hprev = np.empty((B, T, H))
        gates = np.empty((B, T, 4, H))
        for t in range(T):
            hprev[:, t] = h
            i, f, o, g = self._split(xproj[:, t] + h @ w_h.T)
            c = f * c + i * g
            h = o * np.tanh(c)
            hs[:, t] = h
            cs[:, t + 1] = c
            gates[:, t, 0], gates[:, t, 1], gates[:, t, 2], gates[:, t, 3] = i, f, o, g
        return hs, (xs, hprev, cs, gates)

    def backward_sequence(self, dhs, cache):
        xs, hprev, cs, gates = cache
        B, T, H = dhs.shape
        n_in = self.n_in
        w_x = self.weights[:, :n_in]
        w_h = self.weights[:, n_in:]
        dh_next = np.zeros((B, H))
        dc_next = np.zeros((B, H))
        da = np.empty((B, T, 4 * H))
        for t in range(T - 1, -1, -1):
            i, f, o, g = gates[:, t, 0], gates[:, t, 1], gates[:, t, 2], gates[:, t, 3]
            tc = np.tanh(cs[:, t + 1])
            dh = dhs[:, t] + dh_next
            do = dh * tc
            dc = dh * o * (1.0 - tc * tc) + dc_next
            di = dc * g
            dg = dc * i
            df = dc * cs[:, t]
            dc_next = dc * f
            a = da[:, t]
            a[:, :H] = di * i * (1.0 - i)
            a[:, H : 2 * H] = df * f * (1.0 - f)
            a[:, 2 * H : 3 * H] = do * o * (1.0 - o)
            a[:, 3 * H :] = dg * (1.0 - g * g)
            dh_next = a @ w_h
        flat = da.reshape(-1, 4 * H)
        dw_x = flat.T @ xs.reshape(-1, n_in)
        dw_h = flat.T @ hprev.reshape(-1, H)
        grads = {
            "weights": np.concatenate([dw_x, dw_h], axis=1),
            "biases": flat.sum(axis=0),
        }
        return da @ w_x, grads


def recurrent_step(cell: RecurrentCell, x, state):
    """One LSTM step; returns ``(hidden_output, (hidden, cell))``."""
    return cell.step(x, state)


@dataclass
class RecurrentLayer:
    """Sequence wrapper around a cell; optionally keeps only the last step."""

    cell: RecurrentCell
    return_sequences: bool = True

    def params(self):
        return self.cell.params()

    def forward(self, xs):
        hs, cache = self.cell.forward_sequence(xs)
        out = hs if self.return_sequences else hs[:, -1]
        return out, (cache, hs.shape)

    def backward(self, dy, cache):
        seq_cache, shape = cache
        if self.return_sequences:
            dhs = dy
        else:
            dhs = np.zeros(shape)
            dhs[:, -1] = dy
        return self.cell.backward_sequence(dhs, seq_cache)


@dataclass
class Sequential:
    """Chain of layers with a shared parameter namespace ``"<idx>.<name>"``."""

    layers: list = field(default_factory=list)

    def parameters(self):
        out = {}
        for k, layer in enumerate(self.layers):
            for name, arr in layer.params().items():
                out[f"{k}.{name}"] = arr
        return out

    def forward(self, x):
        caches = []
        for layer in self.layers:
            x, cache = layer.forward(x)
            caches.append(cache)
        return x, caches

    def backward(self, dy, caches):
        grads = {}
        for k in range(len(self.layers) - 1, -1, -1):
            dy, g = self.layers[k].backward(dy, caches[k])
            for name, arr in g.items():
                grads[f"{k}.{name}"] = arr
        return dy, grads

    def __call__(self, x):
        return self.forward(x)[0]


# ---------------------------------------------------------------- losses


def _pair(pred, actual):
    pred = np.asarray(pred, dtype=np.float64)
    actual = np.asarray(actual, dtype=np.float64)
    if pred.shape != actual.shape:
        raise ShapeError(f"shape mismatch {pred.shape} vs {actual.shape}")
    if pred.size == 0:
        raise DomainError("empty input")
    return pred, actual


def loss_mse(pred, actual):
    pred, actual = _pair(pred, actual)
    return float(np.mean((pred - actual) ** 2))


def grad_mse(pred, actual):
    pred, actual = _pair(pred, actual)
    return 2.0 * (pred - actual) / pred.size


def loss_bce(pred, target, eps=BCE_EPS):
    pred, target = _pair(pred, target)
    p = np.clip(pred, eps, 1.0 - eps)
    return float(-np.mean(target * np.log(p) + (1.0 - target) * np.log(1.0 - p)))


def grad_bce(pred, target, eps=BCE_EPS):
    pred, target = _pair(pred, target)
    p = np.clip(pred, eps, 1.0 - eps)
    g = (p - target) / (p * (1.0 - p)) / pred.size
    # clipped region is flat
    return np.where((pred > eps) & (pred < 1.0 - eps), g, 0.0)


def loss_gaussian_kl(mu, logvar):
    """KL(N(mu, exp(logvar)) || N(0, I)) summed over the last axis.

    Returns a float for a single vector and an array for a batch.
    """
    mu, logvar = _pair(mu, logvar)
    kl = 0.5 * np.sum(mu * mu + np.exp(logvar) - 1.0 - logvar, axis=-1)
    return float(kl) if np.ndim(kl) == 0 else kl


def grad_gaussian_kl(mu, logvar):
    mu, logvar = _pair(mu, logvar)
    return mu.copy(), 0.5 * (np.exp(logvar) - 1.0)


# ---------------------------------------------------------------- gradients


def compute_gradients(model: Sequential, x, target, loss="mse"):
    """Loss and reverse-mode gradients of ``loss(model(x), target)``.

    Returns ``(loss_value, grads)`` where ``grads`` mirrors
    ``model.parameters()`` key by key.
    """
    out, caches = model.forward(x)
    if loss == "mse":
        value, dy = loss_mse(out, target), grad_mse(out, target)
    elif loss == "bce":
        value, dy = loss_bce(out, target), grad_bce(out, target)
    elif callable(loss):
        value, dy = loss(out, target)
    else:
        raise ValueError(f"unknown loss {loss!r}")
    _, grads = model.backward(dy, caches)
    return value, grads


# ---------------------------------------------------------------- optimizers


class SGD:
    def __init__(self, learning_rate=0.001):
        if learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        self.learning_rate = learning_rate

    def update(self, params, grads):
        for key, p in params.items():
            p -= self.learning_rate * grads[key]
        return params


class Adam:
    """Adaptive moment estimation; moment buffers are created lazily per key."""

    def __init__(self, learning_rate=0.001, beta1=0.9, beta2=0.999, eps=1e-8):
        if learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = {}
        self.v = {}
        self.t = 0

    def update(self, params, grads):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        corr1 = 1.0 - b1**self.t
        corr2 = 1.0 - b2**self.t
        for key, p in params.items():
            g = grads[key]
            if key not in self.m:
                self.m[key] = np.zeros_like(p)
                self.v[key] = np.zeros_like(p)
            m, v = self.m[key], self.v[key]
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            p -= self.learning_rate * (m / corr1) / (np.sqrt(v / corr2) + self.eps)
        return params


def apply_update(optimizer, params, grads):
    """Move ``params`` in place against ``grads``; returns ``params``."""
    for key, p in params.items():
        if grads[key].shape != p.shape:
            raise ShapeError(f"gradient for {key} has shape {grads[key].shape}, expected {p.shape}")
    return optimizer.update(params, grads)


def clip_grads(grads, max_norm):
    total = np.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
    if total > max_norm:
        scale = max_norm / total
        for g in grads.values():
            g *= scale
    return grads


# ---------------------------------------------------------------- container

MAGIC = b"GRTPARAM"
FORMAT_VERSION = 1


def save_params(path, arrays, meta=None):
    """Write named float64 arrays to the parameter container.

    Layout: 8-byte magic, uint16 version, uint32 header length, UTF-8 JSON
    header (``meta`` plus a shape table of ``name/shape/offset``), then the
    arrays as contiguous little-endian float64.
    """
    table = []
    offset = 0
    blobs = []
    for name, arr in arrays.items():
        a = np.ascontiguousarray(arr, dtype="<f8")
        table.append({"name": name, "shape": list(a.shape), "offset": offset})
        blobs.append(a.tobytes())
        offset += a.nbytes
    header = json.dumps({"meta": meta or {}, "arrays": table}, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<HI", FORMAT_VERSION, len(header)))
        fh.write(header)
        for blob in blobs:
            fh.write(blob)


def load_params(path):
    data = Path(path).read_bytes()
    if data[:8] != MAGIC:
        raise ValueError(f"{path}: not a parameter container")
    version, hlen = struct.unpack("<HI", data[8:14])
    if version != FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported container version {version}")
    header = json.loads(data[14 : 14 + hlen])
    body = data[14 + hlen :]
    arrays = {}
    for entry in header["arrays"]:
        n = int(np.prod(entry["shape"])) if entry["shape"] else 1
        start = entry["offset"]
        arr = np.frombuffer(body, dtype="<f8", count=n, offset=start).astype(np.float64)
        arrays[entry["name"]] = arr.reshape(entry["shape"])
    return arrays, header["meta"]
