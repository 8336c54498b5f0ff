"""VAE and GAN models of normalized KPI windows, with threshold calibration.

Both models see windows of ``ws`` samples scaled to [0, 1]. After training,
each model carries a KS p-value threshold (``p_kstest``); the GAN also keeps
the interval of discriminator scores seen on observed data (``d_score``).
"""

from __future__ import annotations

import copy
import logging
from dataclasses import dataclass, field

import numpy as np

from . import nn
from .errors import CalibrationError, DomainError, ShapeError, StateError, TrainingError
from .stats import ks_two_sample

log = logging.getLogger(__name__)

MIN_TRAIN_WINDOWS = 50
MIN_HELDOUT_WINDOWS = 20


@dataclass
class GenConfig:
    epochs: int = 200
    batch_size: int = 32
    learning_rate: float = 0.001
    patience: int = 20
    holdout_fraction: float = 0.2
    calibration_draws: int = 10
    p_percentile: float = 0.5
    d_percentiles: tuple = (0.5, 99.5)
    seed: int = 0
    # VAE
    latent_dim: int = 32
    vae_hidden: int = 64
    recon_weight: float = 200.0
    # GAN
    gen_hidden: int = 16
    gen_dense: int = 32
    disc_hidden: int = 32
    min_gan_epochs: int = 100
    select_after: int = 10


@dataclass
class TrainingReport:
    epochs: int
    losses: dict
    calibration_samples: int
    thresholds: dict
    warnings: list = field(default_factory=list)

    def to_dict(self):
        return {
            "epochs": self.epochs,
            "losses": {k: [float(v) for v in vals] for k, vals in self.losses.items()},
            "calibration_samples": self.calibration_samples,
            "thresholds": self.thresholds,
            "warnings": list(self.warnings),
        }


def _as_windows(windows, ws=None):
    if isinstance(windows, np.ndarray):
        arr = windows.astype(np.float64)
    else:
        arr = np.array(
            [getattr(w, "samples", w) for w in windows], dtype=np.float64
        )
    if arr.size == 0:
        raise TrainingError("no training windows")
    if arr.ndim != 2:
        raise ShapeError("windows must share one length")
    if ws is not None and arr.shape[1] != ws:
        raise ShapeError(f"expected windows of {ws} samples, got {arr.shape[1]}")
    if not np.all(np.isfinite(arr)) or arr.min() < 0.0 or arr.max() > 1.0:
        raise DomainError("windows must be normalized to [0, 1]")
    return arr


def _split(arr, cfg, rng):
    n = len(arr)
    if n < MIN_TRAIN_WINDOWS:
        raise TrainingError(f"need at least {MIN_TRAIN_WINDOWS} windows, got {n}")
    if cfg.epochs < 1:
        raise TrainingError("epochs must be >= 1")
    n_hold = max(MIN_HELDOUT_WINDOWS, int(round(cfg.holdout_fraction * n)))
    perm = rng.permutation(n)
    return arr[perm[n_hold:]], arr[perm[:n_hold]]


def _plateaued(history, patience, rel=1e-3):
    if len(history) < 2 * patience:
        return False
    recent = np.mean(history[-patience:])
    before = np.mean(history[-2 * patience : -patience])
    return abs(before - recent) <= rel * max(abs(before), 1e-12)


# ---------------------------------------------------------------- VAE


@dataclass
class VaeModel:
    window_size: int
    latent_dim: int
    encoder: list = None  # hidden DenseLayers
    mu_head: nn.DenseLayer = None
    logvar_head: nn.DenseLayer = None
    decoder: list = None  # DenseLayers, last one sigmoid
    p_kstest: float = None
    bounds: tuple = None

    @classmethod
    def create(cls, window_size, latent_dim=32, hidden=64, rng=None, zeros=False):
        rng = rng or np.random.default_rng(0)
        d = lambda i, o, a: nn.DenseLayer.init(i, o, a, rng, zeros)  # noqa: E731
        return cls(
            window_size,
            latent_dim,
            encoder=[d(window_size, hidden, "relu"), d(hidden, hidden, "relu")],
            mu_head=d(hidden, latent_dim, "linear"),
            logvar_head=d(hidden, latent_dim, "linear"),
            decoder=[
                d(latent_dim, hidden, "relu"),
                d(hidden, hidden, "relu"),
                d(hidden, window_size, "sigmoid"),
            ],
        )

    def parameters(self):
        out = {}
        for k, layer in enumerate(self.encoder):
            out.update({f"enc{k}.{n}": a for n, a in layer.params().items()})
        out.update({f"mu.{n}": a for n, a in self.mu_head.params().items()})
        out.update({f"logvar.{n}": a for n, a in self.logvar_head.params().items()})
        for k, layer in enumerate(self.decoder):
            out.update({f"dec{k}.{n}": a for n, a in layer.params().items()})
        return out

    def encode(self, x):
        caches = []
        h = x
        for layer in self.encoder:
            h, c = layer.forward(h)
            caches.append(c)
        mu, cmu = self.mu_head.forward(h)
        logvar, clv = self.logvar_head.forward(h)
        return mu, logvar, (caches, cmu, clv)

    def decode(self, z):
        caches = []
        x = z
        for layer in self.decoder:
            x, c = layer.forward(x)
            caches.append(c)
        return x, caches

    def losses(self, x, rng, recon_weight):
        """Forward pass and gradients for one batch.

        Returns ``(recon, kl, grads)``; the total loss is ``recon + kl``.
        """
        B = len(x)
        mu, logvar, (ecache, cmu, clv) = self.encode(x)
        eps = rng.standard_normal(mu.shape)
        std = np.exp(0.5 * logvar)
        z = mu + std * eps
        xh, dcache = self.decode(z)
        recon = recon_weight * float(np.sum((xh - x) ** 2)) / B
        kl_each = nn.loss_gaussian_kl(mu, logvar)
        kl = float(np.mean(kl_each))

        grads = {}
        dy = recon_weight * 2.0 * (xh - x) / B
        for k in range(len(self.decoder) - 1, -1, -1):
            dy, g = self.decoder[k].backward(dy, dcache[k])
            grads.update({f"dec{k}.{n}": a for n, a in g.items()})
        dz = dy
        gmu, glv = nn.grad_gaussian_kl(mu, logvar)
        dmu = dz + gmu / B
        dlogvar = dz * eps * 0.5 * std + glv / B
        dh_mu, g = self.mu_head.backward(dmu, cmu)
        grads.update({f"mu.{n}": a for n, a in g.items()})
        dh_lv, g = self.logvar_head.backward(dlogvar, clv)
        grads.update({f"logvar.{n}": a for n, a in g.items()})
        dh = dh_mu + dh_lv
        for k in range(len(self.encoder) - 1, -1, -1):
            dh, g = self.encoder[k].backward(dh, ecache[k])
            grads.update({f"enc{k}.{n}": a for n, a in g.items()})
        return recon, kl, grads

    def reconstruct(self, x):
        mu, _, _ = self.encode(np.asarray(x, dtype=np.float64))
        return self.decode(mu)[0]


def vae_generate(model: VaeModel, seed, n=None):
    """Decode ``z ~ N(0, I)`` into a window (or ``n`` windows)."""
    if model.decoder is None:
        raise StateError("VAE has no decoder parameters")
    rng = np.random.default_rng(seed)
    shape = (model.latent_dim,) if n is None else (n, model.latent_dim)
    return model.decode(rng.standard_normal(shape))[0]


def vae_train(windows, config: GenConfig | None = None, bounds=None):
    cfg = config or GenConfig()
    arr = _as_windows(windows)
    ws = arr.shape[1]
    rng = np.random.default_rng([cfg.seed, 1])
    train, held = _split(arr, cfg, rng)
    model = VaeModel.create(ws, cfg.latent_dim, cfg.vae_hidden, rng)
    model.bounds = bounds
    opt = nn.Adam(cfg.learning_rate)
    params = model.parameters()
    hist = {"total": [], "reconstruction": [], "kl": []}
    best, stale = np.inf, 0
    for epoch in range(cfg.epochs):
        order = rng.permutation(len(train))
        rec_sum = kl_sum = 0.0
        for s in range(0, len(train), cfg.batch_size):
            batch = train[order[s : s + cfg.batch_size]]
            rec, kl, grads = model.losses(batch, rng, cfg.recon_weight)
            nn.clip_grads(grads, 10.0)
            opt.update(params, grads)
            rec_sum += rec * len(batch)
            kl_sum += kl * len(batch)
        rec_e, kl_e = rec_sum / len(train), kl_sum / len(train)
        hist["reconstruction"].append(rec_e)
        hist["kl"].append(kl_e)
        hist["total"].append(rec_e + kl_e)
        if not np.isfinite(rec_e + kl_e):
            raise TrainingError(f"VAE loss diverged at epoch {epoch + 1}")
        if not np.isfinite(best) or rec_e + kl_e < best - 1e-4 * abs(best):
            best, stale = rec_e + kl_e, 0
        else:
            stale += 1
            if stale >= cfg.patience:
                break
    gen_seed = np.random.SeedSequence([cfg.seed, 2])
    model.p_kstest, _ = calibrate_thresholds(
        model, held, lambda s: vae_generate(model, s), cfg, gen_seed
    )
    report = TrainingReport(
        epochs=len(hist["total"]),
        losses=hist,
        calibration_samples=len(held) * cfg.calibration_draws,
        thresholds={"p_kstest": model.p_kstest},
    )
    return model, report


# ---------------------------------------------------------------- GAN


@dataclass
class GanModel:
    window_size: int
    gen_cell: nn.RecurrentCell = None
    gen_dense: list = None
    disc: list = None
    p_kstest: float = None
    d_score: tuple = None
    bounds: tuple = None

    @property
    def noise_dim(self):
        return self.window_size

    @classmethod
    def create(cls, window_size, gen_hidden=16, gen_dense=32, disc_hidden=32, rng=None, zeros=False):
        rng = rng or np.random.default_rng(0)
        d = lambda i, o, a: nn.DenseLayer.init(i, o, a, rng, zeros)  # noqa: E731
        return cls(
            window_size,
            gen_cell=nn.RecurrentCell.init(1, gen_hidden, rng, zeros),
            gen_dense=[
                d(gen_hidden, gen_dense, "relu"),
                d(gen_dense, gen_dense, "relu"),
                d(gen_dense, 1, "sigmoid"),
            ],
            disc=[
                d(window_size, disc_hidden, "relu"),
                d(disc_hidden, disc_hidden, "relu"),
                d(disc_hidden, window_size, "sigmoid"),
            ],
        )

    def generator_parameters(self):
        out = {f"gcell.{n}": a for n, a in self.gen_cell.params().items()}
        for k, layer in enumerate(self.gen_dense):
            out.update({f"gd{k}.{n}": a for n, a in layer.params().items()})
        return out

    def discriminator_parameters(self):
        out = {}
        for k, layer in enumerate(self.disc):
            out.update({f"d{k}.{n}": a for n, a in layer.params().items()})
        return out

    def parameters(self):
        return {**self.generator_parameters(), **self.discriminator_parameters()}

    def generate(self, z):
        """Noise (B, ws) -> windows (B, ws) with cache for backprop."""
        hs, ccache = self.gen_cell.forward_sequence(z[:, :, None])
        x = hs
        dcaches = []
        for layer in self.gen_dense:
            x, c = layer.forward(x)
            dcaches.append(c)
        return x[:, :, 0], (ccache, dcaches)

    def generator_backward(self, dx, cache):
        ccache, dcaches = cache
        dy = dx[:, :, None]
        grads = {}
        for k in range(len(self.gen_dense) - 1, -1, -1):
            dy, g = self.gen_dense[k].backward(dy, dcaches[k])
            grads.update({f"gd{k}.{n}": a for n, a in g.items()})
        _, g = self.gen_cell.backward_sequence(dy, ccache)
        grads.update({f"gcell.{n}": a for n, a in g.items()})
        return grads

    def discriminate(self, x):
        caches = []
        for layer in self.disc:
            x, c = layer.forward(x)
            caches.append(c)
        return x, caches

    def discriminator_backward(self, dy, caches):
        grads = {}
        for k in range(len(self.disc) - 1, -1, -1):
            dy, g = self.disc[k].backward(dy, caches[k])
            grads.update({f"d{k}.{n}": a for n, a in g.items()})
        return dy, grads


def gan_generate(model: GanModel, seed, n=None):
    """Gaussian noise through the generator; one window (or ``n`` windows)."""
    if model.gen_cell is None:
        raise StateError("GAN has no generator parameters")
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((1 if n is None else n, model.noise_dim))
    out = model.generate(z)[0]
    return out[0] if n is None else out


def discriminator_scores(model: GanModel, window):
    """Per-sample discriminator scores for one window (or a batch)."""
    if model.disc is None:
        raise StateError("GAN has no discriminator parameters")
    x = np.asarray(getattr(window, "samples", window), dtype=np.float64)
    if x.shape[-1] != model.window_size:
        raise ShapeError(f"expected {model.window_size} samples, got {x.shape[-1]}")
    return model.discriminate(x)[0]


def gan_train(windows, config: GenConfig | None = None, bounds=None):
    cfg = config or GenConfig(epochs=300)
    arr = _as_windows(windows)
    ws = arr.shape[1]
    rng = np.random.default_rng([cfg.seed, 3])
    train, held = _split(arr, cfg, rng)
    model = GanModel.create(ws, cfg.gen_hidden, cfg.gen_dense, cfg.disc_hidden, rng)
    model.bounds = bounds
    opt_g = nn.Adam(cfg.learning_rate)
    opt_d = nn.Adam(cfg.learning_rate)
    gparams = model.generator_parameters()
    dparams = model.discriminator_parameters()
    hist = {"discriminator": [], "generator": [], "marginal_ks": []}
    warnings = []
    collapsed = 0
    # adversarial losses say little about sample quality, so keep the
    # generator snapshot whose pooled marginal is closest to the data
    probe = train[rng.permutation(len(train))[:200]]
    probe_z = rng.standard_normal((len(probe), ws))
    best = (np.inf, None)
    for epoch in range(cfg.epochs):
        order = rng.permutation(len(train))
        d_sum = g_sum = 0.0
        batches = 0
        for s in range(0, len(train), cfg.batch_size):
            real = train[order[s : s + cfg.batch_size]]
            B = len(real)
            fake, _ = model.generate(rng.standard_normal((B, ws)))
            d_real, c_real = model.discriminate(real)
            d_fake, c_fake = model.discriminate(fake)
            loss_d = nn.loss_bce(d_real, np.ones_like(d_real)) + nn.loss_bce(
                d_fake, np.zeros_like(d_fake)
            )
            _, g1 = model.discriminator_backward(nn.grad_bce(d_real, np.ones_like(d_real)), c_real)
            _, g2 = model.discriminator_backward(nn.grad_bce(d_fake, np.zeros_like(d_fake)), c_fake)
            opt_d.update(dparams, {k: g1[k] + g2[k] for k in g1})

            fake, gcache = model.generate(rng.standard_normal((B, ws)))
            d_gen, c_gen = model.discriminate(fake)
            ones = np.ones_like(d_gen)
            loss_g = nn.loss_bce(d_gen, ones)
            dfake, _ = model.discriminator_backward(nn.grad_bce(d_gen, ones), c_gen)
            gg = model.generator_backward(dfake, gcache)
            nn.clip_grads(gg, 10.0)
            opt_g.update(gparams, gg)
            d_sum += loss_d
            g_sum += loss_g
            batches += 1
        hist["discriminator"].append(d_sum / batches)
        hist["generator"].append(g_sum / batches)
        if not np.isfinite(d_sum + g_sum):
            raise TrainingError(f"GAN loss diverged at epoch {epoch + 1}")
        dist = ks_two_sample(model.generate(probe_z)[0].ravel(), probe.ravel()).statistic
        hist["marginal_ks"].append(dist)
        if epoch >= cfg.select_after and dist < best[0]:
            best = (dist, {k: v.copy() for k, v in gparams.items()})
        spread = max(float(np.ptp(d_real)), float(np.ptp(d_gen)))
        if spread < 1e-3 and abs(float(d_real.mean()) - float(d_gen.mean())) < 1e-3:
            collapsed += 1
            if collapsed == 20:
                warnings.append(f"discriminator collapse: constant scores for 20 epochs (epoch {epoch + 1})")
        else:
            collapsed = 0
        total = [a + b for a, b in zip(hist["discriminator"], hist["generator"])]
        if epoch + 1 >= cfg.min_gan_epochs and _plateaued(total, cfg.patience, rel=1e-3):
            break
    if best[1] is not None:
        for k, v in gparams.items():
            v[...] = best[1][k]
    for w in warnings:
        log.warning(w)
    gen_seed = np.random.SeedSequence([cfg.seed, 4])
    model.p_kstest, model.d_score = calibrate_thresholds(
        model, held, lambda s: gan_generate(model, s), cfg, gen_seed
    )
    report = TrainingReport(
        epochs=len(hist["generator"]),
        losses=hist,
        calibration_samples=len(held) * cfg.calibration_draws,
        thresholds={"p_kstest": model.p_kstest, "d_score": list(model.d_score)},
        warnings=warnings,
    )
    return model, report


# ---------------------------------------------------------------- calibration


def calibrate_thresholds(model, held_out, generate_fn, config: GenConfig | None = None, seed=0):
    """Percentile thresholds from KS p-values on held-out observed windows.

    Every held-out window is compared against ``calibration_draws`` generated
    windows. For models with a discriminator the central percentile interval
    of per-sample scores is returned as well, otherwise ``None``.
    """
    cfg = config or GenConfig()
    held = _as_windows(held_out)
    if len(held) < MIN_HELDOUT_WINDOWS:
        raise CalibrationError(
            f"need at least {MIN_HELDOUT_WINDOWS} held-out windows, got {len(held)}"
        )
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    children = ss.spawn(len(held) * cfg.calibration_draws)
    pvals = []
    for i, obs in enumerate(held):
        for k in range(cfg.calibration_draws):
            gen = generate_fn(children[i * cfg.calibration_draws + k])
            pvals.append(ks_two_sample(gen, obs).p_value)
    # the percentile is an attained p-value; sitting just below it keeps
    # "p < threshold" free of rounding ties between KS implementations
    p_kstest = float(np.percentile(pvals, cfg.p_percentile, method="lower")) * (1.0 - 1e-9)
    d_score = None
    if getattr(model, "disc", None) is not None:
        scores = discriminator_scores(model, held).ravel()
        lo, hi = np.percentile(scores, cfg.d_percentiles)
        d_score = (float(lo), float(hi))
    return p_kstest, d_score


# ---------------------------------------------------------------- persistence


def save_model(model, path):
    params = {k: np.asarray(v) for k, v in model.parameters().items()}
    if isinstance(model, VaeModel):
        meta = {
            "kind": "vae",
            "window_size": model.window_size,
            "latent_dim": model.latent_dim,
            "hidden": model.encoder[0].n_out,
            "p_kstest": model.p_kstest,
        }
    elif isinstance(model, GanModel):
        meta = {
            "kind": "gan",
            "window_size": model.window_size,
            "gen_hidden": model.gen_cell.hidden_size,
            "gen_dense": model.gen_dense[0].n_out,
            "disc_hidden": model.disc[0].n_out,
            "p_kstest": model.p_kstest,
            "d_score": list(model.d_score) if model.d_score is not None else None,
        }
    else:
        raise TypeError(f"cannot save {type(model).__name__}")
    meta["bounds"] = list(model.bounds) if model.bounds is not None else None
    nn.save_params(path, params, meta)


def load_model(path):
    arrays, meta = nn.load_params(path)
    if meta.get("kind") == "vae":
        model = VaeModel.create(meta["window_size"], meta["latent_dim"], meta["hidden"], zeros=True)
        model.p_kstest = meta["p_kstest"]
    elif meta.get("kind") == "gan":
        model = GanModel.create(
            meta["window_size"], meta["gen_hidden"], meta["gen_dense"], meta["disc_hidden"], zeros=True
        )
        model.p_kstest = meta["p_kstest"]
        model.d_score = tuple(meta["d_score"]) if meta["d_score"] is not None else None
    else:
        raise ValueError(f"{path}: unknown model kind {meta.get('kind')!r}")
    for key, arr in model.parameters().items():
        arr[...] = arrays[key]
    model.bounds = tuple(meta["bounds"]) if meta["bounds"] is not None else None
    return model


def clone(model):
    return copy.deepcopy(model)
