"""Independent reference implementations used only by the tests.

Each oracle computes its quantity from the textbook definition, sharing no
code with the package.
"""

from __future__ import annotations

import itertools
import math
from fractions import Fraction
from functools import lru_cache

import numpy as np
from scipy import integrate, stats


# ---------------------------------------------------------------- KS


def ks_statistic_fraction(a, b):
    """sup_t |F_a(t) - F_b(t)| as an exact fraction, evaluated at every pooled value."""
    a, b = list(a), list(b)
    n, m = len(a), len(b)
    best = Fraction(0)
    for t in set(a) | set(b):
        fa = Fraction(sum(x <= t for x in a), n)
        fb = Fraction(sum(x <= t for x in b), m)
        best = max(best, abs(fa - fb))
    return best


@lru_cache(maxsize=None)
def _label_table(n, m):
    """Cumulative count of 'a' labels for every assignment of n a's among n+m slots."""
    rows = []
    for pos in itertools.combinations(range(n + m), n):
        lab = np.zeros(n + m, dtype=np.int64)
        lab[list(pos)] = 1
        rows.append(lab)
    return np.cumsum(np.array(rows), axis=1)


def ks_pvalue_bruteforce(a, b):
    """P(D >= D_obs) by enumerating every split of the pooled sample.

    The pooled values are held fixed and every choice of which n of them form
    the first sample is equally likely.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    n, m = len(a), len(b)
    pooled = np.sort(np.concatenate([a, b]))
    d_obs = ks_statistic_fraction(a, b)
    d_obs_num = int(d_obs * n * m)
    # ECDF jumps are only observable after the last copy of each tied value
    ends = [k for k in range(n + m) if k == n + m - 1 or pooled[k + 1] != pooled[k]]
    cum_a = _label_table(n, m)[:, ends]
    cum_b = (np.array(ends) + 1)[None, :] - cum_a
    d_num = np.max(np.abs(cum_a * m - cum_b * n), axis=1)
    hits = int(np.sum(d_num >= d_obs_num))
    return Fraction(hits, math.comb(n + m, n))


def ks_pvalue_scipy(a, b):
    return stats.ks_2samp(a, b, method="exact").pvalue


def ks_pvalue_reference(a, b):
    """scipy's exact test for untied data; enumeration when ties are present."""
    pooled = np.concatenate([a, b])
    if len(np.unique(pooled)) < len(pooled):
        return float(ks_pvalue_bruteforce(a, b))
    return ks_pvalue_scipy(a, b)


# ---------------------------------------------------------------- LOF


def lof_direct(points, k, queries=None):
    """LOF by the definition with plain loops, O(n^2).

    Neighbourhoods are the k nearest points (ties broken by index). With
    ``queries`` the scores are for new points against ``points``.
    """
    X = [np.atleast_1d(np.asarray(p, dtype=np.float64)) for p in points]
    n = len(X)

    def dist(p, q):
        return float(math.sqrt(sum((u - v) ** 2 for u, v in zip(p, q))))

    def knn(p, exclude=None):
        cand = [(dist(p, X[j]), j) for j in range(n) if j != exclude]
        cand.sort()
        return [j for _, j in cand[:k]], cand[k - 1][0]

    neigh, kdist = [], []
    for i in range(n):
        nb, kd = knn(X[i], exclude=i)
        neigh.append(nb)
        kdist.append(kd)

    def lrd_of(p, nb):
        reach = [max(dist(p, X[o]), kdist[o]) for o in nb]
        return 1.0 / (sum(reach) / len(reach))

    lrd = [lrd_of(X[i], neigh[i]) for i in range(n)]
    if queries is None:
        return np.array([sum(lrd[o] for o in neigh[i]) / k / lrd[i] for i in range(n)])
    out = []
    for q in queries:
        q = np.atleast_1d(np.asarray(q, dtype=np.float64))
        nb, _ = knn(q)
        out.append(sum(lrd[o] for o in nb) / k / lrd_of(q, nb))
    return np.array(out)


# ---------------------------------------------------------------- KL


def gaussian_kl_quadrature(mu, logvar):
    """KL(N(mu, s^2) || N(0, 1)) per dimension by integrating p log(p/q), summed."""
    total = 0.0
    for m_, lv in zip(np.atleast_1d(mu), np.atleast_1d(logvar)):
        s = math.exp(0.5 * lv)

        def integrand(x, m_=m_, s=s):
            logp = -0.5 * ((x - m_) / s) ** 2 - math.log(s) - 0.5 * math.log(2 * math.pi)
            logq = -0.5 * x * x - 0.5 * math.log(2 * math.pi)
            return math.exp(logp) * (logp - logq)

        lo, hi = m_ - 40 * s, m_ + 40 * s
        val, _ = integrate.quad(integrand, lo, hi, points=[m_], epsabs=1e-13, epsrel=1e-12, limit=500)
        total += val
    return total


# ---------------------------------------------------------------- gradients


def central_difference(f, params, h=1e-6):
    """Numerical gradient of scalar ``f()`` w.r.t. every entry of each array in ``params``."""
    grads = {}
    for key, arr in params.items():
        g = np.zeros_like(arr)
        it = np.nditer(arr, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            orig = arr[idx]
            arr[idx] = orig + h
            fp = f()
            arr[idx] = orig - h
            fm = f()
            arr[idx] = orig
            g[idx] = (fp - fm) / (2 * h)
        grads[key] = g
    return grads


def max_relative_error(analytic, numeric, floor=1e-6):
    worst = 0.0
    for key in analytic:
        a, n = analytic[key], numeric[key]
        err = np.abs(a - n) / np.maximum(np.abs(a) + np.abs(n), floor)
        worst = max(worst, float(err.max()))
    return worst


# ---------------------------------------------------------------- detector pseudocode


def _sigmoid(z):
    return 1.0 / (1.0 + np.exp(-z))


def _dense(layer, x):
    z = layer.weights @ x + layer.biases
    if layer.activation == "relu":
        return np.maximum(z, 0.0)
    if layer.activation == "sigmoid":
        return _sigmoid(z)
    return z


def vae_decoder_sample(model, seed):
    z = np.random.default_rng(seed).standard_normal(model.latent_dim)
    for layer in model.decoder:
        z = _dense(layer, z)
    return z


def gan_generator_sample(model, seed):
    z = np.random.default_rng(seed).standard_normal((1, model.window_size))[0]
    cell = model.gen_cell
    H = cell.hidden_size
    h = np.zeros(H)
    c = np.zeros(H)
    out = []
    for t in range(model.window_size):
        a = cell.weights @ np.concatenate([[z[t]], h]) + cell.biases
        i, f, o = _sigmoid(a[:H]), _sigmoid(a[H:2 * H]), _sigmoid(a[2 * H:3 * H])
        g = np.tanh(a[3 * H:])
        c = f * c + i * g
        h = o * np.tanh(c)
        y = h
        for layer in model.gen_dense:
            y = _dense(layer, y)
        out.append(y[0])
    return np.array(out)


def discriminator_literal(model, window):
    y = np.asarray(window, dtype=np.float64)
    for layer in model.disc:
        y = _dense(layer, y)
    return y


def alg_vae(model, window, seed, p_threshold):
    """Generate gd_data, KS test against the window, retrain iff p < P."""
    gd = vae_decoder_sample(model, seed)
    p = ks_pvalue_reference(gd, window)
    return "RetrainTrigger" if p < p_threshold else "NoChange"


def alg_gan(model, window, seed, p_threshold, d_score):
    """Discriminator warning zone, then generator KS test; retrain wins."""
    lo, hi = d_score
    warning = False
    for y in discriminator_literal(model, window):
        if not (lo <= y <= hi):
            warning = True
    gg = gan_generator_sample(model, seed)
    p = ks_pvalue_reference(gg, window)
    if p < p_threshold:
        return "RetrainTrigger"
    return "Warning" if warning else "NoChange"
