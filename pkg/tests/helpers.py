"""Shared fixtures: finite differences, random batches, brute-force oracles."""

from __future__ import annotations

import numpy as np

from binsurv.data import SurvivalDataset, bin_dataset, build_time_grid
from binsurv.losses import LossWeights, combined_loss
from binsurv.model import ModelParams, apply_head, forward, head_backward, backward

GRAD_FLOOR = 1e-4  # relative-error denominator floor for near-zero gradients


def random_dataset(rng, n, n_features=3, censor_frac=0.3, censored_low=False):
    """Random survival data; censored_low keeps censored times in the lower
    half of the range so none can land in the last bin."""
    times = rng.uniform(0.5, 10.0, size=n)
    events = (rng.random(n) >= censor_frac).astype(np.int64)
    events[:2] = 1
    times[0], times[1] = 1.0, 9.0  # two distinct event times for the grid
    if censored_low:
        cens = events == 0
        times[cens] = rng.uniform(0.5, 4.0, size=int(cens.sum()))
    features = rng.standard_normal((n, n_features))
    names = tuple(f"x{i + 1}" for i in range(n_features))
    return SurvivalDataset(features=features, times=times, events=events,
                           feature_names=names)


def random_batch(rng, n, k_bins=5, n_features=3, censor_frac=0.3,
                 censored_low=False):
    ds = random_dataset(rng, n, n_features, censor_frac, censored_low)
    grid = build_time_grid(ds, k_bins)
    return ds, grid, bin_dataset(ds, grid)


def random_pmfs(rng, n, k):
    z = rng.standard_normal((n, k))
    e = np.exp(z - z.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


def max_rel_err(analytic: dict, numeric: dict, floor: float = GRAD_FLOOR) -> float:
    worst = 0.0
    for name in numeric:
        a, b = np.asarray(analytic[name]), np.asarray(numeric[name])
        denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
        worst = max(worst, float(np.max(np.abs(a - b) / denom)))
    return worst


def rel_err_arr(a, b, floor: float = GRAD_FLOOR) -> float:
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
    return float(np.max(np.abs(a - b) / denom))


def composite_value(params: ModelParams, x, batch, weights: LossWeights,
                    seed) -> float:
    logits, _ = forward(params, x, mode="train", seed=seed)
    pmfs = apply_head(params.config.head, logits)
    value, _, _ = combined_loss(pmfs, batch, weights)
    return value


def composite_grads(params: ModelParams, x, batch, weights: LossWeights, seed):
    logits, cache = forward(params, x, mode="train", seed=seed)
    pmfs = apply_head(params.config.head, logits)
    value, grad_pmf, _ = combined_loss(pmfs, batch, weights)
    grad_logits = head_backward(params.config.head, pmfs, grad_pmf)
    return value, backward(params, cache, grad_logits)


def fd_param_grads(loss_fn, params: ModelParams, h: float = 1e-5):
    """Central finite differences over every trainable tensor entry."""
    grads = {}
    for name in params.trainable_names():
        w = params.tensors[name]
        g = np.zeros_like(w)
        it = np.nditer(w, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            orig = w[idx]
            w[idx] = orig + h
            up = loss_fn(params)
            w[idx] = orig - h
            dn = loss_fn(params)
            w[idx] = orig
            g[idx] = (up - dn) / (2.0 * h)
        grads[name] = g
    return grads


def fd_input_grad(value_fn, x, h: float = 1e-6):
    """Central finite differences of a scalar function of an array input."""
    x = np.array(x, dtype=np.float64)
    g = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        orig = x[idx]
        x[idx] = orig + h
        up = value_fn(x)
        x[idx] = orig - h
        dn = value_fn(x)
        x[idx] = orig
        g[idx] = (up - dn) / (2.0 * h)
    return g


def slow_km_survival_before(times, events, t_query, flip=False):
    """Independent product-limit left-limit: plain python loops."""
    pairs = sorted(zip(times, events))
    surv = 1.0
    for knot in sorted(set(times)):
        if knot >= t_query:
            break
        at_risk = sum(1 for tt, _ in pairs if tt >= knot)
        hits = sum(1 for tt, ee in pairs
                   if tt == knot and ((ee == 0) if flip else (ee == 1)))
        surv *= 1.0 - hits / at_risk
    return surv


def slow_brier(pmfs, times, events, t_star, grid):
    """Direct per-sample summation of the censoring-weighted squared error."""
    from binsurv.data import assign_bin, normalize_time
    from binsurv.model import predict_survival

    k_star = assign_bin(normalize_time(t_star, grid), grid.k_bins)
    surv = predict_survival(np.atleast_2d(pmfs), k_star)
    n = len(times)
    total = 0.0
    g_star = slow_km_survival_before(times, events, t_star, flip=True)
    for i in range(n):
        if times[i] <= t_star and events[i] == 1:
            g_i = slow_km_survival_before(times, events, times[i], flip=True)
            if g_i > 0:
                total += surv[i] ** 2 / g_i
        elif times[i] > t_star:
            if g_star > 0:
                total += (1.0 - surv[i]) ** 2 / g_star
    return total / n


def brute_c_index(scores, times, events):
    """O(n^2) concordance for cross-checking the fast implementation."""
    s = np.asarray(scores, dtype=np.float64)
    t = np.asarray(times, dtype=np.float64)
    e = np.asarray(events, dtype=np.int64)
    num, den = 0.0, 0
    n = t.size
    for i in range(n):
        if e[i] != 1:
            continue
        for j in range(n):
            if t[i] < t[j]:
                den += 1
                if s[i] > s[j]:
                    num += 1.0
                elif s[i] == s[j]:
                    num += 0.5
    if den == 0:
        return None
    return num / den


def brute_tdauc(scores, times, events, t):
    """O(n^2) cumulative/dynamic AUC for cross-checking."""
    s = np.asarray(scores, dtype=np.float64)
    tt = np.asarray(times, dtype=np.float64)
    e = np.asarray(events, dtype=np.int64)
    cases = np.flatnonzero((tt <= t) & (e == 1))
    controls = np.flatnonzero(tt > t)
    if cases.size == 0 or controls.size == 0:
        return None
    num = 0.0
    for i in cases:
        for j in controls:
            if s[i] > s[j]:
                num += 1.0
            elif s[i] == s[j]:
                num += 0.5
    return num / (cases.size * controls.size)
