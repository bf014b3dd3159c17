"""Censoring-aware evaluation metrics.

All metrics work on raw observed times.  Inverse-probability-of-censoring
weights come from a Kaplan-Meier fit of the censoring distribution evaluated
at left limits (the weight at t uses the step value just before t).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .data import SurvivalDataset, TimeGrid, assign_bin, normalize_time
from .model import ModelParams, apply_head, forward, predict_risk, predict_survival

KM_TARGETS = ("event", "censoring")


class UndefinedMetricError(ValueError):
    """A metric has no defined value on the given data."""


@dataclass(eq=False)
class KMCurve:
    """Product-limit estimate: right-continuous step function over knots."""

    times: np.ndarray      # ascending unique observed times
    survival: np.ndarray   # S(t) at and after each knot
    n_at_risk: np.ndarray
    n_target: np.ndarray   # target events at each knot

    def survival_at(self, t):
        """S(t), right-continuous."""
        idx = np.searchsorted(self.times, np.asarray(t, dtype=np.float64), side="right") - 1
        return self._lookup(idx, t)

    def survival_before(self, t):
        """Left limit S(t-): the step value just before t, used for weights."""
        idx = np.searchsorted(self.times, np.asarray(t, dtype=np.float64), side="left") - 1
        return self._lookup(idx, t)

    def _lookup(self, idx, t):
        out = np.where(idx < 0, 1.0, self.survival[np.maximum(idx, 0)])
        if np.asarray(t).ndim == 0:
            return float(out)
        return out


def kaplan_meier(times, events, target: str = "event") -> KMCurve:
    """Kaplan-Meier estimate of the event or the censoring distribution.

    With ``target='censoring'`` the indicator is flipped, so censorings count
    as the terminal occurrences and events drop out of the risk set.
    """
    if target not in KM_TARGETS:
        raise ValueError(f"target must be one of {KM_TARGETS}")
    t = np.asarray(times, dtype=np.float64)
    e = np.asarray(events, dtype=np.int64)
    if t.size == 0:
        raise ValueError("kaplan_meier needs at least one sample")
    hit = e == 1 if target == "event" else e == 0

    order = np.argsort(t, kind="mergesort")
    t_sorted = t[order]
    hit_sorted = hit[order]
    knots, start = np.unique(t_sorted, return_index=True)
    d = np.add.reduceat(hit_sorted.astype(np.int64), start)
    n_at_risk = t_sorted.size - start
    factors = 1.0 - d / n_at_risk
    survival = np.cumprod(factors)
    return KMCurve(times=knots, survival=survival,
                   n_at_risk=n_at_risk, n_target=d)


def c_index(scores, times, events) -> float:
    """Harrell's concordance over pairs (event_i = 1, t_i < t_j).

    A pair is concordant when the shorter-lived sample scores strictly
    higher; tied scores earn half credit.
    """
    s = np.asarray(scores, dtype=np.float64)
    t = np.asarray(times, dtype=np.float64)
    e = np.asarray(events, dtype=np.int64)
    order = np.argsort(t, kind="mergesort")
    s, t, e = s[order], t[order], e[order]
    n = t.size
    num = 0.0
    den = 0
    for idx in np.flatnonzero(e == 1):
        start = np.searchsorted(t, t[idx], side="right")
        if start >= n:
            continue
        later = s[start:]
        den += later.size
        num += np.count_nonzero(s[idx] > later) + 0.5 * np.count_nonzero(s[idx] == later)
    if den == 0:
        raise UndefinedMetricError("no comparable pairs for the concordance index")
    return float(num / den)


def brier_score_t(pmfs, times, events, t_star: float, censor_km: KMCurve,
                  grid: TimeGrid) -> float:
    """Censoring-weighted squared error of survival predictions at ``t_star``.

    Samples with an event at or before t_star contribute S_hat(t*)^2 weighted
    by 1/G(t_i-); samples still under observation contribute
    (1 - S_hat(t*))^2 weighted by 1/G(t*-); samples censored before t_star
    contribute nothing.  Per-sample survival is read from the pmf at the bin
    containing t_star.  Samples whose weight denominator is zero are dropped
    from the sum (with a warning) while n stays fixed.
    """
    p = np.atleast_2d(np.asarray(pmfs, dtype=np.float64))
    t = np.asarray(times, dtype=np.float64)
    e = np.asarray(events, dtype=np.int64)
    n = t.size
    k_star = assign_bin(normalize_time(float(t_star), grid), grid.k_bins)
    surv = predict_survival(p, k_star)

    g_i = np.asarray(censor_km.survival_before(t))
    g_star = float(censor_km.survival_before(float(t_star)))

    had_event = (t <= t_star) & (e == 1)
    still_out = t > t_star
    dropped = 0
    total = 0.0

    usable = had_event & (g_i > 0.0)
    dropped += int(np.count_nonzero(had_event & ~usable))
    total += (surv[usable] ** 2 / g_i[usable]).sum()

    if np.any(still_out):
        if g_star > 0.0:
            total += ((1.0 - surv[still_out]) ** 2).sum() / g_star
        else:
            dropped += int(np.count_nonzero(still_out))
    if dropped:
        warnings.warn(
            f"brier score at t*={t_star!r}: {dropped} sample(s) dropped "
            "because the censoring weight is zero",
            RuntimeWarning,
        )
    return float(total / n)


def _trapezoid(ys, xs) -> float:
    ys = np.asarray(ys, dtype=np.float64)
    xs = np.asarray(xs, dtype=np.float64)
    return float((0.5 * (ys[1:] + ys[:-1]) * np.diff(xs)).sum())


def ibs(pmfs, times, events, t_grid, grid: TimeGrid,
        censor_km: KMCurve | None = None) -> float:
    """Brier score averaged over an evaluation grid (trapezoidal rule).

    The integral over [t_grid[0], t_grid[-1]] is divided by the grid span, so
    a constant Brier curve averages to itself.  A single-point grid returns
    the pointwise score.
    """
    t_grid = np.asarray(t_grid, dtype=np.float64)
    if t_grid.size == 0:
        raise ValueError("ibs needs a non-empty evaluation grid")
    if np.any(np.diff(t_grid) <= 0):
        raise ValueError("evaluation grid must be strictly increasing")
    if censor_km is None:
        censor_km = kaplan_meier(times, events, target="censoring")
    bs = [brier_score_t(pmfs, times, events, float(ts), censor_km, grid) for ts in t_grid]
    if t_grid.size == 1:
        return float(bs[0])
    return _trapezoid(bs, t_grid) / float(t_grid[-1] - t_grid[0])


def _midranks(x: np.ndarray) -> np.ndarray:
    """1-based ranks with ties averaged."""
    order = np.argsort(x, kind="mergesort")
    sx = x[order]
    boundaries = np.flatnonzero(np.r_[True, sx[1:] != sx[:-1], True])
    starts, ends = boundaries[:-1], boundaries[1:]
    group_rank = (starts + 1 + ends) / 2.0
    ranks = np.empty(x.size, dtype=np.float64)
    ranks[order] = np.repeat(group_rank, ends - starts)
    return ranks


def tdauc(scores, times, events, t: float) -> float:
    """Time-dependent AUC at ``t``: cumulative cases vs dynamic controls.

    Cases are samples with an event at or before t, controls are samples
    observed beyond t; the statistic is the Mann-Whitney probability that a
    case outscores a control, ties counting half.
    """
    s = np.asarray(scores, dtype=np.float64)
    tm = np.asarray(times, dtype=np.float64)
    e = np.asarray(events, dtype=np.int64)
    cases = (tm <= t) & (e == 1)
    controls = tm > t
    n_cases = int(cases.sum())
    n_controls = int(controls.sum())
    if n_cases == 0 or n_controls == 0:
        raise UndefinedMetricError(f"no cases or no controls at t={t!r}")
    pooled = np.concatenate([s[cases], s[controls]])
    ranks = _midranks(pooled)
    rank_sum = ranks[:n_cases].sum()
    return float((rank_sum - n_cases * (n_cases + 1) / 2.0) / (n_cases * n_controls))


def m_tdauc(scores, times, events, t_grid) -> float:
    """Mean TDAUC over the evaluable grid points (empty case/control sets skipped)."""
    tm = np.asarray(times, dtype=np.float64)
    e = np.asarray(events, dtype=np.int64)
    values = []
    for t in np.asarray(t_grid, dtype=np.float64):
        if np.any((tm <= t) & (e == 1)) and np.any(tm > t):
            values.append(tdauc(scores, times, events, float(t)))
    if not values:
        raise UndefinedMetricError("no evaluable time points for mean TDAUC")
    return float(np.mean(values))


def _log_rank_tables(times_a, events_a, times_b, events_b):
    """Observed/expected/variance pieces of the two-group log-rank statistic."""
    ta = np.asarray(times_a, dtype=np.float64)
    tb = np.asarray(times_b, dtype=np.float64)
    ea = np.asarray(events_a, dtype=np.int64)
    eb = np.asarray(events_b, dtype=np.int64)
    if ta.size == 0 or tb.size == 0:
        raise ValueError("both groups must be non-empty")
    ev_a = np.sort(ta[ea == 1])
    ev_b = np.sort(tb[eb == 1])
    knots = np.unique(np.concatenate([ev_a, ev_b]))
    if knots.size == 0:
        return 0.0, 0.0, 0.0, 0.0, 0.0
    ta_sorted = np.sort(ta)
    tb_sorted = np.sort(tb)
    n1 = ta.size - np.searchsorted(ta_sorted, knots, side="left")
    n2 = tb.size - np.searchsorted(tb_sorted, knots, side="left")
    d1 = (np.searchsorted(ev_a, knots, side="right")
          - np.searchsorted(ev_a, knots, side="left")).astype(np.float64)
    d2 = (np.searchsorted(ev_b, knots, side="right")
          - np.searchsorted(ev_b, knots, side="left")).astype(np.float64)
    nt = (n1 + n2).astype(np.float64)
    d = d1 + d2
    e1 = float((d * n1 / nt).sum())
    multi = nt > 1
    v = float((d[multi] * (n1[multi] / nt[multi]) * (n2[multi] / nt[multi])
               * (nt[multi] - d[multi]) / (nt[multi] - 1.0)).sum())
    return float(d1.sum()), e1, float(d2.sum()), float(d.sum() - e1), v


def log_rank(times_a, events_a, times_b, events_b) -> float:
    """Two-group log-rank chi-square statistic (O - E)^2 / V."""
    o1, e1, _o2, _e2, v = _log_rank_tables(times_a, events_a, times_b, events_b)
    if v == 0.0:
        return 0.0
    return float((o1 - e1) ** 2 / v)


def select_cutoff(scores, times, events, min_group_frac: float = 0.1) -> float:
    """Risk cutoff with the largest log-rank separation.

    Candidates are midpoints between consecutive distinct scores; candidates
    leaving either group below ``min_group_frac`` of the samples are
    discarded.  Ties in the statistic keep the smaller cutoff.
    """
    s = np.asarray(scores, dtype=np.float64)
    t = np.asarray(times, dtype=np.float64)
    e = np.asarray(events, dtype=np.int64)
    uniq = np.unique(s)
    if uniq.size < 2:
        raise UndefinedMetricError("cutoff selection needs at least two distinct scores")
    n = s.size
    min_count = max(1, math.ceil(min_group_frac * n))
    candidates = (uniq[:-1] + uniq[1:]) / 2.0
    best_cut = None
    best_stat = -np.inf
    for cut in candidates:
        high = s > cut
        n_high = int(high.sum())
        if n_high < min_count or n - n_high < min_count:
            continue
        stat = log_rank(t[high], e[high], t[~high], e[~high])
        if stat > best_stat:
            best_stat = stat
            best_cut = float(cut)
    if best_cut is None:
        raise UndefinedMetricError(
            "no cutoff keeps both groups above the minimum group size"
        )
    return best_cut


def hazard_ratio(scores, times, events, cutoff: float) -> float:
    """Observed/expected hazard ratio of the high-risk vs low-risk group.

    Degenerate groups (zero observed events on either side) report 0 or
    +inf and emit a warning instead of failing.
    """
    s = np.asarray(scores, dtype=np.float64)
    t = np.asarray(times, dtype=np.float64)
    e = np.asarray(events, dtype=np.int64)
    high = s > cutoff
    if not high.any() or high.all():
        raise UndefinedMetricError("cutoff must split the samples into two non-empty groups")
    o_h, e_h, o_l, e_l, _v = _log_rank_tables(t[high], e[high], t[~high], e[~high])
    if o_h == 0.0:
        warnings.warn("hazard ratio degenerate: no events in the high-risk group",
                      RuntimeWarning)
        return 0.0
    if o_l == 0.0:
        warnings.warn("hazard ratio degenerate: no events in the low-risk group",
                      RuntimeWarning)
        return math.inf
    return float((o_h / e_h) / (o_l / e_l))


@dataclass(eq=False)
class EvalReport:
    """Bundle of held-out metrics plus the curves behind them."""

    c_index: float
    ibs: float
    m_tdauc: float
    hazard_ratio: float
    cutoff: float
    cutoff_source: str
    eval_times: np.ndarray
    brier_curve: np.ndarray
    tdauc_times: np.ndarray
    tdauc_curve: np.ndarray


def default_eval_times(grid: TimeGrid, t_star: float | None = None) -> np.ndarray:
    """Interior bin edges (raw time) up to t_star, then t_star itself.

    ``t_star`` defaults to the largest training event time.
    """
    if t_star is None:
        t_star = grid.t_max
    pts = [float(b) for b in grid.interior_boundaries() if 0.0 < b < t_star]
    pts.append(float(t_star))
    return np.asarray(sorted(set(pts)), dtype=np.float64)


def evaluate_model(params: ModelParams, dataset: SurvivalDataset, grid: TimeGrid,
                   eval_times=None, cutoff: float | None = None,
                   group_metrics: bool = True) -> EvalReport:
    """Score a trained model on a dataset binned with the training grid.

    With group_metrics=False the cutoff split and hazard ratio are skipped
    (reported as nan), which keeps summaries defined on degenerate subsets.
    """
    logits, _ = forward(params, dataset.features, mode="eval")
    pmfs = apply_head(params.config.head, logits)
    risks = predict_risk(pmfs)
    times = dataset.times
    events = dataset.events

    cindex = c_index(risks, times, events)
    censor_km = kaplan_meier(times, events, target="censoring")
    if eval_times is None:
        eval_times = default_eval_times(grid)
    eval_times = np.asarray(eval_times, dtype=np.float64)
    brier = np.asarray(
        [brier_score_t(pmfs, times, events, float(t), censor_km, grid) for t in eval_times]
    )
    if eval_times.size > 1:
        ibs_value = _trapezoid(brier, eval_times) / float(eval_times[-1] - eval_times[0])
    else:
        ibs_value = float(brier[0])

    td_times, td_vals = [], []
    for t in eval_times:
        if np.any((times <= t) & (events == 1)) and np.any(times > t):
            td_times.append(float(t))
            td_vals.append(tdauc(risks, times, events, float(t)))
    if not td_vals:
        raise UndefinedMetricError("no evaluable time points for mean TDAUC")
    mtd = float(np.mean(td_vals))

    if not group_metrics:
        cutoff, cutoff_source, hr = float("nan"), "none", float("nan")
    elif cutoff is None:
        cutoff = float(select_cutoff(risks, times, events))
        cutoff_source = "evaluation scores"
        hr = hazard_ratio(risks, times, events, cutoff)
    else:
        cutoff = float(cutoff)
        cutoff_source = "checkpoint"
        hr = hazard_ratio(risks, times, events, cutoff)

    return EvalReport(
        c_index=cindex, ibs=ibs_value, m_tdauc=mtd, hazard_ratio=hr,
        cutoff=cutoff, cutoff_source=cutoff_source,
        eval_times=eval_times, brier_curve=brier,
        tdauc_times=np.asarray(td_times), tdauc_curve=np.asarray(td_vals),
    )


def write_report_csv(report: EvalReport, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("c_index,ibs,m_tdauc,hazard_ratio,cutoff,cutoff_source\n")
        fh.write(",".join([
            repr(report.c_index), repr(report.ibs), repr(report.m_tdauc),
            repr(report.hazard_ratio), repr(report.cutoff), report.cutoff_source,
        ]) + "\n")


def write_curve_csv(path, times, values, value_name: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(f"time,{value_name}\n")
        for t, v in zip(times, values):
            fh.write(f"{float(t)!r},{float(v)!r}\n")
