"""Survival datasets, time-grid construction and discretization.

Right-censored data comes in as (features, observed time, event indicator)
triples.  Observed study time is mapped onto a grid of ``k_bins`` intervals of
equal width 1/k in normalized time; the last interval is reserved for "beyond
the observation window".  The grid is always built from the *event* times of
the training split and reused verbatim on validation/test data.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass

import numpy as np

VAR_FLOOR = 1e-8

# Floating-point guard for bin assignment: values sitting exactly on an
# interval boundary (e.g. the cropped maximum (k-1)/k) must land in the upper
# bin at any raw-time scale.
_BIN_EDGE_TOL = 1e-9


class CsvFormatError(ValueError):
    """A survival CSV failed structural or per-row validation."""


class DegenerateGridError(ValueError):
    """A time grid cannot be built from the given event times."""


@dataclass(frozen=True)
class Sample:
    features: np.ndarray
    time: float
    event: int


@dataclass(frozen=True)
class FeatureScaler:
    """Per-feature z-score statistics, reusable on held-out data."""

    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, features: np.ndarray) -> "FeatureScaler":
        features = np.asarray(features, dtype=np.float64)
        mean = features.mean(axis=0)
        var = features.var(axis=0)
        # constant columns get a floored variance so they standardize to zero
        std = np.sqrt(np.maximum(var, VAR_FLOOR))
        return cls(mean=mean, std=std)

    def transform(self, features: np.ndarray) -> np.ndarray:
        return (np.asarray(features, dtype=np.float64) - self.mean) / self.std


@dataclass(frozen=True)
class TimeGrid:
    """Affine normalization of study time plus a 1/k-wide bin layout.

    ``t_min``/``t_max`` are the smallest and largest *event* times seen when
    the grid was built.  ``t_min`` maps to 0.1/k, ``t_max`` to (k - 2.1)/k and
    everything at or beyond ``t_max_1`` is cropped onto (k - 1)/k, the left
    edge of the reserved final bin.
    """

    k_bins: int
    t_min: float
    t_max: float
    delta_t: float
    t_min_prime: float
    t_max_1: float
    t_max_2: float

    @property
    def span(self) -> float:
        return self.t_max_2 - self.t_min_prime

    def normalize(self, t):
        return normalize_time(t, self)

    def to_raw(self, t_norm):
        """Invert the affine part of the normalization (no cropping)."""
        return self.t_min_prime + np.asarray(t_norm, dtype=np.float64) * self.span

    def interior_boundaries(self) -> np.ndarray:
        """Raw-time positions of the k - 1 interior bin edges."""
        edges = np.arange(1, self.k_bins) / self.k_bins
        return self.t_min_prime + edges * self.span


@dataclass(eq=False)
class SurvivalDataset:
    """Column-oriented survival data: features (n, d), times (n,), events (n,)."""

    features: np.ndarray
    times: np.ndarray
    events: np.ndarray
    feature_names: tuple[str, ...]
    scaler: FeatureScaler | None = None

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.times = np.asarray(self.times, dtype=np.float64)
        self.events = np.asarray(self.events, dtype=np.int64)
        self.feature_names = tuple(self.feature_names)
        if self.features.ndim != 2:
            raise ValueError("features must be a 2-D array")
        n = self.features.shape[0]
        if self.times.shape != (n,) or self.events.shape != (n,):
            raise ValueError("features, times and events must agree on length")
        if len(self.feature_names) != self.features.shape[1]:
            raise ValueError("feature_names must match the feature count")
        if not np.all(np.isfinite(self.times)) or np.any(self.times <= 0):
            raise ValueError("times must be finite and strictly positive")
        if not np.all((self.events == 0) | (self.events == 1)):
            raise ValueError("events must be 0 or 1")

    def __len__(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    def sample(self, i: int) -> Sample:
        return Sample(self.features[i], float(self.times[i]), int(self.events[i]))

    def __iter__(self):
        return (self.sample(i) for i in range(len(self)))

    def subset(self, indices) -> "SurvivalDataset":
        idx = np.asarray(indices)
        return SurvivalDataset(
            self.features[idx], self.times[idx], self.events[idx],
            self.feature_names, scaler=self.scaler,
        )


def apply_scaler(dataset: SurvivalDataset, scaler: FeatureScaler) -> SurvivalDataset:
    """Return a copy of ``dataset`` with features standardized by ``scaler``."""
    return SurvivalDataset(
        scaler.transform(dataset.features), dataset.times.copy(),
        dataset.events.copy(), dataset.feature_names, scaler=scaler,
    )


@dataclass(frozen=True)
class BinnedSample:
    features: np.ndarray
    time: float
    t_norm: float
    bin: int
    event: int


@dataclass(eq=False)
class BinnedBatch:
    """A dataset view after time normalization and bin assignment."""

    features: np.ndarray
    times: np.ndarray
    t_norm: np.ndarray
    bins: np.ndarray
    events: np.ndarray
    grid: TimeGrid

    def __len__(self) -> int:
        return self.features.shape[0]

    @property
    def k_bins(self) -> int:
        return self.grid.k_bins

    def __getitem__(self, i: int) -> BinnedSample:
        return BinnedSample(
            self.features[i], float(self.times[i]), float(self.t_norm[i]),
            int(self.bins[i]), int(self.events[i]),
        )

    def take(self, indices) -> "BinnedBatch":
        idx = np.asarray(indices)
        return BinnedBatch(
            self.features[idx], self.times[idx], self.t_norm[idx],
            self.bins[idx], self.events[idx], self.grid,
        )


def crop(x: float, lower: float, upper: float) -> float:
    """Clamp ``x`` into [lower, upper]."""
    if lower > upper:
        raise ValueError("crop needs lower <= upper")
    return float(min(max(x, lower), upper))


def build_time_grid(dataset: SurvivalDataset, k_bins: int) -> TimeGrid:
    """Fit the normalization constants from the event times of ``dataset``.

    The spread between the smallest and largest event time is divided by
    k - 2.2 so that, after shifting the origin 0.1 interval widths below the
    first event, events occupy bins 1..k-2 and the top of the grid keeps one
    finite interval plus the reserved "beyond observation" bin.
    """
    if k_bins < 3:
        raise ValueError("k_bins must be at least 3")
    event_times = dataset.times[dataset.events == 1]
    if np.unique(event_times).size < 2:
        raise DegenerateGridError(
            "time grid needs at least two distinct event times"
        )
    t_min = float(event_times.min())
    t_max = float(event_times.max())
    delta_t = (t_max - t_min) / (k_bins - 2.2)
    t_min_prime = t_min - 0.1 * delta_t
    return TimeGrid(
        k_bins=k_bins,
        t_min=t_min,
        t_max=t_max,
        delta_t=delta_t,
        t_min_prime=t_min_prime,
        t_max_1=t_min_prime + (k_bins - 1) * delta_t,
        t_max_2=t_min_prime + k_bins * delta_t,
    )


def normalize_time(t, grid: TimeGrid):
    """Map raw study time onto [0, (k-1)/k] via the grid's affine transform.

    Cropping happens in normalized space so the upper clamp is exactly the
    double (k-1)/k regardless of raw-time magnitudes.
    """
    arr = np.asarray(t, dtype=np.float64)
    if not np.all(np.isfinite(arr)) or np.any(arr <= 0):
        raise ValueError("times must be finite and strictly positive")
    upper = (grid.k_bins - 1) / grid.k_bins
    out = np.clip((arr - grid.t_min_prime) / grid.span, 0.0, upper)
    if arr.ndim == 0:
        return float(out)
    return out


def assign_bin(t_norm, k_bins: int):
    """1-based bin index of a normalized time: interval k is [(k-1)/k, k/k)."""
    arr = np.asarray(t_norm, dtype=np.float64)
    if np.any(arr < 0.0) or np.any(arr >= 1.0):
        raise ValueError("normalized time must lie in [0, 1)")
    k = np.floor(arr * k_bins + _BIN_EDGE_TOL).astype(np.int64) + 1
    k = np.minimum(k, k_bins)
    if arr.ndim == 0:
        return int(k)
    return k


def bin_midpoint(k: int, k_bins: int) -> float:
    """Normalized-time midpoint (2k - 1) / (2 k_bins) of bin ``k``."""
    if not 1 <= k <= k_bins:
        raise ValueError(f"bin index {k} outside 1..{k_bins}")
    return (2 * k - 1) / (2 * k_bins)


def bin_midpoints(k_bins: int) -> np.ndarray:
    """Midpoints of all bins as a vector."""
    return (2.0 * np.arange(1, k_bins + 1) - 1.0) / (2.0 * k_bins)


def bin_dataset(dataset: SurvivalDataset, grid: TimeGrid) -> BinnedBatch:
    """Normalize and bin every sample with a pre-built grid.

    Event samples can never occupy the reserved final bin: on held-out data an
    event beyond the grid's crop point is clamped into bin k-1.
    """
    t_norm = normalize_time(dataset.times, grid)
    bins = assign_bin(t_norm, grid.k_bins)
    is_event = dataset.events == 1
    bins = np.where(is_event & (bins == grid.k_bins), grid.k_bins - 1, bins)
    return BinnedBatch(
        features=dataset.features,
        times=dataset.times,
        t_norm=t_norm,
        bins=bins,
        events=dataset.events,
        grid=grid,
    )


def load_csv(
    path,
    time_column: str = "time",
    event_column: str = "event",
    scaler: FeatureScaler | None = None,
    standardize: bool = True,
) -> SurvivalDataset:
    """Read a UTF-8, comma-separated, headered survival CSV.

    Every non-time, non-event column is a numeric feature.  With
    ``standardize`` the features are z-scored with statistics fitted on the
    full file; pass ``scaler`` instead to reuse training statistics on
    held-out data.  Validation failures raise :class:`CsvFormatError` naming
    the offending data row (1-based, header excluded).
    """
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise CsvFormatError(f"{path}: empty file")
        header = [h.strip() for h in header]
        for required in (time_column, event_column):
            if required not in header:
                raise CsvFormatError(f"{path}: missing column '{required}'")
        t_idx = header.index(time_column)
        e_idx = header.index(event_column)
        feat_idx = [i for i in range(len(header)) if i not in (t_idx, e_idx)]
        feature_names = [header[i] for i in feat_idx]

        rows, times, events = [], [], []
        for row_no, row in enumerate(reader, start=1):
            if len(row) != len(header):
                raise CsvFormatError(
                    f"{path}: row {row_no}: expected {len(header)} fields, got {len(row)}"
                )
            values = []
            for i, cell in enumerate(row):
                try:
                    values.append(float(cell))
                except ValueError:
                    raise CsvFormatError(
                        f"{path}: row {row_no}: non-numeric value {cell!r} "
                        f"in column '{header[i]}'"
                    ) from None
            t = values[t_idx]
            if not math.isfinite(t) or t <= 0:
                raise CsvFormatError(
                    f"{path}: row {row_no}: time must be finite and > 0, got {row[t_idx]!r}"
                )
            e = values[e_idx]
            if e not in (0.0, 1.0):
                raise CsvFormatError(
                    f"{path}: row {row_no}: event must be 0 or 1, got {row[e_idx]!r}"
                )
            rows.append([values[i] for i in feat_idx])
            times.append(t)
            events.append(int(e))

    if not rows:
        raise CsvFormatError(f"{path}: no data rows")
    features = np.asarray(rows, dtype=np.float64)
    if scaler is not None:
        features = scaler.transform(features)
    elif standardize:
        scaler = FeatureScaler.fit(features)
        features = scaler.transform(features)
    return SurvivalDataset(features, times, events, feature_names, scaler=scaler)


def write_csv(dataset: SurvivalDataset, path, time_column: str = "time",
              event_column: str = "event") -> None:
    """Write a dataset back out in the format :func:`load_csv` accepts."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(list(dataset.feature_names) + [time_column, event_column])
        for i in range(len(dataset)):
            row = [repr(float(v)) for v in dataset.features[i]]
            row.append(repr(float(dataset.times[i])))
            row.append(str(int(dataset.events[i])))
            writer.writerow(row)


def split_dataset(dataset: SurvivalDataset, ratios, seed: int):
    """Shuffle-split into train/val/test with largest-remainder sizing.

    The permutation comes from a seeded generator, so a (dataset, ratios,
    seed) triple always produces the same partition.  Sizes are the integer
    apportionment of n * ratio with leftover seats handed to the largest
    fractional parts (ties broken toward the earlier split).
    """
    ratios = [float(r) for r in ratios]
    if len(ratios) != 3 or any(r <= 0 for r in ratios):
        raise ValueError("ratios must be three positive numbers")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError("ratios must sum to 1")
    n = len(dataset)
    exact = np.asarray(ratios) * n
    sizes = np.floor(exact).astype(int)
    remainder = exact - sizes
    leftover = n - int(sizes.sum())
    for i in sorted(range(3), key=lambda i: (-remainder[i], i))[:leftover]:
        sizes[i] += 1
    perm = np.random.default_rng(seed).permutation(n)
    bounds = np.cumsum(sizes)[:-1]
    parts = np.split(perm, bounds)
    return tuple(dataset.subset(p) for p in parts)


def save_grid(grid: TimeGrid, path) -> None:
    """Persist grid constants as JSON (floats round-trip via repr)."""
    payload = {
        "format": "binsurv-grid",
        "version": 1,
        "k_bins": grid.k_bins,
        "t_min": grid.t_min,
        "t_max": grid.t_max,
        "delta_t": grid.delta_t,
        "t_min_prime": grid.t_min_prime,
        "t_max_1": grid.t_max_1,
        "t_max_2": grid.t_max_2,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")


def load_grid(path) -> TimeGrid:
    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    if payload.get("format") != "binsurv-grid":
        raise ValueError(f"{path}: not a binsurv grid file")
    return TimeGrid(
        k_bins=int(payload["k_bins"]),
        t_min=float(payload["t_min"]),
        t_max=float(payload["t_max"]),
        delta_t=float(payload["delta_t"]),
        t_min_prime=float(payload["t_min_prime"]),
        t_max_1=float(payload["t_max_1"]),
        t_max_2=float(payload["t_max_2"]),
    )
