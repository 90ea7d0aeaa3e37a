"""Panel-data estimators: log-binned growth increments, reset rates and income histograms.

Bins are ``[2^j, 2^(j+1))`` with representative income ``w_j = 1.5 * 2^j``.
Per-year statistics are computed for every bin holding at least
``min_count`` observations and then averaged over years; the reported
spread is the standard deviation across years (``ddof = 0``).
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ValidationError
from .grid import DensityGrid

log = logging.getLogger(__name__)

MIN_COUNT = 50
MALFORMED_LIMIT = 0.01
PANEL_HEADER = ("employee_id", "year", "income")
SERIES_HEADER = ("j", "w_j", "value", "spread", "count")


def log2_bin(w) -> np.ndarray:
    """Index ``j`` with ``2^j <= w < 2^(j+1)``, exact for floating-point input."""
    _, e = np.frexp(np.asarray(w, dtype=float))
    return (e - 1).astype(np.int64)


# --------------------------------------------------------------------------- panel


@dataclass
class PanelDataset:
    """Employee-year income records.

    ``employee_id`` may hold any hashable labels; they are only compared for
    equality.  Records are stored sorted by (employee, year).
    """

    employee_id: np.ndarray
    year: np.ndarray
    income: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        ids = np.asarray(self.employee_id)
        year = np.asarray(self.year)
        inc = np.asarray(self.income, dtype=float)
        if not (ids.ndim == year.ndim == inc.ndim == 1 and ids.size == year.size == inc.size):
            raise ValidationError("employee_id, year and income must be 1-d arrays of equal length")
        if year.size and not np.all(np.equal(np.mod(year, 1), 0)):
            raise ValidationError("years must be integers")
        year = year.astype(np.int64)
        if np.any(~np.isfinite(inc)) or np.any(inc <= 0):
            raise ValidationError("incomes must be finite and > 0")
        labels, code = np.unique(ids, return_inverse=True)
        order = np.lexsort((year, code))
        code, year, inc, ids = code[order], year[order], inc[order], ids[order]
        dup = (np.diff(code) == 0) & (np.diff(year) == 0)
        if np.any(dup):
            k = int(np.argmax(dup))
            raise ValidationError(f"duplicate record for employee {ids[k]!r} in year {year[k]}")
        self.employee_id, self.year, self.income = ids, year, inc
        self.code = code.astype(np.int64)
        self.labels = labels

    def __len__(self) -> int:
        return int(self.year.size)

    @property
    def years(self) -> np.ndarray:
        return np.unique(self.year)

    @property
    def n_employees(self) -> int:
        return int(self.labels.size)

    def presence(self):
        """Per-employee ``(first_year, last_year, n_records)`` arrays, indexed by code."""
        n = self.n_employees
        first = np.full(n, np.iinfo(np.int64).max)
        last = np.full(n, np.iinfo(np.int64).min)
        np.minimum.at(first, self.code, self.year)
        np.maximum.at(last, self.code, self.year)
        count = np.bincount(self.code, minlength=n)
        return first, last, count

    def consecutive_pairs(self):
        """Indices ``(i, i+1)`` of records of one employee in years ``k`` and ``k+1``."""
        same = (np.diff(self.code) == 0) & (np.diff(self.year) == 1)
        i = np.nonzero(same)[0]
        return i, i + 1

    def to_csv(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(",".join(PANEL_HEADER) + "\n")
            for e, y, w in zip(self.employee_id.tolist(), self.year.tolist(), self.income.tolist()):
                fh.write(f"{e},{y},{w!r}\n")
        return path

    @classmethod
    def from_csv(cls, path, malformed_limit: float = MALFORMED_LIMIT) -> "PanelDataset":
        """Read ``employee_id,year,income`` records.

        Malformed rows are logged with their line number and skipped; more
        than ``malformed_limit`` of them aborts the read.  Employee ids are
        kept as strings.
        """
        path = Path(path)
        ids, years, incomes, bad = [], [], [], []
        with open(path, encoding="utf-8", newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None or tuple(h.strip() for h in header) != PANEL_HEADER:
                raise ValidationError(f"{path}: header must be {','.join(PANEL_HEADER)}")
            for row in reader:
                line = reader.line_num
                try:
                    if len(row) != 3:
                        raise ValueError(f"expected 3 fields, got {len(row)}")
                    e, y, w = (c.strip() for c in row)
                    yv, wv = int(y), float(w)
                    if not e or not np.isfinite(wv) or wv <= 0:
                        raise ValueError("empty id or non-positive income")
                except ValueError as exc:
                    bad.append((line, str(exc)))
                    continue
                ids.append(e)
                years.append(yv)
                incomes.append(wv)
        total = len(ids) + len(bad)
        for line, msg in bad[:20]:
            log.warning("%s:%d: malformed row skipped (%s)", path.name, line, msg)
        if total == 0:
            raise ValidationError(f"{path}: panel is empty")
        if len(bad) > malformed_limit * total:
            lines = ", ".join(str(line) for line, _ in bad[:10])
            raise ValidationError(f"{path}: {len(bad)} of {total} rows malformed (lines {lines}...)")
        return cls(np.array(ids, dtype=str), np.array(years, dtype=np.int64), np.array(incomes),
                   meta={"source": path.name, "malformed_rows": len(bad)})


# --------------------------------------------------------------------------- binned series


@dataclass
class LogBinnedSeries:
    """Statistic over log2 income bins, averaged over years."""

    j: np.ndarray
    value: np.ndarray
    spread: np.ndarray
    count: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.j = np.asarray(self.j, dtype=np.int64)
        self.value = np.asarray(self.value, dtype=float)
        self.spread = np.asarray(self.spread, dtype=float)
        self.count = np.asarray(self.count, dtype=np.int64)
        if not (self.j.shape == self.value.shape == self.spread.shape == self.count.shape):
            raise ValidationError("series arrays must share one shape")

    @property
    def w(self) -> np.ndarray:
        return 1.5 * np.exp2(self.j.astype(float))

    def __len__(self) -> int:
        return int(self.j.size)

    def to_csv(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(",".join(SERIES_HEADER) + "\n")
            for j, w, v, s, c in zip(self.j.tolist(), self.w.tolist(), self.value.tolist(),
                                     self.spread.tolist(), self.count.tolist()):
                fh.write(f"{j},{w!r},{v!r},{s!r},{c}\n")
        side = path.with_suffix(path.suffix + ".json")
        side.write_text(json.dumps(self.meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        return path

    @classmethod
    def from_csv(cls, path) -> "LogBinnedSeries":
        path = Path(path)
        with open(path, encoding="utf-8") as fh:
            header = fh.readline().strip().split(",")
        if tuple(header) != SERIES_HEADER:
            raise ValidationError(f"{path}: header must be {','.join(SERIES_HEADER)}")
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        side = path.with_suffix(path.suffix + ".json")
        meta = json.loads(side.read_text(encoding="utf-8")) if side.exists() else {}
        if data.size == 0:
            return cls([], [], [], [], meta)
        return cls(data[:, 0], data[:, 2], data[:, 3], data[:, 4], meta)


def _year_range(panel: PanelDataset, year_range, min_span: int):
    years = panel.years
    if years.size == 0:
        raise ValidationError("panel is empty")
    y0, y1 = (int(years[0]), int(years[-1])) if year_range is None else map(int, year_range)
    if y1 - y0 + 1 < min_span:
        raise ValidationError(f"year range {y0}-{y1} must span at least {min_span} years")
    return y0, y1


def _average_years(per_year: dict, counts: dict, meta: dict) -> LogBinnedSeries:
    """Average ``{k: {j: value}}`` over years per bin."""
    bins = sorted({j for d in per_year.values() for j in d})
    value, spread, count = [], [], []
    for j in bins:
        vals = np.array([d[j] for d in per_year.values() if j in d])
        value.append(vals.mean())
        spread.append(vals.std())
        count.append(counts.get(j, 0))
    meta = dict(meta, spread="standard deviation across years (ddof=0)")
    return LogBinnedSeries(bins, value, spread, count, meta)


def growth_increments(panel: PanelDataset, year_range=None, min_count: int = MIN_COUNT) -> LogBinnedSeries:
    """Mean income change ``w(k+1) - w(k)`` per bin of ``w(k)``, averaged over years ``k``.

    Only pairs with both years inside ``year_range`` (inclusive) are used.
    A bin enters a year's average only with at least ``min_count`` pairs.
    """
    y0, y1 = _year_range(panel, year_range, 2)
    i, i1 = panel.consecutive_pairs()
    k = panel.year[i]
    keep = (k >= y0) & (k + 1 <= y1)
    i, i1, k = i[keep], i1[keep], k[keep]
    if i.size == 0:
        raise ValidationError(f"no consecutive-year pairs in {y0}-{y1}")
    w, dw = panel.income[i], panel.income[i1] - panel.income[i]
    j = log2_bin(w)

    per_year, counts = {}, {}
    for yr in np.unique(k):
        sel = k == yr
        jb, dwb = j[sel], dw[sel]
        ub, inv, cnt = np.unique(jb, return_inverse=True, return_counts=True)
        sums = np.bincount(inv, weights=dwb)
        per_year[int(yr)] = {int(b): s / c for b, s, c in zip(ub, sums, cnt) if c >= min_count}
        for b, c in zip(ub, cnt):
            if c >= min_count:
                counts[int(b)] = counts.get(int(b), 0) + int(c)
    meta = {"statistic": "growth_increment", "year_range": [y0, y1], "min_count": min_count,
            "pairs": int(i.size)}
    return _average_years(per_year, counts, meta)


def _clean_presence(panel: PanelDataset):
    first, last, n = panel.presence()
    clean = n == (last - first + 1)
    return first, last, clean


def reset_rates(panel: PanelDataset, year_range=None, min_count: int = MIN_COUNT) -> LogBinnedSeries:
    """Per-bin net exit rate ``(N_out(k) - N_in(k)) / N(k-1)`` averaged over years.

    Leavers in year ``k`` are last seen in ``k`` (binned by their income in
    ``k``); entrants are first seen in ``k`` (binned by their first income).
    ``k`` runs over the interior of ``year_range`` so that both look-back
    and look-ahead years exist.  Employees with gaps in their record are
    excluded and counted in ``meta['excluded_employees']``.
    """
    y0, y1 = _year_range(panel, year_range, 3)
    years = panel.years
    if y0 < years[0] or y1 > years[-1]:
        raise ValidationError(f"year range {y0}-{y1} exceeds the panel's {years[0]}-{years[-1]}")
    first, last, clean = _clean_presence(panel)
    rec_clean = clean[panel.code]
    yr, j = panel.year[rec_clean], log2_bin(panel.income[rec_clean])
    fy, ly = first[panel.code][rec_clean], last[panel.code][rec_clean]

    per_year, counts = {}, {}
    for k in range(y0 + 1, y1):
        prev = yr == k - 1
        base_b, base_c = np.unique(j[prev], return_counts=True)
        now = yr == k
        out_b, out_c = np.unique(j[now & (ly == k)], return_counts=True)
        in_b, in_c = np.unique(j[now & (fy == k)], return_counts=True)
        out_d = dict(zip(out_b.tolist(), out_c.tolist()))
        in_d = dict(zip(in_b.tolist(), in_c.tolist()))
        vals = {}
        for b, c in zip(base_b.tolist(), base_c.tolist()):
            if c >= min_count:
                vals[b] = (out_d.get(b, 0) - in_d.get(b, 0)) / c
                counts[b] = counts.get(b, 0) + c
        per_year[k] = vals
    meta = {"statistic": "reset_rate", "year_range": [y0, y1], "min_count": min_count,
            "excluded_employees": int(np.sum(~clean))}
    return _average_years(per_year, counts, meta)


def entry_exit_counts(panel: PanelDataset):
    """Yearly totals ``{k: (N(k), n_out(k), n_in(k))}`` for clean employees.

    Leavers are counted for years before the last panel year and entrants for
    years after the first, so ``N(last) - N(first) = sum(n_in) - sum(n_out)``.
    """
    first, last, clean = _clean_presence(panel)
    rec = clean[panel.code]
    yr = panel.year[rec]
    fy, ly = first[panel.code][rec], last[panel.code][rec]
    years = panel.years
    out = {}
    for k in years.tolist():
        now = yr == k
        n_out = int(np.sum(now & (ly == k))) if k < years[-1] else 0
        n_in = int(np.sum(now & (fy == k))) if k > years[0] else 0
        out[k] = (int(np.sum(now)), n_out, n_in)
    return out


# --------------------------------------------------------------------------- histograms


def histogram_samples(samples, binning: str = "log2", n_bins: int = 50, x_max=None) -> DensityGrid:
    """Normalised histogram density of positive samples.

    ``log2`` uses bins ``[2^j, 2^(j+1))`` covering the samples, with
    representative ``1.5 * 2^j``; ``linear`` uses ``n_bins`` equal bins on
    ``[0, x_max]`` (default: the sample maximum) with midpoint representatives.
    Empty bins are kept with density zero.
    """
    x = np.asarray(samples, dtype=float)
    if x.size == 0:
        raise ValidationError("no samples to histogram")
    if not np.all(np.isfinite(x)):
        raise ValidationError("samples must be finite")
    if binning == "log2":
        if np.any(x <= 0):
            raise ValidationError("log2 binning needs positive samples")
        j = log2_bin(x)
        js = np.arange(j.min(), j.max() + 1)
        counts = np.bincount(j - j.min(), minlength=js.size)
        edges = np.exp2(np.append(js, js[-1] + 1).astype(float))
        rep = 1.5 * edges[:-1]
    elif binning == "linear":
        if np.any(x < 0):
            raise ValidationError("linear binning needs non-negative samples")
        top = float(x.max()) if x_max is None else float(x_max)
        if not top > 0:
            raise ValidationError("linear binning needs a positive upper edge")
        edges = np.linspace(0.0, top, int(n_bins) + 1)
        idx = np.clip(np.searchsorted(edges, x, side="right") - 1, 0, int(n_bins) - 1)
        if np.any(x > top):
            raise ValidationError("samples exceed x_max")
        counts = np.bincount(idx, minlength=int(n_bins))
        rep = 0.5 * (edges[1:] + edges[:-1])
    else:
        raise ValidationError(f"unknown binning {binning!r}")
    dens = counts / (x.size * np.diff(edges))
    meta = {"kind": "histogram", "binning": binning, "counts": counts.tolist(),
            "n_samples": int(x.size), "mean": float(x.mean())}
    return DensityGrid(rep, dens, edges, meta)


def income_histogram(panel: PanelDataset, year: int, binning: str = "log2", n_bins: int = 50) -> DensityGrid:
    """Income density of one panel year; ``meta['mean']`` is the sample mean."""
    x = panel.income[panel.year == int(year)]
    if x.size == 0:
        raise ValidationError(f"no records in year {year}")
    d = histogram_samples(x, binning, n_bins)
    d.meta["year"] = int(year)
    return d


def rescale(density: DensityGrid, mean: float) -> DensityGrid:
    """Map ``x -> x / mean`` and ``rho -> mean * rho``; mass is unchanged."""
    mean = float(mean)
    if not mean > 0:
        raise ValidationError("mean must be > 0")
    meta = dict(density.meta)
    if "mean" in meta:
        meta["mean"] = meta["mean"] / mean
    meta["scale"] = meta.get("scale", 1.0) * mean
    edges = None if density.edges is None else density.edges / mean
    return DensityGrid(density.x / mean, density.density * mean, edges, meta)
