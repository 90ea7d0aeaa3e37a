"""Parameter fits and goodness-of-fit: growth constant, reset scale, Beta prime shape, collapse score."""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import minimize, minimize_scalar

from .analytic import BetaPrimeShape, beta_prime_cdf, beta_prime_logpdf
from .errors import FitError, ValidationError
from .estimation import LogBinnedSeries
from .grid import DensityGrid

A_BOUNDS = (2.5, 10.0)
A_XTOL = 1e-6
MEAN_RTOL = 0.02
MIN_SUPPORT = 3.0
Z95 = 1.959963984540054


@dataclass
class FitReport:
    """Estimates, 95% half-widths, goodness of fit and residuals of one fit."""

    params: dict
    intervals: dict
    goodness: float
    goodness_kind: str
    residuals: np.ndarray
    x: np.ndarray
    provenance: str = ""
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if not np.isfinite(self.goodness):
            raise FitError(f"goodness metric is not finite ({self.goodness})")
        self.residuals = np.asarray(self.residuals, dtype=float)
        self.x = np.asarray(self.x, dtype=float)

    def to_dict(self) -> dict:
        return {
            "params": {k: float(v) for k, v in self.params.items()},
            "intervals": {k: float(v) for k, v in self.intervals.items()},
            "goodness": float(self.goodness),
            "goodness_kind": self.goodness_kind,
            "x": self.x.tolist(),
            "residuals": self.residuals.tolist(),
            "provenance": self.provenance,
            "meta": self.meta,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def write(self, path, residual_csv=None) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.to_json(), encoding="utf-8")
        if residual_csv is not None:
            with open(residual_csv, "w", encoding="utf-8", newline="\n") as fh:
                fh.write("x,residual\n")
                for xv, rv in zip(self.x.tolist(), self.residuals.tolist()):
                    fh.write(f"{xv!r},{rv!r}\n")
        return path

    @classmethod
    def from_json(cls, text: str) -> "FitReport":
        d = json.loads(text)
        return cls(d["params"], d["intervals"], d["goodness"], d["goodness_kind"],
                   d["residuals"], d["x"], d.get("provenance", ""), d.get("meta", {}))


# --------------------------------------------------------------------------- linear fits


def _series_weights(series: LogBinnedSeries):
    """``1/spread^2`` over bins with a positive spread, or uniform if none has one.

    Bins seen in a single year carry zero spread; when weighting is possible
    they have no usable weight and are left out.
    """
    pos = np.isfinite(series.spread) & (series.spread > 0)
    if not np.any(pos):
        return np.ones(len(series), dtype=bool), np.ones(len(series)), "unweighted"
    return pos, 1.0 / series.spread[pos] ** 2, "inverse spread squared"


def _origin_fit(x, y, wt):
    """Weighted least squares ``y = c x``; returns ``(c, half_width, R^2, residuals)``."""
    sxx = np.sum(wt * x * x)
    if not sxx > 0:
        raise FitError("design has no spread; cannot fit")
    c = np.sum(wt * x * y) / sxx
    res = y - c * x
    sse = np.sum(wt * res**2)
    ybar = np.sum(wt * y) / np.sum(wt)
    sst = np.sum(wt * (y - ybar) ** 2)
    r2 = 1.0 - sse / sst if sst > 0 else (1.0 if sse == 0 else 0.0)
    dof = max(x.size - 1, 1)
    half = Z95 * np.sqrt(sse / dof / sxx)
    return c, half, r2, res


def fit_growth_C(series: LogBinnedSeries) -> FitReport:
    """Fit ``<dw>_j = C w_j`` through the origin, weighted by ``1/spread^2``."""
    if len(series) < 3:
        raise FitError(f"need at least 3 bins, got {len(series)}")
    keep, wt, wkind = _series_weights(series)
    x, y = series.w[keep], series.value[keep]
    if x.size < 3:
        raise FitError("fewer than 3 bins carry a usable weight")
    c, half, r2, res = _origin_fit(x, y, wt)
    return FitReport({"C": c}, {"C": half}, r2, "R2", res, x, series.meta.get("source", ""),
                     {"weights": wkind, "bins_used": int(x.size), "bins_dropped": int(len(series) - x.size)})


def reset_shape(w, mean_income):
    """``gamma(w) / beta`` for the constrained kernel: ``3 - 5 m / (w + m)``."""
    return 3.0 - 5.0 * mean_income / (np.asarray(w, dtype=float) + mean_income)


def fit_reset_beta(series: LogBinnedSeries, mean_income: float) -> FitReport:
    """One-parameter fit of ``gamma_j = beta (3 - 5 m / (w_j + m))``.

    The model is linear in ``beta``, so the weighted least-squares optimum is
    closed form.  An all-zero series returns ``beta = 0`` with a warning.
    """
    if not mean_income > 0:
        raise ValidationError("mean_income must be > 0")
    if len(series) < 3:
        raise FitError(f"need at least 3 bins, got {len(series)}")
    keep, wt, wkind = _series_weights(series)
    w, y = series.w[keep], series.value[keep]
    if w.size < 3:
        raise FitError("fewer than 3 bins carry a usable weight")
    h = reset_shape(w, mean_income)
    meta = {"weights": wkind, "mean_income": float(mean_income), "bins_used": int(w.size)}
    if np.all(y == 0):
        warnings.warn("reset series is identically zero; fit is degenerate (beta = 0)", RuntimeWarning)
        meta["degenerate"] = True
    beta, half, r2, res = _origin_fit(h, y, wt)
    return FitReport({"beta": beta}, {"beta": half}, r2, "R2", res, w, series.meta.get("source", ""), meta)


# --------------------------------------------------------------------------- shape fits


def _shape_data(density: DensityGrid):
    mean = density.meta.get("mean")
    if mean is None:
        mean = density.mean()
    if abs(mean - 1.0) > MEAN_RTOL:
        raise ValidationError(f"density must be rescaled to unit mean (mean = {mean:.4g})")
    top = density.edges[-1] if density.is_cells else density.x[-1]
    if top < MIN_SUPPORT:
        raise ValidationError(f"support ends at u = {top:.3g}; need u >= {MIN_SUPPORT}")
    counts = density.meta.get("counts")
    wt = np.asarray(counts, dtype=float) if counts is not None else np.ones(density.x.size)
    keep = (density.density > 0) & (wt > 0)
    if keep.sum() < 3:
        raise FitError("fewer than 3 non-empty bins")
    return keep, wt


def _model_log(density: DensityGrid, shape: BetaPrimeShape, keep):
    """Log of the model averaged over each cell (cells) or evaluated at points."""
    if density.is_cells:
        e = density.edges
        cdf = beta_prime_cdf(e, shape)
        avg = np.diff(cdf)[keep] / np.diff(e)[keep]
        with np.errstate(divide="ignore"):
            return np.log(avg)
    return beta_prime_logpdf(density.x[keep], shape)


def fit_beta_prime(density: DensityGrid, constraint: str = "s=a-2", bounds=A_BOUNDS) -> FitReport:
    """Fit a Beta prime shape to a unit-mean density in log-density space.

    The objective is the count-weighted sum of squared differences between
    the log of the observed density and the log of the model (bin-averaged
    through the CDF on cell grids).  Empty bins are excluded.  With
    ``constraint='s=a-2'`` the only parameter is ``a``, searched on
    ``bounds`` intersected with ``a > 3`` (where ``s > 1``); ``'free'`` fits
    ``(a, s)`` subject to ``a > s + 1``, ``s > 1``.
    """
    keep, wt = _shape_data(density)
    obs = np.log(density.density[keep])
    w = wt[keep]
    x = density.x[keep]

    def resid(a, s):
        r = obs - _model_log(density, BetaPrimeShape(a, s, 1.0), keep)
        return np.where(np.isfinite(r), r, 1e3)

    meta = {"objective": "count-weighted SSE of log density", "constraint": constraint,
            "bins_used": int(keep.sum())}
    if constraint == "s=a-2":
        lo = max(bounds[0], 3.0) + 1e-9
        hi = bounds[1]
        f = lambda a: float(np.sum(w * resid(a, a - 2.0) ** 2))
        opt = minimize_scalar(f, bounds=(lo, hi), method="bounded", options={"xatol": A_XTOL})
        a_hat = float(opt.x)
        s_hat = a_hat - 2.0
        res = resid(a_hat, s_hat)
        half = _half_width(lambda p: resid(p[0], p[0] - 2.0), [a_hat], w)
        params, intervals = {"a": a_hat, "s": s_hat}, {"a": half[0], "s": half[0]}
        meta["at_bound"] = bool(min(a_hat - lo, hi - a_hat) < 1e-4)
    elif constraint == "free":
        def unpack(th):
            s = 1.0 + np.exp(th[0])
            return s + 1.0 + np.exp(th[1]), s

        def g(th):
            a, s = unpack(th)
            if a > 50:
                return 1e12
            return float(np.sum(w * resid(a, s) ** 2))

        start = np.array([np.log(2.0), 0.0])  # a=5, s=3
        opt = minimize(g, start, method="Nelder-Mead", options={"xatol": 1e-8, "fatol": 1e-12, "maxiter": 4000})
        a_hat, s_hat = unpack(opt.x)
        res = resid(a_hat, s_hat)
        half = _half_width(lambda p: resid(p[0], p[1]), [a_hat, s_hat], w)
        params, intervals = {"a": a_hat, "s": s_hat}, {"a": half[0], "s": half[1]}
        meta["converged"] = bool(opt.success)
    else:
        raise ValidationError(f"unknown constraint {constraint!r}")
    sse = float(np.sum(w * res**2))
    return FitReport(params, intervals, sse, "weighted SSE (log density)", res, x,
                     density.meta.get("source", ""), meta)


def _half_width(resid, p, w, step=1e-5):
    """95% half-widths from the Gauss-Newton covariance at the optimum."""
    p = np.asarray(p, dtype=float)
    r0 = resid(p)
    J = np.empty((r0.size, p.size))
    for k in range(p.size):
        dp = np.zeros_like(p)
        dp[k] = step * max(abs(p[k]), 1.0)
        J[:, k] = (resid(p + dp) - resid(p - dp)) / (2 * dp[k])
    dof = max(r0.size - p.size, 1)
    s2 = np.sum(w * r0**2) / dof
    try:
        cov = s2 * np.linalg.inv(J.T @ (w[:, None] * J))
    except np.linalg.LinAlgError:
        return np.full(p.size, np.inf)
    return Z95 * np.sqrt(np.maximum(np.diag(cov), 0.0))


# --------------------------------------------------------------------------- collapse and tails


def _support(d: DensityGrid, min_count: int):
    keep = d.density > 0
    counts = d.meta.get("counts")
    if counts is not None:
        keep &= np.asarray(counts) >= min_count
    if keep.sum() < 2:
        raise ValidationError("curve has fewer than 2 usable bins")
    return np.log(d.x[keep]), np.log(d.density[keep])


def collapse_metric(curves, n_grid: int = 400, min_count: int = 10) -> float:
    """Spread of rescaled curves around each other.

    Each curve is interpolated linearly in ``(log u, log rho)`` onto a common
    log-spaced grid covering the range where every curve has data (bins with
    at least ``min_count`` samples when counts are known).  The score is the
    average over ``log u`` of ``(max - min) / median`` across curves; 0 means
    identical.
    """
    curves = list(curves)
    if len(curves) < 2:
        raise ValidationError("need at least 2 curves")
    sup = [_support(c, min_count) for c in curves]
    lo = max(s[0][0] for s in sup)
    hi = min(s[0][-1] for s in sup)
    if not hi > lo:
        raise ValidationError("curves have no overlapping support")
    grid = np.linspace(lo, hi, int(n_grid))
    vals = np.exp(np.array([np.interp(grid, lu, lr) for lu, lr in sup]))
    spread = (vals.max(axis=0) - vals.min(axis=0)) / np.median(vals, axis=0)
    # trapezoid average over log u: refining the grid changes the score at second order
    return float(np.trapezoid(spread, grid) / (hi - lo))


def tail_slope(density: DensityGrid, u_min: float, u_max: float) -> float:
    """Least-squares slope of ``log rho`` against ``log u`` over ``[u_min, u_max]``."""
    sel = (density.x >= u_min) & (density.x <= u_max) & (density.density > 0)
    if sel.sum() < 5:
        raise ValidationError(f"only {int(sel.sum())} points in [{u_min}, {u_max}]; need 5")
    slope, _ = np.polyfit(np.log(density.x[sel]), np.log(density.density[sel]), 1)
    return float(slope)
