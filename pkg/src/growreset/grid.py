"""Density carrier shared by the analytic, dynamics, Monte Carlo and estimation layers.

A :class:`DensityGrid` is either a set of point values of a density (``edges is
None``) or a finite-volume / histogram representation where ``density[i]`` is
the average over the cell ``[edges[i], edges[i+1])``.  Point grids are
integrated with Simpson's rule plus power-law extrapolation of the two ends;
cell grids are integrated exactly as sums over cells.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.integrate import simpson

from .errors import NormalizationError, TruncationError, ValidationError

MASS_TOL = 1e-6


@dataclass(frozen=True)
class Quadrature:
    value: float
    core: float
    head: float
    tail: float
    tail_err: float


def _log_slope(x0, x1, f0, f1):
    if f0 == 0 or f1 == 0 or np.sign(f0) != np.sign(f1):
        return None
    return np.log(f1 / f0) / np.log(x1 / x0)


def _tail_piece(x, f, i0, i1):
    """Integral of the power law through points i0 < i1, from x[i1] to infinity."""
    p = _log_slope(x[i0], x[i1], f[i0], f[i1])
    if p is None:
        return 0.0 if f[i1] == 0 else np.nan
    if p >= -1.0:
        return np.nan
    return -f[i1] * x[i1] / (p + 1.0)


def integrate(x, f, extrapolate: bool = True) -> Quadrature:
    """Integrate point samples ``f(x)`` over ``[0, inf)``.

    The grid interior uses Simpson's rule.  Below ``x[0]`` (when positive) and
    above ``x[-1]`` the integrand is continued as the local power law through
    the two outermost points.  ``tail_err`` is the change in the tail term when
    the power law is fitted over a window twice as wide instead, a cheap proxy
    for the extrapolation error.
    """
    x = np.asarray(x, dtype=float)
    f = np.asarray(f, dtype=float)
    if x.size < 3:
        raise ValidationError("need at least 3 grid points to integrate")
    core = float(simpson(f, x=x))
    if not extrapolate:
        return Quadrature(core, core, 0.0, 0.0, 0.0)

    head = 0.0
    if x[0] > 0 and f[0] != 0:
        p = _log_slope(x[0], x[1], f[0], f[1])
        if p is None:
            head = f[0] * x[0]
        elif p <= -1.0:
            raise TruncationError(f"integrand is not integrable at 0 (local exponent {p:.3g})")
        else:
            head = f[0] * x[0] / (p + 1.0)

    n = x.size
    tail = _tail_piece(x, f, n - 2, n - 1)
    if np.isnan(tail):
        raise TruncationError("integrand does not decay faster than 1/x at the end of the grid")
    # wider window: the point nearest x[-1]/2, at least two cells back
    k = int(np.searchsorted(x, x[-1] / 2.0))
    k = min(max(k, 0), n - 3)
    wide = _tail_piece(x, f, k, n - 1)
    tail_err = abs(wide - tail) if np.isfinite(wide) else abs(tail)
    return Quadrature(core + head + tail, core, head, float(tail), float(tail_err))


def geometric_cells(x_min, x_max, n, zero_start=False):
    """Edges and centres of ``n`` cells.

    With ``zero_start`` the first cell is ``[0, x_min)`` and the remaining
    ``n - 1`` cells are geometric on ``[x_min, x_max]``.
    """
    if not 0 < x_min < x_max:
        raise ValidationError("need 0 < x_min < x_max")
    if zero_start:
        edges = np.concatenate([[0.0], np.geomspace(x_min, x_max, n)])
        centres = np.sqrt(edges[1:] * edges[:-1])
        centres[0] = 0.5 * edges[1]
    else:
        edges = np.geomspace(x_min, x_max, n + 1)
        centres = np.sqrt(edges[1:] * edges[:-1])
    return edges, centres


def linear_cells(x_max, n):
    edges = np.linspace(0.0, x_max, n + 1)
    return edges, 0.5 * (edges[1:] + edges[:-1])


@dataclass
class DensityGrid:
    """Discretised probability density over income.

    Parameters
    ----------
    x : array
        Strictly increasing abscissae (point grid) or cell representatives.
    density : array
        Non-negative, finite density values (1 / income).
    edges : array, optional
        Cell edges (length ``len(x) + 1``).  Present for finite-volume states
        and histograms; absent for point evaluations of a continuous density.
    meta : dict
        JSON-serialisable metadata (e.g. ``mean``, ``counts``, ``n_samples``).
    """

    x: np.ndarray
    density: np.ndarray
    edges: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float)
        self.density = np.asarray(self.density, dtype=float)
        if self.x.ndim != 1 or self.x.shape != self.density.shape:
            raise ValidationError("x and density must be 1-d arrays of equal length")
        if self.x.size < (1 if self.edges is not None else 2) or np.any(np.diff(self.x) <= 0):
            raise ValidationError("x must be strictly increasing")
        if not np.all(np.isfinite(self.density)) or np.any(self.density < 0):
            raise ValidationError("density values must be finite and >= 0")
        if self.edges is not None:
            self.edges = np.asarray(self.edges, dtype=float)
            if self.edges.shape != (self.x.size + 1,) or np.any(np.diff(self.edges) <= 0):
                raise ValidationError("edges must be strictly increasing with len(x) + 1 entries")

    @property
    def is_cells(self) -> bool:
        return self.edges is not None

    @property
    def widths(self) -> np.ndarray:
        if self.edges is None:
            raise ValidationError("point grid has no cell widths")
        return np.diff(self.edges)

    def integrate(self, values) -> float:
        """Integral of ``values`` (sampled like ``density``) over the grid's support."""
        values = np.asarray(values, dtype=float)
        if self.is_cells:
            return float(np.sum(values * self.widths))
        return integrate(self.x, values).value

    def mass(self) -> float:
        return self.integrate(self.density)

    def mean(self) -> float:
        return self.integrate(self.x * self.density) / self.mass()

    def normalized(self) -> "DensityGrid":
        m = self.mass()
        if not m > 0:
            raise NormalizationError("density has zero mass")
        return DensityGrid(self.x.copy(), self.density / m, self.edges, dict(self.meta))

    def check_normalized(self, tol: float = MASS_TOL) -> None:
        m = self.mass()
        if abs(m - 1.0) > tol:
            raise NormalizationError(f"density mass {m:.12g} differs from 1 by more than {tol:g}")

    def l1_distance(self, reference) -> float:
        """L1 distance to ``reference``, an array on the same grid or a callable of x."""
        ref = reference(self.x) if callable(reference) else np.asarray(reference, dtype=float)
        return self.integrate(np.abs(self.density - ref))

    # ------------------------------------------------------------------ I/O
    def to_csv(self, path) -> Path:
        """Write ``x,density`` CSV plus a ``.json`` sidecar with the metadata."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("x,density\n")
            for xv, dv in zip(self.x.tolist(), self.density.tolist()):
                fh.write(f"{xv!r},{dv!r}\n")
        side = {
            "mass": self.mass(),
            "x_min": float(self.x[0]),
            "x_max": float(self.x[-1]),
            "edges": None if self.edges is None else [float(e) for e in self.edges],
            "meta": self.meta,
        }
        sidecar(path).write_text(json.dumps(side, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        return path

    @classmethod
    def from_csv(cls, path) -> "DensityGrid":
        path = Path(path)
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        edges, meta = None, {}
        side = sidecar(path)
        if side.exists():
            info = json.loads(side.read_text(encoding="utf-8"))
            edges = info.get("edges")
            meta = info.get("meta") or {}
        return cls(data[:, 0], data[:, 1], None if edges is None else np.asarray(edges), meta)


def sidecar(path) -> Path:
    path = Path(path)
    return path.with_suffix(path.suffix + ".json")
