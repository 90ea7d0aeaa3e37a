"""Explicit time integrators for the discrete and continuous master equations.

Both integrators implement the equation literally: the reset term acts as a
sink where ``gamma > 0`` and as a local source where ``gamma < 0``, and the
feeding term ``<gamma>`` is deposited in the lowest state / first cell with
whatever sign it has.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import NegativeDensityError, StabilityError, TruncationError, ValidationError
from .grid import DensityGrid
from .kernels import as_rates

log = logging.getLogger(__name__)

NORM_TOL = 1e-9
TRUNCATION_GUARD = 1e-9
STABILITY_FACTOR = 0.5
NEGATIVE_RTOL = 1e-14


@dataclass
class DiscreteState:
    """Probabilities ``P_n`` of holding ``n`` income quanta of size ``dx``."""

    P: np.ndarray
    dx: float = 1.0
    t: float = 0.0

    def __post_init__(self):
        self.P = np.asarray(self.P, dtype=float)
        if self.P.ndim != 1 or self.P.size < 2:
            raise ValidationError("P must be a 1-d array with at least two states")
        if np.any(self.P < 0) or not np.all(np.isfinite(self.P)):
            raise ValidationError("probabilities must be finite and >= 0")
        if abs(self.P.sum() - 1.0) > NORM_TOL:
            raise ValidationError(f"probabilities sum to {self.P.sum():.15g}, not 1")
        if not self.dx > 0:
            raise ValidationError("dx must be > 0")

    @property
    def n_max(self) -> int:
        return self.P.size - 1

    def as_density(self) -> DensityGrid:
        """``P_n / dx`` on cells ``[n dx, (n+1) dx)``."""
        edges = self.dx * np.arange(self.P.size + 1)
        return DensityGrid(edges[:-1] + 0.5 * self.dx, self.P / self.dx, edges, {"t": self.t})


def discretize_rates(kernel, dx: float, n_states: int):
    """Per-state rates ``mu_n = mu(n dx)/dx`` and ``gamma_n = gamma(n dx)``."""
    rates = as_rates(kernel)
    x = dx * np.arange(n_states)
    mu_n = np.asarray(rates.growth(x), dtype=float) * np.ones(n_states) / dx
    gamma_n = np.asarray(rates.reset(x), dtype=float) * np.ones(n_states)
    return mu_n, gamma_n


def discrete_stability_bound(mu_n, gamma_n) -> float:
    top = float(np.max(mu_n + np.maximum(gamma_n, 0.0)))
    return STABILITY_FACTOR / top if top > 0 else np.inf


def _discrete_rhs(P, mu_n, gamma_n):
    flow = mu_n * P
    flow[-1] = 0.0  # no growth out of the last state: the truncation guard keeps it empty
    d = -flow - gamma_n * P
    d[1:] += flow[:-1]
    d[0] += np.dot(gamma_n, P)
    return d


def _rates_arrays(state: DiscreteState, mu_n, gamma_n):
    mu_n = np.broadcast_to(np.asarray(mu_n, dtype=float), state.P.shape).copy()
    gamma_n = np.broadcast_to(np.asarray(gamma_n, dtype=float), state.P.shape).copy()
    if np.any(mu_n < 0) or not np.all(np.isfinite(mu_n)) or not np.all(np.isfinite(gamma_n)):
        raise ValidationError("rates must be finite with mu_n >= 0")
    return mu_n, gamma_n


def _guard_discrete(P, t):
    if P[-1] >= TRUNCATION_GUARD:
        raise TruncationError(f"P[N_max] = {P[-1]:.3g} at t={t:.6g}; enlarge the state space")


def step_discrete(state: DiscreteState, mu_n, gamma_n, dt: float) -> DiscreteState:
    """One explicit Euler step of ``dP_n/dt = mu_{n-1}P_{n-1} - (mu_n + gamma_n)P_n + delta_n0 <gamma>``.

    Raises
    ------
    StabilityError
        If ``dt > 0.5 / max(mu_n + max(gamma_n, 0))``.
    TruncationError
        If the top state holds ``1e-9`` or more probability after the step.
    """
    mu_n, gamma_n = _rates_arrays(state, mu_n, gamma_n)
    bound = discrete_stability_bound(mu_n, gamma_n)
    if dt > bound * (1 + 1e-12):
        raise StabilityError(f"dt={dt:.6g} exceeds the stability bound {bound:.6g}")
    P = state.P + dt * _discrete_rhs(state.P.copy(), mu_n, gamma_n)
    _guard_discrete(P, state.t + dt)
    return replace(state, P=_clip_negatives(P, state.t + dt), t=state.t + dt)


def _clip_negatives(rho, t):
    lo = rho.min()
    if lo < 0:
        if lo < -NEGATIVE_RTOL * rho.max():
            i = int(np.argmin(rho))
            raise NegativeDensityError(f"density {lo:.3g} at index {i} after step to t={t:.6g}")
        rho = np.maximum(rho, 0.0)
    return rho


# --------------------------------------------------------------------------- continuous


def cell_state(density: DensityGrid) -> DensityGrid:
    if not density.is_cells:
        raise ValidationError("step_continuous needs a finite-volume DensityGrid (edges set)")
    return density


def _continuous_setup(density: DensityGrid, kernel):
    rates = as_rates(kernel)
    e = density.edges
    mu_e = np.asarray(rates.growth(e), dtype=float) * np.ones_like(e)
    gam = np.asarray(rates.reset(density.x), dtype=float) * np.ones_like(density.x)
    if np.any(mu_e < 0) or not np.all(np.isfinite(mu_e)) or not np.all(np.isfinite(gam)):
        raise ValidationError("growth must be finite and >= 0 and reset finite on the grid")
    return mu_e, gam, density.widths


def cfl_bound(density: DensityGrid, kernel) -> float:
    """Largest stable step: ``min_i dx_i / mu(x_{i+1/2})`` over cells."""
    mu_e, _, w = _continuous_setup(cell_state(density), kernel)
    out = mu_e[1:-1]
    with np.errstate(divide="ignore"):
        lim = np.where(out > 0, w[:-1] / out, np.inf)
    return float(lim.min())


def _continuous_rhs(rho, mu_e, gam, w):
    flux = np.empty(rho.size + 1)
    flux[0] = 0.0  # nothing grows in from below the grid
    flux[1:] = mu_e[1:] * rho
    flux[-1] = 0.0  # closed top boundary; the truncation guard keeps it empty
    sink = gam * rho
    d = -(flux[1:] - flux[:-1]) / w - sink
    d[0] += np.dot(sink, w) / w[0]
    return d


def step_continuous(density: DensityGrid, kernel, dt: float) -> DensityGrid:
    """One first-order upwind step of the continuous master equation.

    ``d rho/dt = -d(mu rho)/dx - gamma rho + <gamma> delta(x)`` on a
    finite-volume grid: fluxes at cell edges use the upwind (left) cell,
    ``gamma`` is evaluated at cell centres and ``<gamma>`` is deposited in the
    first cell.  Mass is conserved exactly up to rounding.
    """
    density = cell_state(density)
    mu_e, gam, w = _continuous_setup(density, kernel)
    bound = cfl_bound(density, kernel)
    if dt > bound * (1 + 1e-12):
        raise StabilityError(f"dt={dt:.6g} violates the CFL bound {bound:.6g}")
    t = density.meta.get("t", 0.0) + dt
    rho = density.density + dt * _continuous_rhs(density.density, mu_e, gam, w)
    rho = _clip_negatives(rho, t)
    meta = dict(density.meta, t=t)
    return DensityGrid(density.x, rho, density.edges, meta)


@dataclass
class SteadyResult:
    state: object
    elapsed: float
    converged: bool
    steps: int
    history: list = field(default_factory=list)


def run_to_steady(state, rates, dt: float, tol: float, max_time: float = 1e4,
                  snapshot_every: int = 0, guard_every: int = 100) -> SteadyResult:
    """Step until ``||d rho/dt||_1 < tol`` or ``max_time`` elapses.

    ``state`` is a :class:`DiscreteState` (``rates = (mu_n, gamma_n)``) or a
    finite-volume :class:`DensityGrid` (``rates`` a kernel).  The L1 rate of
    change is evaluated before every step, so an input that is already
    stationary converges at ``t = 0``.  Exhausting ``max_time`` is reported
    through ``converged=False``, not raised.
    """
    if not tol > 0:
        raise ValidationError("tol must be > 0")
    if not dt > 0:
        raise ValidationError("dt must be > 0")

    if isinstance(state, DiscreteState):
        mu_n, gamma_n = _rates_arrays(state, *rates)
        bound = discrete_stability_bound(mu_n, gamma_n)
        if dt > bound * (1 + 1e-12):
            raise StabilityError(f"dt={dt:.6g} exceeds the stability bound {bound:.6g}")
        rho, w, t0 = state.P.copy(), None, state.t
        rhs = lambda r: _discrete_rhs(r.copy(), mu_n, gamma_n)
        guard = lambda r, t: _guard_discrete(r, t)
        wrap = lambda r, t: replace(state, P=r, t=t)
    else:
        density = cell_state(state)
        mu_e, gam, w = _continuous_setup(density, rates)
        bound = cfl_bound(density, rates)
        if dt > bound * (1 + 1e-12):
            raise StabilityError(f"dt={dt:.6g} violates the CFL bound {bound:.6g}")
        rho, t0 = density.density.copy(), density.meta.get("t", 0.0)
        rhs = lambda r: _continuous_rhs(r, mu_e, gam, w)
        guard = lambda r, t: _guard_cells(r, w, t)
        wrap = lambda r, t: DensityGrid(density.x, r, density.edges, dict(density.meta, t=t))

    steps, t, history = 0, t0, []
    converged = False
    while True:
        d = rhs(rho)
        rate = float(np.sum(np.abs(d) * w)) if w is not None else float(np.sum(np.abs(d)))
        if rate < tol:
            converged = True
            break
        if steps * dt >= max_time * (1 - 1e-12):
            log.info("run_to_steady: max_time %.4g reached, rate %.3g", max_time, rate)
            break
        steps += 1
        t = t0 + steps * dt
        rho = _clip_negatives(rho + dt * d, t)
        if guard_every and steps % guard_every == 0:
            guard(rho, t)
        if snapshot_every and steps % snapshot_every == 0:
            history.append(wrap(rho.copy(), t))
    guard(rho, t)
    return SteadyResult(wrap(rho, t), t - t0, converged, steps, history)


def _guard_cells(rho, w, t):
    if rho[-1] * w[-1] >= TRUNCATION_GUARD:
        raise TruncationError(f"last cell holds {rho[-1] * w[-1]:.3g} mass at t={t:.6g}; extend the grid")


def integrate_continuous(density: DensityGrid, kernel, t_end: float, dt: float | None = None,
                         cfl: float = 0.9, snapshot_every: int = 0, guard_every: int = 100):
    """Advance ``density`` to ``t_end``; returns ``(final, snapshots, info)``.

    ``dt`` defaults to ``cfl`` times the CFL bound, shortened so that an
    integer number of steps lands exactly on ``t_end``.
    """
    density = cell_state(density)
    mu_e, gam, w = _continuous_setup(density, kernel)
    bound = cfl_bound(density, kernel)
    if not t_end > 0:
        raise ValidationError("t_end must be > 0")
    if dt is None:
        dt = cfl * bound
    steps = int(np.ceil(t_end / dt - 1e-9))
    dt = t_end / steps
    if dt > bound * (1 + 1e-12):
        raise StabilityError(f"dt={dt:.6g} violates the CFL bound {bound:.6g}")
    rho, t0 = density.density.copy(), density.meta.get("t", 0.0)
    snaps = []
    for k in range(1, steps + 1):
        t = t0 + k * dt
        rho = _clip_negatives(rho + dt * _continuous_rhs(rho, mu_e, gam, w), t)
        if guard_every and k % guard_every == 0:
            _guard_cells(rho, w, t)
        if snapshot_every and k % snapshot_every == 0 and k != steps:
            snaps.append(DensityGrid(density.x, rho.copy(), density.edges, dict(density.meta, t=t)))
    _guard_cells(rho, w, t0 + t_end)
    final = DensityGrid(density.x, rho, density.edges, dict(density.meta, t=t0 + t_end))
    info = {"dt": dt, "steps": steps, "t_end": t0 + t_end, "cfl_bound": bound,
            "mass": float(np.sum(rho * w))}
    return final, snaps, info


def write_run(out_dir, final: DensityGrid, snapshots, info: dict, prefix: str = "density") -> Path:
    """Emit snapshot CSVs (``<prefix>_<k>.csv``), the final state and ``run.json``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    names = []
    for k, snap in enumerate(snapshots):
        names.append(snap.to_csv(out_dir / f"{prefix}_{k:04d}.csv").name)
    final.to_csv(out_dir / f"{prefix}_final.csv")
    meta = dict(info, snapshots=names, final=f"{prefix}_final.csv")
    path = out_dir / "run.json"
    path.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def exponential_cells(edges, centres, mean: float) -> DensityGrid:
    """Exponential density with the given mean, as exact cell averages."""
    edges = np.asarray(edges, dtype=float)
    cdf = -np.expm1(-edges / mean)
    mass = np.diff(cdf)
    return DensityGrid(centres, mass / np.diff(edges) / cdf[-1], edges, {"t": 0.0})
