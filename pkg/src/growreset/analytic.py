"""Closed-form and quadrature stationary densities of the growth-and-reset equation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import integrate as spi
from scipy.integrate import cumulative_simpson
from scipy.special import betainc, betaincc, betaln, gammaln

from .errors import DivergentMeanError, NonIntegrableError, ValidationError
from .grid import DensityGrid, integrate
from .kernels import KernelParams, as_rates

DEFAULT_POINTS = 4096
DEFAULT_SPAN = (1e-3, 1e3)


@dataclass(frozen=True)
class BetaPrimeShape:
    """Mean-rescaled Beta prime shape: ``a = b/(beta q)``, ``s = K/beta``."""

    a: float
    s: float
    mean: float = 1.0

    def __post_init__(self):
        a, s, m = float(self.a), float(self.s), float(self.mean)
        if not s > 1:
            raise DivergentMeanError(f"s must be > 1 for a finite mean, got s={s}")
        if not a > s + 1:
            raise ValidationError(f"need a > s + 1 (got a={a}, s={s})")
        if not m > 0:
            raise ValidationError(f"mean must be > 0, got {m}")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "s", s)
        object.__setattr__(self, "mean", m)

    @property
    def ratio(self) -> float:
        """Scale factor ``(a - s)/(s - 1)`` between ``x/mean`` and the standard variate."""
        return (self.a - self.s) / (self.s - 1.0)

    @classmethod
    def from_kernels(cls, p: KernelParams) -> "BetaPrimeShape":
        if p.g != 0:
            raise ValidationError("Beta prime stationary density requires g = 0")
        a = p.b / (p.beta * p.q)
        s = p.K / p.beta
        return cls(a, s, beta_prime_mean(a, s, p.q))

    @classmethod
    def constrained(cls, a: float, mean: float = 1.0) -> "BetaPrimeShape":
        """One-parameter family with ``s = a - 2`` (linear rise at low income)."""
        return cls(a, a - 2.0, mean)


def beta_prime_logpdf(x, shape: BetaPrimeShape):
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise ValidationError("income must be >= 0")
    a, s, r = shape.a, shape.s, shape.ratio
    u = x / shape.mean
    lognorm = (a - s) * np.log(r) + gammaln(a) - gammaln(a - s) - gammaln(s) - np.log(shape.mean)
    with np.errstate(divide="ignore"):
        return lognorm - a * np.log1p(r * u) + (a - s - 1.0) * np.log(u)


def beta_prime_pdf(x, shape: BetaPrimeShape):
    """Stationary density for ``g = 0`` in mean-rescaled form.

    ``rho(x) = (1/m) r^(a-s) G(a)/(G(a-s) G(s)) (1 + r x/m)^(-a) (x/m)^(a-s-1)``
    with ``r = (a-s)/(s-1)``.  Assembled in log space.
    """
    return np.exp(beta_prime_logpdf(x, shape))


def beta_prime_cdf(x, shape: BetaPrimeShape):
    """CDF through the regularised incomplete beta function."""
    x = np.asarray(x, dtype=float)
    y = shape.ratio * np.maximum(x, 0.0) / shape.mean
    return betainc(shape.a - shape.s, shape.s, y / (1.0 + y))


def beta_prime_mean(a: float, s: float, q: float) -> float:
    """First moment ``q (a - s)/(s - 1)``."""
    if not s > 1:
        raise DivergentMeanError(f"mean diverges for s <= 1 (s={s})")
    return q * (a - s) / (s - 1.0)


def master_curve(u):
    """Rescaled density ``12 u (1 + u)^-5`` (the a=5, s=3 member)."""
    u = np.asarray(u, dtype=float)
    if np.any(u < 0):
        raise ValidationError("u must be >= 0")
    return 12.0 * u * (1.0 + u) ** -5


def _pearson_exponents(p: KernelParams):
    if p.q == p.g:
        raise ValidationError("Pearson type I form is degenerate for q == g")
    A = p.b / (p.beta * (p.q - p.g))
    s = p.K / p.beta
    return A, s


def pearson_log_norm(p: KernelParams) -> float:
    """log of ``Z = int_0^inf (x+q)^-A (x+g)^(A-s-1) dx``."""
    A, s = _pearson_exponents(p)
    if not s > 1:
        raise NonIntegrableError(f"K/beta = {s:.6g} <= 1: tail x^-(K/beta+1) has no finite mean")
    if p.g == 0 and not A > s:
        raise NonIntegrableError(f"x^(A-s-1) with A-s = {A - s:.6g} <= 0 is not integrable at 0")
    if p.q > p.g and A > s:
        # t = (x+g)/(x+q) maps [0, inf) onto [g/q, 1)
        tail = betaincc(A - s, s, p.g / p.q)
        return -s * np.log(p.q - p.g) + betaln(A - s, s) + np.log(tail)
    lo, hi = sorted((p.g / p.q, 1.0))
    integrand = lambda t: t ** (A - s - 1.0) * abs(1.0 - t) ** (s - 1.0)
    val, _ = spi.quad(integrand, lo, hi, limit=200)
    return -s * np.log(abs(p.q - p.g)) + np.log(val)


def pearson_type1_pdf(x, p: KernelParams):
    """Normalised stationary density for general ``g`` (Pearson type I form)."""
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise ValidationError("income must be >= 0")
    A, s = _pearson_exponents(p)
    logz = pearson_log_norm(p)
    with np.errstate(divide="ignore"):
        logrho = -A * np.log(x + p.q) + (A - s - 1.0) * np.log(x + p.g) - logz
    return np.exp(logrho)


def default_grid(mean: float, n: int = DEFAULT_POINTS, span=DEFAULT_SPAN) -> np.ndarray:
    """Geometric grid on ``[span[0] * mean, span[1] * mean]``."""
    return np.geomspace(span[0] * mean, span[1] * mean, n)


def stationary_from_kernels(mu, gamma, grid, anchor: float | None = None) -> DensityGrid:
    """Stationary density ``rho ~ exp(-int gamma/mu) / mu`` evaluated on ``grid``.

    The exponent is accumulated with cumulative Simpson quadrature from the
    first grid point (in ``log x`` when the grid is positive, which keeps the
    integrand bounded for ``mu ~ x``), shifted so that it vanishes at
    ``anchor`` (default: first positive grid point), and the result is
    normalised numerically, so the ``mu(0) rho(0)`` prefactor never appears.
    A leading ``x = 0`` point where ``mu`` vanishes gets the limiting value of
    the density there (0 when the density rises from the origin).
    """
    x = np.asarray(grid, dtype=float)
    if x.ndim != 1 or x.size < 3 or np.any(np.diff(x) <= 0) or x[0] < 0:
        raise ValidationError("grid must be a strictly increasing, non-negative 1-d array")
    m = np.asarray(mu(x), dtype=float) * np.ones_like(x)
    gm = np.asarray(gamma(x), dtype=float) * np.ones_like(x)

    origin_dropped = False
    if x[0] == 0 and m[0] == 0:
        origin_dropped = True
        x, m, gm = x[1:], m[1:], gm[1:]
    if np.any(m <= 0) or not np.all(np.isfinite(m)):
        raise ValidationError("growth rate must be positive and finite on the grid interior")
    ratio = gm / m
    if not np.all(np.isfinite(ratio)):
        raise ValidationError("gamma/mu is not finite on the grid")

    if x[0] > 0:
        expo = cumulative_simpson(ratio * x, x=np.log(x), initial=0.0)
    else:
        expo = cumulative_simpson(ratio, x=x, initial=0.0)
    if not np.all(np.isfinite(expo)):
        raise NonIntegrableError("exponent integral diverges on the grid")
    idx = 0 if anchor is None else int(np.argmin(np.abs(x - anchor)))
    expo = expo - expo[idx]
    logrho = -expo - np.log(m)
    logrho -= logrho.max()
    rho = np.exp(logrho)

    if origin_dropped:
        slope = np.log(rho[1] / rho[0]) / np.log(x[1] / x[0]) if rho[0] > 0 else 1.0
        if slope < 0:
            raise NonIntegrableError("density diverges at the origin")
        rho0 = 0.0 if slope > 0 else rho[0]
        x = np.concatenate([[0.0], x])
        rho = np.concatenate([[rho0], rho])

    z = integrate(x, rho).value
    return DensityGrid(x, rho / z, meta={"kind": "stationary_from_kernels", "anchor": float(x[idx])})


def stationary_from_params(kernel, grid=None) -> DensityGrid:
    """:func:`stationary_from_kernels` for a ``KernelParams``/``Rates`` pair."""
    rates = as_rates(kernel)
    if grid is None:
        if not isinstance(kernel, KernelParams):
            raise ValidationError("a grid is required for generic rates")
        grid = default_grid(kernel.mean_income)
    return stationary_from_kernels(rates.growth, rates.reset, grid)


def beta_prime_grid(shape: BetaPrimeShape, x=None) -> DensityGrid:
    x = default_grid(shape.mean) if x is None else np.asarray(x, dtype=float)
    return DensityGrid(x, beta_prime_pdf(x, shape),
                       meta={"kind": "beta_prime", "a": shape.a, "s": shape.s, "mean": shape.mean})


def tail_exponent(shape: BetaPrimeShape):
    """``(density exponent, Pareto exponent) = (-(s+1), s)``."""
    return -(shape.s + 1.0), shape.s
