"""Growth and reset rate kernels.

Growth is linear-preferential, ``mu(x) = beta * (x + g)``; the reset rate is
``gamma(x) = K - b / (x + q)``, negative (net entry) at low income and
saturating at ``K`` (net exit) for the rich.  Requiring that the Beta prime
master curve (a=5, s=3) conserves both head count and total income fixes
``q = <x>``, ``K = 3 beta`` and ``b = 5 beta <x>``.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from typing import Callable

import numpy as np

from .errors import NormalizationError, TruncationError, ValidationError
from .grid import DensityGrid, integrate

TAIL_RTOL = 1e-6


@dataclass(frozen=True)
class KernelParams:
    """Constants of the growth and reset kernels plus the population mean income.

    beta : 1/year, g : income, K : 1/year, b : income/year, q : income,
    mean_income : income.
    """

    beta: float
    g: float
    K: float
    b: float
    q: float
    mean_income: float

    def __post_init__(self):
        for name in ("beta", "g", "K", "b", "q", "mean_income"):
            v = getattr(self, name)
            if not np.isfinite(v):
                raise ValidationError(f"{name} must be finite, got {v!r}")
            object.__setattr__(self, name, float(v))
        if self.beta <= 0:
            raise ValidationError(f"beta must be > 0, got {self.beta}")
        if self.q <= 0:
            raise ValidationError(f"q must be > 0, got {self.q}")
        if self.mean_income <= 0:
            raise ValidationError(f"mean_income must be > 0, got {self.mean_income}")
        if self.g < 0:
            raise ValidationError(f"g must be >= 0, got {self.g}")

    def growth(self, x):
        return eval_growth(x, self)

    def reset(self, x):
        return eval_reset(x, self)

    def is_constrained(self, rtol: float = 1e-12) -> bool:
        return (
            self.g == 0.0
            and np.isclose(self.q, self.mean_income, rtol=rtol, atol=0)
            and np.isclose(self.K, 3 * self.beta, rtol=rtol, atol=0)
            and np.isclose(self.b, 5 * self.beta * self.mean_income, rtol=rtol, atol=0)
        )

    def rates(self) -> "Rates":
        return Rates(
            growth=self.growth,
            reset=self.reset,
            growth_affine=(self.beta * self.g, self.beta),
            reset_hyperbolic=(self.K, self.b, self.q),
        )

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "KernelParams":
        keys = ("beta", "g", "K", "b", "q", "mean_income")
        missing = [k for k in keys if k not in d]
        if missing:
            raise ValidationError(f"kernel parameters missing keys: {missing}")
        return cls(**{k: d[k] for k in keys})

    @classmethod
    def from_json(cls, text: str) -> "KernelParams":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class Rates:
    """Evaluation interface the integrators and simulators consume.

    ``growth_affine = (c0, c1)`` declares ``mu(x) = c0 + c1 x``;
    ``reset_hyperbolic = (K, b, q)`` declares ``gamma(x) = K - b / (x + q)``.
    The Monte Carlo simulator needs both; the deterministic integrators only
    call ``growth`` and ``reset``.
    """

    growth: Callable
    reset: Callable
    growth_affine: tuple | None = None
    reset_hyperbolic: tuple | None = None


def as_rates(kernel) -> Rates:
    if isinstance(kernel, Rates):
        return kernel
    if isinstance(kernel, KernelParams):
        return kernel.rates()
    raise ValidationError(f"expected KernelParams or Rates, got {type(kernel).__name__}")


def constant_rates(mu0: float, gamma0: float) -> Rates:
    """Income-independent kernels ``mu(x) = mu0``, ``gamma(x) = gamma0``."""
    mu0, gamma0 = float(mu0), float(gamma0)
    if mu0 < 0:
        raise ValidationError("mu0 must be >= 0")
    return Rates(
        growth=lambda x: np.full_like(np.asarray(x, dtype=float), mu0),
        reset=lambda x: np.full_like(np.asarray(x, dtype=float), gamma0),
        growth_affine=(mu0, 0.0),
        reset_hyperbolic=(gamma0, 0.0, 1.0),
    )


def _income(x):
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise ValidationError("income must be >= 0")
    return x


def eval_growth(x, p: KernelParams):
    """Growth rate ``beta * (x + g)`` in 1/year (scalar or array)."""
    return p.beta * (_income(x) + p.g)


def eval_reset(x, p: KernelParams):
    """Reset rate ``K - b / (x + q)``; negative values mean net entry."""
    return p.K - p.b / (_income(x) + p.q)


def constrain(beta: float, mean_income: float) -> KernelParams:
    """Kernel constants fixed by head-count and income conservation (g = 0)."""
    if not beta > 0 or not mean_income > 0:
        raise ValidationError("beta and mean_income must both be > 0")
    return KernelParams(
        beta=beta, g=0.0, K=3.0 * beta, b=5.0 * beta * mean_income, q=mean_income,
        mean_income=mean_income,
    )


def conservation_checks(kernel, density: DensityGrid, tail_rtol: float = TAIL_RTOL):
    """Net rates of change of head count and total income under ``density``.

    Returns ``(delta_N, delta_W)`` with ``delta_N = int gamma rho`` and
    ``delta_W = int (mu - x gamma) rho``.  On point grids the parts of the
    integrals outside the grid are added by power-law extrapolation; if the
    extrapolation uncertainty exceeds ``tail_rtol`` times the integral of the
    absolute integrand, the grid is too short and :class:`TruncationError`
    is raised.
    """
    rates = as_rates(kernel)
    try:
        density.check_normalized()
    except NormalizationError as exc:
        raise NormalizationError(f"conservation_checks needs a normalised density: {exc}") from None

    x = density.x
    f_n = rates.reset(x) * density.density
    f_w = (rates.growth(x) - x * rates.reset(x)) * density.density
    if density.is_cells:
        return density.integrate(f_n), density.integrate(f_w)

    out = []
    for f, label in ((f_n, "delta_N"), (f_w, "delta_W")):
        quad = integrate(x, f)
        scale = integrate(x, np.abs(f)).value
        if quad.tail_err > tail_rtol * scale:
            raise TruncationError(
                f"{label}: tail beyond x={x[-1]:.4g} is uncertain by {quad.tail_err:.3g}, "
                f"more than {tail_rtol:g} of the integral scale {scale:.3g}; extend the grid"
            )
        out.append(quad.value)
    return out[0], out[1]
