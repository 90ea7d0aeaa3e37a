import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp
from scipy.integrate import quad

from growreset.analytic import pearson_type1_pdf
from growreset.dynamics import (DiscreteState, cfl_bound, discretize_rates, exponential_cells,
                                integrate_continuous, run_to_steady, step_continuous, step_discrete,
                                write_run)
from growreset.errors import NegativeDensityError, StabilityError, TruncationError, ValidationError
from growreset.grid import DensityGrid, geometric_cells, linear_cells
from growreset.kernels import KernelParams, constant_rates, constrain


def delta(n, size):
    P = np.zeros(size)
    P[n] = 1.0
    return DiscreteState(P)


def test_zero_generator_leaves_state_unchanged():
    P = np.append(np.full(10, 0.1), 0.0)
    s = DiscreteState(P)
    s2 = step_discrete(s, 0.0, 0.0, 0.3)
    np.testing.assert_array_equal(s2.P, s.P)
    assert s2.t == pytest.approx(0.3)


def test_single_euler_step():
    s = step_discrete(delta(5, 20), 1.0, 0.0, 0.01)
    assert s.P[5] == pytest.approx(0.99, abs=1e-15)
    assert s.P[6] == pytest.approx(0.01, abs=1e-15)
    assert s.P.sum() == pytest.approx(1.0, abs=1e-15)


def test_stability_bound_enforced():
    with pytest.raises(StabilityError):
        step_discrete(delta(0, 10), 1.0, 0.25, 0.5)


def test_truncation_guard():
    with pytest.raises(TruncationError):
        step_discrete(delta(8, 10), 1.0, 0.0, 0.4)


@given(P=hnp.arrays(float, 30, elements=st.floats(0, 1)), mu=st.floats(0, 5), gam=st.floats(-2, 2))
def test_discrete_step_conserves_probability(P, mu, gam):
    if P.sum() == 0:
        P[0] = 1.0
    P[-3:] = 0.0
    P = P / P.sum()
    n = np.arange(30)
    mu_n = mu * (1 + 0.1 * n)
    gamma_n = gam * np.tanh(n - 10.0)
    dt = 0.5 / np.max(mu_n + np.maximum(gamma_n, 0)) if np.max(mu_n + np.maximum(gamma_n, 0)) > 0 else 0.1
    s = DiscreteState(P)
    try:
        s2 = step_discrete(s, mu_n, gamma_n, dt * 0.1)
    except (NegativeDensityError, TruncationError):
        return
    assert s2.P.sum() == pytest.approx(1.0, abs=1e-12)


def test_geometric_steady_state():
    s = delta(0, 151)
    res = run_to_steady(s, (1.0, 0.25), dt=0.4, tol=1e-9)
    ref = 0.2 * 0.8 ** np.arange(151)
    assert res.converged
    assert res.elapsed < 100 / 0.25
    assert np.abs(res.state.P - ref).sum() < 1e-6


def test_run_to_steady_validates_tol():
    with pytest.raises(ValidationError):
        run_to_steady(delta(0, 20), (1.0, 0.25), dt=0.1, tol=0.0)


def test_run_to_steady_snapshots_and_max_time():
    res = run_to_steady(delta(0, 200), (1.0, 0.25), dt=0.4, tol=1e-14, max_time=4.0, snapshot_every=5)
    assert not res.converged
    assert res.steps == 10 and len(res.history) == 2


def test_discretize_rates():
    mu_n, gamma_n = discretize_rates(constrain(0.5, 1.0), 0.01, 5)
    np.testing.assert_allclose(mu_n, 0.5 * 0.01 * np.arange(5) / 0.01)
    assert gamma_n[0] == pytest.approx(-1.0)


def test_discrete_converges_to_continuous_first_order():
    # constant rates: continuous stationary density 0.5 exp(-0.5 x)
    errs = []
    for dx in (0.5, 0.25, 0.125):
        n = int(80 / dx)
        mu_n, gamma_n = discretize_rates(constant_rates(1.0, 0.5), dx, n)
        P = np.zeros(n)
        P[0] = 1.0
        res = run_to_steady(DiscreteState(P, dx), (mu_n, gamma_n), dt=0.5 / (1 / dx + 0.5), tol=1e-10)
        d = res.state.as_density()
        cell = (np.exp(-0.5 * d.edges[:-1]) - np.exp(-0.5 * d.edges[1:])) / dx
        errs.append(d.l1_distance(cell))
    r1, r2 = errs[0] / errs[1], errs[1] / errs[2]
    assert 1.7 < r1 < 2.3 and 1.7 < r2 < 2.3


# --------------------------------------------------------------------------- continuous


def test_continuous_zero_rates_unchanged():
    e, c = linear_cells(10, 50)
    d = exponential_cells(e, c, 2.0)
    d2 = step_continuous(d, constant_rates(0.0, 0.0), 0.1)
    np.testing.assert_array_equal(d2.density, d.density)


def test_continuous_cfl_and_point_grid_rejected():
    e, c = linear_cells(10, 100)
    d = exponential_cells(e, c, 2.0)
    bound = cfl_bound(d, constant_rates(1.0, 0.0))
    assert bound == pytest.approx(0.1)
    with pytest.raises(StabilityError):
        step_continuous(d, constant_rates(1.0, 0.0), 0.11)
    with pytest.raises(ValidationError):
        step_continuous(DensityGrid(c, d.density), constant_rates(1.0, 0.0), 0.01)


@given(mu=st.floats(0.0, 3.0), k=st.floats(-1.0, 2.0), frac=st.floats(0.01, 1.0))
def test_continuous_step_conserves_mass(mu, k, frac):
    e, c = geometric_cells(0.01, 1e3, 400, zero_start=True)
    d = exponential_cells(e, c, 1.0)
    p = KernelParams(beta=max(mu, 1e-3), g=1.0, K=max(k, 0.0) + 0.5, b=0.2, q=1.0, mean_income=1.0)
    dt = frac * cfl_bound(d, p)
    try:
        d2 = step_continuous(d, p, dt)
    except NegativeDensityError:
        return
    assert abs(d2.mass() - 1.0) < 1e-9 * max(dt, 1.0)


def test_negative_density_reported():
    e, c = geometric_cells(1e-3, 1e5, 400, zero_start=True)
    d = exponential_cells(e, c, 1.0)
    p = constrain(1.0, 1.0)
    with pytest.raises(NegativeDensityError):
        integrate_continuous(d, p, 5.0)


def test_constant_rate_pde_converges():
    e, c = linear_cells(60, 1500)
    d = exponential_cells(e, c, 1.0)
    f, _, info = integrate_continuous(d, constant_rates(1.0, 0.5), 40.0)
    assert f.l1_distance(lambda x: 0.5 * np.exp(-0.5 * x)) < 1e-2
    assert info["mass"] == pytest.approx(1.0, abs=1e-9)


def test_stable_pearson_kernel_pde_converges():
    # gamma > 0 everywhere: the stationary state is the Pearson type I density
    p = KernelParams(beta=1, g=1, K=3, b=2, q=2, mean_income=1)
    e, c = geometric_cells(0.02, 1e4, 800, zero_start=True)
    d = exponential_cells(e, c, 1.0)
    f, _, _ = integrate_continuous(d, p, 20.0)
    pdf = lambda x: pearson_type1_pdf(x, p)
    ref = np.array([quad(pdf, a, b)[0] for a, b in zip(e[:-1], e[1:])]) / np.diff(e)
    assert f.l1_distance(ref) < 1e-2


def test_run_to_steady_continuous_and_write_run(tmp_path):
    e, c = linear_cells(60, 600)
    d = exponential_cells(e, c, 1.0)
    r = constant_rates(1.0, 0.5)
    res = run_to_steady(d, r, dt=0.09, tol=1e-6)
    assert res.converged
    assert res.state.mass() == pytest.approx(1.0, abs=1e-9)
    final, snaps, info = integrate_continuous(d, r, 1.0, snapshot_every=3)
    path = write_run(tmp_path, final, snaps, info)
    meta = json.loads(path.read_text())
    assert meta["final"] == "density_final.csv" and len(meta["snapshots"]) == len(snaps)
    back = DensityGrid.from_csv(tmp_path / "density_final.csv")
    np.testing.assert_array_equal(back.density, final.density)
    np.testing.assert_array_equal(back.edges, final.edges)
