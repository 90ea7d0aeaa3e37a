"""Stochastic agent realisation of the growth-and-reset process and a synthetic panel generator.

The ensemble simulator is exact in continuous time.  Growth between events is
drawn in closed form: a pure birth process with affine jump rate
``c0 + c1 n`` advances by a negative binomial number of quanta over any
interval (a Poisson number when ``c1 = 0``), so an agent only has to be
brought up to date when something happens to it.  Removals are found by
thinning a uniform candidate stream at rate ``N * sup(gamma+)``.  Every
removal is paired with an injection that keeps ``N`` fixed: a clone of a
living agent chosen with weight ``|gamma-(x)|`` with probability
``Gamma- / Gamma+`` (population averages), otherwise a new agent at
``inject_income``.
"""

from __future__ import annotations

import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from numba import njit

from .errors import ValidationError
from .kernels import KernelParams, as_rates

log = logging.getLogger(__name__)

MIN_AGENTS = 1000
BLOCK_SIZE = 25_000
QUANTA_PER_MEAN = 200
CLONE_ATTEMPTS = 10_000
SYNC_FACTOR = 0.05


# --------------------------------------------------------------------------- event kernel


@njit(cache=True)
def _advance(n, dtau, c0, c1):
    if dtau <= 0.0:
        return n
    if c1 > 0.0:
        r = n + c0 / c1
        if r <= 0.0:
            return n
        lam = np.random.gamma(r, np.expm1(c1 * dtau))
        return n + np.random.poisson(lam)
    if c0 > 0.0:
        return n + np.random.poisson(c0 * dtau)
    return n


@njit(cache=True)
def _reset_rate(n, dx, K, b, q):
    return K - b / (n * dx + q)


@njit(cache=True)
def _sync(n, tau, t, dx, c0, c1, K, b, q):
    gp = 0.0
    gm = 0.0
    for i in range(n.size):
        n[i] = _advance(n[i], t - tau[i], c0, c1)
        tau[i] = t
        g = _reset_rate(n[i], dx, K, b, q)
        if g > 0.0:
            gp += g
        else:
            gm -= g
    return gp / n.size, gm / n.size


@njit(cache=True)
def _run_block(n, stops, record, dx, c0, c1, K, b, q, lam_plus, gmax_minus, inject_n, seed):
    np.random.seed(seed)
    size = n.size
    tau = np.zeros(size)
    n_snap = 0
    for k in range(record.size):
        if record[k]:
            n_snap += 1
    snaps = np.empty((n_snap, size))
    removals = 0
    clones = 0
    t = 0.0
    gp, gm = _sync(n, tau, t, dx, c0, c1, K, b, q)
    s = 0
    total = size * lam_plus
    for k in range(stops.size):
        stop = stops[k]
        while total > 0.0:
            wait = np.random.exponential(1.0 / total)
            if t + wait >= stop:
                break  # memoryless: the remaining wait is redrawn after the stop
            t += wait
            i = np.random.randint(0, size)
            n[i] = _advance(n[i], t - tau[i], c0, c1)
            tau[i] = t
            g = _reset_rate(n[i], dx, K, b, q)
            if np.random.random() * lam_plus >= g:
                continue
            removals += 1
            placed = False
            if gm > 0.0 and gp > 0.0 and np.random.random() * gp < gm:
                for _ in range(CLONE_ATTEMPTS):
                    j = np.random.randint(0, size - 1)
                    if j >= i:
                        j += 1
                    n[j] = _advance(n[j], t - tau[j], c0, c1)
                    tau[j] = t
                    w = -_reset_rate(n[j], dx, K, b, q)
                    if w > 0.0 and np.random.random() * gmax_minus < w:
                        n[i] = n[j]
                        placed = True
                        clones += 1
                        break
            if not placed:
                n[i] = inject_n
        t = stop
        gp, gm = _sync(n, tau, t, dx, c0, c1, K, b, q)
        if record[k]:
            for i in range(size):
                snaps[s, i] = n[i] * dx
            s += 1
    return snaps, removals, clones


# --------------------------------------------------------------------------- ensemble API


@dataclass
class AgentEnsemble:
    """Agent incomes at the requested snapshot times.

    ``snapshots[k]`` holds all ``N`` incomes at ``times[k]``; the last entry
    is the state at ``t_end``.
    """

    times: np.ndarray
    snapshots: list
    dx: float
    seed: int
    blocks: int
    meta: dict = field(default_factory=dict)

    @property
    def N(self) -> int:
        return int(self.snapshots[-1].size)

    @property
    def t(self) -> float:
        return float(self.times[-1])

    @property
    def incomes(self) -> np.ndarray:
        return self.snapshots[-1]

    def write(self, out_dir, prefix: str = "ensemble") -> Path:
        """Income-sample CSVs (one per snapshot) and a JSON run manifest."""
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        files = []
        for k, x in enumerate(self.snapshots):
            name = f"{prefix}_{k:04d}.csv"
            with open(out_dir / name, "w", encoding="utf-8", newline="\n") as fh:
                fh.write("income\n")
                fh.writelines(f"{v!r}\n" for v in x.tolist())
            files.append(name)
        manifest = {"times": [float(t) for t in self.times], "files": files, "dx": self.dx,
                    "seed": self.seed, "blocks": self.blocks, "N": self.N, **self.meta}
        path = out_dir / f"{prefix}.json"
        path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        return path


def read_samples(path) -> np.ndarray:
    """Read an ``income`` sample CSV written by :meth:`AgentEnsemble.write`."""
    return np.loadtxt(path, delimiter=",", skiprows=1, ndmin=1)


def _block_job(args):
    return _run_block(*args)


def _stop_times(t_end, snapshot_times, sync_dt):
    snaps = np.unique(np.append(np.asarray(snapshot_times, dtype=float), t_end))
    if np.any(snaps <= 0) or snaps[-1] > t_end:
        raise ValidationError("snapshot times must lie in (0, t_end]")
    stops = snaps
    if sync_dt is not None:
        stops = np.unique(np.concatenate([snaps, np.arange(1, int(t_end / sync_dt) + 1) * sync_dt]))
        stops = stops[stops <= t_end]
    record = np.isin(stops, snaps)
    return snaps, stops, record


def simulate_ensemble(kernel, N: int, t_end: float, seed: int = 0, dx: float | None = None,
                      snapshot_times=(), initial=None, inject_income: float = 0.0,
                      workers: int = 1, blocks: int | None = None,
                      sync_dt: float | None = None) -> AgentEnsemble:
    """Simulate ``N`` agents to ``t_end`` years.

    Parameters
    ----------
    kernel : KernelParams or Rates
        Rates must declare ``growth_affine`` and ``reset_hyperbolic``.
    dx : float, optional
        Income quantum; defaults to ``mean_income / 200`` for ``KernelParams``.
    initial : array, optional
        Starting incomes (length ``N``).  Defaults to an exponential with mean
        ``mean_income`` for ``KernelParams`` and to zero otherwise.
    workers, blocks :
        Agents are split into ``blocks`` independent sub-populations (default
        one per 25 000 agents), each with its own stream spawned from
        ``seed``; ``workers`` processes run them.  Results depend on
        ``blocks`` but not on ``workers``.
    sync_dt : float, optional
        Interval at which the population averages ``Gamma+`` and ``Gamma-``
        steering the clone/zero split are refreshed.  Only used when the
        reset rate can be negative.
    """
    rates = as_rates(kernel)
    if rates.growth_affine is None or rates.reset_hyperbolic is None:
        raise ValidationError("simulate_ensemble needs affine growth and hyperbolic reset parameters")
    N = int(N)
    if N < MIN_AGENTS:
        raise ValidationError(f"N={N} is below the minimum of {MIN_AGENTS} agents")
    if not t_end > 0:
        raise ValidationError("t_end must be > 0")
    a0, a1 = map(float, rates.growth_affine)
    K, b, q = map(float, rates.reset_hyperbolic)
    if not all(np.isfinite(v) for v in (a0, a1, K, b, q)) or a0 < 0 or a1 < 0 or q <= 0:
        raise ValidationError("rates must be finite with non-negative growth and q > 0")
    if dx is None:
        if not isinstance(kernel, KernelParams):
            raise ValidationError("dx is required for generic rates")
        dx = kernel.mean_income / QUANTA_PER_MEAN
    if not dx > 0:
        raise ValidationError("dx must be > 0")

    # sup of the removal rate and of the clone weight over x >= 0
    g0 = K - b / q
    lam_plus = max(K, 0.0) if b >= 0 else g0
    gmax_minus = max(-g0, 0.0) if b >= 0 else max(-K, 0.0)
    if gmax_minus > 0 and sync_dt is None:
        c_top = max(lam_plus, gmax_minus, a1, 1e-12)
        sync_dt = SYNC_FACTOR / c_top
    if gmax_minus == 0:
        sync_dt = None

    blocks = int(blocks) if blocks is not None else max(1, -(-N // BLOCK_SIZE))
    if not 1 <= blocks <= N // 2:
        raise ValidationError("blocks must be between 1 and N/2")
    sizes = np.full(blocks, N // blocks)
    sizes[: N % blocks] += 1
    children = np.random.SeedSequence(seed).spawn(blocks)

    if initial is not None:
        initial = np.asarray(initial, dtype=float)
        if initial.shape != (N,) or np.any(initial < 0) or not np.all(np.isfinite(initial)):
            raise ValidationError("initial must hold N finite, non-negative incomes")
    snaps, stops, record = _stop_times(float(t_end), snapshot_times, sync_dt)

    jobs = []
    offset = 0
    for k, (size, child) in enumerate(zip(sizes, children)):
        gen = np.random.default_rng(child)
        if initial is not None:
            x0 = initial[offset: offset + size]
        elif isinstance(kernel, KernelParams):
            x0 = gen.exponential(kernel.mean_income, size)
        else:
            x0 = np.zeros(size)
        offset += size
        n0 = np.rint(x0 / dx).astype(np.int64)
        block_seed = int(child.generate_state(1)[0] % (2**31 - 1))
        jobs.append((n0, stops, record, float(dx), a0 / dx, a1, K, b, q, lam_plus, gmax_minus,
                     int(round(inject_income / dx)), block_seed))

    if workers > 1 and blocks > 1:
        with ProcessPoolExecutor(max_workers=min(workers, blocks)) as pool:
            results = list(pool.map(_block_job, jobs))
    else:
        results = [_block_job(j) for j in jobs]

    snapshots = [np.concatenate([r[0][k] for r in results]) for k in range(snaps.size)]
    meta = {
        "removals": int(sum(r[1] for r in results)),
        "clones": int(sum(r[2] for r in results)),
        "sync_dt": sync_dt,
        "inject_income": float(inject_income),
    }
    if isinstance(kernel, KernelParams):
        meta["kernel"] = kernel.to_dict()
    return AgentEnsemble(snaps, snapshots, float(dx), int(seed), blocks, meta)


# --------------------------------------------------------------------------- synthetic panels


@dataclass
class SyntheticPanelConfig:
    """Synthetic employee panel.

    Continuing employees grow by ``u (w + g) (1 + noise * eps)`` per year
    with standard normal ``eps``.  If ``kernel`` is given, an employee with
    income ``w`` leaves after the year with probability
    ``1 - exp(-max(gamma(w), 0))`` and entrants replace the leavers in
    expectation.  Without a kernel the population is closed.
    """

    years: int = 6
    population: int = 50_000
    u: float = 0.21
    g: float = 0.0
    noise: float = 0.3
    kernel: KernelParams | None = None
    mean_income: float = 767.0
    initial_a: float = 5.0
    entry: str = "resample"
    entry_lognormal: tuple = (0.5, 0.5)
    first_year: int = 2000
    seed: int = 0

    def __post_init__(self):
        if isinstance(self.kernel, dict):
            self.kernel = KernelParams.from_dict(self.kernel)
        if int(self.years) < 2:
            raise ValidationError("years must be >= 2")
        if int(self.population) < 1:
            raise ValidationError("population must be >= 1")
        if not self.noise >= 0:
            raise ValidationError("noise must be >= 0")
        if not self.mean_income > 0 or self.g < 0 or not np.isfinite(self.u):
            raise ValidationError("need mean_income > 0, g >= 0 and finite u")
        if self.entry not in ("resample", "lognormal"):
            raise ValidationError("entry must be 'resample' or 'lognormal'")
        if not self.initial_a > 3:
            raise ValidationError("initial_a must be > 3 (shape s = a - 2 > 1)")
        self.entry_lognormal = tuple(float(v) for v in self.entry_lognormal)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["kernel"] = None if self.kernel is None else self.kernel.to_dict()
        d["entry_lognormal"] = list(self.entry_lognormal)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SyntheticPanelConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ValidationError(f"unknown panel config keys: {sorted(unknown)}")
        return cls(**d)


def sample_beta_prime(gen, a: float, s: float, mean: float, size: int) -> np.ndarray:
    """Draws from the mean-rescaled Beta prime via a ratio of gamma variates."""
    ratio = (a - s) / (s - 1.0)
    y = gen.gamma(a - s, size=size) / gen.gamma(s, size=size)
    return mean * y / ratio


def generate_panel(cfg: SyntheticPanelConfig):
    """Employee-year records drawn from the configured growth and entry/exit rules."""
    from .estimation import PanelDataset

    gen = np.random.default_rng(np.random.SeedSequence(cfg.seed))
    floor = 1e-6 * cfg.mean_income
    w = sample_beta_prime(gen, cfg.initial_a, cfg.initial_a - 2.0, cfg.mean_income, int(cfg.population))
    w = np.maximum(w, floor)
    ids = np.arange(w.size, dtype=np.int64)
    next_id = w.size
    out_ids, out_years, out_w = [ids], [np.full(w.size, cfg.first_year, dtype=np.int64)], [w]

    for k in range(1, int(cfg.years)):
        if cfg.kernel is not None:
            gam = cfg.kernel.reset(w)
            leave = gen.random(w.size) < -np.expm1(-np.maximum(gam, 0.0))
            ids, w = ids[~leave], w[~leave]
        eps = gen.standard_normal(w.size)
        w = np.maximum(w + cfg.u * (w + cfg.g) * (1.0 + cfg.noise * eps), floor)
        if cfg.kernel is not None:
            n_in = gen.poisson(max(int(cfg.population) - w.size, 0))
            w_in = _entry_incomes(gen, cfg, w, n_in)
            ids = np.concatenate([ids, np.arange(next_id, next_id + n_in, dtype=np.int64)])
            w = np.concatenate([w, w_in])
            next_id += n_in
        out_ids.append(ids)
        out_years.append(np.full(w.size, cfg.first_year + k, dtype=np.int64))
        out_w.append(w)

    return PanelDataset(np.concatenate(out_ids), np.concatenate(out_years), np.concatenate(out_w),
                        meta={"source": "generate_panel", "config": cfg.to_dict()})


def _entry_incomes(gen, cfg: SyntheticPanelConfig, w, n_in):
    if n_in == 0:
        return np.empty(0)
    if cfg.entry == "lognormal":
        median, sigma = cfg.entry_lognormal
        return gen.lognormal(np.log(median * cfg.mean_income), sigma, n_in)
    weight = np.maximum(-cfg.kernel.reset(w), 0.0)
    if weight.sum() == 0:
        log.warning("no negative reset weight; entrants placed at the lowest income")
        return np.full(n_in, w.min() if w.size else cfg.mean_income)
    return gen.choice(w, size=n_in, p=weight / weight.sum())
