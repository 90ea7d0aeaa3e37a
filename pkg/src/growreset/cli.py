"""Command-line entry point: ``python -m growreset <command> ...``.

Every command reads an optional JSON config (``--config``) whose top level
may hold ``seed`` and ``out`` plus one block per command name; flags given
on the command line override the config.  Outputs go to ``--out`` and never
contain timestamps or absolute paths, so reruns are byte-identical.

Exit codes: 0 success, 1 runtime failure, 2 invalid input or usage.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import traceback
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import analytic, dynamics, estimation, fitting, montecarlo
from .errors import GrowResetError, ValidationError
from .grid import DensityGrid, geometric_cells
from .kernels import KernelParams, constant_rates, constrain

log = logging.getLogger("growreset")

DEFAULT_SEED = 20240101
COMMANDS = ("synth", "estimate", "fit", "collapse", "simulate", "integrate", "stationary")


@dataclass
class RunConfig:
    command: str
    out: Path
    seed: int = DEFAULT_SEED
    quiet: bool = False
    options: dict = field(default_factory=dict)


def _dump(path: Path, obj) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _say(cfg: RunConfig, msg: str) -> None:
    if not cfg.quiet:
        print(msg)


def _kernel(opts: dict):
    """KernelParams or constant Rates from the ``kernel`` block or shortcut flags."""
    k = opts.get("kernel")
    if isinstance(k, dict):
        if "mu0" in k:
            return constant_rates(k["mu0"], k["gamma0"])
        if set(k) == {"beta", "mean_income"}:
            return constrain(k["beta"], k["mean_income"])
        return KernelParams.from_dict(k)
    if opts.get("mu0") is not None:
        return constant_rates(opts["mu0"], opts.get("gamma0") or 0.0)
    beta = opts.get("beta")
    mean = opts.get("mean_income")
    if beta is None or mean is None:
        raise ValidationError("give a kernel block in the config or --beta and --mean-income")
    return constrain(beta, mean)


def _kernel_dict(kernel):
    return kernel.to_dict() if isinstance(kernel, KernelParams) else {
        "mu0": kernel.growth_affine[0], "gamma0": kernel.reset_hyperbolic[0]}


def _input(path) -> Path:
    if path is None:
        raise ValidationError("missing input path")
    p = Path(path)
    if not p.exists():
        raise ValidationError(f"input {p.name} does not exist")
    return p


def _samples_density(path, binning="log2") -> DensityGrid:
    x = montecarlo.read_samples(_input(path))
    x = x[x > 0] if binning == "log2" else x
    d = estimation.histogram_samples(x, binning)
    d.meta["source"] = Path(path).name
    return d


def _unit_mean(d: DensityGrid) -> DensityGrid:
    mean = d.meta.get("mean")
    if mean is None:
        mean = d.mean()
    return d if abs(mean - 1.0) < 1e-12 else estimation.rescale(d, mean)


# --------------------------------------------------------------------------- commands


def cmd_synth(cfg: RunConfig) -> None:
    opts = dict(cfg.options)
    shortcut = {k: opts.pop(k) for k in ("beta",) if k in opts}
    if "beta" in shortcut and shortcut["beta"] is not None and "kernel" not in opts:
        opts["kernel"] = constrain(shortcut["beta"], opts.get("mean_income", 767.0))
    elif "kernel" not in opts:
        opts["kernel"] = constrain(0.057, opts.get("mean_income", 767.0))
    opts["seed"] = cfg.seed
    pcfg = montecarlo.SyntheticPanelConfig.from_dict(opts)
    panel = montecarlo.generate_panel(pcfg)
    panel.to_csv(cfg.out / "panel.csv")
    _dump(cfg.out / "panel.json", {"config": pcfg.to_dict(), "rows": len(panel),
                                   "employees": panel.n_employees, "file": "panel.csv"})
    _say(cfg, f"synth: {len(panel)} records, {panel.n_employees} employees -> panel.csv")


def cmd_estimate(cfg: RunConfig) -> None:
    o = cfg.options
    panel = estimation.PanelDataset.from_csv(_input(o.get("panel")))
    if len(panel) == 0:
        raise ValidationError("panel is empty")
    yr = o.get("years")
    y0, y1 = (int(panel.years[0]), int(panel.years[-1])) if yr is None else map(int, yr)
    min_count = int(o.get("min_count") or estimation.MIN_COUNT)
    summary = {"panel": Path(o["panel"]).name, "year_range": [y0, y1], "min_count": min_count,
               "malformed_rows": panel.meta.get("malformed_rows", 0)}

    growth = estimation.growth_increments(panel, (y0, y1), min_count)
    growth.meta["source"] = summary["panel"]
    growth.to_csv(cfg.out / "growth.csv")
    summary["growth_bins"] = len(growth)
    if y1 - y0 + 1 >= 3:
        reset = estimation.reset_rates(panel, (y0, y1), min_count)
        reset.meta["source"] = summary["panel"]
        reset.to_csv(cfg.out / "reset.csv")
        summary["reset_bins"] = len(reset)
        summary["excluded_employees"] = reset.meta["excluded_employees"]
    else:
        summary["reset_bins"] = None
        summary["reset_note"] = "reset rates need at least 3 years"
    year = int(o.get("hist_year") or y1)
    hist = estimation.income_histogram(panel, year, o.get("binning") or "log2")
    hist.meta["source"] = summary["panel"]
    hist.to_csv(cfg.out / "histogram.csv")
    summary["histogram_year"] = year
    summary["histogram_mean"] = hist.meta["mean"]
    _dump(cfg.out / "estimate.json", summary)
    _say(cfg, f"estimate: {len(growth)} growth bins, {summary['reset_bins']} reset bins, "
              f"histogram of {year}")


def cmd_fit(cfg: RunConfig) -> None:
    o = cfg.options
    done = []
    if o.get("density") or o.get("samples"):
        if o.get("density"):
            d = DensityGrid.from_csv(_input(o["density"]))
            d.meta.setdefault("source", Path(o["density"]).name)
        else:
            d = _samples_density(o["samples"])
        rep = fitting.fit_beta_prime(_unit_mean(d), o.get("constraint") or "s=a-2")
        rep.write(cfg.out / "fit_beta_prime.json", cfg.out / "fit_beta_prime_residuals.csv")
        done.append(f"a={rep.params['a']:.4f} s={rep.params['s']:.4f}")
    if o.get("growth"):
        rep = fitting.fit_growth_C(estimation.LogBinnedSeries.from_csv(_input(o["growth"])))
        rep.write(cfg.out / "fit_growth.json", cfg.out / "fit_growth_residuals.csv")
        done.append(f"C={rep.params['C']:.4f} R2={rep.goodness:.4f}")
    if o.get("reset"):
        if o.get("mean_income") is None:
            raise ValidationError("fitting reset rates needs --mean-income")
        rep = fitting.fit_reset_beta(estimation.LogBinnedSeries.from_csv(_input(o["reset"])),
                                     float(o["mean_income"]))
        rep.write(cfg.out / "fit_reset.json", cfg.out / "fit_reset_residuals.csv")
        done.append(f"beta={rep.params['beta']:.5f}")
    if not done:
        raise ValidationError("nothing to fit: give --density, --samples, --growth or --reset")
    _say(cfg, "fit: " + ", ".join(done))


def cmd_collapse(cfg: RunConfig) -> None:
    o = cfg.options
    curves = [_unit_mean(DensityGrid.from_csv(_input(p))) for p in o.get("densities") or []]
    curves += [_unit_mean(_samples_density(p)) for p in o.get("samples") or []]
    if len(curves) < 2:
        raise ValidationError("collapse needs at least two curves")
    for k, c in enumerate(curves):
        c.to_csv(cfg.out / f"rescaled_{k:02d}.csv")
    score = fitting.collapse_metric(curves, int(o.get("n_grid") or 400))
    _dump(cfg.out / "collapse.json", {"score": score, "curves": len(curves),
                                      "files": [f"rescaled_{k:02d}.csv" for k in range(len(curves))]})
    _say(cfg, f"collapse: score {score:.4f} over {len(curves)} curves")


def cmd_simulate(cfg: RunConfig) -> None:
    o = cfg.options
    kernel = _kernel(o)
    ens = montecarlo.simulate_ensemble(
        kernel, int(o.get("agents") or 100_000), float(o.get("t_end") or 40.0), seed=cfg.seed,
        dx=o.get("dx"), snapshot_times=o.get("snapshots") or (), workers=int(o.get("workers") or 1),
        blocks=o.get("blocks"))
    ens.meta["kernel"] = _kernel_dict(kernel)
    ens.write(cfg.out)
    x = ens.incomes
    _say(cfg, f"simulate: N={ens.N} t={ens.t:g} mean={x.mean():.6g} zero-share={np.mean(x == 0):.4f}")


def _reference(kernel, x):
    if isinstance(kernel, KernelParams):
        if kernel.g == 0:
            return analytic.beta_prime_pdf(x, analytic.BetaPrimeShape.from_kernels(kernel)), "beta_prime"
        return analytic.pearson_type1_pdf(x, kernel), "pearson_type1"
    mu0, g0 = kernel.growth_affine[0], kernel.reset_hyperbolic[0]
    return (g0 / mu0) * np.exp(-g0 * x / mu0), "exponential"


def cmd_integrate(cfg: RunConfig) -> None:
    o = cfg.options
    kernel = _kernel(o)
    scale = kernel.mean_income if isinstance(kernel, KernelParams) else float(o.get("scale") or 1.0)
    lo, hi = o.get("span") or (1e-3, 1e5)
    edges, centres = geometric_cells(lo * scale, hi * scale, int(o.get("cells") or 4096), zero_start=True)
    state = dynamics.exponential_cells(edges, centres, scale)
    final, snaps, info = dynamics.integrate_continuous(
        state, kernel, float(o.get("t_end") or 100.0), cfl=float(o.get("cfl") or 0.9),
        snapshot_every=int(o.get("snapshot_every") or 0))
    ref, kind = _reference(kernel, final.x)
    info.update(kernel=_kernel_dict(kernel), reference=kind, l1_to_reference=final.l1_distance(ref))
    dynamics.write_run(cfg.out, final, snaps, info)
    _say(cfg, f"integrate: {info['steps']} steps, L1 to {kind} = {info['l1_to_reference']:.3g}")


def cmd_stationary(cfg: RunConfig) -> None:
    o = cfg.options
    kernel = _kernel(o)
    if not isinstance(kernel, KernelParams):
        raise ValidationError("stationary needs kernel constants (beta, g, K, b, q, mean_income)")
    span = o.get("span") or analytic.DEFAULT_SPAN
    x = analytic.default_grid(kernel.mean_income, int(o.get("points") or analytic.DEFAULT_POINTS), span)
    d = analytic.stationary_from_params(kernel, x)
    ref, kind = _reference(kernel, x)
    rel = float(np.max(np.abs(d.density - ref) / ref))
    d.meta.update(kernel=kernel.to_dict(), reference=kind, max_rel_err=rel)
    d.to_csv(cfg.out / "stationary.csv")
    _dump(cfg.out / "stationary.json", {"reference": kind, "max_rel_err": rel, "points": int(x.size),
                                        "file": "stationary.csv"})
    _say(cfg, f"stationary: {x.size} points, max rel. err vs {kind} {rel:.3g}")


HANDLERS = {
    "synth": cmd_synth, "estimate": cmd_estimate, "fit": cmd_fit, "collapse": cmd_collapse,
    "simulate": cmd_simulate, "integrate": cmd_integrate, "stationary": cmd_stationary,
}


# --------------------------------------------------------------------------- parsing


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON config file")
    common.add_argument("--seed", type=int, help=f"random seed (default {DEFAULT_SEED})")
    common.add_argument("--out", type=Path, help="output directory")
    common.add_argument("--quiet", action="store_true", default=None, help="suppress progress output")

    p = argparse.ArgumentParser(prog="growreset", parents=[common],
                                description="Growth-and-reset income distribution toolkit.")
    sub = p.add_subparsers(dest="command", required=True)
    S = argparse.SUPPRESS

    def kernel_flags(sp):
        sp.add_argument("--beta", type=float, default=S, help="constrained kernel rate constant")
        sp.add_argument("--mean-income", dest="mean_income", type=float, default=S)
        sp.add_argument("--mu0", type=float, default=S, help="constant growth rate (with --gamma0)")
        sp.add_argument("--gamma0", type=float, default=S)

    sp = sub.add_parser("synth", parents=[common], help="generate a synthetic panel")
    sp.add_argument("--years", type=int, default=S)
    sp.add_argument("--population", type=int, default=S)
    sp.add_argument("--u", type=float, default=S, help="growth coefficient per year")
    sp.add_argument("--g", type=float, default=S)
    sp.add_argument("--noise", type=float, default=S)
    sp.add_argument("--beta", type=float, default=S, help="constrained exit kernel rate constant")
    sp.add_argument("--mean-income", dest="mean_income", type=float, default=S)
    sp.add_argument("--entry", choices=("resample", "lognormal"), default=S)

    sp = sub.add_parser("estimate", parents=[common], help="bin growth, reset and income histogram")
    sp.add_argument("--panel", default=S)
    sp.add_argument("--years", type=int, nargs=2, metavar=("FIRST", "LAST"), default=S)
    sp.add_argument("--hist-year", dest="hist_year", type=int, default=S)
    sp.add_argument("--binning", choices=("log2", "linear"), default=S)
    sp.add_argument("--min-count", dest="min_count", type=int, default=S)

    sp = sub.add_parser("fit", parents=[common], help="fit growth, reset or Beta prime shape")
    sp.add_argument("--density", default=S, help="DensityGrid CSV")
    sp.add_argument("--samples", default=S, help="income sample CSV")
    sp.add_argument("--growth", default=S, help="growth series CSV")
    sp.add_argument("--reset", default=S, help="reset series CSV")
    sp.add_argument("--mean-income", dest="mean_income", type=float, default=S)
    sp.add_argument("--constraint", choices=("s=a-2", "free"), default=S)

    sp = sub.add_parser("collapse", parents=[common], help="score the collapse of rescaled curves")
    sp.add_argument("--densities", nargs="+", default=S)
    sp.add_argument("--samples", nargs="+", default=S)
    sp.add_argument("--n-grid", dest="n_grid", type=int, default=S)

    sp = sub.add_parser("simulate", parents=[common], help="Monte Carlo agent ensemble")
    kernel_flags(sp)
    sp.add_argument("--agents", type=int, default=S)
    sp.add_argument("--t-end", dest="t_end", type=float, default=S)
    sp.add_argument("--dx", type=float, default=S)
    sp.add_argument("--snapshots", type=float, nargs="+", default=S)
    sp.add_argument("--workers", type=int, default=S)
    sp.add_argument("--blocks", type=int, default=S)

    sp = sub.add_parser("integrate", parents=[common], help="finite-volume time integration")
    kernel_flags(sp)
    sp.add_argument("--t-end", dest="t_end", type=float, default=S)
    sp.add_argument("--cells", type=int, default=S)
    sp.add_argument("--span", type=float, nargs=2, default=S, help="grid span in units of the mean")
    sp.add_argument("--cfl", type=float, default=S)
    sp.add_argument("--snapshot-every", dest="snapshot_every", type=int, default=S)

    sp = sub.add_parser("stationary", parents=[common], help="stationary density by quadrature")
    kernel_flags(sp)
    sp.add_argument("--points", type=int, default=S)
    sp.add_argument("--span", type=float, nargs=2, default=S)
    return p


def resolve(args: argparse.Namespace, parser) -> RunConfig:
    file_cfg = {}
    if args.config is not None:
        if not args.config.exists():
            raise ValidationError(f"config {args.config.name} does not exist")
        try:
            file_cfg = json.loads(args.config.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ValidationError(f"config is not valid JSON: {exc}") from None
    opts = dict(file_cfg.get(args.command) or {})
    flags = {k: v for k, v in vars(args).items()
             if k not in ("config", "seed", "out", "quiet", "command") and v is not None}
    opts.update(flags)
    out = args.out if args.out is not None else file_cfg.get("out")
    if out is None:
        parser.error("an output directory is required (--out or 'out' in the config)")
    seed = args.seed if args.seed is not None else file_cfg.get("seed", DEFAULT_SEED)
    quiet = bool(args.quiet) if args.quiet is not None else bool(file_cfg.get("quiet", False))
    return RunConfig(args.command, Path(out), int(seed), quiet, opts)


def _origin(exc: BaseException) -> str:
    """Package module where ``exc`` was raised."""
    name = "growreset"
    for frame, _ in traceback.walk_tb(exc.__traceback__):
        mod = frame.f_globals.get("__name__", "")
        if mod.startswith("growreset."):
            name = mod
    return name


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve(args, parser)
        logging.basicConfig(level=logging.WARNING if cfg.quiet else logging.INFO,
                            format="%(levelname)s %(name)s: %(message)s")
        HANDLERS[cfg.command](cfg)
    except ValidationError as exc:
        print(f"error [{_origin(exc)}]: {exc}", file=sys.stderr)
        return 2
    except (GrowResetError, OSError) as exc:
        print(f"error [{_origin(exc)}]: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
