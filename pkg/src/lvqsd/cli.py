"""Command line entry point.

Every subcommand writes into ``<out>/<subcommand>/`` and finishes with a
``manifest.json``.  Exit codes: 0 success, 1 invalid input or config, 2
numerical failure, 3 output could not be written.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ConfigParseError, NumericalError, UnknownSubcommand, ValidationError
from .io import (
    DEFAULT_OUTPUT,
    OUTPUT_ENV,
    ExperimentConfig,
    IoError,
    RunManifest,
    default_model_dict,
    dumps_csv,
    dumps_json,
    emit_results,
    load_config,
)
from .model import DirichletHarness, KolmogorovModel, validate_params

SUBCOMMANDS = ("validate", "spectrum", "simulate", "yaglom", "classify", "scan", "diagnose")


# -- helpers ------------------------------------------------------------------------

def _harness(cfg: ExperimentConfig, args) -> DirichletHarness | None:
    if args.harness is None and cfg.harness is None:
        return None
    h = dict(cfg.harness or {})
    if args.dim is not None:
        h["dim"] = args.dim
    return DirichletHarness(int(h.get("dim", 1)), float(h.get("length", math.pi)))


def _model(cfg: ExperimentConfig, args):
    """The harness, an axis model or the two-type model, by flags and config."""
    harness = _harness(cfg, args)
    if harness is not None:
        return harness
    params = validate_params(cfg.model if cfg.model is not None else default_model_dict())
    km = KolmogorovModel(params)
    if args.axis is not None:
        return km.axis_model(args.axis)
    return km


def _grid(cfg: ExperimentConfig, model, default_n: int | None = None):
    from .spectral import Grid, auto_grid

    if model.dim == 1 and cfg.grid1d is not None:
        return Grid.from_dict(cfg.grid1d)
    if cfg.grid is not None and Grid.from_dict(cfg.grid).dim == model.dim:
        return Grid.from_dict(cfg.grid)
    if default_n is None:
        default_n = (400 if model.dim == 1 else 200) if isinstance(model, DirichletHarness) else (
            2000 if model.dim == 1 else 240)
    return auto_grid(model, n=default_n)


def _start(model, opts) -> np.ndarray:
    if "x0" in opts:
        return np.asarray(opts["x0"], dtype=float)
    if isinstance(model, DirichletHarness):
        return np.full(model.dim, model.length / 2)
    return np.ones(model.dim)


def _node_rows(res):
    cols = res.node_columns()
    return list(cols), zip(*cols.values())


# -- subcommands ----------------------------------------------------------------------

def cmd_validate(cfg, args):
    p = validate_params(cfg.model if cfg.model is not None else default_model_dict())
    print(f"valid; regime {p.regime.value}; alpha={p.alpha!r}")
    out = {"params": p.coefficients(), "alpha": p.alpha, "regime": p.regime.value,
           "determinant": p.determinant}
    return {"params.json": dumps_json(out)}, {}


def cmd_spectrum(cfg, args):
    from .spectral import solve_qsd

    opts = cfg.options
    model = _model(cfg, args)
    grid = _grid(cfg, model)
    res = solve_qsd(model, grid, k=int(opts.get("k", 2)),
                    discretization=opts.get("discretization", "ground_state"))
    if opts.get("check_truncation") and model.dim == 2 and not isinstance(model, DirichletHarness):
        from .spectral import truncation_check
        res.truncation = truncation_check(model, grid, res.lambda1, 1, 1e-10,
                                           res.discretization, 5e-3)
    print(f"lambda = {[float(v) for v in res.eigenvalues]}")
    header, rows = _node_rows(res)
    return {"spectrum.json": dumps_json(res.summary()),
            "nodes.csv": dumps_csv(header, rows)}, {}


def cmd_simulate(cfg, args):
    from .sde import SurvivalCurve, fit_killing_rate, simulate_paths

    opts = cfg.options
    model = _model(cfg, args)
    sim = cfg.sim_config()
    stopping = opts.get("stopping", "T_partialD")
    batch = simulate_paths(model, _start(model, opts), sim, stop=stopping)
    t_grid = np.linspace(0.0, sim.t_max, int(opts.get("n_times", 201)))
    curve = SurvivalCurve.from_times(batch.times(stopping), t_grid, stopping)
    summary = {"n_paths": batch.n_paths, "stopping": stopping,
               "n_censored": batch.n_censored(stopping),
               "exit_axis_counts": {str(k): int(np.sum(batch.exit_axis == k)) for k in (0, 1, 2)}}
    window = opts.get("fit_window")
    try:
        fit = fit_killing_rate(curve, tuple(window) if window else None)
        summary["fit"] = {"rate": fit.rate, "stderr": fit.stderr,
                          "chi2_per_dof": fit.chi2_per_dof}
    except NumericalError as exc:
        summary["fit"] = {"error": str(exc)}
    print(f"simulated {batch.n_paths} paths; fit {summary['fit']}")
    return ({"paths.csv": dumps_csv(["path", "T1", "T2", "T_partialD", "T0", "exit_axis"],
                                    batch.rows()),
             "survival.csv": dumps_csv(["t", "value", "stderr"], curve.rows()),
             "summary.json": dumps_json(summary)},
            {"sim": sim.seed})


def cmd_yaglom(cfg, args):
    from .conditioning import fleming_viot
    from .spectral import evolve_conditioned_law, fit_tv_decay, mollified_point_mass, solve_qsd

    opts = cfg.options
    model = _model(cfg, args)
    grid = _grid(cfg, model)
    res = solve_qsd(model, grid, k=2)
    sim = cfg.sim_config()
    part = cfg.particles
    fv = fleming_viot(model, int(part.get("n_particles", 2000)), sim,
                      t_burn=part.get("t_burn"), t_sample=float(part.get("t_sample", 20.0)),
                      grid=grid, lambda_ref=res.lambda1,
                      bins_per_axis=int(part.get("bins_per_axis", 20)))
    tv_fv = fv.histogram.tv_to_density(res.nu1, grid)

    gap = res.lambda2 - res.lambda1
    t_end = float(opts.get("t_end", 12.0 / gap))
    dt_pde = float(opts.get("dt_pde", t_end / 1000))
    p0 = mollified_point_mass(grid, _start(model, opts))
    traj = evolve_conditioned_law(model, grid, p0, t_end, dt_pde,
                                  record_every=int(opts.get("record_every", 5)))
    tv = traj.tv_to(res.nu1)
    try:
        rate = fit_tv_decay(traj.times, tv)
    except ValidationError:
        rate = None
    out = {"lambda": [float(v) for v in res.eigenvalues], "spectral_gap": gap,
           "tv_decay_rate": rate, "fleming_viot": fv.summary(), "fv_tv_to_nu1": tv_fv,
           "grid": grid.to_dict()}
    print(f"lambda1={res.lambda1!r} lambda_fv={fv.lambda_fv!r} tv_decay={rate!r}")
    cols = ["x1", "x2"][:grid.dim] + ["prob", "density"]
    return ({"yaglom.json": dumps_json(out),
             "fv_histogram.csv": dumps_csv(cols, fv.histogram.rows()),
             "conditioned_tv.csv": dumps_csv(["t", "tv", "survival"],
                                             zip(traj.times, tv, traj.survival))},
            {"sim": sim.seed})


def cmd_classify(cfg, args):
    from .regimes import run_regime_pipeline
    from .spectral import Grid

    opts = cfg.options
    params = validate_params(cfg.model if cfg.model is not None else default_model_dict())
    km = KolmogorovModel(params)
    part = cfg.particles
    grid2d = Grid.from_dict(cfg.grid) if cfg.grid else None
    grid1d = Grid.from_dict(cfg.grid1d) if cfg.grid1d else None
    sim = cfg.sim_config()
    report, mix = run_regime_pipeline(
        km, grid2d, grid1d, sim, n_particles=int(part.get("n_particles", 2000)),
        fv_t_sample=float(part.get("t_sample", 20.0)),
        rel_tol=float(opts.get("rel_tol", 0.02)),
        formula_variant=opts.get("formula_variant", "PROOF"),
        cross_check=bool(opts.get("cross_check", True)),
        check_truncation=bool(opts.get("check_truncation", False)))
    print(f"classification {report.classification.value}; weights {mix.weights}")
    files = {"report.json": dumps_json(report.to_dict()), "mixture.json": dumps_json(mix.to_dict())}
    coords = opts.get("coordinates", "x")
    for name, cols in mix.component_tables(coords, params).items():
        files[f"mixture_{name}.csv"] = dumps_csv(list(cols), zip(*cols.values()))
    return files, {"sim": sim.seed}


def cmd_scan(cfg, args):
    from .regimes import scan_phase_transition
    from .sde import SimConfig

    opts = cfg.options
    exit_cfg = None
    if int(opts.get("exit_paths", 0)) > 0:
        exit_cfg = SimConfig(dt=float(opts.get("exit_dt", 2e-3)), t_max=50.0,
                             seed=cfg.seed, n_paths=int(opts["exit_paths"]))
    res = scan_phase_transition(opts.get("c_values"), n_grid=int(opts.get("n_grid", 240)),
                                tol_c=float(opts.get("tol_c", 1e-2)), exit_cfg=exit_cfg,
                                max_horizon=float(opts.get("max_horizon", 1500.0)),
                                threads=args.threads)
    print(f"scan {res.status}; bracket {res.bracket}")
    return ({"scan.json": dumps_json(res.to_dict()),
             "scan.csv": dumps_csv(["c", "lambda1", "lambda_axis", "gap"], res.table())},
            {"exit": cfg.seed} if exit_cfg else {})


def cmd_diagnose(cfg, args):
    from .diagnostics import hypothesis_diagnostics

    opts = cfg.options
    params = validate_params(cfg.model if cfg.model is not None else default_model_dict())
    rep = hypothesis_diagnostics(params, opts.get("radii", [5, 10, 20, 50]),
                                 samples_per_shell=int(opts.get("samples_per_shell", 2**20)),
                                 eps_trunc=float(opts.get("eps_trunc", 1e-3)),
                                 series_terms=int(opts.get("series_terms", 40)),
                                 seed=cfg.seed)
    print(f"G exponent {rep.G_exponent:.3f}; V exponent {rep.V_exponent:.3f}; "
          f"min G {rep.G_min:.4g}")
    return {"diagnostics.json": dumps_json(rep.to_dict())}, {"sobol": cfg.seed}


COMMANDS = {"validate": cmd_validate, "spectrum": cmd_spectrum, "simulate": cmd_simulate,
            "yaglom": cmd_yaglom, "classify": cmd_classify, "scan": cmd_scan,
            "diagnose": cmd_diagnose}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigParseError(f"bad command line: {message}")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="lvqsd", description=__doc__.splitlines()[0])
    ap.add_argument("subcommand", help=", ".join(SUBCOMMANDS))
    ap.add_argument("--config", help="JSON experiment config")
    ap.add_argument("--out", help=f"output root (default ${OUTPUT_ENV} or ./{DEFAULT_OUTPUT})")
    ap.add_argument("--harness", choices=["dirichlet"],
                    help="replace the model by Brownian motion killed on a box")
    ap.add_argument("--dim", type=int, choices=[1, 2], help="harness dimension")
    ap.add_argument("--axis", type=int, choices=[1, 2], help="use the single-type model of an axis")
    ap.add_argument("--threads", type=int, default=1, help="worker threads for scans")
    ap.add_argument("--version", action="version", version=f"lvqsd {__version__}")
    return ap


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    ap = build_parser()
    try:
        if argv and not argv[0].startswith("-") and argv[0] not in COMMANDS:
            raise UnknownSubcommand(
                f"unknown subcommand {argv[0]!r}; expected one of {', '.join(SUBCOMMANDS)}")
        args = ap.parse_args(argv)
        cfg = load_config(args.config)
        files, seeds = COMMANDS[args.subcommand](cfg, args)
        root = Path(args.out or cfg.output_dir or os.environ.get(OUTPUT_ENV) or DEFAULT_OUTPUT)
        manifest = RunManifest(args.subcommand, cfg.hash(), cfg.to_dict(), seeds)
        emit_results(root / args.subcommand, files, manifest)
    except ValidationError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except NumericalError as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    except IoError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
