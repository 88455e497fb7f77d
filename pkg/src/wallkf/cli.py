"""Command-line interface.

Subcommands: ``filter`` (assimilate a series), ``synth`` (generate a
synthetic campaign), ``converge`` (ensemble-size study), ``compare``
(paired-method comparison), ``stopcheck`` (apply the stopping rule to a
diagnostics file). Exit codes: 0 success, 2 configuration error, 3 data
error, 4 numerical failure.
"""

from __future__ import annotations

import sys
from pathlib import Path

import click

from . import experiment
from .data import generate_synthetic, truth_csv_path, write_csv, write_truth_csv
from .errors import ConfigError, DataError, DimensionError, NumericalError

EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERICAL = 4


def _fail(code: int, message: str):
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def _guarded(fn):
    try:
        return fn()
    except (ConfigError, DimensionError, ValueError) as err:
        _fail(EXIT_CONFIG, str(err))
    except DataError as err:
        _fail(EXIT_DATA, str(err))
    except NumericalError as err:
        _fail(EXIT_NUMERICAL, str(err))


def _config_options(fn):
    fn = click.option("--config", "config_path", type=click.Path(path_type=Path), required=True,
                      help="JSON run configuration.")(fn)
    fn = click.option("--seed", type=int, default=None, help="Override the config seed.")(fn)
    fn = click.option("--out", "out_dir", type=click.Path(path_type=Path), default=None,
                      help="Override the output directory.")(fn)
    fn = click.option("--method", type=click.Choice(["enmkf", "enkf"]), default=None,
                      help="Override the filter method.")(fn)
    fn = click.option("--ensemble-size", "-M", type=int, default=None, help="Override the ensemble size.")(fn)
    fn = click.option("--ar-order", type=click.Choice(["1", "2"]), default=None,
                      help="Override the boundary model order.")(fn)
    fn = click.option("--no-plots", is_flag=True, help="Skip figure rendering.")(fn)
    return fn


def _load_config(config_path: Path, seed, out_dir, method, ensemble_size, ar_order) -> experiment.RunConfig:
    overrides = {
        "seed": seed,
        "method": method,
        "ensemble_size": ensemble_size,
        "ar_order": int(ar_order) if ar_order is not None else None,
    }
    cfg = experiment.load_run_config(config_path, overrides=overrides)
    if out_dir is not None:
        from dataclasses import replace
        cfg = replace(cfg, output_dir=out_dir.resolve())
    return cfg


@click.group()
@click.version_option(package_name="wallkf")
def main():
    """Sequential estimation of wall thermal parameters and boundary fluxes."""


@main.command("filter")
@_config_options
def filter_cmd(config_path, seed, out_dir, method, ensemble_size, ar_order, no_plots):
    """Run the configured joint filter over a measurement series."""

    def run():
        cfg = _load_config(config_path, seed, out_dir, method, ensemble_size, ar_order)
        if cfg.output_dir is None:
            raise ConfigError("an output directory is required (config 'output_dir' or --out)")
        result = experiment.run_filter(cfg, make_plots=not no_plots)
        final = result.final
        click.echo(
            f"{cfg.method} M={cfg.ensemble_size} seed={cfg.seed}: assimilated {len(result.diagnostics)} minutes, "
            f"R = {final.param_mean[0]:.4f} ± {final.param_std[0]:.4f}, "
            f"rhoC = {final.param_mean[1]:.4g} ± {final.param_std[1]:.3g}"
        )
        for path in result.output_files:
            click.echo(f"wrote {path}")

    _guarded(run)


@main.command("synth")
@click.option("--config", "config_path", type=click.Path(path_type=Path), required=True,
              help="JSON run configuration with a synthetic data source.")
@click.option("--out", "out_csv", type=click.Path(path_type=Path), required=True,
              help="Destination CSV for the noisy campaign.")
@click.option("--seed", type=int, default=None, help="Override the campaign noise seed.")
@click.option("--no-plots", is_flag=True, help="Skip figure rendering.")
def synth_cmd(config_path, out_csv, seed, no_plots):
    """Generate a synthetic measurement campaign (plus its truth sibling)."""

    def run():
        cfg = experiment.load_run_config(config_path)
        from .data import SyntheticSpec
        if not isinstance(cfg.data_source, SyntheticSpec):
            raise ConfigError("config has no synthetic data source")
        spec = cfg.data_source
        if seed is not None:
            from dataclasses import replace
            spec = replace(spec, seed=seed)
        records, truth = generate_synthetic(spec)
        out = out_csv.resolve()
        out.parent.mkdir(parents=True, exist_ok=True)
        write_csv(out, records)
        truth_path = truth_csv_path(out)
        write_truth_csv(truth_path, truth)
        click.echo(f"wrote {out} ({len(records)} rows)")
        click.echo(f"wrote {truth_path}")
        if not no_plots:
            from .plots import render_campaign_figure
            fig_path = render_campaign_figure(out.with_suffix(".png"), records, truth)
            click.echo(f"wrote {fig_path}")

    _guarded(run)


@main.command("converge")
@_config_options
@click.option("--ensemble-sizes", "m_list", default="25,50,100", show_default=True,
              help="Comma-separated ensemble sizes.")
@click.option("--t-eval", type=int, default=2000, show_default=True,
              help="Evaluation time in minutes.")
@click.option("--replicates", type=int, default=10, show_default=True,
              help="Seeded replicates per cell.")
def converge_cmd(config_path, seed, out_dir, method, ensemble_size, ar_order, no_plots,
                 m_list, t_eval, replicates):
    """Ensemble-size convergence study over both methods."""

    def run():
        cfg = _load_config(config_path, seed, out_dir, method, ensemble_size, ar_order)
        if cfg.output_dir is None:
            raise ConfigError("an output directory is required (config 'output_dir' or --out)")
        sizes = [int(v) for v in m_list.split(",") if v.strip()]
        study = experiment.convergence_study(cfg, sizes, t_eval, replicates, make_plots=not no_plots)
        for row in study.aggregate:
            click.echo(
                f"{row['method']:6s} M={row['M']:<5d} |R err| = {row['R_mae']:.5f}  "
                f"|rhoC err| = {row['rhoC_mae']:.1f}"
            )
        for path in study.output_files:
            click.echo(f"wrote {path}")

    _guarded(run)


@main.command("compare")
@_config_options
@click.option("--seeds", "n_seeds", type=int, default=10, show_default=True,
              help="Number of paired seeds.")
def compare_cmd(config_path, seed, out_dir, method, ensemble_size, ar_order, no_plots, n_seeds):
    """Paired-seed comparison of the marginalized and sampled-control filters."""

    def run():
        cfg = _load_config(config_path, seed, out_dir, method, ensemble_size, ar_order)
        if cfg.output_dir is None:
            raise ConfigError("an output directory is required (config 'output_dir' or --out)")
        report = experiment.compare_methods(cfg, n_seeds=n_seeds, make_plots=not no_plots)
        for name in ("enmkf", "enkf"):
            if name not in report.summary:
                continue
            s = report.summary[name]
            click.echo(
                f"{name:6s} median final R std = {s['median_final_R_std']:.2e}, "
                f"collapse rate = {s['collapse_rate']:.0%}, "
                f"median |R bias| = {s['median_abs_R_bias']:.5f}"
            )
        for path in report.output_files:
            click.echo(f"wrote {path}")

    _guarded(run)


@main.command("stopcheck")
@click.option("--diagnostics", "diag_path", type=click.Path(path_type=Path), required=True,
              help="diagnostics.csv produced by the filter subcommand.")
@click.option("--rel-tol", type=float, default=1e-3, show_default=True,
              help="Relative tolerance on consecutive means.")
@click.option("--window", type=int, default=500, show_default=True,
              help="Comparison window in minutes.")
def stopcheck_cmd(diag_path, rel_tol, window):
    """Apply the campaign stopping rule to a diagnostics file."""

    def run():
        import csv as _csv

        import numpy as np

        from .ensemble import FilterDiagnostics

        path = Path(diag_path)
        if not path.exists():
            raise DataError(f"no such file: {path}")
        history = []
        t_mins = []
        with open(path, newline="", encoding="utf-8") as fh:
            reader = _csv.DictReader(fh)
            if reader.fieldnames != experiment.DIAGNOSTICS_HEADER:
                raise DataError(f"{path}: unexpected header {reader.fieldnames}")
            for i, row in enumerate(reader, start=2):
                try:
                    t_mins.append(int(float(row["t_min"])))
                    history.append(FilterDiagnostics(
                        step_index=i - 1,
                        param_mean=np.array([float(row["R_mean"]), float(row["rhoC_mean"])]),
                        param_std=np.array([float(row["R_std"]), float(row["rhoC_std"])]),
                        state_mean=np.zeros(0),
                    ))
                except (KeyError, ValueError):
                    raise DataError(f"{path}: line {i}: malformed diagnostics row") from None
        rule = experiment.StoppingRule(rel_tol=rel_tol, window_min=window)
        if len(history) <= rule.window_min:
            raise DataError(
                f"{path}: only {len(history)} rows, need more than the window ({rule.window_min})"
            )
        k = experiment.stopping_time(history, rule)
        if k is None:
            click.echo("stopping rule did not fire; keep measuring")
        else:
            click.echo(f"stopping rule fires at t_min={t_mins[k]} (row {k + 1} of {len(history)})")

    _guarded(run)


if __name__ == "__main__":
    main()
