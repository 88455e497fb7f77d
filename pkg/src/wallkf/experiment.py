"""Run orchestration: filter runs, method comparisons, convergence studies.

A run is described by a :class:`RunConfig` (usually parsed from a JSON file,
see :func:`load_run_config`). Outputs per run: ``diagnostics.csv`` with one
row per assimilated minute, ``summary.json`` with final estimates and a
config echo, and rendered figures unless disabled. All outputs are
reproducible byte-for-byte for a fixed (config, seed), except the timestamp
and timing fields of the JSON summary.
"""

from __future__ import annotations

import csv
import json
import time
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Sequence, Union

import numpy as np

from .data import (
    ConstantProfile,
    MeasurementRecord,
    NoiseSpec,
    SinusoidProfile,
    SinusoidSumProfile,
    SyntheticSpec,
    TruthSeries,
    generate_synthetic,
    load_csv,
)
from .ensemble import (
    FilterDiagnostics,
    LogNormalPrior,
    PointPrior,
    PriorSpec,
    UniformPrior,
    init_ensemble,
    step,
)
from .errors import ConfigError, DataError, NumericalError
from .kalman import default_control_model
from .wall import WallConfig, WallParameters, initial_condition, wall_provider

__all__ = [
    "NoiseConfig",
    "StoppingRule",
    "RunConfig",
    "RunResult",
    "ConvergenceStudy",
    "ComparisonReport",
    "DIAGNOSTICS_HEADER",
    "load_run_config",
    "config_to_dict",
    "run_filter",
    "stopping_check",
    "stopping_time",
    "convergence_study",
    "compare_methods",
    "write_diagnostics_csv",
]

DIAGNOSTICS_HEADER = [
    "t_min", "R_mean", "R_std", "rhoC_mean", "rhoC_std",
    "Fint_mean", "Fext_mean", "Fint_var", "Fext_var",
]

DEFAULT_PARAM_PRIORS = (
    UniformPrior(low=0.28, high=0.36, store="log"),
    UniformPrior(low=301000.0, high=376000.0, store="log"),
)


@dataclass(frozen=True)
class NoiseConfig:
    """Noise settings of a run: flux observation noise V, boundary
    measurement noise C, control process noise scaling, and state noise."""

    var_Fint: float = 20.0
    var_Fext: float = 5.0
    var_Tint: float = 0.01
    var_Text: float = 0.01
    q_scale: float = 1.0
    q_var: tuple[float, float] | None = None
    w_var: float = 0.0

    def __post_init__(self):
        for name in ("var_Fint", "var_Fext", "var_Tint", "var_Text"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        if self.q_scale < 0 or self.w_var < 0:
            raise ConfigError("q_scale and w_var must be non-negative")
        if self.q_var is not None:
            object.__setattr__(self, "q_var", tuple(float(v) for v in self.q_var))
            if len(self.q_var) != 2 or any(v < 0 for v in self.q_var):
                raise ConfigError("q_var must hold two non-negative variances")

    @property
    def V(self) -> np.ndarray:
        return np.diag([self.var_Fint, self.var_Fext])

    @property
    def C(self) -> np.ndarray:
        return np.diag([self.var_Tint, self.var_Text])


@dataclass(frozen=True)
class StoppingRule:
    """Campaign stopping rule: both parameter means must move by less than
    rel_tol (and stds by less than 10 rel_tol) over the trailing window."""

    rel_tol: float = 1e-3
    window_min: int = 500

    def __post_init__(self):
        if self.rel_tol <= 0:
            raise ConfigError(f"rel_tol must be positive, got {self.rel_tol}")
        if self.window_min < 2:
            raise ConfigError(f"window_min must be at least 2, got {self.window_min}")


@dataclass(frozen=True)
class RunConfig:
    """Everything needed to reproduce one filter run."""

    method: str = "enmkf"
    ensemble_size: int = 100
    seed: int = 1
    ar_order: int = 1
    param_priors: tuple = DEFAULT_PARAM_PRIORS
    wall: WallConfig = field(default_factory=WallConfig)
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    data_source: Union[Path, SyntheticSpec, None] = None
    output_dir: Path | None = None

    def __post_init__(self):
        if self.method not in ("enmkf", "enkf"):
            raise ConfigError(f"method must be 'enmkf' or 'enkf', got {self.method!r}")
        if self.ensemble_size < 2:
            raise ConfigError(f"ensemble_size must be at least 2, got {self.ensemble_size}")
        if self.ar_order not in (1, 2):
            raise ConfigError(f"ar_order must be 1 or 2, got {self.ar_order}")
        if len(self.param_priors) != 2:
            raise ConfigError("param_priors must hold exactly (R, rhoC) descriptors")
        if isinstance(self.data_source, str):
            object.__setattr__(self, "data_source", Path(self.data_source))
        if isinstance(self.output_dir, str):
            object.__setattr__(self, "output_dir", Path(self.output_dir))


@dataclass
class RunResult:
    """Outcome of one filter run."""

    config: RunConfig
    records: list[MeasurementRecord]
    truth: TruthSeries | None
    t_min: list[int]
    diagnostics: list[FilterDiagnostics]
    initial_param_std: np.ndarray
    elapsed_seconds: float
    output_files: list[Path]

    @property
    def final(self) -> FilterDiagnostics:
        return self.diagnostics[-1]


# ---------------------------------------------------------------------------
# config parsing

_PRIOR_KINDS = {"uniform", "lognormal", "point"}
_PROFILE_KINDS = {"constant", "sinusoid", "sum"}


def _parse_prior(obj, name: str):
    if not isinstance(obj, dict) or "kind" not in obj:
        raise ConfigError(f"prior {name!r} must be an object with a 'kind' field")
    kind = obj["kind"]
    store = obj.get("store", "log")
    try:
        if kind == "uniform":
            return UniformPrior(low=float(obj["low"]), high=float(obj["high"]), store=store)
        if kind == "lognormal":
            return LogNormalPrior(log_mean=float(obj["log_mean"]), log_std=float(obj["log_std"]), store=store)
        if kind == "point":
            return PointPrior(value=float(obj["value"]), store=store)
    except (KeyError, TypeError, ValueError) as err:
        raise ConfigError(f"invalid prior {name!r}: {err}") from err
    raise ConfigError(f"prior {name!r}: unknown kind {kind!r} (expected one of {sorted(_PRIOR_KINDS)})")


def _parse_profile(obj, name: str):
    if not isinstance(obj, dict) or "kind" not in obj:
        raise ConfigError(f"profile {name!r} must be an object with a 'kind' field")
    kind = obj["kind"]
    try:
        if kind == "constant":
            return ConstantProfile(value=float(obj["value"]))
        if kind == "sinusoid":
            return SinusoidProfile(
                mean=float(obj["mean"]),
                amplitude=float(obj["amplitude"]),
                period_min=float(obj["period_min"]),
                phase=float(obj.get("phase", 0.0)),
            )
        if kind == "sum":
            return SinusoidSumProfile(mean=float(obj["mean"]), terms=tuple(tuple(t) for t in obj["terms"]))
    except (KeyError, TypeError, ValueError) as err:
        raise ConfigError(f"invalid profile {name!r}: {err}") from err
    raise ConfigError(f"profile {name!r}: unknown kind {kind!r} (expected one of {sorted(_PROFILE_KINDS)})")


def _parse_synthetic(obj, base_dir: Path) -> SyntheticSpec:
    try:
        truth = obj["truth"]
        params = WallParameters(R=float(truth["R"]), rhoC=float(truth["rhoC"]))
        noise = obj.get("noise", {})
        return SyntheticSpec(
            truth=params,
            horizon_min=int(obj["horizon_min"]),
            T_int_profile=_parse_profile(obj["T_int"], "T_int"),
            T_ext_profile=_parse_profile(obj["T_ext"], "T_ext"),
            noise=NoiseSpec(
                var_T=float(noise.get("var_T", 0.01)),
                var_Fint=float(noise.get("var_Fint", 20.0)),
                var_Fext=float(noise.get("var_Fext", 5.0)),
            ),
            seed=int(obj.get("seed", 0)),
            cfg=_parse_wall(obj.get("wall", {})),
        )
    except (KeyError, TypeError, ValueError) as err:
        raise ConfigError(f"invalid synthetic spec: {err}") from err


def _parse_wall(obj) -> WallConfig:
    try:
        return WallConfig(
            n_cells=int(obj.get("n_cells", 20)),
            dt=float(obj.get("dt", 60.0)),
            tau0=float(obj.get("tau0", 16.1)),
            state_prior_var=float(obj.get("state_prior_var", 0.01)),
        )
    except (TypeError, ValueError) as err:
        raise ConfigError(f"invalid wall config: {err}") from err


def load_run_config(source, *, base_dir: Path | None = None, overrides: dict | None = None) -> RunConfig:
    """Build a :class:`RunConfig` from a JSON file path or an equivalent dict.

    Relative data/output paths resolve against the config file's directory.
    ``overrides`` (e.g. from CLI flags) replace top-level scalar fields.
    """
    if isinstance(source, (str, Path)):
        path = Path(source)
        if not path.exists():
            raise ConfigError(f"no such config file: {path}")
        try:
            obj = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as err:
            raise ConfigError(f"{path}: invalid JSON: {err}") from err
        base_dir = base_dir if base_dir is not None else path.parent
    else:
        obj = dict(source)
        base_dir = base_dir if base_dir is not None else Path.cwd()
    if not isinstance(obj, dict):
        raise ConfigError("config root must be a JSON object")
    if overrides:
        obj = {**obj, **{k: v for k, v in overrides.items() if v is not None}}

    priors_obj = obj.get("priors", {})
    if priors_obj:
        if not {"R", "rhoC"} <= set(priors_obj):
            raise ConfigError("priors must define both 'R' and 'rhoC'")
        priors = (_parse_prior(priors_obj["R"], "R"), _parse_prior(priors_obj["rhoC"], "rhoC"))
    else:
        priors = DEFAULT_PARAM_PRIORS

    noise_obj = obj.get("noise", {})
    try:
        noise = NoiseConfig(
            var_Fint=float(noise_obj.get("var_Fint", 20.0)),
            var_Fext=float(noise_obj.get("var_Fext", 5.0)),
            var_Tint=float(noise_obj.get("var_Tint", 0.01)),
            var_Text=float(noise_obj.get("var_Text", 0.01)),
            q_scale=float(noise_obj.get("q_scale", 1.0)),
            q_var=tuple(noise_obj["q_var"]) if "q_var" in noise_obj else None,
            w_var=float(noise_obj.get("w_var", 0.0)),
        )
    except (TypeError, ValueError) as err:
        raise ConfigError(f"invalid noise config: {err}") from err

    data_obj = obj.get("data")
    data_source: Union[Path, SyntheticSpec, None] = None
    if data_obj is not None:
        if not isinstance(data_obj, dict) or len(set(data_obj) & {"csv", "synthetic"}) != 1:
            raise ConfigError("data must be an object with exactly one of 'csv' or 'synthetic'")
        if "csv" in data_obj:
            data_source = (base_dir / data_obj["csv"]).resolve()
        else:
            data_source = _parse_synthetic(data_obj["synthetic"], base_dir)

    out = obj.get("output_dir")
    output_dir = (base_dir / out).resolve() if out is not None else None

    try:
        return RunConfig(
            method=obj.get("method", "enmkf"),
            ensemble_size=int(obj.get("ensemble_size", 100)),
            seed=int(obj.get("seed", 1)),
            ar_order=int(obj.get("ar_order", 1)),
            param_priors=priors,
            wall=_parse_wall(obj.get("wall", {})),
            noise=noise,
            data_source=data_source,
            output_dir=output_dir,
        )
    except (TypeError, ValueError) as err:
        raise ConfigError(f"invalid run config: {err}") from err


def config_to_dict(cfg: RunConfig) -> dict:
    """JSON-serializable echo of a run config."""

    def prior_dict(p):
        if isinstance(p, UniformPrior):
            return {"kind": "uniform", "low": p.low, "high": p.high, "store": p.store}
        if isinstance(p, LogNormalPrior):
            return {"kind": "lognormal", "log_mean": p.log_mean, "log_std": p.log_std, "store": p.store}
        return {"kind": "point", "value": p.value, "store": p.store}

    def profile_dict(p):
        if isinstance(p, ConstantProfile):
            return {"kind": "constant", "value": p.value}
        if isinstance(p, SinusoidProfile):
            return {"kind": "sinusoid", "mean": p.mean, "amplitude": p.amplitude,
                    "period_min": p.period_min, "phase": p.phase}
        return {"kind": "sum", "mean": p.mean, "terms": [list(t) for t in p.terms]}

    if isinstance(cfg.data_source, SyntheticSpec):
        s = cfg.data_source
        data = {"synthetic": {
            "truth": {"R": s.truth.R, "rhoC": s.truth.rhoC},
            "horizon_min": s.horizon_min,
            "T_int": profile_dict(s.T_int_profile),
            "T_ext": profile_dict(s.T_ext_profile),
            "noise": {"var_T": s.noise.var_T, "var_Fint": s.noise.var_Fint, "var_Fext": s.noise.var_Fext},
            "seed": s.seed,
            "wall": {"n_cells": s.cfg.n_cells, "dt": s.cfg.dt, "tau0": s.cfg.tau0,
                     "state_prior_var": s.cfg.state_prior_var},
        }}
    elif cfg.data_source is not None:
        data = {"csv": str(cfg.data_source)}
    else:
        data = None

    return {
        "method": cfg.method,
        "ensemble_size": cfg.ensemble_size,
        "seed": cfg.seed,
        "ar_order": cfg.ar_order,
        "priors": {"R": prior_dict(cfg.param_priors[0]), "rhoC": prior_dict(cfg.param_priors[1])},
        "wall": {"n_cells": cfg.wall.n_cells, "dt": cfg.wall.dt, "tau0": cfg.wall.tau0,
                 "state_prior_var": cfg.wall.state_prior_var},
        "noise": {"var_Fint": cfg.noise.var_Fint, "var_Fext": cfg.noise.var_Fext,
                  "var_Tint": cfg.noise.var_Tint, "var_Text": cfg.noise.var_Text,
                  "q_scale": cfg.noise.q_scale,
                  "q_var": list(cfg.noise.q_var) if cfg.noise.q_var is not None else None,
                  "w_var": cfg.noise.w_var},
        "data": data,
        "output_dir": str(cfg.output_dir) if cfg.output_dir is not None else None,
    }


# ---------------------------------------------------------------------------
# running

def _resolve_data(cfg: RunConfig) -> tuple[list[MeasurementRecord], TruthSeries | None]:
    if cfg.data_source is None:
        raise ConfigError("run config has no data source")
    if isinstance(cfg.data_source, SyntheticSpec):
        return generate_synthetic(cfg.data_source)
    return load_csv(cfg.data_source), None


def run_filter(cfg: RunConfig, *, records: Sequence[MeasurementRecord] | None = None,
               truth: TruthSeries | None = None, write_outputs: bool = True,
               make_plots: bool = True) -> RunResult:
    """Assimilate a measurement series with the configured joint filter.

    The first record initializes the wall profile and the control filter;
    every following record is assimilated, one diagnostics row each.
    Numerical failures abort with the offending step in the message.
    """
    started = time.perf_counter()
    if records is None:
        records, truth = _resolve_data(cfg)
    records = list(records)
    if len(records) < 2:
        raise DataError(f"need at least 2 records (initialization + 1 assimilated), got {len(records)}")

    z = np.array([[r.T_int, r.T_ext] for r in records])
    y = np.array([[r.F_int, r.F_ext] for r in records])

    control_model = default_control_model(
        z, cfg.ar_order, cfg.noise.C, q_scale=cfg.noise.q_scale, q_var=cfg.noise.q_var,
    )
    n = cfg.wall.n_nodes
    W = cfg.noise.w_var * np.eye(n) if cfg.noise.w_var > 0 else None
    provider = wall_provider(cfg.wall, W=W, V=cfg.noise.V)

    prior = PriorSpec(
        parameters=cfg.param_priors,
        state_mean=initial_condition(records[0].T_int, records[0].T_ext, cfg.wall),
        state_var=cfg.wall.state_prior_var,
    )
    e = init_ensemble(prior, cfg.ensemble_size, cfg.seed)
    initial_param_std = np.exp(e.theta).std(axis=0, ddof=1)
    cs = control_model.initial_state()

    diagnostics: list[FilterDiagnostics] = []
    t_mins: list[int] = []
    for k, rec in enumerate(records[1:], start=1):
        try:
            e, cs, diag = step(cfg.method, e, provider, cs, control_model, z[k], y[k], W, "scaled_by_R")
        except NumericalError as err:
            raise NumericalError(f"filter aborted at step {k} (t_min={rec.t_min}): {err}") from err
        diagnostics.append(diag)
        t_mins.append(rec.t_min)

    elapsed = time.perf_counter() - started
    result = RunResult(
        config=cfg, records=records, truth=truth, t_min=t_mins, diagnostics=diagnostics,
        initial_param_std=initial_param_std, elapsed_seconds=elapsed, output_files=[],
    )
    if write_outputs and cfg.output_dir is not None:
        result.output_files = _write_run_outputs(result, make_plots=make_plots)
    return result


def _diag_row(t_min: int, d: FilterDiagnostics) -> list:
    flux_mean = d.flux_mean if d.flux_mean is not None else (float("nan"), float("nan"))
    flux_var = np.diagonal(d.flux_cov) if d.flux_cov is not None else (float("nan"), float("nan"))
    values = [d.param_mean[0], d.param_std[0], d.param_mean[1], d.param_std[1],
              flux_mean[0], flux_mean[1], flux_var[0], flux_var[1]]
    return [t_min] + [format(float(v), ".10g") for v in values]


def write_diagnostics_csv(path, t_mins: Sequence[int], diagnostics: Sequence[FilterDiagnostics]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(DIAGNOSTICS_HEADER)
        for t, d in zip(t_mins, diagnostics):
            writer.writerow(_diag_row(t, d))


def _summary_payload(result: RunResult) -> dict:
    final = result.final
    return {
        "schema": "wallkf-run-summary/1",
        "steps": len(result.diagnostics),
        "final": {
            "R_mean": float(final.param_mean[0]),
            "R_std": float(final.param_std[0]),
            "rhoC_mean": float(final.param_mean[1]),
            "rhoC_std": float(final.param_std[1]),
            "Fint_mean": float(final.flux_mean[0]) if final.flux_mean is not None else None,
            "Fext_mean": float(final.flux_mean[1]) if final.flux_mean is not None else None,
            "Fint_var": float(final.flux_cov[0, 0]) if final.flux_cov is not None else None,
            "Fext_var": float(final.flux_cov[1, 1]) if final.flux_cov is not None else None,
        },
        "initial_param_std": {
            "R": float(result.initial_param_std[0]),
            "rhoC": float(result.initial_param_std[1]),
        },
        "config": config_to_dict(result.config),
        "elapsed_seconds": result.elapsed_seconds,
        "created_utc": datetime.now(timezone.utc).isoformat(),
    }


def _write_run_outputs(result: RunResult, *, make_plots: bool) -> list[Path]:
    out_dir = result.config.output_dir
    out_dir.mkdir(parents=True, exist_ok=True)
    files = []
    diag_path = out_dir / "diagnostics.csv"
    write_diagnostics_csv(diag_path, result.t_min, result.diagnostics)
    files.append(diag_path)
    summary_path = out_dir / "summary.json"
    summary_path.write_text(json.dumps(_summary_payload(result), indent=2) + "\n", encoding="utf-8")
    files.append(summary_path)
    if make_plots:
        from . import plots
        files.extend(plots.render_run_figures(out_dir, result))
    return files


# ---------------------------------------------------------------------------
# stopping rule

def stopping_check(history: Sequence[FilterDiagnostics], rule: StoppingRule, k: int) -> bool:
    """Whether the campaign can stop at position ``k`` of the history.

    ``k`` is a 0-based index into the diagnostics series and is compared
    against position ``k - window_min``. True only when both parameter means
    have moved by less than rel_tol (relative) and both stds by less than
    10 rel_tol over that window.
    """
    if k < rule.window_min or k >= len(history):
        raise ValueError(f"k={k} out of range [{rule.window_min}, {len(history)})")
    cur = history[k]
    prev = history[k - rule.window_min]
    for j in range(cur.param_mean.size):
        if abs(cur.param_mean[j] - prev.param_mean[j]) >= rule.rel_tol * abs(cur.param_mean[j]):
            return False
        if abs(cur.param_std[j] - prev.param_std[j]) >= 10.0 * rule.rel_tol * cur.param_std[j]:
            return False
    return True


def stopping_time(history: Sequence[FilterDiagnostics], rule: StoppingRule) -> int | None:
    """First 0-based index at which :func:`stopping_check` fires, or None."""
    for k in range(rule.window_min, len(history)):
        if stopping_check(history, rule, k):
            return k
    return None


# ---------------------------------------------------------------------------
# studies

@dataclass
class ConvergenceStudy:
    """Long-format convergence rows plus per-(method, M) mean absolute errors."""

    rows: list[dict]
    aggregate: list[dict]
    truth: WallParameters
    t_eval: int
    output_files: list[Path]


def convergence_study(cfg: RunConfig, M_list: Sequence[int], t_eval: int, replicates: int,
                      *, write_outputs: bool = True, make_plots: bool = True) -> ConvergenceStudy:
    """Parameter estimates at a fixed time versus ensemble size, both methods.

    The campaign data is generated once from the synthetic spec; replicate
    seeds ``cfg.seed + r`` vary only the filter randomness, pairing the two
    methods within every (M, replicate) cell.
    """
    if not isinstance(cfg.data_source, SyntheticSpec):
        raise ConfigError("convergence_study needs a synthetic data source (truth required)")
    if replicates < 1:
        raise ConfigError(f"replicates must be at least 1, got {replicates}")
    records, truth_series = generate_synthetic(cfg.data_source)
    horizon = records[-1].t_min
    if not records[0].t_min < t_eval <= horizon:
        raise ConfigError(f"t_eval={t_eval} outside the data horizon ({records[0].t_min}, {horizon}]")
    truth = cfg.data_source.truth

    rows = []
    for rep in range(replicates):
        seed = cfg.seed + rep
        for M in M_list:
            for method in ("enmkf", "enkf"):
                run_cfg = replace(cfg, method=method, ensemble_size=int(M), seed=seed, output_dir=None)
                result = run_filter(run_cfg, records=records, truth=truth_series, write_outputs=False)
                idx = result.t_min.index(t_eval)
                d = result.diagnostics[idx]
                rows.append({
                    "method": method, "M": int(M), "seed": seed,
                    "R_mean": float(d.param_mean[0]), "R_std": float(d.param_std[0]),
                    "rhoC_mean": float(d.param_mean[1]), "rhoC_std": float(d.param_std[1]),
                })

    aggregate = []
    for method in ("enmkf", "enkf"):
        for M in M_list:
            cell = [r for r in rows if r["method"] == method and r["M"] == int(M)]
            aggregate.append({
                "method": method, "M": int(M),
                "R_mae": float(np.mean([abs(r["R_mean"] - truth.R) for r in cell])),
                "rhoC_mae": float(np.mean([abs(r["rhoC_mean"] - truth.rhoC) for r in cell])),
            })

    study = ConvergenceStudy(rows=rows, aggregate=aggregate, truth=truth, t_eval=t_eval, output_files=[])
    if write_outputs and cfg.output_dir is not None:
        study.output_files = _write_study_outputs(cfg.output_dir, study, make_plots=make_plots)
    return study


def _write_study_outputs(out_dir: Path, study: ConvergenceStudy, *, make_plots: bool) -> list[Path]:
    out_dir.mkdir(parents=True, exist_ok=True)
    files = []
    rows_path = out_dir / "convergence.csv"
    with open(rows_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=["method", "M", "seed", "R_mean", "R_std", "rhoC_mean", "rhoC_std"])
        writer.writeheader()
        writer.writerows(study.rows)
    files.append(rows_path)
    agg_path = out_dir / "convergence_aggregate.csv"
    with open(agg_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=["method", "M", "R_mae", "rhoC_mae"])
        writer.writeheader()
        writer.writerows(study.aggregate)
    files.append(agg_path)
    if make_plots:
        from . import plots
        files.append(plots.render_convergence_figure(out_dir, study))
    return files


@dataclass
class ComparisonReport:
    """Paired-seed comparison of the two filters on one synthetic campaign."""

    rows: list[dict]
    summary: dict
    std_history: dict[str, list[np.ndarray]]
    t_min: list[int]
    output_files: list[Path]


def compare_methods(cfg: RunConfig, *, n_seeds: int = 10, collapse_frac: float = 0.01,
                    methods: tuple[str, str] = ("enmkf", "enkf"),
                    write_outputs: bool = True, make_plots: bool = True) -> ComparisonReport:
    """Paired-seed runs of both filters with bias, spread, and collapse stats.

    A run is flagged as collapsed when either parameter's final ensemble
    std drops below ``collapse_frac`` of its initial value. Flux residual
    variances are taken against the noiseless truth fluxes.
    """
    if not isinstance(cfg.data_source, SyntheticSpec):
        raise ConfigError("compare_methods needs a synthetic data source (truth required)")
    if n_seeds < 1:
        raise ConfigError(f"n_seeds must be at least 1, got {n_seeds}")
    records, truth_series = generate_synthetic(cfg.data_source)
    truth = cfg.data_source.truth

    distinct = list(dict.fromkeys(methods))
    rows = []
    std_history: dict[str, list[np.ndarray]] = {m: [] for m in distinct}
    t_axis: list[int] = []
    for i in range(n_seeds):
        seed = cfg.seed + i
        for method in methods:
            run_cfg = replace(cfg, method=method, seed=seed, output_dir=None)
            result = run_filter(run_cfg, records=records, truth=truth_series, write_outputs=False)
            final = result.final
            flux_est = np.array([d.flux_mean for d in result.diagnostics])
            flux_true = truth_series.fluxes[1:]
            residual_var = np.var(flux_est - flux_true, axis=0, ddof=1)
            std_ratio = final.param_std / result.initial_param_std
            rows.append({
                "method": method, "seed": seed,
                "R_mean": float(final.param_mean[0]), "R_std": float(final.param_std[0]),
                "rhoC_mean": float(final.param_mean[1]), "rhoC_std": float(final.param_std[1]),
                "R_bias": float(final.param_mean[0] - truth.R),
                "rhoC_bias": float(final.param_mean[1] - truth.rhoC),
                "collapsed": bool(np.any(std_ratio < collapse_frac)),
                "Fint_residual_var": float(residual_var[0]),
                "Fext_residual_var": float(residual_var[1]),
            })
            std_history[method].append(np.array([[d.param_std[0], d.param_std[1]] for d in result.diagnostics]))
            t_axis = result.t_min

    def _method_rows(method):
        return [r for r in rows if r["method"] == method]

    summary = {"n_seeds": n_seeds, "collapse_frac": collapse_frac,
               "truth": {"R": truth.R, "rhoC": truth.rhoC}}
    for method in distinct:
        mr = _method_rows(method)
        summary[method] = {
            "median_final_R_std": float(np.median([r["R_std"] for r in mr])),
            "median_final_rhoC_std": float(np.median([r["rhoC_std"] for r in mr])),
            "median_abs_R_bias": float(np.median([abs(r["R_bias"]) for r in mr])),
            "median_abs_rhoC_bias": float(np.median([abs(r["rhoC_bias"]) for r in mr])),
            "collapse_rate": float(np.mean([r["collapsed"] for r in mr])),
            "median_Fint_residual_var": float(np.median([r["Fint_residual_var"] for r in mr])),
            "median_Fext_residual_var": float(np.median([r["Fext_residual_var"] for r in mr])),
        }

    report = ComparisonReport(rows=rows, summary=summary, std_history=std_history,
                              t_min=t_axis, output_files=[])
    if write_outputs and cfg.output_dir is not None:
        report.output_files = _write_comparison_outputs(cfg.output_dir, report, make_plots=make_plots)
    return report


def _write_comparison_outputs(out_dir: Path, report: ComparisonReport, *, make_plots: bool) -> list[Path]:
    out_dir.mkdir(parents=True, exist_ok=True)
    files = []
    rows_path = out_dir / "comparison.csv"
    fieldnames = ["method", "seed", "R_mean", "R_std", "rhoC_mean", "rhoC_std",
                  "R_bias", "rhoC_bias", "collapsed", "Fint_residual_var", "Fext_residual_var"]
    with open(rows_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=fieldnames)
        writer.writeheader()
        writer.writerows(report.rows)
    files.append(rows_path)
    summary_path = out_dir / "comparison.json"
    summary_path.write_text(json.dumps(report.summary, indent=2) + "\n", encoding="utf-8")
    files.append(summary_path)
    if make_plots:
        from . import plots
        files.append(plots.render_comparison_figure(out_dir, report))
    return files
