"""Measurement ingestion, synthetic campaign generation, noise estimation.

CSV schema (exact header, UTF-8, '.' decimal separator, one row per minute):

    t_min,T_int,T_ext,F_int,F_ext

Synthetic campaigns also write a sibling ``*_truth.csv`` with header
``t_min,T_int_true,T_ext_true,F_int_true,F_ext_true`` holding the noiseless
boundary temperatures and fluxes.

Row 0 of a series is the initial time: it seeds the initial wall profile and
the control filter, and assimilation starts from the next row. A horizon of
N minutes therefore yields N+1 rows.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence, Union

import numpy as np

from .errors import DataError
from .wall import WallConfig, WallParameters, build_operators, flux_stencil, initial_condition

__all__ = [
    "CSV_HEADER",
    "TRUTH_HEADER",
    "MeasurementRecord",
    "ConstantProfile",
    "SinusoidProfile",
    "SinusoidSumProfile",
    "NoiseSpec",
    "SyntheticSpec",
    "TruthSeries",
    "load_csv",
    "write_csv",
    "write_truth_csv",
    "truth_csv_path",
    "generate_synthetic",
    "estimate_noise_variance",
    "default_synthetic_spec",
]

CSV_HEADER = ["t_min", "T_int", "T_ext", "F_int", "F_ext"]
TRUTH_HEADER = ["t_min", "T_int_true", "T_ext_true", "F_int_true", "F_ext_true"]


@dataclass(frozen=True)
class MeasurementRecord:
    """One minute of boundary temperature and heat-flux measurements."""

    t_min: int
    T_int: float
    T_ext: float
    F_int: float
    F_ext: float

    def __post_init__(self):
        for name in ("T_int", "T_ext", "F_int", "F_ext"):
            if not math.isfinite(getattr(self, name)):
                raise DataError(f"{name} is non-finite at t_min={self.t_min}")


@dataclass(frozen=True)
class ConstantProfile:
    value: float

    def values(self, t_min: np.ndarray) -> np.ndarray:
        return np.full_like(np.asarray(t_min, dtype=float), self.value)


@dataclass(frozen=True)
class SinusoidProfile:
    """mean + amplitude * sin(2 pi t / period + phase), t in minutes."""

    mean: float
    amplitude: float
    period_min: float
    phase: float = 0.0

    def __post_init__(self):
        if self.period_min <= 0:
            raise ValueError(f"period_min must be positive, got {self.period_min}")

    def values(self, t_min: np.ndarray) -> np.ndarray:
        t = np.asarray(t_min, dtype=float)
        return self.mean + self.amplitude * np.sin(2.0 * np.pi * t / self.period_min + self.phase)


@dataclass(frozen=True)
class SinusoidSumProfile:
    """mean + sum of sinusoid terms, each given as (amplitude, period_min, phase)."""

    mean: float
    terms: tuple[tuple[float, float, float], ...]

    def __post_init__(self):
        object.__setattr__(self, "terms", tuple(tuple(float(v) for v in t) for t in self.terms))
        for _, period, _ in self.terms:
            if period <= 0:
                raise ValueError(f"period_min must be positive, got {period}")

    def values(self, t_min: np.ndarray) -> np.ndarray:
        t = np.asarray(t_min, dtype=float)
        out = np.full_like(t, self.mean)
        for amplitude, period, phase in self.terms:
            out = out + amplitude * np.sin(2.0 * np.pi * t / period + phase)
        return out


BoundaryProfile = Union[ConstantProfile, SinusoidProfile, SinusoidSumProfile]


@dataclass(frozen=True)
class NoiseSpec:
    """Measurement noise variances: shared var_T for both temperature channels."""

    var_T: float = 0.01
    var_Fint: float = 20.0
    var_Fext: float = 5.0

    def __post_init__(self):
        for name in ("var_T", "var_Fint", "var_Fext"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")


@dataclass(frozen=True)
class SyntheticSpec:
    """Full description of a synthetic measurement campaign."""

    truth: WallParameters
    horizon_min: int
    T_int_profile: BoundaryProfile
    T_ext_profile: BoundaryProfile
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    seed: int = 0
    cfg: WallConfig = field(default_factory=WallConfig)

    def __post_init__(self):
        if self.horizon_min < 10:
            raise ValueError(f"horizon_min must be at least 10, got {self.horizon_min}")


@dataclass(frozen=True)
class TruthSeries:
    """Noiseless companion of a synthetic campaign (row 0 is the initial time)."""

    t_min: np.ndarray
    boundary: np.ndarray   # (N+1, 2) noiseless (T_int, T_ext)
    states: np.ndarray     # (N+1, n) full node temperatures
    fluxes: np.ndarray     # (N+1, 2) noiseless (F_int, F_ext)


def load_csv(path) -> list[MeasurementRecord]:
    """Parse and cadence-validate a measurement series.

    Raises :class:`DataError` with the offending 1-based line number for a
    wrong header, a non-numeric cell, a non-integer or non-monotone time
    column, or any gap in the per-minute cadence.
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"no such file: {path}")
    records: list[MeasurementRecord] = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        if [h.strip() for h in header] != CSV_HEADER:
            raise DataError(f"{path}: line 1: expected header {','.join(CSV_HEADER)!r}, got {','.join(header)!r}")
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(CSV_HEADER):
                raise DataError(f"{path}: line {line_no}: expected {len(CSV_HEADER)} fields, got {len(row)}")
            try:
                t_raw = float(row[0])
                values = [float(v) for v in row[1:]]
            except ValueError:
                raise DataError(f"{path}: line {line_no}: non-numeric cell") from None
            if t_raw != int(t_raw):
                raise DataError(f"{path}: line {line_no}: t_min must be an integer, got {row[0]}")
            t = int(t_raw)
            if records and t != records[-1].t_min + 1:
                kind = "gap" if t > records[-1].t_min + 1 else "non-monotone time"
                raise DataError(f"{path}: line {line_no}: {kind} (t_min {records[-1].t_min} -> {t})")
            try:
                records.append(MeasurementRecord(t, *values))
            except DataError as err:
                raise DataError(f"{path}: line {line_no}: {err}") from None
    if not records:
        raise DataError(f"{path}: no data rows")
    return records


def _format(value: float) -> str:
    return format(value, ".10g")


def write_csv(path, records: Sequence[MeasurementRecord]) -> None:
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_HEADER)
        for r in records:
            writer.writerow([r.t_min, _format(r.T_int), _format(r.T_ext), _format(r.F_int), _format(r.F_ext)])


def write_truth_csv(path, truth: TruthSeries) -> None:
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(TRUTH_HEADER)
        for i, t in enumerate(truth.t_min):
            writer.writerow([
                int(t),
                _format(truth.boundary[i, 0]),
                _format(truth.boundary[i, 1]),
                _format(truth.fluxes[i, 0]),
                _format(truth.fluxes[i, 1]),
            ])


def truth_csv_path(data_path) -> Path:
    """Sibling path for the noiseless companion of a data CSV."""
    data_path = Path(data_path)
    return data_path.with_name(data_path.stem + "_truth.csv")


def simulate_truth(spec: SyntheticSpec) -> TruthSeries:
    """Forward-simulate the noiseless wall under the spec's boundary profiles."""
    cfg = spec.cfg
    t = np.arange(spec.horizon_min + 1)
    t_int = spec.T_int_profile.values(t)
    t_ext = spec.T_ext_profile.values(t)
    ops = build_operators(cfg, spec.truth)
    H = flux_stencil(cfg)

    states = np.empty((t.size, cfg.n_nodes))
    states[0] = initial_condition(t_int[0], t_ext[0], cfg)
    for k in range(1, t.size):
        states[k] = ops.A @ states[k - 1] + ops.B @ np.array([t_int[k], t_ext[k]])
    fluxes = states @ H.T / spec.truth.R
    return TruthSeries(t_min=t, boundary=np.column_stack([t_int, t_ext]), states=states, fluxes=fluxes)


def generate_synthetic(spec: SyntheticSpec) -> tuple[list[MeasurementRecord], TruthSeries]:
    """Simulate a campaign and perturb it with white measurement noise.

    Returns the noisy per-minute records together with the clean truth
    series. Deterministic for a fixed spec (noise drawn channel by channel
    from a single generator seeded with ``spec.seed``).
    """
    truth = simulate_truth(spec)
    rng = np.random.default_rng(spec.seed)
    count = truth.t_min.size
    noisy_tint = truth.boundary[:, 0] + math.sqrt(spec.noise.var_T) * rng.standard_normal(count)
    noisy_text = truth.boundary[:, 1] + math.sqrt(spec.noise.var_T) * rng.standard_normal(count)
    noisy_fint = truth.fluxes[:, 0] + math.sqrt(spec.noise.var_Fint) * rng.standard_normal(count)
    noisy_fext = truth.fluxes[:, 1] + math.sqrt(spec.noise.var_Fext) * rng.standard_normal(count)
    records = [
        MeasurementRecord(int(t), noisy_tint[i], noisy_text[i], noisy_fint[i], noisy_fext[i])
        for i, t in enumerate(truth.t_min)
    ]
    return records, truth


def estimate_noise_variance(series, window: int) -> float:
    """Noise variance of a scalar series via a centered moving-average smoother.

    The estimate is the sample variance of (series - moving average)
    corrected by 1 / (1 - 1/window), which removes the bias introduced by
    the smoother seeing the point it is subtracted from.
    """
    series = np.asarray(series, dtype=float)
    if series.ndim != 1:
        raise ValueError(f"series must be one-dimensional, got shape {series.shape}")
    if window < 3 or window % 2 == 0:
        raise ValueError(f"window must be an odd count >= 3, got {window}")
    if series.size < window:
        raise ValueError(f"series of length {series.size} is shorter than window {window}")
    smooth = np.convolve(series, np.ones(window) / window, mode="valid")
    half = window // 2
    residuals = series[half:series.size - half] - smooth
    if residuals.size < 2:
        raise ValueError("not enough residuals to estimate a variance")
    return float(np.var(residuals, ddof=1) / (1.0 - 1.0 / window))


def default_synthetic_spec(*, horizon_min: int = 3000, seed: int = 7, cfg: WallConfig | None = None,
                           noise: NoiseSpec | None = None) -> SyntheticSpec:
    """Default campaign: smooth one-day boundary cycles around a known truth."""
    return SyntheticSpec(
        truth=WallParameters(R=0.3106, rhoC=3.2e5),
        horizon_min=horizon_min,
        T_int_profile=SinusoidProfile(mean=25.0, amplitude=1.5, period_min=1440.0),
        T_ext_profile=SinusoidProfile(mean=10.0, amplitude=4.0, period_min=1440.0, phase=np.pi / 3),
        noise=noise if noise is not None else NoiseSpec(),
        seed=seed,
        cfg=cfg if cfg is not None else WallConfig(),
    )
