"""Joint state-parameter ensemble filters with a filtered control process.

Two prediction schemes share one perturbed-observation analysis step:

* the marginalized filter propagates every member with the same filtered
  control mean and compensates by inflating the state block of the
  prediction covariance with the averaged ``B P_u B'`` term (plus W), an
  exact consequence of the law of total covariance;
* the sampled-control filter draws an independent control vector per member
  from the filtered control distribution and uses the plain sample
  covariance (plus W in the state block).

Members live as rows of an (M, p+n) array in the augmented ordering
``[theta; state]``. Each member owns an independent random stream; all
member-level draws (control samples, observation perturbations) come from
that stream, so runs with a shared seed stay paired across filter variants.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal, Sequence, Union

import numpy as np

from .errors import DimensionError, NumericalError
from .kalman import ControlFilterState, ControlModel, kf_predict, kf_update, observed_posterior
from .statespace import ModelOperators, ModelProvider, check_symmetric

__all__ = [
    "UniformPrior",
    "LogNormalPrior",
    "PointPrior",
    "PriorSpec",
    "Ensemble",
    "PredictionCovariance",
    "FilterDiagnostics",
    "init_ensemble",
    "sample_covariance",
    "enmkf_predict",
    "enmkf_covariance",
    "enkf_predict",
    "enkf_covariance",
    "analyze",
    "step",
]

FilterKind = Literal["enmkf", "enkf"]
InnovationMode = Literal["plain", "scaled_by_R"]


@dataclass(frozen=True)
class UniformPrior:
    """Uniform prior on a physical parameter; optionally stored in log space."""

    low: float
    high: float
    store: Literal["linear", "log"] = "log"

    def __post_init__(self):
        if not self.low < self.high:
            raise ValueError(f"uniform prior needs low < high, got [{self.low}, {self.high}]")
        if self.store == "log" and self.low <= 0:
            raise ValueError("log storage requires strictly positive support")

    def sample_stored(self, rng: np.random.Generator) -> float:
        x = rng.uniform(self.low, self.high)
        return math.log(x) if self.store == "log" else x


@dataclass(frozen=True)
class LogNormalPrior:
    """Log-normal prior given as mean/std of the log; stored in log space by default."""

    log_mean: float
    log_std: float
    store: Literal["linear", "log"] = "log"

    def __post_init__(self):
        if self.log_std <= 0:
            raise ValueError(f"log_std must be positive, got {self.log_std}")

    def sample_stored(self, rng: np.random.Generator) -> float:
        g = rng.normal(self.log_mean, self.log_std)
        return g if self.store == "log" else math.exp(g)


@dataclass(frozen=True)
class PointPrior:
    """Degenerate prior pinning one component (useful for fixed-parameter runs)."""

    value: float
    store: Literal["linear", "log"] = "linear"

    def sample_stored(self, rng: np.random.Generator) -> float:
        return math.log(self.value) if self.store == "log" else self.value


ParameterPrior = Union[UniformPrior, LogNormalPrior, PointPrior]


@dataclass(frozen=True)
class PriorSpec:
    """Joint prior: independent per-component parameter priors and an
    isotropic Gaussian state prior N(state_mean, state_var I)."""

    parameters: tuple[ParameterPrior, ...]
    state_mean: np.ndarray
    state_var: float

    def __post_init__(self):
        object.__setattr__(self, "parameters", tuple(self.parameters))
        object.__setattr__(self, "state_mean", np.asarray(self.state_mean, dtype=float))
        if self.state_mean.ndim != 1:
            raise DimensionError(f"state_mean must be one-dimensional, got shape {self.state_mean.shape}")
        if self.state_var <= 0:
            raise ValueError(f"state_var must be positive, got {self.state_var}")

    @property
    def p(self) -> int:
        return len(self.parameters)

    @property
    def n(self) -> int:
        return self.state_mean.size


@dataclass
class Ensemble:
    """M augmented members (rows) plus one independent stream per member.

    The member array is replaced on every operation; the streams advance in
    place, which is what keeps repeated draws per member reproducible. An
    ensemble must be exclusively owned while it is being stepped.
    """

    members: np.ndarray
    p: int
    rng_streams: list[np.random.Generator]

    def __post_init__(self):
        self.members = np.asarray(self.members, dtype=float)
        if self.members.ndim != 2:
            raise DimensionError(f"members must be (M, p+n), got shape {self.members.shape}")
        if self.members.shape[0] < 2:
            raise ValueError(f"ensemble needs at least 2 members, got {self.members.shape[0]}")
        if not 0 <= self.p < self.members.shape[1]:
            raise DimensionError(f"parameter count {self.p} inconsistent with member length {self.members.shape[1]}")
        if len(self.rng_streams) != self.members.shape[0]:
            raise DimensionError(
                f"{len(self.rng_streams)} rng streams for {self.members.shape[0]} members"
            )
        if not np.all(np.isfinite(self.members)):
            raise ValueError("ensemble members contain non-finite entries")

    @property
    def size(self) -> int:
        return self.members.shape[0]

    @property
    def n(self) -> int:
        return self.members.shape[1] - self.p

    @property
    def theta(self) -> np.ndarray:
        """Parameter block, shape (M, p). View into the member array."""
        return self.members[:, : self.p]

    @property
    def states(self) -> np.ndarray:
        """State block, shape (M, n). View into the member array."""
        return self.members[:, self.p:]

    def replace_members(self, members: np.ndarray) -> "Ensemble":
        return Ensemble(members, self.p, self.rng_streams)


@dataclass(frozen=True)
class PredictionCovariance:
    """Covariance of the augmented vector ahead of the analysis step.

    By construction the parameter block always equals the plain sample
    covariance: the marginalization inflates the state block only.
    """

    matrix: np.ndarray
    p: int

    def __post_init__(self):
        object.__setattr__(self, "matrix", np.asarray(self.matrix, dtype=float))
        check_symmetric(self.matrix, "prediction covariance")
        if not 0 <= self.p <= self.matrix.shape[0]:
            raise DimensionError(f"parameter count {self.p} inconsistent with matrix shape {self.matrix.shape}")


@dataclass(frozen=True)
class FilterDiagnostics:
    """Per-step summary of the posterior ensemble.

    Parameter statistics are reported in physical units (the stored
    parameter block is exponentiated in the flux-scaled mode). Flux fields
    are populated only when the observation is a flux scaled by the
    resistance, i.e. in the wall instance.
    """

    step_index: int
    param_mean: np.ndarray
    param_std: np.ndarray
    state_mean: np.ndarray
    flux_mean: np.ndarray | None = None
    flux_cov: np.ndarray | None = None


def init_ensemble(prior: PriorSpec, M: int, seed: int) -> Ensemble:
    """Draw an initial ensemble; deterministic for a fixed seed.

    Each member gets its own child stream of ``seed`` and draws its
    parameter components (in order) and then its state from it, so member i
    is reproducible regardless of M.
    """
    if M < 2:
        raise ValueError(f"ensemble size must be at least 2, got {M}")
    streams = [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(M)]
    p, n = prior.p, prior.n
    members = np.empty((M, p + n))
    scale = math.sqrt(prior.state_var)
    for i, rng in enumerate(streams):
        for j, d in enumerate(prior.parameters):
            members[i, j] = d.sample_stored(rng)
        members[i, p:] = prior.state_mean + scale * rng.standard_normal(n)
    return Ensemble(members, p, streams)


def sample_covariance(members: np.ndarray) -> np.ndarray:
    """Sample covariance of member rows with 1/(M-1) normalization."""
    members = np.asarray(members, dtype=float)
    M = members.shape[0]
    if M < 2:
        raise ValueError("sample covariance needs at least 2 members")
    dev = members - members.mean(axis=0)
    return dev.T @ dev / (M - 1)


def _member_operators(e: Ensemble, provider: ModelProvider) -> list[ModelOperators]:
    return [provider.operators(e.members[i, : e.p]) for i in range(e.size)]


def _check_control(e: Ensemble, provider: ModelProvider, u_post: ControlFilterState) -> None:
    if u_post.mean.size != provider.ell:
        raise DimensionError(
            f"control posterior has dimension {u_post.mean.size}, expected the {provider.ell} physical "
            "channels (project companion-form states with observed_posterior first)"
        )
    if e.n != provider.n:
        raise DimensionError(f"ensemble state length {e.n} does not match provider (n={provider.n})")


def enmkf_predict(e: Ensemble, provider: ModelProvider, u_post: ControlFilterState) -> Ensemble:
    """Propagate every member with its own operators and the shared control mean.

    Deterministic: the control uncertainty is accounted for in
    :func:`enmkf_covariance`, not by sampling. Parameter blocks are static.
    """
    _check_control(e, provider, u_post)
    members = e.members.copy()
    for i, ops in enumerate(_member_operators(e, provider)):
        members[i, e.p:] = ops.A @ e.members[i, e.p:] + ops.B @ u_post.mean
    return e.replace_members(members)


def enmkf_covariance(e_pred: Ensemble, provider: ModelProvider, u_post: ControlFilterState, W=None) -> PredictionCovariance:
    """Sample covariance plus the marginalization inflation of the state block.

    The inflation is ``(1/M) sum_i B_i P_u B_i' + W`` placed in the state
    block; the parameter block of the result is bitwise the sample
    covariance block.
    """
    _check_control(e_pred, provider, u_post)
    W = _as_state_noise(W, provider.n)
    total = sample_covariance(e_pred.members)
    inflation = np.zeros((provider.n, provider.n))
    for ops in _member_operators(e_pred, provider):
        inflation += ops.B @ u_post.cov @ ops.B.T
    inflation /= e_pred.size
    inflation += W
    total[e_pred.p:, e_pred.p:] += inflation
    return PredictionCovariance(total, e_pred.p)


def enkf_predict(e: Ensemble, provider: ModelProvider, u_post: ControlFilterState) -> Ensemble:
    """Propagate with one control draw per member from N(u_mean, u_cov).

    Draws come from each member's own stream. An exactly zero control
    covariance skips sampling entirely (leaving the streams untouched), so
    the degenerate case coincides with :func:`enmkf_predict` draw-for-draw.
    """
    _check_control(e, provider, u_post)
    factor = _psd_factor(u_post.cov, "control covariance")
    members = e.members.copy()
    for i, ops in enumerate(_member_operators(e, provider)):
        if factor is None:
            u_i = u_post.mean
        else:
            u_i = u_post.mean + factor @ e.rng_streams[i].standard_normal(provider.ell)
        members[i, e.p:] = ops.A @ e.members[i, e.p:] + ops.B @ u_i
    return e.replace_members(members)


def enkf_covariance(e_pred: Ensemble, W=None) -> PredictionCovariance:
    """Plain sample covariance plus W in the state block."""
    W = _as_state_noise(W, e_pred.n)
    total = sample_covariance(e_pred.members)
    total[e_pred.p:, e_pred.p:] += W
    return PredictionCovariance(total, e_pred.p)


def analyze(e_pred: Ensemble, P: PredictionCovariance, y, ops: ModelOperators,
            innovation_mode: InnovationMode = "plain", *, perturb: bool = True) -> Ensemble:
    """Perturbed-observation analysis with a single gain for all members.

    The augmented observation operator is ``[0 H]``, so the gain uses the
    state rows/columns of P. Each member receives an independently perturbed
    observation from its own stream. In the flux-scaled mode the member's
    innovation is ``R_i (y + v_i) - H x_i`` with ``R_i = exp(theta_i[0])``;
    the gain keeps the unscaled V.

    ``perturb=False`` forces all perturbations to zero (test hook); the gain
    is unchanged.
    """
    y = np.asarray(y, dtype=float)
    p, n, m = e_pred.p, e_pred.n, ops.m
    if y.shape != (m,):
        raise DimensionError(f"observation must have shape ({m},), got {y.shape}")
    if not np.all(np.isfinite(y)):
        raise ValueError("observation contains non-finite entries")
    if P.matrix.shape != (p + n, p + n):
        raise DimensionError(f"prediction covariance shape {P.matrix.shape} does not match ensemble ({p + n})")
    if ops.n != n:
        raise DimensionError(f"operators built for n={ops.n}, ensemble has n={n}")

    PHt = P.matrix[:, p:] @ ops.H.T
    S = ops.H @ P.matrix[p:, p:] @ ops.H.T + ops.V
    try:
        gain = np.linalg.solve(S, PHt.T).T
    except np.linalg.LinAlgError as err:
        raise NumericalError(
            f"singular innovation covariance in ensemble analysis (cond={np.linalg.cond(S):.3e})"
        ) from err

    if perturb:
        factor = np.linalg.cholesky(ops.V)
        perts = np.stack([factor @ g.standard_normal(m) for g in e_pred.rng_streams])
    else:
        perts = np.zeros((e_pred.size, m))
    observed = y + perts
    if innovation_mode == "scaled_by_R":
        observed = np.exp(e_pred.members[:, 0])[:, None] * observed
    elif innovation_mode != "plain":
        raise ValueError(f"unknown innovation mode {innovation_mode!r}")
    innovations = observed - e_pred.members[:, p:] @ ops.H.T
    return e_pred.replace_members(e_pred.members + innovations @ gain.T)


def step(filter_kind: FilterKind, e: Ensemble, provider: ModelProvider,
         control_state: ControlFilterState, control_model: ControlModel,
         z_k, y_k, W=None, innovation_mode: InnovationMode = "plain",
         ) -> tuple[Ensemble, ControlFilterState, FilterDiagnostics]:
    """One full assimilation step for a new (z_k, y_k) pair.

    Runs the control filter first, then the chosen prediction and covariance
    scheme, then the shared analysis. Returns the posterior ensemble, the
    updated control posterior, and per-step diagnostics. In the flux-scaled
    mode the parameter block is assumed log-stored and the diagnostics
    include per-member flux estimates ``(1/R_i) H T_i``.
    """
    if filter_kind not in ("enmkf", "enkf"):
        raise ValueError(f"unknown filter kind {filter_kind!r}")
    cs_post = kf_update(kf_predict(control_state, control_model), z_k, control_model)
    u_mean, u_cov = observed_posterior(cs_post, control_model)
    u_obs = ControlFilterState(u_mean, u_cov, cs_post.step_index)

    try:
        with np.errstate(over="raise", invalid="raise"):
            if filter_kind == "enmkf":
                e_pred = enmkf_predict(e, provider, u_obs)
                P = enmkf_covariance(e_pred, provider, u_obs, W)
            else:
                e_pred = enkf_predict(e, provider, u_obs)
                P = enkf_covariance(e_pred, W)
            ops = provider.operators(e_pred.members[0, : e_pred.p])
            e_post = analyze(e_pred, P, y_k, ops, innovation_mode)
            if not np.all(np.isfinite(e_post.members)):
                raise NumericalError("ensemble diverged (non-finite members after analysis)")
            diag = _diagnostics(e_post, ops.H, innovation_mode, cs_post.step_index)
    except (FloatingPointError, OverflowError) as err:
        raise NumericalError(f"ensemble diverged ({err})") from err
    return e_post, cs_post, diag


def _diagnostics(e: Ensemble, H: np.ndarray, innovation_mode: InnovationMode, step_index: int) -> FilterDiagnostics:
    if innovation_mode == "scaled_by_R":
        params = np.exp(e.theta)
    else:
        params = e.theta
    flux_mean = flux_cov = None
    if innovation_mode == "scaled_by_R":
        fluxes = np.exp(-e.members[:, 0])[:, None] * (e.states @ H.T)
        flux_mean = fluxes.mean(axis=0)
        flux_cov = sample_covariance(fluxes)
    return FilterDiagnostics(
        step_index=step_index,
        param_mean=params.mean(axis=0),
        param_std=params.std(axis=0, ddof=1),
        state_mean=e.states.mean(axis=0),
        flux_mean=flux_mean,
        flux_cov=flux_cov,
    )


def _as_state_noise(W, n: int) -> np.ndarray:
    if W is None:
        return np.zeros((n, n))
    W = np.asarray(W, dtype=float)
    if W.shape != (n, n):
        raise DimensionError(f"W must be {n}x{n}, got shape {W.shape}")
    return W


def _psd_factor(cov: np.ndarray, name: str) -> np.ndarray | None:
    """Square-root factor of a PSD matrix; None for an exactly zero matrix.

    Plain Cholesky first; a PSD-but-singular matrix falls back to an
    eigenvalue factor. Meaningfully negative eigenvalues raise.
    """
    cov = np.asarray(cov, dtype=float)
    if not cov.any():
        return None
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        pass
    eigs, vecs = np.linalg.eigh(0.5 * (cov + cov.T))
    if eigs[0] < -1e-10 * max(1.0, float(np.trace(cov))):
        raise NumericalError(f"{name} is not positive semidefinite (min eigenvalue {eigs[0]:.3e})")
    return vecs @ np.diag(np.sqrt(np.clip(eigs, 0.0, None)))
