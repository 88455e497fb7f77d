"""Exact Kalman filtering for the noisily observed control (boundary) process.

The control vector follows user-defined linear dynamics and is observed
directly with additive Gaussian noise:

    u_k = F u_{k-1} + q_k,    q_k ~ N(0, Q)
    z_k = G u_k + c_k,        c_k ~ N(0, C)

For the random-walk model the latent vector is the control itself (G is the
identity). The second-order random-increment model is carried in companion
form, doubling the latent dimension; G then selects the leading block.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, NumericalError
from .statespace import check_psd, check_symmetric

__all__ = [
    "ControlModel",
    "ControlFilterState",
    "kf_predict",
    "kf_update",
    "ar1_model",
    "ar2_model",
    "filter_series",
    "observed_posterior",
    "default_control_model",
]


@dataclass(frozen=True)
class ControlModel:
    """Linear dynamics and observation noise for the control process.

    ``F`` and ``Q`` act on the latent (possibly companion-augmented) vector;
    ``G`` maps it to the observed control channels and ``C`` is the
    observation noise covariance on those channels.
    """

    F: np.ndarray
    Q: np.ndarray
    C: np.ndarray
    G: np.ndarray
    u0_mean: np.ndarray
    u0_cov: np.ndarray

    def __post_init__(self):
        for name in ("F", "Q", "C", "G", "u0_cov"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        object.__setattr__(self, "u0_mean", np.asarray(self.u0_mean, dtype=float))
        la = self.F.shape[0]
        if self.F.shape != (la, la):
            raise DimensionError(f"F must be square, got shape {self.F.shape}")
        if self.Q.shape != (la, la):
            raise DimensionError(f"Q must match F, got shape {self.Q.shape}")
        ell = self.G.shape[0]
        if self.G.shape != (ell, la):
            raise DimensionError(f"G must have {la} columns, got shape {self.G.shape}")
        if self.C.shape != (ell, ell):
            raise DimensionError(f"C must be {ell}x{ell}, got shape {self.C.shape}")
        if self.u0_mean.shape != (la,):
            raise DimensionError(f"u0_mean must have length {la}, got shape {self.u0_mean.shape}")
        if self.u0_cov.shape != (la, la):
            raise DimensionError(f"u0_cov must be {la}x{la}, got shape {self.u0_cov.shape}")
        check_psd(self.Q, "Q")
        check_psd(self.u0_cov, "u0_cov")
        check_psd(self.C, "C", strict=True)

    @property
    def dim(self) -> int:
        """Latent dimension (doubled for the second-order model)."""
        return self.F.shape[0]

    @property
    def obs_dim(self) -> int:
        """Number of observed control channels."""
        return self.G.shape[0]

    def initial_state(self) -> "ControlFilterState":
        return ControlFilterState(self.u0_mean, self.u0_cov, 0)


@dataclass(frozen=True)
class ControlFilterState:
    """Filtered mean and covariance of the latent control vector."""

    mean: np.ndarray
    cov: np.ndarray
    step_index: int = 0

    def __post_init__(self):
        object.__setattr__(self, "mean", np.asarray(self.mean, dtype=float))
        object.__setattr__(self, "cov", np.asarray(self.cov, dtype=float))
        if self.mean.ndim != 1:
            raise DimensionError(f"mean must be one-dimensional, got shape {self.mean.shape}")
        if self.cov.shape != (self.mean.size, self.mean.size):
            raise DimensionError(f"cov shape {self.cov.shape} does not match mean length {self.mean.size}")
        check_symmetric(self.cov, "cov")


def kf_predict(s: ControlFilterState, m: ControlModel) -> ControlFilterState:
    """Propagate the control posterior one step forward.

    Parameters
    ----------
    s : ControlFilterState
        Posterior at the previous step.
    m : ControlModel
        Control dynamics.

    Returns
    -------
    ControlFilterState
        Predicted state with mean ``F mean`` and covariance ``F cov F' + Q``.
        The step index is unchanged; prediction and update form one step.
    """
    if s.mean.size != m.dim:
        raise DimensionError(f"state dimension {s.mean.size} does not match model dimension {m.dim}")
    mean = m.F @ s.mean
    cov = m.F @ s.cov @ m.F.T + m.Q
    return ControlFilterState(mean, 0.5 * (cov + cov.T), s.step_index)


def kf_update(s_pred: ControlFilterState, z, m: ControlModel) -> ControlFilterState:
    """Assimilate one control observation.

    Parameters
    ----------
    s_pred : ControlFilterState
        Output of :func:`kf_predict` for the current step.
    z : array_like
        Observed control channels, length ``m.obs_dim``.
    m : ControlModel

    Returns
    -------
    ControlFilterState
        Posterior with the step index incremented. The covariance update is
        the symmetrized ``(I - K G) cov``.

    Raises
    ------
    NumericalError
        If the innovation covariance ``G cov G' + C`` is singular.
    """
    z = np.asarray(z, dtype=float)
    if z.shape != (m.obs_dim,):
        raise DimensionError(f"observation must have shape ({m.obs_dim},), got {z.shape}")
    if not np.all(np.isfinite(z)):
        raise ValueError("observation contains non-finite entries")
    if s_pred.mean.size != m.dim:
        raise DimensionError(f"state dimension {s_pred.mean.size} does not match model dimension {m.dim}")
    cov = s_pred.cov
    S = m.G @ cov @ m.G.T + m.C
    try:
        gain = np.linalg.solve(S, m.G @ cov).T
    except np.linalg.LinAlgError as err:
        raise NumericalError(
            f"singular innovation covariance in control update (cond={np.linalg.cond(S):.3e})"
        ) from err
    mean = s_pred.mean + gain @ (z - m.G @ s_pred.mean)
    post = (np.eye(m.dim) - gain @ m.G) @ cov
    return ControlFilterState(mean, 0.5 * (post + post.T), s_pred.step_index + 1)


def ar1_model(ell: int, Q, C, u0_mean, u0_cov) -> ControlModel:
    """Random-walk control model: the latent vector is the control itself."""
    eye = np.eye(ell)
    return ControlModel(F=eye, Q=Q, C=C, G=eye, u0_mean=u0_mean, u0_cov=u0_cov)


def ar2_model(ell: int, Q, C, u0_mean, u0_cov) -> ControlModel:
    """Random-increment control model in companion form.

    The latent vector stacks the current and previous control values, so
    ``F = [[2I, -I], [I, 0]]`` realizes ``u_k = 2 u_{k-1} - u_{k-2} + q_k``
    and ``G = [I, 0]`` selects the current value. ``Q`` enters the leading
    block only. ``u0_mean`` and ``u0_cov`` may be given either in observed
    coordinates (length ``ell``, lifted by replication / block-diagonal
    placement) or directly in companion coordinates (length ``2 ell``).
    """
    eye = np.eye(ell)
    zero = np.zeros((ell, ell))
    F = np.block([[2.0 * eye, -eye], [eye, zero]])
    Q = np.asarray(Q, dtype=float)
    if Q.shape != (ell, ell):
        raise DimensionError(f"Q must be {ell}x{ell}, got shape {Q.shape}")
    Q_full = np.block([[Q, zero], [zero, zero]])
    G = np.hstack([eye, zero])
    u0_mean = np.asarray(u0_mean, dtype=float)
    if u0_mean.shape == (ell,):
        u0_mean = np.concatenate([u0_mean, u0_mean])
    u0_cov = np.asarray(u0_cov, dtype=float)
    if u0_cov.shape == (ell, ell):
        u0_cov = np.block([[u0_cov, zero], [zero, u0_cov]])
    return ControlModel(F=F, Q=Q_full, C=C, G=G, u0_mean=u0_mean, u0_cov=u0_cov)


def filter_series(m: ControlModel, z_series) -> list[ControlFilterState]:
    """Run predict/update over a whole observation series.

    Returns one posterior :class:`ControlFilterState` per observation,
    starting from the model's initial state.
    """
    z_series = np.atleast_2d(np.asarray(z_series, dtype=float))
    if z_series.shape[0] == 0:
        raise ValueError("observation series is empty")
    state = m.initial_state()
    out = []
    for z in z_series:
        state = kf_update(kf_predict(state, m), z, m)
        out.append(state)
    return out


def observed_posterior(s: ControlFilterState, m: ControlModel) -> tuple[np.ndarray, np.ndarray]:
    """Project a latent posterior onto the observed control channels.

    Returns ``(G mean, G cov G')``. For the random-walk model this is the
    identity projection; for the companion form it drops the lag block,
    which is all the state dynamics consume.
    """
    return m.G @ s.mean, m.G @ s.cov @ m.G.T


def default_control_model(z_series, order: int, C, *, q_scale: float = 1.0, q_var=None) -> ControlModel:
    """Build a control model with data-driven defaults.

    ``Q`` defaults to ``q_scale`` times the per-channel variance of the first
    differences of the series (override with ``q_var``); the initial mean is
    the first observation and the initial covariance ``10 C``.
    """
    z_series = np.atleast_2d(np.asarray(z_series, dtype=float))
    if z_series.shape[0] < 2:
        raise ValueError("need at least two observations to set defaults")
    ell = z_series.shape[1]
    C = np.asarray(C, dtype=float)
    if q_var is None:
        q_var = q_scale * np.var(np.diff(z_series, axis=0), axis=0, ddof=1)
    q_var = np.broadcast_to(np.asarray(q_var, dtype=float), (ell,))
    Q = np.diag(q_var)
    u0_mean = z_series[0]
    u0_cov = 10.0 * C
    if order == 1:
        return ar1_model(ell, Q, C, u0_mean, u0_cov)
    if order == 2:
        return ar2_model(ell, Q, C, u0_mean, u0_cov)
    raise ValueError(f"autoregressive order must be 1 or 2, got {order}")
