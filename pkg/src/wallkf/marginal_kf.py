"""Marginalized Kalman filter for the state conditional on fixed parameters.

With the parameters held fixed the state dynamics are linear, so the filter
is exact. Boundary uncertainty is integrated out by feeding the control
filter's posterior into the prediction: the predicted covariance picks up
the extra term ``B P_u B'`` on top of the usual propagation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, NumericalError
from .statespace import ModelOperators, check_symmetric

__all__ = ["ConditionalStateFilter", "mkf_predict", "mkf_update"]


@dataclass(frozen=True)
class ConditionalStateFilter:
    """Filtered mean and covariance of the state for one parameter vector."""

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


def mkf_predict(s: ConditionalStateFilter, ops: ModelOperators, u_post_mean, u_post_cov) -> ConditionalStateFilter:
    """Predict the conditional state using the filtered control posterior.

    The control posterior must already be expressed on the physical control
    channels (length ``ops.ell``), i.e. projected out of any companion-form
    augmentation. Mean and covariance become

        mean' = A mean + B u_mean
        cov'  = A cov A' + B u_cov B' + W
    """
    u_post_mean = np.asarray(u_post_mean, dtype=float)
    u_post_cov = np.asarray(u_post_cov, dtype=float)
    if u_post_mean.shape != (ops.ell,):
        raise DimensionError(f"control mean must have length {ops.ell}, got shape {u_post_mean.shape}")
    if u_post_cov.shape != (ops.ell, ops.ell):
        raise DimensionError(f"control covariance must be {ops.ell}x{ops.ell}, got shape {u_post_cov.shape}")
    if s.mean.size != ops.n:
        raise DimensionError(f"state length {s.mean.size} does not match operators (n={ops.n})")
    B = ops.B
    mean = ops.A @ s.mean + B @ u_post_mean
    cov = ops.A @ s.cov @ ops.A.T + B @ u_post_cov @ B.T + ops.W
    return ConditionalStateFilter(mean, 0.5 * (cov + cov.T), s.step_index)


def mkf_update(s_pred: ConditionalStateFilter, y, ops: ModelOperators) -> ConditionalStateFilter:
    """Standard Kalman analysis of the conditional state with H and V."""
    y = np.asarray(y, dtype=float)
    if y.shape != (ops.m,):
        raise DimensionError(f"observation must have shape ({ops.m},), got {y.shape}")
    if not np.all(np.isfinite(y)):
        raise ValueError("observation contains non-finite entries")
    cov = s_pred.cov
    S = ops.H @ cov @ ops.H.T + ops.V
    try:
        gain = np.linalg.solve(S, ops.H @ cov).T
    except np.linalg.LinAlgError as err:
        raise NumericalError(
            f"singular innovation covariance in state update (cond={np.linalg.cond(S):.3e})"
        ) from err
    mean = s_pred.mean + gain @ (y - ops.H @ s_pred.mean)
    post = (np.eye(ops.n) - gain @ ops.H) @ cov
    return ConditionalStateFilter(mean, 0.5 * (post + post.T), s_pred.step_index + 1)
