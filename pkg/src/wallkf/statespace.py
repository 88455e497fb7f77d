"""Data model for linear state-space systems with parameter-dependent operators.

The systems handled here have the form

    T_k = A T_{k-1} + B u_k + w_k,    w_k ~ N(0, W)
    y_k = H T_k + v_k,                v_k ~ N(0, V)

where A and B depend on a static parameter vector theta while H does not.
The joint filters work on the augmented vector ``[theta; T]``; :func:`augment`
and :func:`split` define that ordering once so every module agrees on it.
"""

from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import DimensionError

SYM_TOL = 1e-10


def _as_finite_vector(x, name: str) -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if arr.ndim != 1:
        raise DimensionError(f"{name} must be one-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    return arr


def augment(theta, state) -> np.ndarray:
    """Concatenate parameter and state blocks into one augmented vector.

    The order is always ``[theta; state]``; the augmented observation
    operator used by the ensemble filters relies on it.
    """
    theta = _as_finite_vector(theta, "theta")
    state = _as_finite_vector(state, "state")
    return np.concatenate([theta, state])


def split(x, p: int) -> tuple[np.ndarray, np.ndarray]:
    """Split an augmented vector into (theta, state), with ``len(theta) == p``.

    Exact inverse of :func:`augment`. Raises :class:`DimensionError` when no
    state entries would remain.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise DimensionError(f"augmented vector must be one-dimensional, got shape {x.shape}")
    if p < 0:
        raise DimensionError(f"parameter count must be non-negative, got {p}")
    if x.size <= p:
        raise DimensionError(f"augmented vector of length {x.size} leaves no state block after {p} parameters")
    return x[:p].copy(), x[p:].copy()


def check_symmetric(mat: np.ndarray, name: str, tol: float = SYM_TOL) -> None:
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise DimensionError(f"{name} must be square, got shape {mat.shape}")
    # direct reductions; this runs once per member and per step in the filters
    scale = max(1.0, float(np.abs(mat).max(initial=0.0)))
    if float(np.abs(mat - mat.T).max(initial=0.0)) > tol * scale:
        raise ValueError(f"{name} is not symmetric within tolerance")


def check_psd(mat: np.ndarray, name: str, *, strict: bool = False) -> None:
    """Validate that ``mat`` is symmetric PSD (PD when ``strict``).

    Cheap paths for the all-zero and diagonal cases; these dominate in the
    per-member operator builds, where an eigendecomposition per call would
    be wasteful.
    """
    check_symmetric(mat, name)
    diag = np.diagonal(mat)
    if not strict and not mat.any():
        return
    if np.count_nonzero(mat) == np.count_nonzero(diag):
        bad = np.any(diag <= 0.0) if strict else np.any(diag < -SYM_TOL)
        if bad:
            raise ValueError(f"{name} must be positive {'definite' if strict else 'semidefinite'}")
        return
    eigs = np.linalg.eigvalsh(0.5 * (mat + mat.T))
    floor = -SYM_TOL * max(1.0, float(np.trace(mat)))
    if strict:
        if eigs[0] <= 0.0:
            raise ValueError(f"{name} must be positive definite (min eigenvalue {eigs[0]:.3e})")
    elif eigs[0] < floor:
        raise ValueError(f"{name} must be positive semidefinite (min eigenvalue {eigs[0]:.3e})")


@dataclass(frozen=True)
class ModelOperators:
    """Operators of one linear model instance for a fixed parameter vector.

    ``B_columns`` stores the control matrix column-wise (one column per
    control channel) because the marginalized prediction covariance needs
    the individual columns explicitly.
    """

    A: np.ndarray
    B_columns: tuple[np.ndarray, ...]
    H: np.ndarray
    W: np.ndarray
    V: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "A", np.asarray(self.A, dtype=float))
        object.__setattr__(self, "B_columns", tuple(np.asarray(b, dtype=float) for b in self.B_columns))
        object.__setattr__(self, "H", np.asarray(self.H, dtype=float))
        object.__setattr__(self, "W", np.asarray(self.W, dtype=float))
        object.__setattr__(self, "V", np.asarray(self.V, dtype=float))
        n = self.A.shape[0]
        if self.A.shape != (n, n):
            raise DimensionError(f"A must be square, got shape {self.A.shape}")
        for j, b in enumerate(self.B_columns):
            if b.shape != (n,):
                raise DimensionError(f"B column {j} must have length {n}, got shape {b.shape}")
        if self.H.ndim != 2 or self.H.shape[1] != n:
            raise DimensionError(f"H must have {n} columns, got shape {self.H.shape}")
        m = self.H.shape[0]
        if self.W.shape != (n, n):
            raise DimensionError(f"W must be {n}x{n}, got shape {self.W.shape}")
        if self.V.shape != (m, m):
            raise DimensionError(f"V must be {m}x{m}, got shape {self.V.shape}")
        check_psd(self.W, "W")
        check_psd(self.V, "V", strict=True)
        object.__setattr__(self, "_B", np.column_stack(self.B_columns) if self.B_columns else np.zeros((n, 0)))

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def ell(self) -> int:
        return len(self.B_columns)

    @property
    def m(self) -> int:
        return self.H.shape[0]

    @property
    def B(self) -> np.ndarray:
        """Control matrix of shape (n, ell) assembled from the stored columns."""
        return self._B


class ModelProvider:
    """Deterministic factory mapping a parameter vector to :class:`ModelOperators`.

    The build callable must be pure: equal parameter vectors yield operators
    with identical action. Results are memoized on the parameter bytes so a
    filter step can request the same member's operators repeatedly at the
    cost of one build.
    """

    def __init__(self, build: Callable[[np.ndarray], ModelOperators], *, n: int, ell: int, m: int, dt: float,
                 cache_size: int = 1024):
        self._build = build
        self.n = int(n)
        self.ell = int(ell)
        self.m = int(m)
        self.dt = float(dt)
        self._cache: OrderedDict[bytes, ModelOperators] = OrderedDict()
        self._cache_size = int(cache_size)

    def operators(self, theta) -> ModelOperators:
        theta = np.ascontiguousarray(theta, dtype=float)
        key = theta.tobytes()
        cached = self._cache.get(key)
        if cached is not None:
            self._cache.move_to_end(key)
            return cached
        ops = self._build(theta)
        if ops.n != self.n or ops.ell != self.ell or ops.m != self.m:
            raise DimensionError(
                f"provider advertised (n={self.n}, ell={self.ell}, m={self.m}) but built "
                f"(n={ops.n}, ell={ops.ell}, m={ops.m})"
            )
        self._cache[key] = ops
        if len(self._cache) > self._cache_size:
            self._cache.popitem(last=False)
        return ops
