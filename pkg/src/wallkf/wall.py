"""1D heat-conduction wall model: discrete operators, fluxes, initial profile.

The wall is modeled on the normalized domain s in [0, 1] where the heat
equation reduces to ``dT/dt = a d2T/ds2`` with diffusion coefficient
``a = 1 / (R rhoC)`` per second; the physical thickness cancels out of both
the dynamics and the steady flux ``(T_int - T_ext) / R``. Time stepping is
backward Euler at the measurement cadence, which keeps the one-step form
``T_k = A T_{k-1} + B_int T_int_k + B_ext T_ext_k`` with the controls at the
new time level and is unconditionally stable, so no sub-stepping is needed.

The state vector carries every grid node including both boundary nodes; the
boundary rows of A are zero and the matching rows of the control columns are
one, so boundary nodes copy the control values exactly. Boundary heat flux is
observed through one-sided three-point stencils divided by R, applied here
without the R factor so the observation operator stays parameter-free:

    y_k = (1/R) H T_k + v_k
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .statespace import ModelOperators, ModelProvider

__all__ = [
    "WallConfig",
    "WallParameters",
    "DEFAULT_FLUX_NOISE_VAR",
    "DEFAULT_TEMP_NOISE_VAR",
    "build_operators",
    "flux_stencil",
    "flux_observe",
    "initial_condition",
    "wall_provider",
]

DEFAULT_FLUX_NOISE_VAR = (20.0, 5.0)
DEFAULT_TEMP_NOISE_VAR = 0.01


@dataclass(frozen=True)
class WallConfig:
    """Grid and prior configuration of the wall model.

    ``n_cells`` intervals give ``n_cells + 1`` nodes on [0, 1]. ``dt`` is the
    step in seconds (one measurement per minute by default). ``tau0`` is the
    assumed mid-wall temperature of the initial profile.
    """

    n_cells: int = 20
    dt: float = 60.0
    tau0: float = 16.1
    state_prior_var: float = 0.01

    def __post_init__(self):
        if self.n_cells < 4:
            raise ValueError(f"n_cells must be at least 4 (flux stencil needs 3 nodes per side), got {self.n_cells}")
        if self.dt <= 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if self.state_prior_var <= 0:
            raise ValueError(f"state_prior_var must be positive, got {self.state_prior_var}")

    @property
    def n_nodes(self) -> int:
        return self.n_cells + 1

    @property
    def ds(self) -> float:
        return 1.0 / self.n_cells


@dataclass(frozen=True)
class WallParameters:
    """Thermal resistance R (m2K/W) and areal heat capacity rhoC (J/m2K)."""

    R: float
    rhoC: float

    def __post_init__(self):
        if not (self.R > 0 and math.isfinite(self.R)):
            raise ValueError(f"R must be positive and finite, got {self.R}")
        if not (self.rhoC > 0 and math.isfinite(self.rhoC)):
            raise ValueError(f"rhoC must be positive and finite, got {self.rhoC}")

    @property
    def diffusivity(self) -> float:
        """Normalized diffusion coefficient 1 / (R rhoC), per second."""
        return 1.0 / (self.R * self.rhoC)

    def to_log(self) -> np.ndarray:
        return np.array([math.log(self.R), math.log(self.rhoC)])

    @classmethod
    def from_log(cls, theta) -> "WallParameters":
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (2,):
            raise ValueError(f"expected (log R, log rhoC), got shape {theta.shape}")
        return cls(R=math.exp(theta[0]), rhoC=math.exp(theta[1]))


@lru_cache(maxsize=64)
def _flux_stencil_cached(n_nodes: int, ds: float) -> np.ndarray:
    H = np.zeros((2, n_nodes))
    H[0, :3] = np.array([3.0, -4.0, 1.0]) / (2.0 * ds)
    H[1, -3:] = np.array([1.0, -4.0, 3.0]) / (2.0 * ds)
    H.flags.writeable = False
    return H


@lru_cache(maxsize=64)
def _interior_stencil_cached(n_int: int) -> tuple[np.ndarray, np.ndarray]:
    d2 = np.diag(-2.0 * np.ones(n_int)) + np.diag(np.ones(n_int - 1), 1) + np.diag(np.ones(n_int - 1), -1)
    eye = np.eye(n_int)
    d2.flags.writeable = False
    eye.flags.writeable = False
    return eye, d2


@lru_cache(maxsize=64)
def _zero_state_noise(n: int) -> np.ndarray:
    W = np.zeros((n, n))
    W.flags.writeable = False
    return W


def flux_stencil(cfg: WallConfig) -> np.ndarray:
    """One-sided three-point flux stencils on the full node vector.

    Row 0 approximates ``-dT/ds`` at s=0, row 1 approximates ``+dT/ds`` at
    s=1 (the sign convention of the discrete operator the data follows).
    Both stencils are exact on quadratics. The returned array is read-only
    (shared across calls).
    """
    return _flux_stencil_cached(cfg.n_nodes, cfg.ds)


def build_operators(cfg: WallConfig, params: WallParameters, *, W=None, V=None) -> ModelOperators:
    """Assemble the backward-Euler wall operators for one parameter pair.

    The interior block is ``(I - lam D2)^{-1}`` with ``lam = a dt / ds^2``
    and D2 the tridiagonal second difference; the control columns carry the
    boundary coupling ``lam (I - lam D2)^{-1} e`` plus a unit entry at the
    matching boundary node. Row sums of [A | B_int | B_ext] equal one, so
    constant profiles are preserved exactly.
    """
    n = cfg.n_nodes
    n_int = n - 2
    lam = params.diffusivity * cfg.dt / cfg.ds**2

    eye, d2 = _interior_stencil_cached(n_int)
    interior = np.linalg.solve(eye - lam * d2, eye)

    A = np.zeros((n, n))
    A[1:-1, 1:-1] = interior

    b_int = np.zeros(n)
    b_int[0] = 1.0
    b_int[1:-1] = lam * interior[:, 0]
    b_ext = np.zeros(n)
    b_ext[-1] = 1.0
    b_ext[1:-1] = lam * interior[:, -1]

    if W is None:
        W = _zero_state_noise(n)
    if V is None:
        V = np.diag(DEFAULT_FLUX_NOISE_VAR)
    return ModelOperators(A=A, B_columns=(b_int, b_ext), H=flux_stencil(cfg), W=W, V=V)


def flux_observe(T, R: float, cfg: WallConfig) -> tuple[float, float]:
    """Boundary heat fluxes (F_int, F_ext) in W/m2 for one temperature profile."""
    if R <= 0:
        raise ValueError(f"R must be positive, got {R}")
    T = np.asarray(T, dtype=float)
    if T.shape != (cfg.n_nodes,):
        raise ValueError(f"temperature vector must have length {cfg.n_nodes}, got shape {T.shape}")
    f = flux_stencil(cfg) @ T / R
    return float(f[0]), float(f[1])


def initial_condition(T_int0: float, T_ext0: float, cfg: WallConfig) -> np.ndarray:
    """Piecewise-linear initial profile through (0, T_int0), (1/2, tau0), (1, T_ext0)."""
    s = np.linspace(0.0, 1.0, cfg.n_nodes)
    first = T_int0 + 2.0 * (cfg.tau0 - T_int0) * s
    second = cfg.tau0 + 2.0 * (T_ext0 - cfg.tau0) * (s - 0.5)
    return np.where(s <= 0.5, first, second)


def wall_provider(cfg: WallConfig, *, W=None, V=None) -> ModelProvider:
    """Model provider over theta = (log R, log rhoC).

    Intended for the ensemble filters with the flux-scaled innovation, where
    the observation is ``(1/R) H T + v`` and the first parameter component
    is log R. ``W`` and ``V`` are shared across all parameter values.
    """

    def build(theta: np.ndarray) -> ModelOperators:
        return build_operators(cfg, WallParameters.from_log(theta), W=W, V=V)

    return ModelProvider(build, n=cfg.n_nodes, ell=2, m=2, dt=cfg.dt)
