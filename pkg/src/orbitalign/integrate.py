"""Fixed-step RK4 discretization plus forward sensitivity propagation.

The discrete dynamical systems studied here are defined as one classical
RK4 step of the continuous field per iteration. Forward sensitivities are
propagated with the exact derivative of that step (chained analytically
through the four stages), never by differencing the integrator, so that
long products of step Jacobians stay accurate.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from .errors import ConfigurationError, SimulationOverflowError
from .systems import HybridFamily, SystemSpec

# Chaotic catalog orbits live within a few tens of units; anything beyond
# this is a blow-up, not dynamics.
OVERFLOW_LIMIT = 1.0e6

SystemLike = Union[SystemSpec, HybridFamily]


@dataclass(frozen=True)
class Trajectory:
    """An orbit of a discrete system: states[k], k = 0..N, with step size dt.

    Immutable once produced; `states` has its write flag cleared.
    """

    states: np.ndarray
    dt: float
    system_name: str
    lam: Optional[float] = None

    def __post_init__(self):
        arr = np.array(self.states, dtype=float)
        if arr.ndim != 2:
            raise ConfigurationError("trajectory states must be a 2-d array")
        if not self.dt > 0:
            raise ConfigurationError("dt must be positive")
        arr.setflags(write=False)
        object.__setattr__(self, "states", arr)

    @property
    def n_steps(self) -> int:
        return self.states.shape[0] - 1

    @property
    def dim(self) -> int:
        return self.states.shape[1]


@dataclass(frozen=True)
class StepTangent:
    """Derivatives of one RK4 step: jac = d(step)/d(state), lam = d(step)/d(lambda)."""

    jac: np.ndarray
    lam: Optional[np.ndarray] = None


def _bind(system: SystemLike, lam) -> SystemSpec:
    if isinstance(system, HybridFamily):
        if lam is None:
            raise ConfigurationError(
                f"{system.name} is a hybrid family; an embedding parameter is required"
            )
        return system.at(lam)
    if lam is not None:
        raise ConfigurationError(
            f"{system.name} is not a hybrid family; no embedding parameter applies"
        )
    return system


def _check_finite(x, step):
    if not np.abs(x).max() < OVERFLOW_LIMIT:
        raise SimulationOverflowError(step)


def _rk4(field, x, dt):
    k1 = field(x)
    k2 = field(x + 0.5 * dt * k1)
    k3 = field(x + 0.5 * dt * k2)
    k4 = field(x + dt * k3)
    return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _rk4_tangent(spec, x, dt, want_lambda):
    """One RK4 step together with its exact state (and lambda) derivative."""
    field, jac_fn = spec.field, spec.jacobian
    k1 = field(x)
    x2 = x + 0.5 * dt * k1
    k2 = field(x2)
    x3 = x + 0.5 * dt * k2
    k3 = field(x3)
    x4 = x + dt * k3
    k4 = field(x4)
    x_next = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)

    eye = np.eye(x.shape[0])
    j1 = jac_fn(x)
    j2 = jac_fn(x2)
    j3 = jac_fn(x3)
    j4 = jac_fn(x4)
    K1 = j1
    K2 = j2 @ (eye + (0.5 * dt) * K1)
    K3 = j3 @ (eye + (0.5 * dt) * K2)
    K4 = j4 @ (eye + dt * K3)
    jac = eye + (dt / 6.0) * (K1 + 2.0 * K2 + 2.0 * K3 + K4)

    lam_vec = None
    if want_lambda:
        p = spec.lambda_partial
        if p is None:
            raise ConfigurationError(
                f"{spec.name} has no embedding-parameter partial; bind a hybrid first"
            )
        L1 = p(x)
        L2 = j2 @ ((0.5 * dt) * L1) + p(x2)
        L3 = j3 @ ((0.5 * dt) * L2) + p(x3)
        L4 = j4 @ (dt * L3) + p(x4)
        lam_vec = (dt / 6.0) * (L1 + 2.0 * L2 + 2.0 * L3 + L4)
    return x_next, jac, lam_vec


def rk4_step(system: SystemLike, state, dt: float, lam=None) -> np.ndarray:
    """One classical fourth-order Runge-Kutta update of `state`."""
    spec = _bind(system, lam)
    if not dt > 0:
        raise ConfigurationError("dt must be positive")
    x = _rk4(spec.field, np.asarray(state, dtype=float), dt)
    _check_finite(x, 1)
    return x


def simulate(system: SystemLike, x0, n_steps: int, dt: float, lam=None) -> Trajectory:
    """Iterate the discrete map for n_steps, returning all n_steps + 1 states.

    Raises SimulationOverflowError naming the step index if the state leaves
    the finite admissible range.
    """
    spec = _bind(system, lam)
    if n_steps < 0:
        raise ConfigurationError("n_steps must be nonnegative")
    if not dt > 0:
        raise ConfigurationError("dt must be positive")
    x = np.asarray(x0, dtype=float)
    if x.shape != (spec.dim,):
        raise ConfigurationError(f"initial state must have shape ({spec.dim},)")
    states = np.empty((n_steps + 1, spec.dim))
    states[0] = x
    field = spec.field
    for k in range(n_steps):
        x = _rk4(field, x, dt)
        _check_finite(x, k + 1)
        states[k + 1] = x
    return Trajectory(states=states, dt=dt, system_name=spec.name, lam=spec.lam)


def step_tangent(system: SystemLike, state, dt: float, lam=None) -> StepTangent:
    """Exact derivatives of one RK4 step, chained through the four stages.

    `jac` is d(step)/d(state); for hybrids, `lam` is d(step)/d(lambda).
    """
    spec = _bind(system, lam)
    want_lambda = spec.lambda_partial is not None
    _, jac, lam_vec = _rk4_tangent(spec, np.asarray(state, dtype=float), dt, want_lambda)
    _check_finite(jac, 1)
    return StepTangent(jac=jac, lam=lam_vec)


def simulate_with_sensitivity(
    spec: SystemSpec,
    x0,
    n_steps: int,
    dt: float,
    state_seed: Optional[np.ndarray] = None,
    lambda_forced: bool = False,
):
    """Simulate and propagate sensitivities in a single pass.

    Returns (states, S, s_lam) where S[k] = (step-Jacobian product) @ seed
    when `state_seed` is given (else None), and s_lam[k] is the forced
    response to the embedding parameter when `lambda_forced` (else None).
    """
    x = np.asarray(x0, dtype=float)
    dim = x.shape[0]
    states = np.empty((n_steps + 1, dim))
    states[0] = x
    S = None
    if state_seed is not None:
        seed = np.asarray(state_seed, dtype=float)
        if seed.ndim == 1:
            seed = seed[:, None]
        S = np.empty((n_steps + 1,) + seed.shape)
        S[0] = seed
    s_lam = None
    if lambda_forced:
        if spec.lambda_partial is None:
            raise ConfigurationError(
                f"{spec.name} has no embedding-parameter partial; bind a hybrid first"
            )
        s_lam = np.zeros((n_steps + 1, dim))
    for k in range(n_steps):
        x, jac, lam_vec = _rk4_tangent(spec, x, dt, lambda_forced)
        _check_finite(x, k + 1)
        states[k + 1] = x
        if S is not None:
            S[k + 1] = jac @ S[k]
        if s_lam is not None:
            s_lam[k + 1] = jac @ s_lam[k] + lam_vec
    return states, S, s_lam


def propagate_sensitivity(
    system: SystemLike, trajectory: Trajectory, seed=None, mode: str = "state"
) -> np.ndarray:
    """Propagate forward sensitivities along an existing trajectory.

    mode="state" (state-seeded): S[0] = seed (identity by default),
    S[k+1] = jac_k @ S[k]; the chain of step Jacobians applied to the seed.

    mode="lambda" (lambda-forced): s[0] = 0, s[k+1] = jac_k @ s[k] + lam_k;
    the orbit's response to the hybrid embedding parameter.
    """
    spec = _bind(system, trajectory.lam if isinstance(system, HybridFamily) else None)
    states, dt = trajectory.states, trajectory.dt
    n = states.shape[0] - 1
    dim = states.shape[1]
    if mode == "state":
        seed = np.eye(dim) if seed is None else np.asarray(seed, dtype=float)
        if seed.ndim == 1:
            seed = seed[:, None]
        out = np.empty((n + 1,) + seed.shape)
        out[0] = seed
        for k in range(n):
            _, jac, _ = _rk4_tangent(spec, states[k], dt, False)
            out[k + 1] = jac @ out[k]
        return out
    if mode == "lambda":
        if spec.lambda_partial is None:
            raise ConfigurationError(
                f"{spec.name} has no embedding-parameter partial; bind a hybrid first"
            )
        out = np.zeros((n + 1, dim))
        for k in range(n):
            _, jac, lam_vec = _rk4_tangent(spec, states[k], dt, True)
            out[k + 1] = jac @ out[k] + lam_vec
        return out
    raise ConfigurationError(f"unknown sensitivity mode {mode!r}; use 'state' or 'lambda'")


def verify_trajectory(system: SystemLike, trajectory: Trajectory) -> bool:
    """Recheck that states[k+1] is exactly one RK4 step from states[k]."""
    spec = _bind(system, trajectory.lam if isinstance(system, HybridFamily) else None)
    x = trajectory.states[0]
    for k in range(trajectory.n_steps):
        x = _rk4(spec.field, x, trajectory.dt)
        if not np.array_equal(x, trajectory.states[k + 1]):
            return False
    return True
