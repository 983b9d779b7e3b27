"""Alignment cost functionals, their gradients, and the similarity degree.

Two modes of alignment are supported. In the decoupled mode both orbits are
observed and fitting the transformation matrix reduces to (optionally
ridge-regularized) normal equations. In the coupled mode the second orbit is
generated from y_0 = A x_0, so its samples depend on A and stationarity
picks up forward-sensitivity terms: the coupled residual here is half the
gradient of the coupled cost.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, RankDeficiencyError
from .integrate import Trajectory, _bind, simulate, simulate_with_sensitivity

DEFAULT_BOUND = 1.0e4


@dataclass(frozen=True)
class SimilarityMatrix:
    """An n x n transformation matrix with a box-bounded admissible set.

    Every entry must lie in [-bound, bound]; solvers keep iterates inside
    the box by projection.
    """

    entries: np.ndarray
    bound: float = DEFAULT_BOUND

    def __post_init__(self):
        arr = np.array(self.entries, dtype=float)
        if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
            raise ConfigurationError("similarity matrix must be square")
        if not np.all(np.isfinite(arr)):
            raise ConfigurationError("similarity matrix entries must be finite")
        if np.abs(arr).max() > self.bound:
            raise ConfigurationError(
                f"similarity matrix entry exceeds the admissible bound {self.bound}"
            )
        arr.setflags(write=False)
        object.__setattr__(self, "entries", arr)

    @property
    def n(self) -> int:
        return self.entries.shape[0]


def _entries(A) -> np.ndarray:
    if isinstance(A, SimilarityMatrix):
        return A.entries
    return np.asarray(A, dtype=float)


def _as_states(X) -> np.ndarray:
    if isinstance(X, Trajectory):
        return X.states
    arr = np.asarray(X, dtype=float)
    if arr.ndim == 1:
        arr = arr[None, :]
    return arr


def _check_pair(Xs, Ys):
    if Xs.shape != Ys.shape:
        raise ConfigurationError(
            f"orbit shape mismatch: {Xs.shape} vs {Ys.shape}"
        )


def cost(A, X, Y, tau: float = 0.0) -> float:
    """Sum over k = 0..N of ||A x_k - y_k||^2, plus tau * sum of squared entries."""
    Aent = _entries(A)
    Xs, Ys = _as_states(X), _as_states(Y)
    _check_pair(Xs, Ys)
    r = Xs @ Aent.T - Ys
    value = float(np.sum(r * r))
    if tau:
        value += float(tau) * float(np.sum(Aent * Aent))
    return value


def mean_sq_misfit(A, X, Y) -> float:
    """Mean squared misfit (1/N) sum_{k=1..N} ||A x_k - y_k||^2.

    The sum starts at k = 1: the initial sample is excluded.
    """
    Aent = _entries(A)
    Xs, Ys = _as_states(X), _as_states(Y)
    _check_pair(Xs, Ys)
    n_steps = Xs.shape[0] - 1
    if n_steps < 1:
        raise ConfigurationError("misfit needs at least one step beyond the initial sample")
    r = Xs[1:] @ Aent.T - Ys[1:]
    return float(np.sum(r * r)) / n_steps


def similarity_degree(omega: float) -> float:
    """Map a mean squared misfit to the similarity degree in (0, 1].

    Defined as 1 when omega = 0 and log(1 + omega) / omega otherwise; the
    logarithm is natural, which is what makes the map continuous at 0.
    """
    omega = float(omega)
    if omega < 0:
        raise ValueError(f"misfit must be nonnegative, got {omega}")
    if omega == 0.0:
        return 1.0
    return float(np.log1p(omega) / omega)


def closed_form_align(X, Y, tau: float = 0.0, bound: float = DEFAULT_BOUND) -> SimilarityMatrix:
    """Minimize the (regularized) decoupled cost in closed form.

    Solves A (sum x x^T + tau I) = sum y x^T over k = 0..N. With tau = 0 a
    singular Gram matrix raises RankDeficiencyError; any tau > 0 makes the
    problem strictly convex. Entries are projected onto the admissible box.
    """
    Xs, Ys = _as_states(X), _as_states(Y)
    _check_pair(Xs, Ys)
    n = Xs.shape[1]
    gram = Xs.T @ Xs
    if tau > 0:
        gram = gram + float(tau) * np.eye(n)
    elif np.linalg.matrix_rank(gram) < n:
        raise RankDeficiencyError(
            "Gram matrix of the orbit samples is rank deficient; "
            "set tau > 0 to regularize"
        )
    corr = Ys.T @ Xs
    entries = np.linalg.solve(gram, corr.T).T
    entries = np.clip(entries, -bound, bound)
    return SimilarityMatrix(entries=entries, bound=bound)


def decoupled_gradient(A, X, Y, tau: float = 0.0) -> np.ndarray:
    """Gradient of the decoupled cost: 2 sum (A x_k - y_k) x_k^T + 2 tau A."""
    Aent = _entries(A)
    Xs, Ys = _as_states(X), _as_states(Y)
    _check_pair(Xs, Ys)
    r = Xs @ Aent.T - Ys
    grad = 2.0 * (r.T @ Xs)
    if tau:
        grad = grad + 2.0 * float(tau) * Aent
    return grad


def stationarity_residual(A, Xs, Ys, S) -> np.ndarray:
    """Half-gradient of the coupled cost given precomputed sensitivities.

    S[k] must be the product of step Jacobians d y_k / d y_0. Entry (i, j)
    collects the direct term r_ki x_kj minus the sensitivity-weighted term
    (S_k^T r_k)_i x_0j, summed over all samples, with r_k = A x_k - y_k.
    """
    Aent = _entries(A)
    r = Xs @ Aent.T - Ys
    direct = r.T @ Xs
    pulled = np.einsum("ksi,ks->i", S, r)
    return direct - np.outer(pulled, Xs[0])


def coupled_residual(A, x0, x_system, y_system, stage_len: int, dt: float) -> np.ndarray:
    """First-order optimality residual of the coupled alignment problem.

    Simulates the driving orbit from x0, generates the second orbit from
    y_0 = A x_0, propagates state-seeded sensitivities along it, and returns
    the n x n residual summed over k = 0..stage_len. The residual equals
    half the gradient of the coupled cost with the second orbit regenerated
    per perturbation.
    """
    Aent = _entries(A)
    if stage_len < 1:
        raise ConfigurationError("stage_len must be at least 1")
    X = simulate(x_system, x0, stage_len, dt)
    Xs = X.states
    y_spec = _bind(y_system, None)
    y0 = Aent @ Xs[0]
    Ys, S, _ = simulate_with_sensitivity(
        y_spec, y0, stage_len, dt, state_seed=np.eye(Aent.shape[0])
    )
    return stationarity_residual(Aent, Xs, Ys, S)
