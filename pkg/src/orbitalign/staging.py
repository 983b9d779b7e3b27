"""Multi-stage orchestration and the coupled nonlinear solver.

The horizon is split into fixed-length stages. In the decoupled flavor both
orbits are observed and each stage is fit in closed form. In the dynamic
programming flavor the second orbit is unknown beyond y_0 = A x_0; each
stage solves the coupled stationarity system, the candidate matrix is
compared with the previous stage's matrix by similarity degree on the
current stage, and the better one is adopted.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .errors import ConfigurationError, RankDeficiencyError, SimulationOverflowError
from .integrate import Trajectory, _bind, simulate, simulate_with_sensitivity
from .similarity import (
    DEFAULT_BOUND,
    SimilarityMatrix,
    _entries,
    closed_form_align,
    decoupled_gradient,
    mean_sq_misfit,
    similarity_degree,
    stationarity_residual,
)

_ARMIJO = 1.0e-4
_MAX_BACKTRACKS = 30


@dataclass(frozen=True)
class StagePlan:
    """Stage layout: num_stages windows of stage_len steps each."""

    stage_len: int
    num_stages: int

    def __post_init__(self):
        if self.stage_len < 1 or self.num_stages < 1:
            raise ConfigurationError("stage_len and num_stages must be positive")

    @property
    def total_steps(self) -> int:
        return self.stage_len * self.num_stages


@dataclass
class StageReport:
    """Per-stage outcome: adopted matrix, similarity degree, diagnostics."""

    index: int
    A: SimilarityMatrix
    rho: float
    omega: float
    residual_norm: float
    iterations: int
    converged: bool
    rho_candidate: Optional[float] = None
    rho_previous: Optional[float] = None
    lam: Optional[Tuple[float, float]] = None
    residual_lambda_norm: Optional[float] = None


@dataclass
class SolveDiagnostics:
    iterations: int
    residual_norm: float
    converged: bool
    stalled: bool = False
    cost: float = float("nan")


def _simulate_states(y_spec, y0, n_steps, dt):
    states, _, _ = simulate_with_sensitivity(y_spec, y0, n_steps, dt)
    return states


def _coupled_cost(Aent, Xs, y_spec, dt):
    try:
        Ys = _simulate_states(y_spec, Aent @ Xs[0], Xs.shape[0] - 1, dt)
    except SimulationOverflowError:
        return float("inf")
    r = Xs @ Aent.T - Ys
    return float(np.sum(r * r))


def _coupled_misfit(Aent, Xs, y_spec, dt):
    """Mean squared misfit over a stage, second orbit regenerated from A x_0."""
    n_steps = Xs.shape[0] - 1
    try:
        Ys = _simulate_states(y_spec, Aent @ Xs[0], n_steps, dt)
    except SimulationOverflowError:
        return float("inf")
    r = Xs[1:] @ Aent.T - Ys[1:]
    return float(np.sum(r * r)) / n_steps


def _residual_fn(Xs, y_spec, dt):
    eye = np.eye(Xs.shape[1])
    n_steps = Xs.shape[0] - 1

    def evaluate(Aent):
        try:
            Ys, S, _ = simulate_with_sensitivity(
                y_spec, Aent @ Xs[0], n_steps, dt, state_seed=eye
            )
        except SimulationOverflowError:
            return None
        R = stationarity_residual(Aent, Xs, Ys, S)
        if not np.all(np.isfinite(R)):
            return None
        return R

    return evaluate


def _fd_newton_matrix(residual, Aent, base):
    n2 = Aent.size
    J = np.empty((n2, n2))
    for idx in range(n2):
        h = 1.0e-6 * max(1.0, abs(Aent.flat[idx]))
        Ap = Aent.copy()
        Ap.flat[idx] += h
        Am = Aent.copy()
        Am.flat[idx] -= h
        Rp = residual(Ap)
        Rm = residual(Am)
        if Rp is None or Rm is None:
            return None
        J[:, idx] = (Rp - Rm).ravel() / (2.0 * h)
    if not np.all(np.isfinite(J)):
        return None
    return J


def _default_A_init(Xs, y_spec, dt, bound):
    """Decoupled fit against the second system run from the same initial state."""
    try:
        Ys = _simulate_states(y_spec, Xs[0].copy(), Xs.shape[0] - 1, dt)
        fit = closed_form_align(Xs, Ys, tau=0.0, bound=bound)
        return np.array(fit.entries)
    except (RankDeficiencyError, SimulationOverflowError, np.linalg.LinAlgError):
        return np.eye(Xs.shape[1])


def solve_coupled(
    x0,
    x_system,
    y_system,
    stage_len: int,
    dt: float,
    A_init=None,
    tol: float = 1.0e-10,
    max_iter: int = 200,
    bound: float = DEFAULT_BOUND,
) -> Tuple[SimilarityMatrix, SolveDiagnostics]:
    """Solve the coupled stationarity system for one stage.

    Damped Newton on the residual with a finite-difference Newton matrix;
    when a Newton step cannot reduce the residual, falls back to a
    backtracking gradient-descent step on the coupled cost. Iterates are
    projected onto the admissible box after every step. Exhausting the
    iteration budget (or stalling on both step types) returns the best
    iterate with converged=False rather than raising.
    """
    X = simulate(x_system, x0, stage_len, dt)
    Xs = X.states
    y_spec = _bind(y_system, None)
    residual = _residual_fn(Xs, y_spec, dt)

    if A_init is None:
        A = _default_A_init(Xs, y_spec, dt, bound)
    else:
        A = np.array(_entries(A_init), dtype=float)
    A = np.clip(A, -bound, bound)
    R = residual(A)
    if R is None:
        A = np.eye(Xs.shape[1])
        R = residual(A)
        if R is None:
            raise SimulationOverflowError(0, "coupled solve cannot evaluate its residual")

    norm = float(np.linalg.norm(R))
    best_A, best_norm = A.copy(), norm
    iterations = 0
    stalled = False

    for _ in range(max_iter):
        if norm <= tol:
            break
        iterations += 1
        moved = False

        J = _fd_newton_matrix(residual, A, R)
        if J is not None:
            try:
                delta = np.linalg.solve(J, -R.ravel())
            except np.linalg.LinAlgError:
                delta, *_ = np.linalg.lstsq(J, -R.ravel(), rcond=None)
            if np.all(np.isfinite(delta)):
                step = delta.reshape(A.shape)
                t = 1.0
                for _ in range(25):
                    trial = np.clip(A + t * step, -bound, bound)
                    Rt = residual(trial)
                    if Rt is not None:
                        nt = float(np.linalg.norm(Rt))
                        if nt <= (1.0 - _ARMIJO * t) * norm:
                            A, R, norm = trial, Rt, nt
                            moved = True
                            break
                    t *= 0.5

        if not moved:
            # Descent on the coupled cost; the residual is half its gradient.
            grad = 2.0 * R
            gnorm = float(np.linalg.norm(grad))
            c0 = _coupled_cost(A, Xs, y_spec, dt)
            t = 1.0 / max(1.0, gnorm)
            for _ in range(_MAX_BACKTRACKS):
                trial = np.clip(A - t * grad, -bound, bound)
                disp = trial - A
                ct = _coupled_cost(trial, Xs, y_spec, dt)
                if np.isfinite(ct) and ct <= c0 + _ARMIJO * float(np.sum(grad * disp)):
                    Rt = residual(trial)
                    if Rt is not None:
                        A, R = trial, Rt
                        norm = float(np.linalg.norm(Rt))
                        moved = True
                    break
                t *= 0.5
        if not moved:
            stalled = True
            break
        if norm < best_norm:
            best_A, best_norm = A.copy(), norm

    converged = best_norm <= tol
    diag = SolveDiagnostics(
        iterations=iterations,
        residual_norm=best_norm,
        converged=converged,
        stalled=stalled,
        cost=_coupled_cost(best_A, Xs, y_spec, dt),
    )
    return SimilarityMatrix(entries=best_A, bound=bound), diag


def _stage_slices(n_total, plan):
    if n_total != plan.total_steps:
        raise ConfigurationError(
            f"trajectory covers {n_total} steps but the plan needs {plan.total_steps}"
        )
    L = plan.stage_len
    return [(m * L, (m + 1) * L) for m in range(plan.num_stages)]


def pontryagin_align(X: Trajectory, Y: Trajectory, plan: StagePlan, tau: float = 0.0) -> List[StageReport]:
    """Fit one matrix per stage with both orbits observed.

    Stage windows share their boundary samples, so the final state of each
    stage is the initial condition of the next. Each window is fit in
    closed form and assessed by the similarity degree over its own samples.
    """
    Xs, Ys = X.states, Y.states
    if Xs.shape != Ys.shape:
        raise ConfigurationError("orbits must have equal length and dimension")
    reports = []
    for m, (lo, hi) in enumerate(_stage_slices(Xs.shape[0] - 1, plan), start=1):
        xw, yw = Xs[lo : hi + 1], Ys[lo : hi + 1]
        A = closed_form_align(xw, yw, tau=tau)
        omega = mean_sq_misfit(A, xw, yw)
        rho = similarity_degree(omega)
        res = float(np.linalg.norm(decoupled_gradient(A, xw, yw, tau=tau)))
        reports.append(
            StageReport(
                index=m,
                A=A,
                rho=rho,
                omega=omega,
                residual_norm=res,
                iterations=0,
                converged=True,
            )
        )
    return reports


def bellman_dp(
    x_system,
    y_system,
    x0,
    plan: StagePlan,
    dt: float,
    tol: float = 1.0e-10,
    max_iter: int = 200,
    baseline_max_iter: int = 20,
) -> Tuple[List[StageReport], np.ndarray]:
    """Stagewise dynamic programming with the max-rho selection rule.

    Stage 1 starts from x0 with the second orbit unknown; later stages start
    from the final state of the previous stage. Per stage the solved
    candidate matrix is compared against the previous stage's matrix by
    similarity degree on the current stage, and the better one is adopted.

    Also returns the cumulative curve: entry m is the whole-horizon
    similarity degree when the first m stages use their adopted matrices and
    the rest use the whole-horizon baseline matrix, every stage regenerating
    its second-orbit segment from y_0 = A x_boundary.
    """
    y_spec = _bind(y_system, None)
    X_full = simulate(x_system, x0, plan.total_steps, dt)
    Xs = X_full.states
    L = plan.stage_len

    A_base, _ = solve_coupled(
        x0, x_system, y_system, plan.total_steps, dt, tol=tol, max_iter=baseline_max_iter
    )

    reports: List[StageReport] = []
    omega_adopted = np.empty(plan.num_stages)
    omega_base = np.empty(plan.num_stages)
    prev_A = None
    for m, (lo, hi) in enumerate(_stage_slices(plan.total_steps, plan), start=1):
        xw = Xs[lo : hi + 1]
        cand, diag = solve_coupled(
            xw[0], x_system, y_system, L, dt, tol=tol, max_iter=max_iter
        )
        omega_cand = _coupled_misfit(cand.entries, xw, y_spec, dt)
        rho_cand = similarity_degree(omega_cand)
        if prev_A is None:
            adopted, omega, rho = cand, omega_cand, rho_cand
            rho_prev = None
        else:
            omega_prev = _coupled_misfit(prev_A.entries, xw, y_spec, dt)
            rho_prev = similarity_degree(omega_prev)
            if rho_cand >= rho_prev:
                adopted, omega, rho = cand, omega_cand, rho_cand
            else:
                adopted, omega, rho = prev_A, omega_prev, rho_prev
        reports.append(
            StageReport(
                index=m,
                A=adopted,
                rho=rho,
                omega=omega,
                residual_norm=diag.residual_norm,
                iterations=diag.iterations,
                converged=diag.converged,
                rho_candidate=rho_cand,
                rho_previous=rho_prev,
            )
        )
        omega_adopted[m - 1] = omega
        omega_base[m - 1] = _coupled_misfit(A_base.entries, xw, y_spec, dt)
        prev_A = adopted

    curve = _cumulative_curve(omega_adopted, omega_base)
    return reports, curve


def _cumulative_curve(omega_adopted, omega_base):
    num = omega_adopted.shape[0]
    curve = np.empty(num + 1)
    prefix_adopted = np.concatenate([[0.0], np.cumsum(omega_adopted)])
    suffix_base = np.concatenate([np.cumsum(omega_base[::-1])[::-1], [0.0]])
    for m in range(num + 1):
        curve[m] = similarity_degree((prefix_adopted[m] + suffix_base[m]) / num)
    return curve


def cumulative_similarity(
    stage_reports: Sequence[StageReport],
    baseline_A: SimilarityMatrix,
    X_full: Trajectory,
    y_system,
    m: int,
) -> float:
    """Whole-horizon similarity degree with the first m stage matrices adopted.

    Stages beyond m fall back to the baseline matrix. Every stage regenerates
    its second-orbit segment from y_0 = A x_boundary, so the value at m = 0
    is the baseline's whole-horizon degree and the value at m = num_stages is
    the final reported degree.
    """
    num = len(stage_reports)
    if not 0 <= m <= num:
        raise ConfigurationError(f"m must lie in [0, {num}]")
    y_spec = _bind(y_system, None)
    Xs = X_full.states
    L = (Xs.shape[0] - 1) // num
    plan = StagePlan(stage_len=L, num_stages=num)
    total = 0.0
    for idx, (lo, hi) in enumerate(_stage_slices(Xs.shape[0] - 1, plan), start=1):
        A = stage_reports[idx - 1].A if idx <= m else baseline_A
        total += _coupled_misfit(A.entries, Xs[lo : hi + 1], y_spec, X_full.dt)
    return similarity_degree(total / num)
