"""Joint optimization of the transformation matrix and embedding parameters.

Both orbits come from hybrid families: the driving orbit runs under
H1(lambda1), the generated orbit under H2(lambda2) from y_0 = A x_0. The
stationarity system pairs the matrix residual (structurally identical to the
coupled residual) with a two-component residual in the embedding parameters,
each component using its own orbit's lambda-forced sensitivity since each
trajectory depends on exactly one parameter. The box constraint on lambda is
handled by projection: at an active bound only the inward-pointing component
of the residual has to vanish.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .errors import ConfigurationError, SimulationOverflowError
from .integrate import simulate, simulate_with_sensitivity
from .similarity import (
    DEFAULT_BOUND,
    SimilarityMatrix,
    _entries,
    similarity_degree,
    stationarity_residual,
)
from .staging import (
    SolveDiagnostics,
    StagePlan,
    StageReport,
    _coupled_misfit,
    _cumulative_curve,
    solve_coupled,
)
from .systems import HybridFamily, SystemSpec, make_hybrid, make_system

_ARMIJO = 1.0e-4
_MAX_BACKTRACKS = 30
_LAMBDA_STEP0 = 0.1


@dataclass(frozen=True)
class HomotopyAlignment:
    """A matrix together with its embedding pair and residual norms."""

    A: SimilarityMatrix
    lam: Tuple[float, float]
    kkt_A_norm: float
    kkt_lambda_norm: float
    converged: bool = True
    iterations: int = 0

    def __post_init__(self):
        l1, l2 = self.lam
        if not (0.0 <= l1 <= 1.0 and 0.0 <= l2 <= 1.0):
            raise ConfigurationError(f"embedding pair {self.lam} outside the unit square")


def _family(system) -> HybridFamily:
    if isinstance(system, HybridFamily):
        return system
    if isinstance(system, SystemSpec):
        # A plain system is the constant family: the embedding has no effect.
        return make_hybrid(system, system)
    raise ConfigurationError(f"expected a system or hybrid family, got {type(system)!r}")


def kkt_residual(
    candidate: HomotopyAlignment, x0, H1, H2, stage_len: int, dt: float
) -> Tuple[np.ndarray, np.ndarray]:
    """Stationarity residuals of the joint problem at the candidate point.

    Returns the n x n matrix residual and the 2-vector of embedding
    residuals, each equal to half the corresponding partial derivative of
    the joint cost with both orbits regenerated.
    """
    H1, H2 = _family(H1), _family(H2)
    Aent = _entries(candidate.A)
    l1, l2 = candidate.lam
    if not (0.0 <= l1 <= 1.0 and 0.0 <= l2 <= 1.0):
        raise ConfigurationError(f"embedding pair {candidate.lam} outside the unit square")
    x = np.asarray(x0, dtype=float)

    Xs, _, dx = simulate_with_sensitivity(H1.at(l1), x, stage_len, dt, lambda_forced=True)
    Ys, S, dy = simulate_with_sensitivity(
        H2.at(l2), Aent @ x, stage_len, dt, state_seed=np.eye(Aent.shape[0]), lambda_forced=True
    )
    R_A = stationarity_residual(Aent, Xs, Ys, S)
    r = Xs @ Aent.T - Ys
    res1 = float(np.sum((r @ Aent) * dx))
    res2 = -float(np.sum(r * dy))
    return R_A, np.array([res1, res2])


def _joint_cost(Aent, lam, x0, H1, H2, stage_len, dt):
    try:
        Xs, _, _ = simulate_with_sensitivity(H1.at(lam[0]), x0, stage_len, dt)
        Ys, _, _ = simulate_with_sensitivity(H2.at(lam[1]), Aent @ x0, stage_len, dt)
    except SimulationOverflowError:
        return float("inf")
    r = Xs @ Aent.T - Ys
    return float(np.sum(r * r))


def _clip_lambda(lam, bounds):
    return np.array(
        [min(max(lam[0], bounds[0][0]), bounds[0][1]), min(max(lam[1], bounds[1][0]), bounds[1][1])]
    )


def solve_joint(
    x0,
    H1,
    H2,
    stage_len: int,
    dt: float,
    A_init=None,
    lambda_init: Tuple[float, float] = (0.5, 0.5),
    tol: float = 1.0e-8,
    max_iter: int = 50,
    lambda_bounds: Tuple[Tuple[float, float], Tuple[float, float]] = ((0.0, 1.0), (0.0, 1.0)),
    tie_lambdas: bool = False,
    inner_max_iter: int = 200,
    bound: float = DEFAULT_BOUND,
) -> HomotopyAlignment:
    """Alternating scheme for the joint stationarity system.

    Each sweep solves the matrix subproblem at frozen embedding values with
    the coupled stage solver, then takes a projected backtracking descent
    step on the embedding pair against the joint cost. The embedding pair
    never leaves its box; with the box collapsed to a point the scheme
    reduces exactly to the coupled solve. With tie_lambdas both components
    are moved together by the summed residual.
    """
    H1, H2 = _family(H1), _family(H2)
    for (lo, hi) in lambda_bounds:
        if not (0.0 <= lo <= hi <= 1.0):
            raise ConfigurationError("lambda bounds must be nested in [0, 1]")
    x = np.asarray(x0, dtype=float)
    lam = _clip_lambda(np.asarray(lambda_init, dtype=float), lambda_bounds)
    if tie_lambdas:
        lam[1] = lam[0]

    A = A_init
    R_A = None
    res_lam = np.zeros(2)
    pg_norm = float("inf")
    norm_A = float("inf")
    iterations = 0
    for _ in range(max_iter):
        iterations += 1
        A_mat, diag = solve_coupled(
            x,
            H1.at(lam[0]),
            H2.at(lam[1]),
            stage_len,
            dt,
            A_init=A,
            tol=tol,
            max_iter=inner_max_iter,
            bound=bound,
        )
        A = A_mat.entries
        probe = HomotopyAlignment(A_mat, (lam[0], lam[1]), 0.0, 0.0)
        R_A, res_lam = kkt_residual(probe, x, H1, H2, stage_len, dt)
        norm_A = float(np.linalg.norm(R_A))

        grad = res_lam.copy()
        if tie_lambdas:
            grad[:] = res_lam[0] + res_lam[1]
        pg = lam - _clip_lambda(lam - grad, lambda_bounds)
        pg_norm = float(np.max(np.abs(pg)))
        if norm_A <= tol and pg_norm <= tol:
            return HomotopyAlignment(
                A_mat, (lam[0], lam[1]), norm_A, pg_norm, converged=True, iterations=iterations
            )

        gnorm = float(np.linalg.norm(grad))
        moved = False
        if gnorm > 0.0:
            unit = grad / gnorm
            c0 = _joint_cost(A, lam, x, H1, H2, stage_len, dt)
            s = _LAMBDA_STEP0
            for _ in range(_MAX_BACKTRACKS):
                trial = _clip_lambda(lam - s * unit, lambda_bounds)
                if tie_lambdas:
                    trial[1] = trial[0]
                disp = trial - lam
                if np.any(disp != 0.0):
                    ct = _joint_cost(A, trial, x, H1, H2, stage_len, dt)
                    if np.isfinite(ct) and ct <= c0 + _ARMIJO * float(2.0 * grad @ disp):
                        lam = trial
                        moved = True
                        break
                s *= 0.5
        if not moved:
            break

    A_mat = SimilarityMatrix(entries=A, bound=bound)
    converged = norm_A <= tol and pg_norm <= tol
    return HomotopyAlignment(
        A_mat, (lam[0], lam[1]), norm_A, pg_norm, converged=converged, iterations=iterations
    )


@dataclass
class PipelineResult:
    """Staged joint alignment over a horizon, with plot-ready series."""

    reports: List[StageReport]
    curve: np.ndarray
    x_states: np.ndarray
    actual: np.ndarray
    simulated: np.ndarray
    baseline: HomotopyAlignment
    u: float


def _stage_eval(Aent, lam, x_b, H1, H2, L, dt):
    """Stage misfit and the stitched segments for a given (A, lambda) choice."""
    Xseg, _, _ = simulate_with_sensitivity(H1.at(lam[0]), x_b, L, dt)
    omega = _coupled_misfit(Aent, Xseg, H2.at(lam[1]), dt)
    return omega, Xseg


def hybrid_alignment_pipeline(
    u: float,
    n_steps: int = 1000,
    plan: Optional[StagePlan] = None,
    dt: float = 0.01,
    x0=(0.1, 0.1, 0.1),
    tol: float = 1.0e-8,
    max_iter: int = 20,
    inner_max_iter: int = 80,
    lambda_init: Tuple[float, float] = (0.5, 0.5),
    tie_lambdas: bool = False,
) -> PipelineResult:
    """Stagewise joint alignment of the blended circuit-convection system
    against the controlled transition system.

    The driving orbit runs under the hybrid whose embedding weight sits on
    the convection constituent; the target system is the controlled one with
    constant input u, wrapped as a constant family so its embedding component
    is inert. Stages chain through the driving orbit's boundary states; the
    embedding pair warm-starts from the previous stage. Per stage the solved
    candidate is compared with the previous stage's choice by similarity
    degree and the better one is adopted, and the cumulative curve tracks the
    whole-horizon degree as adopted stages progressively replace the
    whole-horizon baseline.
    """
    plan = plan or StagePlan(stage_len=5, num_stages=200)
    if plan.total_steps != n_steps:
        raise ConfigurationError("plan must cover n_steps exactly")
    lorenz = make_system("lorenz")
    chua = make_system("chua")
    lu = make_system("lu", {"u": u})
    H1 = make_hybrid(chua, lorenz)
    H2 = make_hybrid(lu, lu)
    x_b = np.asarray(x0, dtype=float)
    L = plan.stage_len

    baseline = solve_joint(
        x_b,
        H1,
        H2,
        n_steps,
        dt,
        lambda_init=lambda_init,
        tol=tol,
        max_iter=3,
        inner_max_iter=20,
        tie_lambdas=tie_lambdas,
    )
    base_A = baseline.A.entries
    base_lam = np.asarray(baseline.lam)

    reports: List[StageReport] = []
    omega_adopted = np.empty(plan.num_stages)
    omega_base = np.empty(plan.num_stages)
    x_rows = [x_b.copy()]
    actual_rows = [np.zeros(3)]
    simulated_rows = [np.zeros(3)]
    prev: Optional[Tuple[np.ndarray, np.ndarray]] = None
    warm = np.asarray(lambda_init, dtype=float)

    for m in range(1, plan.num_stages + 1):
        cand = solve_joint(
            x_b,
            H1,
            H2,
            L,
            dt,
            lambda_init=warm,
            tol=tol,
            max_iter=max_iter,
            inner_max_iter=inner_max_iter,
            tie_lambdas=tie_lambdas,
        )
        cand_pair = (cand.A.entries, np.asarray(cand.lam))
        omega_cand, Xseg_cand = _stage_eval(*cand_pair, x_b, H1, H2, L, dt)
        rho_cand = similarity_degree(omega_cand)
        if prev is None:
            choice, omega, rho, Xseg = cand_pair, omega_cand, rho_cand, Xseg_cand
            rho_prev = None
        else:
            omega_prev, Xseg_prev = _stage_eval(*prev, x_b, H1, H2, L, dt)
            rho_prev = similarity_degree(omega_prev)
            if rho_cand >= rho_prev:
                choice, omega, rho, Xseg = cand_pair, omega_cand, rho_cand, Xseg_cand
            else:
                choice, omega, rho, Xseg = prev, omega_prev, rho_prev, Xseg_prev
        A_ch, lam_ch = choice
        omega_adopted[m - 1] = omega
        omega_base[m - 1], _ = _stage_eval(base_A, base_lam, x_b, H1, H2, L, dt)
        reports.append(
            StageReport(
                index=m,
                A=SimilarityMatrix(entries=A_ch),
                rho=rho,
                omega=omega,
                residual_norm=cand.kkt_A_norm,
                iterations=cand.iterations,
                converged=cand.converged,
                rho_candidate=rho_cand,
                rho_previous=rho_prev,
                lam=(float(lam_ch[0]), float(lam_ch[1])),
                residual_lambda_norm=cand.kkt_lambda_norm,
            )
        )
        Yseg, _, _ = simulate_with_sensitivity(H2.at(lam_ch[1]), A_ch @ x_b, L, dt)
        x_rows.extend(Xseg[1:])
        actual_rows.extend(Yseg[1:])
        simulated_rows.extend(Xseg[1:] @ A_ch.T)
        x_b = Xseg[-1].copy()
        warm = lam_ch
        prev = choice

    first_A = reports[0].A.entries
    actual_rows[0] = first_A @ np.asarray(x0, dtype=float)
    simulated_rows[0] = actual_rows[0]
    curve = _cumulative_curve(omega_adopted, omega_base)
    return PipelineResult(
        reports=reports,
        curve=curve,
        x_states=np.asarray(x_rows),
        actual=np.asarray(actual_rows),
        simulated=np.asarray(simulated_rows),
        baseline=baseline,
        u=float(u),
    )
