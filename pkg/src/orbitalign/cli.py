"""Experiment runner: JSON configs, recipe presets, artifact files.

Subcommands:
    simulate  --config FILE [--out DIR] [--quiet]
    align     --config FILE [--out DIR] [--tau T] [--tol T] [--quiet]
    recipe    NAME [--out DIR] [--tau T] [--tol T] [--quiet]

Exit codes: 0 success (including unconverged-with-report), 2 config error,
3 runtime or overflow error.
"""

from __future__ import annotations

import argparse
import json
import re
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np

from . import io as oio
from .errors import CatalogError, ConfigurationError, SimulationOverflowError
from .homotopy import hybrid_alignment_pipeline
from .integrate import simulate
from .similarity import mean_sq_misfit, similarity_degree
from .staging import StagePlan, bellman_dp, pontryagin_align
from .systems import make_hybrid, make_system

MODES = ("simulate", "align-pontryagin", "align-bellman", "align-homotopy")


@dataclass
class SystemDescriptor:
    name: Optional[str] = None
    params: dict = field(default_factory=dict)
    hybrid: Optional[List[str]] = None

    def build(self):
        if self.hybrid is not None:
            f_name, g_name = self.hybrid
            return make_hybrid(make_system(f_name), make_system(g_name))
        return make_system(self.name, self.params)


@dataclass
class ExperimentConfig:
    mode: str
    systems: List[SystemDescriptor]
    x0: List[float]
    N: int
    dt: float = 0.01
    plan: Optional[StagePlan] = None
    tau: float = 0.0
    tol: float = 1.0e-8
    seed: int = 0
    output_dir: str = "out"
    u_values: Optional[List[float]] = None
    lambda_init: List[float] = field(default_factory=lambda: [0.5, 0.5])
    tie_lambdas: bool = False
    recipe: Optional[str] = None


def _key_line(text: str, key: str) -> Optional[int]:
    if text is None:
        return None
    match = re.search(rf'"{re.escape(key)}"', text)
    if match is None:
        return None
    return text.count("\n", 0, match.start()) + 1


def _config_error(message: str, key: Optional[str] = None, text: Optional[str] = None):
    line = _key_line(text, key) if key else None
    prefix = f"config line {line}: " if line else "config: "
    raise ConfigurationError(prefix + message)


def parse_config(text: str) -> ExperimentConfig:
    """Parse and validate a JSON experiment config.

    Errors carry the line number of the offending key when it can be found
    in the source text.
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"config line {exc.lineno}: invalid JSON ({exc.msg})")
    if not isinstance(doc, dict):
        raise ConfigurationError("config: top level must be a JSON object")

    mode = doc.get("mode")
    if mode not in MODES:
        _config_error(f"mode must be one of {', '.join(MODES)}", "mode", text)

    raw_systems = doc.get("systems")
    if not isinstance(raw_systems, list) or not raw_systems:
        _config_error("systems must be a nonempty list", "systems", text)
    systems = []
    for entry in raw_systems:
        if not isinstance(entry, dict):
            _config_error("each system must be an object", "systems", text)
        if "hybrid" in entry:
            pair = entry["hybrid"]
            if not (isinstance(pair, list) and len(pair) == 2):
                _config_error("hybrid must be a pair of catalog names", "hybrid", text)
            systems.append(SystemDescriptor(hybrid=[str(pair[0]), str(pair[1])]))
        else:
            if "name" not in entry:
                _config_error("system needs a name or a hybrid pair", "systems", text)
            systems.append(
                SystemDescriptor(name=str(entry["name"]), params=dict(entry.get("params", {})))
            )
    expected = 1 if mode == "simulate" else 2
    if len(systems) != expected:
        _config_error(f"mode {mode} needs exactly {expected} system(s)", "systems", text)

    x0 = doc.get("x0")
    if not (isinstance(x0, list) and len(x0) == 3):
        _config_error("x0 must be a list of three numbers", "x0", text)
    n_steps = doc.get("N")
    if not isinstance(n_steps, int) or n_steps < 0:
        _config_error("N must be a nonnegative integer", "N", text)
    dt = float(doc.get("dt", 0.01))
    if not dt > 0:
        _config_error("dt must be positive", "dt", text)

    plan = None
    if "plan" in doc:
        p = doc["plan"]
        try:
            plan = StagePlan(stage_len=int(p["stage_len"]), num_stages=int(p["num_stages"]))
        except (TypeError, KeyError, ConfigurationError):
            _config_error("plan needs positive stage_len and num_stages", "plan", text)
        if plan.total_steps != n_steps:
            _config_error(
                f"N = {n_steps} but plan covers {plan.total_steps} steps", "plan", text
            )
    elif mode != "simulate":
        _config_error("alignment modes need a plan", "mode", text)

    u_values = None
    if "u_values" in doc:
        u_values = [float(v) for v in doc["u_values"]]

    lambda_init = [float(v) for v in doc.get("lambda_init", [0.5, 0.5])]
    if len(lambda_init) != 2 or not all(0.0 <= v <= 1.0 for v in lambda_init):
        _config_error("lambda_init must be two values in [0, 1]", "lambda_init", text)

    config = ExperimentConfig(
        mode=mode,
        systems=systems,
        x0=[float(v) for v in x0],
        N=n_steps,
        dt=dt,
        plan=plan,
        tau=float(doc.get("tau", 0.0)),
        tol=float(doc.get("tol", 1.0e-8)),
        seed=int(doc.get("seed", 0)),
        output_dir=str(doc.get("output_dir", "out")),
        u_values=u_values,
        lambda_init=lambda_init,
        tie_lambdas=bool(doc.get("tie_lambdas", False)),
    )
    for descriptor in config.systems:
        descriptor.build()  # surfaces unknown names/params as config errors
    return config


def _stats(values) -> dict:
    arr = np.asarray(values, dtype=float)
    return {
        "min": float(arr.min()),
        "median": float(np.median(arr)),
        "max": float(arr.max()),
        "below_0.9": int(np.sum(arr < 0.9)),
    }


def emit_plot_data(reports, trajectories, output_dir, curve=None, series=None, suffix="") -> List[Path]:
    """Write the figure-ready CSV files for one run.

    `trajectories` maps orbit names (x, ax, y) to state arrays; `series` is
    an optional (actual, simulated) pair; `curve` the cumulative degrees.
    Nothing is written when there is nothing to write.
    """
    written: List[Path] = []
    out = Path(output_dir)
    if not reports and not trajectories:
        return written
    out.mkdir(parents=True, exist_ok=True)
    tag = f"_{suffix}" if suffix else ""
    for name, arr in (trajectories or {}).items():
        written.append(oio.write_trajectory_csv(out / f"{name}_orbit{tag}.csv", arr))
    if trajectories:
        for plane in ("xy", "xz", "yz"):
            written.append(oio.write_plane_csv(out / f"plane_{plane}{tag}.csv", plane, trajectories))
    if reports:
        written.append(oio.write_stage_rho_csv(out / f"rho_stages{tag}.csv", reports))
        written.append(oio.write_stage_reports_json(out / f"stage_reports{tag}.json", reports))
        if any(r.lam is not None for r in reports):
            written.append(oio.write_homotopy_stage_csv(out / f"stages{tag}.csv", reports))
    if curve is not None:
        written.append(oio.write_cumulative_csv(out / f"cumulative{tag}.csv", curve))
    if series is not None:
        actual, simulated = series
        written.append(oio.write_trajectory_csv(out / f"actual_series{tag}.csv", actual))
        written.append(oio.write_trajectory_csv(out / f"simulated_series{tag}.csv", simulated))
    return written


def _regenerated_series(reports, Xs, y_system, plan, dt):
    """Stagewise-regenerated second orbit and its transformed counterpart."""
    L = plan.stage_len
    actual = [reports[0].A.entries @ Xs[0]]
    simulated = [actual[0]]
    for r in reports:
        lo = (r.index - 1) * L
        xw = Xs[lo : lo + L + 1]
        A = r.A.entries
        Y = simulate(y_system, A @ xw[0], L, dt).states
        actual.extend(Y[1:])
        simulated.extend(xw[1:] @ A.T)
    return np.asarray(actual), np.asarray(simulated)


def run(config: ExperimentConfig, quiet: bool = False) -> dict:
    """Execute one experiment and write its artifacts.

    Returns the summary document. Solver non-convergence is reported in the
    summary (converged flags), not raised.
    """
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    t_start = time.perf_counter()
    log_lines = []
    summary = {"mode": config.mode, "N": config.N, "dt": config.dt, "tau": config.tau}

    if config.mode == "simulate":
        system = config.systems[0].build()
        lam = config.lambda_init[0] if config.systems[0].hybrid else None
        traj = simulate(system, config.x0, config.N, config.dt, lam=lam)
        oio.write_trajectory_csv(out / "trajectory.csv", traj)
        summary["system"] = system.name
        summary["rows"] = int(traj.states.shape[0])
        summary["final_state"] = [float(v) for v in traj.states[-1]]

    elif config.mode == "align-pontryagin":
        x_sys = config.systems[0].build()
        y_sys = config.systems[1].build()
        X = simulate(x_sys, config.x0, config.N, config.dt)
        Y = simulate(y_sys, config.x0, config.N, config.dt)
        reports = pontryagin_align(X, Y, config.plan, tau=config.tau)
        full_ax = _stagewise_transform(reports, X.states, config.plan)
        omega_total = float(sum(r.omega for r in reports) / config.plan.num_stages)
        summary["systems"] = [x_sys.name, y_sys.name]
        summary["stage_rho"] = _stats([r.rho for r in reports])
        summary["final_rho"] = similarity_degree(omega_total)
        summary["converged_stages"] = int(sum(r.converged for r in reports))
        emit_plot_data(reports, {"x": X.states, "ax": full_ax, "y": Y.states}, out)

    elif config.mode == "align-bellman":
        x_sys = config.systems[0].build()
        y_sys = config.systems[1].build()
        reports, curve = bellman_dp(
            x_sys, y_sys, config.x0, config.plan, config.dt, tol=config.tol
        )
        X = simulate(x_sys, config.x0, config.N, config.dt)
        actual, simulated = _regenerated_series(reports, X.states, y_sys, config.plan, config.dt)
        summary["systems"] = [x_sys.name, y_sys.name]
        summary["stage_rho"] = _stats([r.rho for r in reports])
        summary["cumulative_start"] = float(curve[0])
        summary["final_rho"] = float(curve[-1])
        summary["converged_stages"] = int(sum(r.converged for r in reports))
        emit_plot_data(
            reports,
            {"x": X.states, "ax": simulated, "y": actual},
            out,
            curve=curve,
            series=(actual, simulated),
        )

    elif config.mode == "align-homotopy":
        u_values = config.u_values
        if u_values is None:
            u_values = [float(config.systems[1].params.get("u", 0.0))]
        summary["runs"] = {}
        for u in u_values:
            result = hybrid_alignment_pipeline(
                u,
                n_steps=config.N,
                plan=config.plan,
                dt=config.dt,
                x0=config.x0,
                tol=config.tol,
                lambda_init=tuple(config.lambda_init),
                tie_lambdas=config.tie_lambdas,
            )
            tag = f"u{u:g}"
            emit_plot_data(
                result.reports,
                {"x": result.x_states, "ax": result.simulated, "y": result.actual},
                out,
                curve=result.curve,
                series=(result.actual, result.simulated),
                suffix=tag,
            )
            lam_arr = np.asarray([r.lam for r in result.reports])
            summary["runs"][tag] = {
                "stage_rho": _stats([r.rho for r in result.reports]),
                "cumulative_start": float(result.curve[0]),
                "final_rho": float(result.curve[-1]),
                "lambda_in_box": bool(np.all((lam_arr >= 0.0) & (lam_arr <= 1.0))),
                "converged_stages": int(sum(r.converged for r in result.reports)),
            }
            log_lines.append(f"{tag}: final rho {result.curve[-1]:.6f}")

    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    elapsed = time.perf_counter() - t_start
    log_lines.append(f"elapsed seconds: {elapsed:.3f}")
    (out / "run.log").write_text("\n".join(log_lines) + "\n")
    if not quiet:
        print(f"wrote {out}/summary.json ({elapsed:.1f}s)")
    return summary


def _stagewise_transform(reports, Xs, plan):
    L = plan.stage_len
    rows = [reports[0].A.entries @ Xs[0]]
    for r in reports:
        lo = (r.index - 1) * L
        rows.extend(Xs[lo + 1 : lo + L + 1] @ r.A.entries.T)
    return np.asarray(rows)


def _recipe_config(name: str, out_dir: str, tau=None, tol=None) -> ExperimentConfig:
    presets = {
        "example4.1": dict(
            mode="align-pontryagin",
            systems=[SystemDescriptor(name="lorenz"), SystemDescriptor(name="chua")],
            N=2000,
            plan=StagePlan(10, 200),
            tau=1.0e-4,
        ),
        "example4.2": dict(
            mode="align-pontryagin",
            systems=[SystemDescriptor(name="lorenz"), SystemDescriptor(name="rossler")],
            N=2000,
            plan=StagePlan(10, 200),
            tau=1.0e-4,
        ),
        "example4.3": dict(
            mode="align-bellman",
            systems=[SystemDescriptor(name="lorenz"), SystemDescriptor(name="chen")],
            N=2000,
            plan=StagePlan(10, 200),
            tol=1.0e-8,
        ),
        "example4.4": dict(
            mode="align-bellman",
            systems=[SystemDescriptor(name="lorenz"), SystemDescriptor(name="lu")],
            N=2000,
            plan=StagePlan(10, 200),
            tol=1.0e-8,
        ),
        "example4.5": dict(
            mode="align-homotopy",
            systems=[
                SystemDescriptor(hybrid=["chua", "lorenz"]),
                SystemDescriptor(name="lu"),
            ],
            N=1000,
            plan=StagePlan(5, 200),
            tol=1.0e-8,
            u_values=[-1.0, 8.0, 12.0, -12.0],
        ),
    }
    if name not in presets:
        raise ConfigurationError(
            f"unknown recipe {name!r}; available: {', '.join(sorted(presets))}"
        )
    kwargs = dict(presets[name])
    if tau is not None:
        kwargs["tau"] = tau
    if tol is not None:
        kwargs["tol"] = tol
    return ExperimentConfig(
        x0=[0.1, 0.1, 0.1],
        dt=0.01,
        output_dir=out_dir,
        recipe=name,
        **kwargs,
    )


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="orbitalign", description="orbit similarity experiments"
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for cmd in ("simulate", "align"):
        p = sub.add_parser(cmd)
        p.add_argument("--config", required=True)
        p.add_argument("--out", default=None)
        p.add_argument("--tau", type=float, default=None)
        p.add_argument("--tol", type=float, default=None)
        p.add_argument("--quiet", action="store_true")
    p = sub.add_parser("recipe")
    p.add_argument("name", nargs="?", default=None)
    p.add_argument("--recipe", dest="recipe_flag", default=None)
    p.add_argument("--out", default=None)
    p.add_argument("--tau", type=float, default=None)
    p.add_argument("--tol", type=float, default=None)
    p.add_argument("--quiet", action="store_true")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "recipe":
            name = args.name or args.recipe_flag
            if not name:
                raise ConfigurationError("recipe needs a name (positional or --recipe)")
            config = _recipe_config(
                name, args.out or f"runs/{name}", tau=args.tau, tol=args.tol
            )
        else:
            text = Path(args.config).read_text()
            config = parse_config(text)
            if args.out is not None:
                config.output_dir = args.out
            if args.tau is not None:
                config.tau = args.tau
            if args.tol is not None:
                config.tol = args.tol
            if args.command == "simulate" and config.mode != "simulate":
                raise ConfigurationError(
                    f"simulate subcommand needs mode 'simulate', config has {config.mode!r}"
                )
            if args.command == "align" and not config.mode.startswith("align-"):
                raise ConfigurationError(
                    f"align subcommand needs an align-* mode, config has {config.mode!r}"
                )
    except (ConfigurationError, CatalogError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    try:
        run(config, quiet=args.quiet)
    except (ConfigurationError, CatalogError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (SimulationOverflowError, ArithmeticError, FloatingPointError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
