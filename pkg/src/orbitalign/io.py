"""Persistence of trajectories, matrices, stage reports, and plot data.

All floating-point values are serialized with 17 significant digits so that
every file round-trips bit-exactly through the package's own readers.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np

from .integrate import Trajectory
from .similarity import SimilarityMatrix
from .staging import StageReport


def fmt17(value: float) -> str:
    return format(float(value), ".17g")


def write_trajectory_csv(path, states, header: Optional[Sequence[str]] = None) -> Path:
    """Write rows k,x1,...,xn at full double precision."""
    arr = states.states if isinstance(states, Trajectory) else np.asarray(states, dtype=float)
    path = Path(path)
    cols = header or ["k"] + [f"x{i + 1}" for i in range(arr.shape[1])]
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(cols)
        for k, row in enumerate(arr):
            writer.writerow([k] + [fmt17(v) for v in row])
    return path


def read_trajectory_csv(path) -> np.ndarray:
    with Path(path).open(newline="") as fh:
        reader = csv.reader(fh)
        next(reader)
        rows = [[float(v) for v in row[1:]] for row in reader]
    return np.asarray(rows)


def matrix_to_dict(A: SimilarityMatrix, lam=None) -> dict:
    doc = {"A": [[float(v) for v in row] for row in A.entries], "bound": float(A.bound)}
    if lam is not None:
        doc["lambda"] = [float(v) for v in np.atleast_1d(lam)]
    return doc


def matrix_from_dict(doc: dict) -> SimilarityMatrix:
    return SimilarityMatrix(entries=np.asarray(doc["A"], dtype=float), bound=float(doc["bound"]))


def write_matrix_json(path, A: SimilarityMatrix, lam=None) -> Path:
    path = Path(path)
    path.write_text(json.dumps(matrix_to_dict(A, lam), indent=2, sort_keys=True) + "\n")
    return path


def read_matrix_json(path) -> SimilarityMatrix:
    return matrix_from_dict(json.loads(Path(path).read_text()))


def report_to_dict(report: StageReport) -> dict:
    doc = {
        "index": report.index,
        "matrix": matrix_to_dict(report.A, report.lam),
        "rho": report.rho,
        "omega": report.omega,
        "residual_norm": report.residual_norm,
        "iterations": report.iterations,
        "converged": report.converged,
    }
    if report.rho_candidate is not None:
        doc["rho_candidate"] = report.rho_candidate
    if report.rho_previous is not None:
        doc["rho_previous"] = report.rho_previous
    return doc


def write_stage_reports_json(path, reports: Sequence[StageReport]) -> Path:
    path = Path(path)
    path.write_text(
        json.dumps([report_to_dict(r) for r in reports], indent=2, sort_keys=True) + "\n"
    )
    return path


def read_stage_reports_json(path) -> List[dict]:
    return json.loads(Path(path).read_text())


def write_cumulative_csv(path, curve) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["m", "rho"])
        for m, rho in enumerate(np.asarray(curve, dtype=float)):
            writer.writerow([m, fmt17(rho)])
    return path


def read_cumulative_csv(path) -> np.ndarray:
    with Path(path).open(newline="") as fh:
        reader = csv.reader(fh)
        next(reader)
        return np.asarray([float(row[1]) for row in reader])


def write_stage_rho_csv(path, reports: Sequence[StageReport]) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["stage", "rho"])
        for r in reports:
            writer.writerow([r.index, fmt17(r.rho)])
    return path


def write_homotopy_stage_csv(path, reports: Sequence[StageReport]) -> Path:
    """Rows stage,lambda1,lambda2,rho,omega,resA,resL for the joint mode."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["stage", "lambda1", "lambda2", "rho", "omega", "resA", "resL"])
        for r in reports:
            l1, l2 = r.lam if r.lam is not None else (float("nan"), float("nan"))
            res_l = r.residual_lambda_norm if r.residual_lambda_norm is not None else 0.0
            writer.writerow(
                [
                    r.index,
                    fmt17(l1),
                    fmt17(l2),
                    fmt17(r.rho),
                    fmt17(r.omega),
                    fmt17(r.residual_norm),
                    fmt17(res_l),
                ]
            )
    return path


def write_plane_csv(path, plane: str, named_orbits) -> Path:
    """Two-coordinate projection of several orbits: columns k, <name>_<a>, ..."""
    axes = {"xy": (0, 1), "xz": (0, 2), "yz": (1, 2)}
    ia, ib = axes[plane]
    path = Path(path)
    names = list(named_orbits)
    length = min(len(arr) for arr in named_orbits.values())
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        header = ["k"]
        for name in names:
            header += [f"{name}_{plane[0]}", f"{name}_{plane[1]}"]
        writer.writerow(header)
        for k in range(length):
            row = [k]
            for name in names:
                arr = named_orbits[name]
                row += [fmt17(arr[k][ia]), fmt17(arr[k][ib])]
            writer.writerow(row)
    return path
