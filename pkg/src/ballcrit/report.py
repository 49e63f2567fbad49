"""Machine-readable run reports (JSON), solution CSV export, trace CSV.

Reports contain only finite numbers: an unbounded lambda* and degenerate
NaN diagnostics are stored as null.  Serialization is deterministic
(sorted keys), timing lives in its own subsection so determinism checks
can mask it, and parse(serialize(r)) == r.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from typing import Any

import numpy as np

from . import __version__ as _pkg_version
from .dc import CertificateReport, H3Report, LambdaStarResult, StructureConstants
from .grid import GridShape, GridVector, ShapeMismatchError
from .hypotheses import CheckVerdict
from .pde import PoincareEstimate, RefinementReport
from .solvers import CriticalPoint, MountainGeometryReport, PipelineResult, TraceRecorder

__all__ = [
    "SolveReport",
    "build_solve_report",
    "export_matrix_csv",
    "export_solution_csv",
    "export_solution_xyz_csv",
    "read_vector_csv",
    "write_trace_csv",
]


def _num(x: float | None) -> float | None:
    """Finite float or None; infinities and NaN map to null in the report."""
    if x is None:
        return None
    x = float(x)
    return x if math.isfinite(x) else None


def _vec(v: GridVector | np.ndarray | None) -> list[float] | None:
    if v is None:
        return None
    arr = v.values if isinstance(v, GridVector) else np.asarray(v)
    return [float(x) for x in arr]


def constants_dict(c: StructureConstants) -> dict[str, Any]:
    return {"alpha": c.alpha, "gamma": c.gamma, "c": c.c, "rho": c.rho}


def lambda_result_dict(r: LambdaStarResult) -> dict[str, Any]:
    return {
        "beta": _num(r.beta),
        "lambda_star": _num(r.lam_star),
        "method": r.method,
        "estimate": r.is_estimate,
        "maximizer": _vec(r.maximizer),
    }


def certificate_dict(c: CertificateReport) -> dict[str, Any]:
    return {
        "verdict": c.verdict,
        "j_u": _num(c.j_u),
        "j_v": _num(c.j_v),
        "energy_gap": _num(c.energy_gap),
        "residual": _num(c.residual),
        "companion_residual": _num(c.companion_residual),
        "companion_in_ball": c.companion_in_ball,
        "ball_margin": _num(c.ball_margin),
        "candidate": _vec(c.candidate),
        "companion": _vec(c.companion),
        "diagnostic": c.diagnostic,
    }


def geometry_dict(g: MountainGeometryReport | None) -> dict[str, Any] | None:
    if g is None:
        return None
    return {
        "rho1": _num(g.rho1),
        "inf_sphere_estimate": _num(g.inf_sphere_estimate),
        "endpoint_max": _num(g.endpoint_max),
        "margin": _num(g.margin),
        "kappa": _num(g.kappa),
        "xi": _num(g.xi),
        "samples": g.samples,
        "degenerate": g.degenerate,
        "argmin": _vec(g.argmin),
    }


def point_dict(cp: CriticalPoint, j_origin: float) -> dict[str, Any]:
    return {
        "kind": cp.kind,
        "values": _vec(cp.point),
        "value": _num(cp.value),
        "value_shifted": _num(cp.value - j_origin),
        "residual": _num(cp.residual),
        "classification": cp.classification,
        "converged": cp.converged,
        "iterations": cp.iterations,
        "stationarity": cp.stationarity,
        "certificate": certificate_dict(cp.certificate) if cp.certificate else None,
    }


def pipeline_dict(r: PipelineResult, seed: int) -> dict[str, Any]:
    return {
        "lambda": _num(r.lam),
        "seed": seed,
        "lambda_admissible": r.lambda_admissible,
        "constants": constants_dict(r.constants),
        "lambda_star": lambda_result_dict(r.lambda_result),
        "points": [point_dict(cp, r.j_origin) for cp in r.points],
        "certificate": certificate_dict(r.certificate) if r.certificate else None,
        "geometry": geometry_dict(r.geometry),
        "rho1": _num(r.rho1),
        "rho1_source": r.rho1_source,
        "rho1_exceeds_rho": r.rho1_exceeds_rho,
        "rho1_exceeds_norm_u": r.rho1_exceeds_norm_u,
        "x1": _vec(r.x1),
        "j_origin": _num(r.j_origin),
        "distances": [[_num(d) for d in row] for row in r.distances],
        "distinct_count": r.distinct_count,
        "coincidence_note": r.coincidence_note,
        "stages": [{"name": s.name, "ok": s.ok, "detail": s.detail} for s in r.stages],
    }


def hypotheses_list(verdicts: list[CheckVerdict]) -> list[dict[str, Any]]:
    out = []
    for v in verdicts:
        w = None
        if v.witness is not None:
            x = v.witness.x
            w = {
                "site": list(v.witness.site),
                "x": list(x) if isinstance(x, tuple) else _num(x),
                "lhs": _num(v.witness.lhs),
                "rhs": _num(v.witness.rhs),
            }
        out.append(
            {"hypothesis": v.hypothesis, "verdict": v.verdict, "witness": w, "samples": v.samples}
        )
    return out


def poincare_dict(est: PoincareEstimate) -> dict[str, Any]:
    return {
        "c": _num(est.c),
        "lambda1": _num(est.lambda1),
        "per_level": [[_num(h), _num(v)] for h, v in est.per_level],
        "extrapolated": est.extrapolated,
        "monotone": est.monotone,
    }


def refinement_dict(rep: RefinementReport, seed: int) -> dict[str, Any]:
    return {
        "domain": {"width": rep.domain.width, "height": rep.domain.height, "h": rep.domain.h},
        "lambda": _num(rep.lam),
        "hs": [_num(h) for h in rep.hs],
        "poincare": poincare_dict(rep.poincare),
        "continuum_constants": constants_dict(rep.continuum) if rep.continuum else None,
        "pipeline": pipeline_dict(rep.pipeline, seed),
        "branches": [
            {
                "kind": br.kind,
                "levels": [
                    {
                        "h": _num(lv.h),
                        "values": _vec(lv.point),
                        "energy_weighted": _num(lv.energy_weighted),
                        "residual": _num(lv.residual),
                    }
                    for lv in br.levels
                ],
                "diffs": [_num(d) for d in br.diffs],
                "order": _num(br.order),
                "lost_at": _num(br.lost_at),
            }
            for br in rep.branches
        ],
    }


def h3_dict(rep: H3Report) -> dict[str, Any]:
    return {
        "passed": rep.passed,
        "worst_ratio": _num(rep.worst_ratio),
        "samples": rep.samples,
        "degenerate": rep.degenerate,
    }


@dataclass(frozen=True)
class SolveReport:
    """The full run document; `payload` is plain JSON data.

    Equality is payload equality, so parse(serialize(r)) == r.
    """

    payload: dict[str, Any]

    @property
    def runs(self) -> list[dict[str, Any]]:
        return self.payload.get("runs", [])

    @property
    def config(self) -> dict[str, Any]:
        return self.payload.get("config", {})

    @property
    def timing(self) -> dict[str, Any]:
        return self.payload.get("timing", {})

    def without_timing(self) -> dict[str, Any]:
        return {k: v for k, v in self.payload.items() if k != "timing"}

    def to_json(self) -> str:
        return json.dumps(self.payload, indent=2, sort_keys=True, allow_nan=False) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "SolveReport":
        return cls(json.loads(text))

    def write(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_json())


def build_solve_report(
    command: str,
    config_echo: dict[str, Any],
    constants: StructureConstants | None,
    lambda_result: LambdaStarResult | None,
    runs: list[dict[str, Any]],
    hypotheses: list[CheckVerdict] | None = None,
    refinement: dict[str, Any] | None = None,
    timing_s: float = 0.0,
) -> SolveReport:
    payload: dict[str, Any] = {
        "version": _pkg_version,
        "command": command,
        "config": config_echo,
        "constants": constants_dict(constants) if constants else None,
        "lambda_star": lambda_result_dict(lambda_result) if lambda_result else None,
        "runs": runs,
        "hypotheses": hypotheses_list(hypotheses) if hypotheses is not None else None,
        "refinement": refinement,
        "timing": {"total_s": float(timing_s)},
    }
    return SolveReport(payload)


# --------------------------------------------------------------------------
# CSV formats
# --------------------------------------------------------------------------


def export_matrix_csv(matrix: np.ndarray, path: str) -> None:
    """Dump a dense matrix row-major at full precision, for debugging."""
    arr = np.asarray(matrix, dtype=float)
    if arr.ndim != 2:
        raise ValueError(f"expected a 2-d matrix, got ndim={arr.ndim}")
    with open(path, "w", encoding="utf-8") as fh:
        for row in arr:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


def export_solution_csv(shape: GridShape, values, path: str) -> None:
    """Write "i,j,u" rows in canonical flattening order at full precision.

    The shape is validated before the file is opened: no partial files.
    """
    arr = np.asarray(values, dtype=float).reshape(-1)
    if arr.size != shape.size:
        raise ShapeMismatchError(f"vector length {arr.size} != {shape.size} for {shape}")
    lines = ["i,j,u"]
    for k, (i, j) in enumerate(shape.sites()):
        lines.append(f"{i},{j},{float(arr[k])!r}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def export_solution_xyz_csv(shape: GridShape, values, h: float, path: str) -> None:
    """Domain-mode snapshot: "x,y,u" rows at the node coordinates (i h, j h)."""
    arr = np.asarray(values, dtype=float).reshape(-1)
    if arr.size != shape.size:
        raise ShapeMismatchError(f"vector length {arr.size} != {shape.size} for {shape}")
    lines = ["x,y,u"]
    for k, (i, j) in enumerate(shape.sites()):
        lines.append(f"{i * h!r},{j * h!r},{float(arr[k])!r}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def read_vector_csv(path: str, shape: GridShape) -> np.ndarray:
    """Read an "i,j,u" file; every site must appear exactly once."""
    values = np.full(shape.size, np.nan)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [c.strip().lower() for c in header[:3]] != ["i", "j", "u"]:
            raise ValueError(f"{path}: expected header 'i,j,u', got {header}")
        for row in reader:
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) < 3:
                raise ValueError(f"{path}: short row {row}")
            i, j, u = int(row[0]), int(row[1]), float(row[2])
            k = shape.flat_index(i, j)
            if not math.isnan(values[k]):
                raise ValueError(f"{path}: duplicate site ({i},{j})")
            values[k] = u
    missing = np.nonzero(np.isnan(values))[0]
    if missing.size:
        i, j = list(shape.sites())[int(missing[0])]
        raise ValueError(f"{path}: site ({i},{j}) missing")
    return values


def write_trace_csv(trace: TraceRecorder, path: str) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["stage", "iteration", "value", "residual"])
        for stage, it, value, residual in trace.rows:
            writer.writerow([stage, it, repr(value), repr(residual)])
