"""TOML run configuration: parsing, validation and problem construction.

Sections: [problem] (grid size or domain+mesh, nonlinearity, lambda mode),
[ball] (rho, optional rho1), [solver] (tolerances, budgets, seed),
[output] (report/trace/CSV paths), optional [hypotheses], [certify],
[refine].  Validation failures raise ConfigError naming the offending
field, e.g. "ball.rho must be positive".
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any

try:
    import tomllib  # Python >= 3.11
except ModuleNotFoundError:  # pragma: no cover - depends on interpreter
    import tomli as tomllib

from .grid import GridProblem, Nonlinearity, make_nonlinearity
from .hypotheses import HypothesisParams, params_for
from .pde import RectDomain, discretize
from .solvers import SolverOptions

__all__ = ["ConfigError", "RunConfig", "load_config", "parse_config"]


class ConfigError(ValueError):
    """Invalid configuration; the message names the field."""

    def __init__(self, field_name: str, message: str):
        self.field = field_name
        super().__init__(f"{field_name} {message}")


def _get(section: dict, sec_name: str, key: str, kinds, default=None, required=False):
    if key not in section:
        if required:
            raise ConfigError(f"{sec_name}.{key}", "is required")
        return default
    val = section[key]
    if kinds is float and isinstance(val, int) and not isinstance(val, bool):
        val = float(val)
    if not isinstance(val, kinds):
        raise ConfigError(f"{sec_name}.{key}", f"has wrong type {type(val).__name__}")
    return val


def _positive(sec: str, key: str, val: float) -> float:
    if not (isinstance(val, (int, float)) and math.isfinite(val) and val > 0):
        raise ConfigError(f"{sec}.{key}", f"must be positive and finite, got {val}")
    return float(val)


@dataclass
class RunConfig:
    """Validated run configuration with defaults filled in."""

    # problem
    mode: str                     # "grid" | "domain"
    m: int | None
    n: int | None
    width: float | None
    height: float | None
    h: float | None
    family: str
    coefficients: list[float]
    lambda_mode: str              # "fixed" | "sweep" | "auto"
    lam: float | None
    sweep_from: float | None
    sweep_to: float | None
    sweep_steps: int | None
    fraction: float | None
    # ball
    rho: float
    rho1: float | None
    # solver
    solver: SolverOptions
    # output
    report_path: str
    trace_path: str
    csv_dir: str
    # optional sections
    hypotheses: HypothesisParams | None
    certify_vector: str
    refine_levels: int
    raw: dict[str, Any] = field(default_factory=dict)

    def nonlinearity(self) -> Nonlinearity:
        return make_nonlinearity(self.family, self.coefficients)

    def build_problem(self, lam: float) -> GridProblem:
        nl = self.nonlinearity()
        if self.mode == "grid":
            return GridProblem.build(self.m, self.n, nl, lam, dense_cap=self.solver.dense_cap)
        dom = self.domain()
        return discretize(dom, nl, lam, dense_cap=self.solver.dense_cap)

    def domain(self) -> RectDomain:
        if self.mode != "domain":
            raise ConfigError("problem.h", "is only available in domain mode")
        return RectDomain(self.width, self.height, self.h)

    def lambdas(self) -> list[float]:
        """The lambda grid of this run; 'auto' is resolved by the caller."""
        if self.lambda_mode == "fixed":
            return [self.lam]
        if self.lambda_mode == "sweep":
            if self.sweep_steps == 1:
                return [self.sweep_from]
            step = (self.sweep_to - self.sweep_from) / (self.sweep_steps - 1)
            return [self.sweep_from + k * step for k in range(self.sweep_steps)]
        raise ConfigError("problem.lambda_mode", "'auto' needs lambda* to be resolved first")

    def echo(self) -> dict[str, Any]:
        """Normalized configuration for the report, defaults included."""
        return {
            "problem": {
                "mode": self.mode,
                "m": self.m,
                "n": self.n,
                "width": self.width,
                "height": self.height,
                "h": self.h,
                "family": self.family,
                "coefficients": list(self.coefficients),
                "lambda_mode": self.lambda_mode,
                "lambda": self.lam,
                "sweep_from": self.sweep_from,
                "sweep_to": self.sweep_to,
                "sweep_steps": self.sweep_steps,
                "fraction": self.fraction,
            },
            "ball": {"rho": self.rho, "rho1": self.rho1},
            "solver": {
                "tol": self.solver.tol,
                "max_iter": self.solver.max_iter,
                "multistart": self.solver.multistart,
                "max_multistart": self.solver.max_multistart,
                "path_nodes": self.solver.path_nodes,
                "damping": self.solver.damping,
                "path_max_iter": self.solver.path_max_iter,
                "geometry_samples": self.solver.geometry_samples,
                "seed": self.solver.seed,
                "dense_cap": self.solver.dense_cap,
            },
            "output": {
                "report": self.report_path,
                "trace": self.trace_path,
                "csv_dir": self.csv_dir,
            },
            "refine": {"levels": self.refine_levels},
        }


def parse_config(data: dict[str, Any]) -> RunConfig:
    """Validate a parsed TOML document; raise ConfigError naming bad fields."""
    for sec in data:
        if sec not in ("problem", "ball", "solver", "output", "hypotheses", "certify", "refine"):
            raise ConfigError(sec, "is not a recognized section")
    problem = data.get("problem")
    if not isinstance(problem, dict):
        raise ConfigError("problem", "section is required")
    ball = data.get("ball", {})
    solver = data.get("solver", {})
    output = data.get("output", {})

    # --- problem geometry: grid (m, n) or domain (width, height, h) ---------
    has_grid = "m" in problem or "n" in problem
    has_dom = any(k in problem for k in ("width", "height", "h"))
    if has_grid and has_dom:
        raise ConfigError("problem", "must give either m,n or width,height,h, not both")
    if has_grid:
        mode = "grid"
        m = _get(problem, "problem", "m", int, required=True)
        n = _get(problem, "problem", "n", int, required=True)
        if m < 1:
            raise ConfigError("problem.m", f"must be >= 1, got {m}")
        if n < 1:
            raise ConfigError("problem.n", f"must be >= 1, got {n}")
        width = height = h = None
    elif has_dom:
        mode = "domain"
        width = _positive("problem", "width", _get(problem, "problem", "width", float, required=True))
        height = _positive("problem", "height", _get(problem, "problem", "height", float, required=True))
        h = _positive("problem", "h", _get(problem, "problem", "h", float, required=True))
        m = n = None
        try:
            RectDomain(width, height, h)
        except ValueError as exc:
            raise ConfigError("problem.h", str(exc)) from None
    else:
        raise ConfigError("problem.m", "either m,n or width,height,h is required")

    family = _get(problem, "problem", "family", str, required=True)
    coefficients = _get(problem, "problem", "coefficients", list, default=[])
    try:
        make_nonlinearity(family, coefficients)
    except ValueError as exc:
        raise ConfigError("problem.family", str(exc)) from None

    # --- lambda mode: exactly one of fixed / sweep / auto -------------------
    lambda_mode = _get(problem, "problem", "lambda_mode", str, default="fixed")
    if lambda_mode not in ("fixed", "sweep", "auto"):
        raise ConfigError("problem.lambda_mode", f"must be fixed, sweep or auto, got {lambda_mode!r}")
    mode_keys = {
        "fixed": {"lambda"},
        "sweep": {"sweep_from", "sweep_to", "sweep_steps"},
        "auto": {"fraction"},
    }
    foreign = {
        k
        for other, keys in mode_keys.items()
        if other != lambda_mode
        for k in keys
        if k in problem
    }
    if foreign:
        raise ConfigError(
            "problem.lambda_mode",
            f"is {lambda_mode!r} but keys {sorted(foreign)} belong to another mode",
        )
    lam = sweep_from = sweep_to = fraction = None
    sweep_steps = None
    if lambda_mode == "fixed":
        lam = _positive("problem", "lambda", _get(problem, "problem", "lambda", float, required=True))
    elif lambda_mode == "sweep":
        sweep_from = _positive(
            "problem", "sweep_from", _get(problem, "problem", "sweep_from", float, required=True)
        )
        sweep_to = _positive(
            "problem", "sweep_to", _get(problem, "problem", "sweep_to", float, required=True)
        )
        sweep_steps = _get(problem, "problem", "sweep_steps", int, required=True)
        if sweep_steps < 1:
            raise ConfigError("problem.sweep_steps", f"must be >= 1, got {sweep_steps}")
        if sweep_to < sweep_from:
            raise ConfigError("problem.sweep_to", "must not be below sweep_from")
    else:
        fraction = _positive(
            "problem", "fraction", _get(problem, "problem", "fraction", float, default=1.0)
        )

    # --- ball ----------------------------------------------------------------
    rho = _positive("ball", "rho", _get(ball, "ball", "rho", float, default=1.0))
    rho1 = _get(ball, "ball", "rho1", float, default=None)
    if rho1 is not None:
        if rho1 == 0.0:
            rho1 = None  # 0 means "auto"
        else:
            rho1 = _positive("ball", "rho1", rho1)

    # --- solver ----------------------------------------------------------------
    opts = SolverOptions()
    opts.tol = _positive("solver", "tol", _get(solver, "solver", "tol", float, default=opts.tol))
    for key in ("max_iter", "multistart", "max_multistart", "path_nodes", "path_max_iter",
                "geometry_samples", "dense_cap"):
        val = _get(solver, "solver", key, int, default=getattr(opts, key))
        if val < 1:
            raise ConfigError(f"solver.{key}", f"must be >= 1, got {val}")
        setattr(opts, key, val)
    if opts.path_nodes < 3:
        raise ConfigError("solver.path_nodes", f"must be >= 3, got {opts.path_nodes}")
    opts.damping = _positive(
        "solver", "damping", _get(solver, "solver", "damping", float, default=opts.damping)
    )
    seed = _get(solver, "solver", "seed", int, default=0)
    opts.seed = int(seed)
    opts.rho1 = rho1

    # --- output ----------------------------------------------------------------
    report_path = _get(output, "output", "report", str, default="report.json")
    trace_path = _get(output, "output", "trace", str, default="")
    csv_dir = _get(output, "output", "csv_dir", str, default="")

    # --- optional sections -------------------------------------------------
    hyp = None
    if "hypotheses" in data:
        hs = data["hypotheses"]
        base = params_for(make_nonlinearity(family, coefficients), rho) or HypothesisParams()
        kwargs = {}
        for key in ("c1", "mu", "c2", "d", "theta", "beta1", "eta", "beta2", "x_max", "vanish_tol"):
            kwargs[key] = _get(hs, "hypotheses", key, float, default=getattr(base, key))
        for key in ("samples", "ladder_len", "ladder_tail"):
            kwargs[key] = _get(hs, "hypotheses", key, int, default=getattr(base, key))
        hyp = HypothesisParams(seed=opts.seed, **kwargs)

    certify_vector = _get(data.get("certify", {}), "certify", "vector", str, default="")
    refine_levels = _get(data.get("refine", {}), "refine", "levels", int, default=3)
    if refine_levels < 1:
        raise ConfigError("refine.levels", f"must be >= 1, got {refine_levels}")

    return RunConfig(
        mode=mode,
        m=m,
        n=n,
        width=width,
        height=height,
        h=h,
        family=family,
        coefficients=[float(v) for v in coefficients],
        lambda_mode=lambda_mode,
        lam=lam,
        sweep_from=sweep_from,
        sweep_to=sweep_to,
        sweep_steps=sweep_steps,
        fraction=fraction,
        rho=rho,
        rho1=rho1,
        solver=opts,
        report_path=report_path,
        trace_path=trace_path,
        csv_dir=csv_dir,
        hypotheses=hyp,
        certify_vector=certify_vector,
        refine_levels=refine_levels,
        raw=data,
    )


def load_config(path: str) -> RunConfig:
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError("config", f"file unreadable: {exc}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError("config", f"malformed TOML: {exc}") from None
    return parse_config(data)
