"""Locate the three candidate critical points: constrained ball minimizer,
mountain-pass point between two low-energy states, and global maximizer.

All searches are deterministic given the master seed: multistart seeds come
from labelled substreams and reductions break ties by value first, then by
the lexicographically smallest vector.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .dc import (
    CertificateReport,
    LambdaStarResult,
    StructureConstants,
    beta_sup,
    certify,
    convex_companion,
    stream_rng,
)
from .grid import GridProblem, GridVector, as_values

__all__ = [
    "SolverOptions",
    "TraceRecorder",
    "GeometryViolationError",
    "NotAntiCoerciveError",
    "CriticalPoint",
    "Path",
    "MountainGeometryReport",
    "StageStatus",
    "PipelineResult",
    "ball_minimize",
    "convex_subproblem",
    "mountain_pass",
    "global_maximize",
    "mountain_geometry_check",
    "newton_polish",
    "newton_enumerate",
    "classify_point",
    "three_point_pipeline",
]


class GeometryViolationError(RuntimeError):
    """The mountain geometry does not hold (no barrier above the endpoints)."""


class NotAntiCoerciveError(RuntimeError):
    """The energy does not decay along sampled rays; no global maximizer."""


@dataclass
class SolverOptions:
    """Shared tolerances, budgets and seeding for all solver stages."""

    tol: float = 1e-9                 # stationarity: residual <= tol * (1 + |x|)
    max_iter: int = 2000              # per-start budget for descent/ascent stages
    multistart: int = 8               # random starts for the ball minimizer
    max_multistart: int = 24          # random starts for the global maximizer
    path_nodes: int = 41              # K nodes on the mountain-pass path
    damping: float = 0.5              # damping of the accepted max-node step
    path_max_iter: int = 8000
    path_grad_tol: float = 1e-3       # switch from path deformation to polishing
    newton_max_iter: int = 80
    seed: int = 0
    seed_sign: float = 1.0            # negate to flip every generated seed point
    dense_cap: int = 4096
    rho1: float | None = None         # test-sphere radius; None -> max(rho, 2|u|)
    check_geometry: bool = True
    geometry_samples: int = 256
    distinct_rtol: float = 1e-4
    classify_tol: float = 1e-8
    collect_iterates: bool = False

    def rng(self, label: str) -> np.random.Generator:
        return stream_rng(self.seed, label)


@dataclass
class TraceRecorder:
    """Per-iteration (stage, iteration, value, residual) rows, CSV-ready."""

    rows: list[tuple[str, int, float, float]] = field(default_factory=list)
    iterates: dict[str, list[np.ndarray]] = field(default_factory=dict)

    def record(self, stage: str, iteration: int, value: float, residual: float) -> None:
        self.rows.append((stage, iteration, float(value), float(residual)))

    def record_iterate(self, stage: str, x: np.ndarray) -> None:
        self.iterates.setdefault(stage, []).append(np.array(x))


@dataclass
class CriticalPoint:
    """A candidate or confirmed critical point with its diagnostics."""

    point: GridVector
    value: float
    residual: float
    kind: str                      # ball_min | mountain_pass | global_max | other
    classification: str            # local_min | saddle | local_max | degenerate
    converged: bool
    iterations: int
    stationarity: str = ""         # interior | boundary-kkt | ""
    certificate: CertificateReport | None = None


@dataclass
class Path:
    """Discretized path joining fixed endpoints; first/last nodes never move."""

    nodes: list[np.ndarray]

    def __post_init__(self) -> None:
        if len(self.nodes) < 3:
            raise ValueError(f"a path needs at least 3 nodes, got {len(self.nodes)}")


@dataclass
class MountainGeometryReport:
    """Sampled barrier estimate on the sphere |x| = rho1 versus the endpoints."""

    rho1: float
    inf_sphere_estimate: float
    endpoint_max: float
    margin: float
    kappa: float | None
    xi: float | None
    samples: int
    degenerate: bool = False
    argmin: GridVector | None = None

    @property
    def positive(self) -> bool:
        return (not self.degenerate) and self.margin > 0.0


@dataclass
class StageStatus:
    name: str
    ok: bool
    detail: str = ""


@dataclass
class PipelineResult:
    """Outcome of the three-point pipeline at a single lambda."""

    lam: float
    constants: StructureConstants
    lambda_result: LambdaStarResult
    lambda_admissible: bool
    points: list[CriticalPoint]
    certificate: CertificateReport | None
    geometry: MountainGeometryReport | None
    rho1: float
    rho1_source: str
    rho1_exceeds_rho: bool
    rho1_exceeds_norm_u: bool
    x1: GridVector | None
    j_origin: float
    distances: list[list[float]]
    distinct_count: int
    coincidence_note: str
    stages: list[StageStatus]

    def stage_ok(self, name: str) -> bool:
        return any(s.name == name and s.ok for s in self.stages)


# --------------------------------------------------------------------------
# Shared machinery
# --------------------------------------------------------------------------


def _lex_less(a: np.ndarray, b: np.ndarray) -> bool:
    for x, y in zip(a, b):
        if x != y:
            return x < y
    return False


def _extreme_eigs_matfree(apply_h, n: int, rng: np.random.Generator, iters: int = 300):
    """Extreme eigenvalues of a symmetric operator by shifted power iteration."""
    v = rng.standard_normal(n)
    v /= np.linalg.norm(v)
    lam_a = 0.0
    for _ in range(iters):
        w = apply_h(v)
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return 0.0, 0.0
        v = w / nw
        lam_a = float(v @ apply_h(v))
    # second extreme from the shifted operator H - lam_a I
    u = rng.standard_normal(n)
    u /= np.linalg.norm(u)
    mu = 0.0
    for _ in range(iters):
        w = apply_h(u) - lam_a * u
        nw = np.linalg.norm(w)
        if nw == 0.0:
            break
        u = w / nw
        mu = float(u @ (apply_h(u) - lam_a * u))
    lam_b = mu + lam_a
    return (min(lam_a, lam_b), max(lam_a, lam_b))


def classify_point(p: GridProblem, x: np.ndarray, tol: float = 1e-8, dense_cap: int = 4096) -> str:
    """Sign pattern of the extreme Hessian eigenvalues at x."""
    if p.size <= dense_cap:
        eigs = np.linalg.eigvalsh(p.hessian_dense(x))
        lo, hi = float(eigs[0]), float(eigs[-1])
    else:
        rng = np.random.default_rng(0)
        lo, hi = _extreme_eigs_matfree(lambda w: p.hessian_apply(x, w), p.size, rng)
    thr = tol * max(1.0, abs(lo), abs(hi))
    if lo > thr:
        return "local_min"
    if hi < -thr:
        return "local_max"
    if lo < -thr and hi > thr:
        return "saddle"
    return "degenerate"


def _finish_point(
    p: GridProblem,
    x: np.ndarray,
    kind: str,
    converged: bool,
    iterations: int,
    opts: SolverOptions,
    stationarity: str = "",
) -> CriticalPoint:
    x = np.asarray(x, dtype=float)
    return CriticalPoint(
        point=GridVector(p.shape, x.copy()),
        value=p.energy(x),
        residual=p.residual(x),
        kind=kind,
        classification=classify_point(p, x, tol=opts.classify_tol, dense_cap=opts.dense_cap),
        converged=converged,
        iterations=iterations,
        stationarity=stationarity,
    )


def newton_polish(
    p: GridProblem,
    x0,
    tol: float = 1e-10,
    max_iter: int = 80,
    dense_cap: int = 4096,
) -> tuple[np.ndarray, float, bool, int]:
    """Damped Newton iteration on grad J = 0; returns (x, residual, converged, iters).

    Steps must shrink the gradient norm; when no damped step does, the
    iteration stops and reports the best point reached.
    """
    x = np.array(as_values(p.shape, x0), dtype=float)
    g = p.gradient(x)
    res = float(np.linalg.norm(g))
    it = 0
    for it in range(1, max_iter + 1):
        if res <= tol * (1.0 + float(np.linalg.norm(x))):
            return x, res, True, it - 1
        if p.size <= dense_cap:
            h = p.hessian_dense(x)
            try:
                delta = np.linalg.solve(h, -g)
            except np.linalg.LinAlgError:
                delta, *_ = np.linalg.lstsq(h, -g, rcond=None)
        else:
            # no dense solve above the cap; fall back to scaled steepest descent
            delta = -g / max(1.0, res)
        t = 1.0
        accepted = False
        for _ in range(40):
            cand = x + t * delta
            cand_g = p.gradient(cand)
            cand_res = float(np.linalg.norm(cand_g))
            if cand_res < res * (1.0 - 1e-4 * t) or cand_res <= tol:
                x, g, res = cand, cand_g, cand_res
                accepted = True
                break
            t *= 0.5
        if not accepted:
            break
    return x, res, res <= tol * (1.0 + float(np.linalg.norm(x))), it


# --------------------------------------------------------------------------
# Ball minimizer
# --------------------------------------------------------------------------


def _project_ball(x: np.ndarray, rho: float) -> np.ndarray:
    nrm = float(np.linalg.norm(x))
    return x if nrm <= rho else x * (rho / nrm)


def _ball_stationary(
    p: GridProblem, x: np.ndarray, g: np.ndarray, rho: float, tol: float
) -> tuple[bool, str]:
    gn = float(np.linalg.norm(g))
    scale = tol * (1.0 + float(np.linalg.norm(x)))
    if gn <= scale:
        return True, "interior"
    nx = float(np.linalg.norm(x))
    if nx >= rho * (1.0 - 1e-9):
        cosang = float(-(g @ x) / (gn * nx))
        pg = x - _project_ball(x - g, rho)
        if cosang >= 1.0 - 1e-8 or float(np.linalg.norm(pg)) <= scale:
            return True, "boundary-kkt"
    return False, ""


def ball_minimize(
    p: GridProblem,
    rho: float,
    opts: SolverOptions | None = None,
    seeds: Sequence[np.ndarray] | None = None,
    trace: TraceRecorder | None = None,
) -> CriticalPoint:
    """Projected gradient descent on the closed ball |x| <= rho, multistart.

    Iterate energies are non-increasing (backtracking accepts only
    decreases) and every iterate stays inside the ball.  First-order
    stationarity is the plain gradient test in the interior and the
    KKT alignment test cos(-grad, x) >= 1 - 1e-8 on the boundary.
    """
    if opts is None:
        opts = SolverOptions()
    if not rho > 0.0:
        raise ValueError(f"ball radius must be positive, got {rho}")
    n = p.size
    if seeds is None:
        rng = opts.rng("ball-min")
        seeds = []
        for _ in range(opts.multistart):
            d = rng.standard_normal(n)
            nd = np.linalg.norm(d)
            if nd == 0.0:
                continue
            seeds.append(opts.seed_sign * rho * rng.uniform(0.1, 1.0) * d / nd)
    starts = [np.zeros(n)] + [np.asarray(s, dtype=float) for s in seeds]

    candidates: list[tuple[np.ndarray, float, bool, str, int]] = []
    for si, start in enumerate(starts):
        x = _project_ball(start.copy(), rho)
        fval = p.energy(x)
        step = 1.0
        converged = False
        how = ""
        it = 0
        for it in range(opts.max_iter):
            g = p.gradient(x)
            if trace is not None:
                trace.record("ball-min", it, fval, float(np.linalg.norm(g)))
                if opts.collect_iterates:
                    trace.record_iterate("ball-min", x)
            converged, how = _ball_stationary(p, x, g, rho, opts.tol)
            if converged:
                break
            t = step
            moved = False
            for _ in range(60):
                cand = _project_ball(x - t * g, rho)
                dx = cand - x
                dn2 = float(dx @ dx)
                if dn2 == 0.0:
                    break
                cval = p.energy(cand)
                if cval <= fval - 1e-4 * dn2 / t:
                    x, fval = cand, cval
                    step = min(t * 2.0, 1e8)
                    moved = True
                    break
                t *= 0.5
            if not moved:
                converged, how = _ball_stationary(p, x, g, rho, opts.tol * 10.0)
                break
        candidates.append((x, fval, converged, how, it))

    best = min(candidates, key=lambda c: c[1])
    close = [
        c
        for c in candidates
        if c[1] <= best[1] + 1e-12 * (1.0 + abs(best[1]))
    ]
    close.sort(key=lambda c: (not c[2], c[1], tuple(c[0])))
    x, fval, converged, how, it = close[0]
    return _finish_point(p, x, "ball_min", converged, it, opts, stationarity=how)


def convex_subproblem(p: GridProblem, u, tol_linear: float = 1e-10, max_iter: int | None = None) -> np.ndarray:
    """Minimizer of the convex companion energy: solves A v = lambda f(u)."""
    cg = convex_companion(p, u, tol_linear=tol_linear, max_iter=max_iter)
    if not cg.converged:
        raise RuntimeError(
            f"companion CG stalled at residual {cg.residual:.3e} after {cg.iterations} iterations"
        )
    return cg.x


# --------------------------------------------------------------------------
# Mountain pass
# --------------------------------------------------------------------------


def _redistribute_arclength(nodes: list[np.ndarray]) -> list[np.ndarray]:
    """Resample the polyline at uniform arclength, keeping endpoints fixed."""
    k = len(nodes)
    seg = [float(np.linalg.norm(nodes[i + 1] - nodes[i])) for i in range(k - 1)]
    total = sum(seg)
    if total == 0.0:
        return [nodes[0].copy() for _ in range(k)]
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    out = [nodes[0].copy()]
    j = 0
    for i in range(1, k - 1):
        target = total * i / (k - 1)
        while j < k - 2 and cum[j + 1] < target:
            j += 1
        denom = seg[j] if seg[j] > 0.0 else 1.0
        w = (target - cum[j]) / denom
        out.append((1.0 - w) * nodes[j] + w * nodes[j + 1])
    out.append(nodes[-1].copy())
    return out


def mountain_pass(
    p: GridProblem,
    x0,
    x1,
    opts: SolverOptions | None = None,
    trace: TraceRecorder | None = None,
) -> CriticalPoint:
    """Discretized path-deformation search for a mountain-pass critical point.

    A straight K-node path joins x0 and x1; repeatedly the highest interior
    node takes a damped backtracked descent step and its neighbours are
    locally re-spaced.  Once the highest node's gradient is small, or the
    level stalls, the node is polished by Newton; the polished point must
    sit at level >= max(J(x0), J(x1)).  A path whose interior maximum drops
    to the endpoint level has no barrier: GeometryViolationError.
    """
    if opts is None:
        opts = SolverOptions()
    a = np.array(as_values(p.shape, x0), dtype=float)
    b = np.array(as_values(p.shape, x1), dtype=float)
    j0, j1 = p.energy(a), p.energy(b)
    emax = max(j0, j1)
    collapse_tol = 1e-9 * (1.0 + abs(emax))

    if opts.check_geometry:
        na, nb = float(np.linalg.norm(a)), float(np.linalg.norm(b))
        if na < nb:
            if opts.rho1 is not None and na < opts.rho1 < nb:
                radii = [float(opts.rho1)]
            else:
                radii = list(na + (nb - na) * np.array([0.25, 0.4, 0.55, 0.7, 0.85]))
            margins = []
            for rho1 in radii:
                geo = mountain_geometry_check(
                    p, rho1, a, b, samples=opts.geometry_samples, seed=opts.seed, radii_scan=0
                )
                if geo.positive:
                    break
                margins.append((rho1, geo.margin))
            else:
                worst = ", ".join(f"{r:.4g}: {m:.4g}" for r, m in margins)
                raise GeometryViolationError(
                    f"geometry violated: no sampled sphere between the endpoints has a "
                    f"positive barrier (radius: margin = {worst})"
                )

    k = max(3, opts.path_nodes)
    s = np.linspace(0.0, 1.0, k)
    path = Path([a + si * (b - a) for si in s])
    nodes = path.nodes
    jvals = [p.energy(x) for x in nodes]

    best_level = math.inf
    stall_window = 60
    since_improve = 0
    next_polish_at = 0
    best_attempt: tuple[np.ndarray, float, bool, int] | None = None

    for it in range(opts.path_max_iter):
        ki = 1 + int(np.argmax(jvals[1:-1]))
        level = jvals[ki]
        if level <= emax + collapse_tol:
            raise GeometryViolationError(
                f"geometry violated: path maximum {level:.6g} collapsed to endpoint level {emax:.6g}"
            )
        g = p.gradient(nodes[ki])
        gn = float(np.linalg.norm(g))
        if trace is not None:
            trace.record("mountain-pass", it, level, gn)

        if level < best_level - 1e-12 * (1.0 + abs(level)):
            best_level = level
            since_improve = 0
        else:
            since_improve += 1

        want_polish = gn <= opts.path_grad_tol * (1.0 + float(np.linalg.norm(nodes[ki]))) or (
            since_improve >= stall_window and it >= next_polish_at
        )
        if want_polish:
            z, res, ok, nit = newton_polish(
                p, nodes[ki], tol=opts.tol, max_iter=opts.newton_max_iter, dense_cap=opts.dense_cap
            )
            zj = p.energy(z)
            if ok and zj >= emax - 1e-10 * (1.0 + abs(emax)):
                return _finish_point(p, z, "mountain_pass", True, it + 1, opts)
            if best_attempt is None or res < best_attempt[1]:
                best_attempt = (z, res, False, it + 1)
            next_polish_at = it + 120
            since_improve = 0

        # damped descent step on the highest node
        spacing = min(
            float(np.linalg.norm(nodes[ki] - nodes[ki - 1])),
            float(np.linalg.norm(nodes[ki + 1] - nodes[ki])),
        )
        t = min(1.0, max(spacing, 1e-12) / max(gn, 1e-12))
        moved = False
        for _ in range(50):
            cand = nodes[ki] - t * g
            cj = p.energy(cand)
            if cj < level - 1e-4 * t * gn * gn:
                moved = True
                break
            t *= 0.5
        if moved:
            nodes[ki] = nodes[ki] - opts.damping * t * g
            jvals[ki] = p.energy(nodes[ki])
            for nb_i in (ki - 1, ki + 1):
                lo, hi = nb_i - 1, nb_i + 1
                if 1 <= nb_i <= k - 2 and 0 <= lo and hi <= k - 1:
                    nodes[nb_i] = 0.5 * (nodes[lo] + nodes[hi])
                    jvals[nb_i] = p.energy(nodes[nb_i])
        seg = [float(np.linalg.norm(nodes[i + 1] - nodes[i])) for i in range(k - 1)]
        smax, smin = max(seg), min(seg)
        if smin == 0.0 or smax / max(smin, 1e-300) > 16.0:
            nodes[:] = _redistribute_arclength(nodes)
            jvals[:] = [p.energy(x) for x in nodes]

    # budget exhausted: report the best polished attempt, flagged unconverged
    if best_attempt is not None:
        z, res, _, nit = best_attempt
        return _finish_point(p, z, "mountain_pass", False, opts.path_max_iter, opts)
    ki = 1 + int(np.argmax(jvals[1:-1]))
    return _finish_point(p, nodes[ki], "mountain_pass", False, opts.path_max_iter, opts)


# --------------------------------------------------------------------------
# Global maximizer
# --------------------------------------------------------------------------


def _anti_coercive_along(p: GridProblem, d: np.ndarray, floor: float) -> bool:
    """True when J(t d) drops below `floor` for some t up to 2^40."""
    t = 1.0
    for _ in range(41):
        if p.energy(t * d) <= floor:
            return True
        t *= 2.0
    return False


def check_anti_coercive(p: GridProblem, opts: SolverOptions, extra_dirs: int = 2) -> None:
    """Probe decay of J along coordinate, diagonal and random rays."""
    n = p.size
    j0 = p.energy(np.zeros(n))
    floor = min(0.0, j0) - 1.0
    dirs = [np.ones(n) / math.sqrt(n)]
    for kk in range(min(n, 4)):
        e = np.zeros(n)
        e[kk] = 1.0
        dirs.append(e)
    rng = opts.rng("anti-coercive")
    for _ in range(extra_dirs):
        d = rng.standard_normal(n)
        dirs.append(d / np.linalg.norm(d))
    for d in dirs:
        if not (_anti_coercive_along(p, d, floor) and _anti_coercive_along(p, -d, floor)):
            raise NotAntiCoerciveError(
                "not anti-coercive: energy does not decay along a sampled ray"
            )


def global_maximize(
    p: GridProblem,
    opts: SolverOptions | None = None,
    seeds: Sequence[np.ndarray] | None = None,
    scale: float = 1.0,
    trace: TraceRecorder | None = None,
) -> CriticalPoint:
    """Multistart gradient ascent with backtracking, then Newton polish.

    Requires plausible anti-coercivity (decay of J along sampled rays);
    an ascent run escaping to norm 1e8 also signals unbounded energy.
    """
    if opts is None:
        opts = SolverOptions()
    check_anti_coercive(p, opts)
    n = p.size
    if seeds is None:
        rng = opts.rng("global-max")
        seeds = []
        ones = np.ones(n) / math.sqrt(n)
        for r in (0.5 * scale, scale, 2.0 * scale):
            seeds.extend([r * ones, -r * ones])
        for _ in range(opts.max_multistart):
            d = rng.standard_normal(n)
            d /= np.linalg.norm(d)
            r = scale * rng.uniform(0.2, 2.0)
            seeds.extend([r * d, -r * d])
        seeds = [opts.seed_sign * s for s in seeds]

    candidates: list[tuple[np.ndarray, float, float, bool, int]] = []
    for start in seeds:
        x = np.array(start, dtype=float)
        fval = p.energy(x)
        step = 1.0
        it = 0
        for it in range(opts.max_iter):
            g = p.gradient(x)
            gn = float(np.linalg.norm(g))
            if trace is not None:
                trace.record("global-max", it, fval, gn)
            if gn <= 1e-6 * (1.0 + float(np.linalg.norm(x))):
                break
            t = step
            moved = False
            for _ in range(60):
                cand = x + t * g
                cval = p.energy(cand)
                if cval >= fval + 1e-4 * t * gn * gn:
                    x, fval = cand, cval
                    step = min(t * 2.0, 1e8)
                    moved = True
                    break
                t *= 0.5
            if not moved:
                break
            if float(np.linalg.norm(x)) > 1e8:
                raise NotAntiCoerciveError(
                    "not anti-coercive: ascent iterates diverged (energy unbounded above)"
                )
        z, res, ok, nit = newton_polish(
            p, x, tol=opts.tol, max_iter=opts.newton_max_iter, dense_cap=opts.dense_cap
        )
        zval = p.energy(z)
        # keep only ascent outcomes the polish did not drag far downhill
        if ok and zval >= fval - 1e-8 * (1.0 + abs(fval)):
            candidates.append((z, zval, res, True, it + nit))
        else:
            candidates.append((x, fval, p.residual(x), False, it))

    best_converged = [c for c in candidates if c[3]]
    pool = best_converged if best_converged else candidates
    top = max(pool, key=lambda c: c[1])
    close = [c for c in pool if c[1] >= top[1] - 1e-12 * (1.0 + abs(top[1]))]
    close.sort(key=lambda c: (-c[1], tuple(c[0])))
    x, fval, res, ok, it = close[0]
    return _finish_point(p, x, "global_max", ok, it, opts)


# --------------------------------------------------------------------------
# Mountain geometry
# --------------------------------------------------------------------------


def _sphere_descend(
    p: GridProblem, x: np.ndarray, rho1: float, iters: int = 60
) -> tuple[np.ndarray, float]:
    """Tangential descent constrained to the sphere |x| = rho1."""
    x = x * (rho1 / float(np.linalg.norm(x)))
    val = p.energy(x)
    step = 1.0
    for _ in range(iters):
        g = p.gradient(x)
        xhat = x / rho1
        gt = g - float(g @ xhat) * xhat
        gtn = float(np.linalg.norm(gt))
        if gtn <= 1e-12 * (1.0 + abs(val)):
            break
        t = step
        moved = False
        for _ in range(40):
            cand = x - t * gt
            cand *= rho1 / float(np.linalg.norm(cand))
            cval = p.energy(cand)
            if cval < val - 1e-6 * max(1.0, abs(val)) * min(t, 1.0):
                x, val = cand, cval
                step = min(2.0 * t, 1e6)
                moved = True
                break
            t *= 0.5
        if not moved:
            break
    return x, val


def _sphere_inf(
    p: GridProblem,
    radius: float,
    samples: int,
    rng: np.random.Generator,
    descend_best: int = 3,
) -> tuple[float, np.ndarray]:
    """Sampled infimum of J over the sphere of the given radius."""
    n = p.size
    dirs: list[np.ndarray] = []
    for kk in range(min(n, 16)):
        e = np.zeros(n)
        e[kk] = 1.0
        dirs.extend([e, -e])
    while len(dirs) < samples:
        d = rng.standard_normal(n)
        nd = float(np.linalg.norm(d))
        if nd > 0.0:
            dirs.append(d / nd)
    scored = sorted(
        ((p.energy(radius * d), d) for d in dirs), key=lambda t: (t[0], tuple(t[1]))
    )
    best_val, best_x = scored[0][0], radius * scored[0][1]
    for val, d in scored[:descend_best]:
        x, v = _sphere_descend(p, radius * d, radius)
        if v < best_val:
            best_val, best_x = v, x
    return best_val, best_x


def mountain_geometry_check(
    p: GridProblem,
    rho1: float,
    x0,
    x1,
    samples: int = 256,
    seed: int = 0,
    radii_scan: int = 9,
) -> MountainGeometryReport:
    """Estimate the barrier: inf J on the sphere |x| = rho1 minus the endpoint max.

    Also scans radii in [rho1/4, 2 rho1] and proposes the pair (kappa, xi)
    with the highest positive sphere infimum, when one exists.  A negative
    margin is a valid report, not an error.
    """
    a = np.array(as_values(p.shape, x0), dtype=float)
    b = np.array(as_values(p.shape, x1), dtype=float)
    na, nb = float(np.linalg.norm(a)), float(np.linalg.norm(b))
    if not (na < rho1 < nb):
        raise ValueError(
            f"need |x0| < rho1 < |x1| to separate the endpoints, got {na:.6g}, {rho1:.6g}, {nb:.6g}"
        )
    endpoint_max = max(p.energy(a), p.energy(b))
    if samples <= 0:
        return MountainGeometryReport(
            rho1=rho1,
            inf_sphere_estimate=math.nan,
            endpoint_max=endpoint_max,
            margin=math.nan,
            kappa=None,
            xi=None,
            samples=0,
            degenerate=True,
        )
    rng = stream_rng(seed, "geometry")
    inf_est, argmin = _sphere_inf(p, rho1, samples, rng)
    margin = inf_est - endpoint_max

    kappa: float | None = None
    xi: float | None = None
    if radii_scan > 0:
        best = -math.inf
        for r in np.geomspace(0.25 * rho1, 2.0 * rho1, radii_scan):
            v, _ = _sphere_inf(p, float(r), max(8, samples // 4), rng, descend_best=1)
            if v > best:
                best, kappa = v, float(r)
        if best > 0.0:
            xi = best
        else:
            kappa, xi = None, None
    return MountainGeometryReport(
        rho1=rho1,
        inf_sphere_estimate=inf_est,
        endpoint_max=endpoint_max,
        margin=margin,
        kappa=kappa,
        xi=xi,
        samples=samples,
        argmin=GridVector(p.shape, argmin),
    )


# --------------------------------------------------------------------------
# Brute-force enumeration oracle
# --------------------------------------------------------------------------


def newton_enumerate(
    p: GridProblem,
    starts: int = 300,
    box: float = 3.0,
    seed: int = 0,
    tol: float = 1e-11,
    match_tol: float = 1e-7,
    dense_cap: int = 4096,
) -> list[np.ndarray]:
    """Multistart Newton enumeration of solutions of grad J = 0 in a box.

    A diagnostic oracle for small grids; it does not certify completeness.
    Roots are deduplicated at match_tol*(1+norm) and sorted by (J, lex).
    """
    n = p.size
    rng = stream_rng(seed, "enumerate")
    pts: list[np.ndarray] = [np.zeros(n)]
    for kk in range(min(n, 6)):
        e = np.zeros(n)
        e[kk] = 0.5 * box
        pts.extend([e, -e])
    while len(pts) < starts:
        pts.append(rng.uniform(-box, box, size=n))
    roots: list[np.ndarray] = []
    for x0 in pts:
        x, res, ok, _ = newton_polish(p, x0, tol=tol, max_iter=120, dense_cap=dense_cap)
        if not ok:
            continue
        if not all(
            float(np.linalg.norm(x - r)) > match_tol * (1.0 + float(np.linalg.norm(r)))
            for r in roots
        ):
            continue
        roots.append(x)
    roots.sort(key=lambda r: (p.energy(r), tuple(r)))
    return roots


# --------------------------------------------------------------------------
# Pipeline
# --------------------------------------------------------------------------


def _descent_endpoint(
    p: GridProblem, direction: np.ndarray, target: float, rho1: float
) -> np.ndarray | None:
    """March t -> 2t along the ray until J(t d) <= target and |t d| > rho1."""
    d = direction / float(np.linalg.norm(direction))
    t = 1.0
    for _ in range(44):
        x = t * d
        if p.energy(x) <= target and float(np.linalg.norm(x)) > rho1:
            return x
        t *= 2.0
    return None


def _distinct_count(
    points: list[CriticalPoint], rtol: float
) -> tuple[list[list[float]], int, str]:
    vecs = [cp.point.values for cp in points]
    k = len(vecs)
    dist = [[0.0] * k for _ in range(k)]
    maxnorm = max((float(np.linalg.norm(v)) for v in vecs), default=0.0)
    thr = rtol * (1.0 + maxnorm)
    parent = list(range(k))

    def find(i: int) -> int:
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i in range(k):
        for j in range(i + 1, k):
            dij = float(np.linalg.norm(vecs[i] - vecs[j]))
            dist[i][j] = dist[j][i] = dij
            if dij <= thr:
                parent[find(i)] = find(j)
    count = len({find(i) for i in range(k)})
    note = ""
    if count < k:
        dup_kinds = sorted(
            {points[i].kind for i in range(k) for j in range(i + 1, k) if find(i) == find(j)}
            | {points[j].kind for i in range(k) for j in range(i + 1, k) if find(i) == find(j)}
        )
        note = (
            f"coincident points among stages {dup_kinds}: either a further distinct "
            "critical point exists elsewhere, or the level set at that energy carries "
            "infinitely many critical points"
        )
    return dist, count, note


def three_point_pipeline(
    p: GridProblem,
    constants: StructureConstants,
    opts: SolverOptions | None = None,
    trace: TraceRecorder | None = None,
    lambda_result: LambdaStarResult | None = None,
) -> PipelineResult:
    """Run ball minimizer -> certificate -> geometry -> mountain pass -> maximizer.

    Stage failures are recorded and later stages still run when they remain
    meaningful; the distinct count is reported honestly, with a coincidence
    note when two stages return the same point.
    """
    if opts is None:
        opts = SolverOptions()
    stages: list[StageStatus] = []
    points: list[CriticalPoint] = []

    if lambda_result is None:
        lambda_result = beta_sup(
            p.shape, p.nonlinearity, constants, seed=opts.seed
        )
    # inclusive threshold, tolerant of eigenvalue roundoff in lambda*
    admissible = p.lam <= lambda_result.lam_star * (1.0 + 1e-12)

    # 1) ball minimizer
    u_cp = ball_minimize(p, constants.rho, opts, trace=trace)
    u_cp.kind = "ball_min"
    stages.append(
        StageStatus(
            "ball-min",
            u_cp.converged,
            "" if u_cp.converged else "iteration budget exhausted",
        )
    )
    points.append(u_cp)
    u = u_cp.point.values

    # 2) certificate at the candidate minimizer
    cert = certify(p, u, rho=constants.rho)
    u_cp.certificate = cert
    stages.append(StageStatus("certify", cert.certified, cert.diagnostic))

    # 3) test-sphere radius
    norm_u = float(np.linalg.norm(u))
    if opts.rho1 is not None:
        rho1, rho1_source = float(opts.rho1), "config"
    else:
        rho1, rho1_source = max(constants.rho, 2.0 * norm_u), "auto"
        if rho1 <= norm_u:  # candidate on the sphere itself; push outward
            rho1 = 2.0 * max(norm_u, constants.rho)

    # 4) downhill endpoint along the diagonal ray
    n = p.size
    j_u = u_cp.value
    target = min(0.0, j_u) - max(1.0, abs(j_u))
    direction = opts.seed_sign * np.ones(n)
    x1 = _descent_endpoint(p, direction, target, rho1)
    if x1 is None:
        stages.append(
            StageStatus("endpoint", False, "no downhill endpoint along the probe ray")
        )
    else:
        stages.append(StageStatus("endpoint", True))

    # 5) geometry check
    geometry: MountainGeometryReport | None = None
    if x1 is not None and norm_u < rho1 < float(np.linalg.norm(x1)):
        geometry = mountain_geometry_check(
            p, rho1, u, x1, samples=opts.geometry_samples, seed=opts.seed
        )
        stages.append(
            StageStatus(
                "geometry",
                geometry.positive,
                ""
                if geometry.positive
                else f"geometry violated: margin {geometry.margin:.6g} <= 0",
            )
        )
    else:
        stages.append(StageStatus("geometry", False, "no separating sphere available"))

    # 6) mountain pass
    z_cp: CriticalPoint | None = None
    if x1 is not None and geometry is not None and geometry.positive:
        try:
            inner = SolverOptions(**{**opts.__dict__, "check_geometry": False})
            z_cp = mountain_pass(p, u, x1, inner, trace=trace)
            stages.append(
                StageStatus(
                    "mountain-pass",
                    z_cp.converged,
                    "" if z_cp.converged else "iteration budget exhausted",
                )
            )
            points.append(z_cp)
        except GeometryViolationError as exc:
            stages.append(StageStatus("mountain-pass", False, str(exc)))
    else:
        stages.append(StageStatus("mountain-pass", False, "skipped: geometry violated"))

    # 7) global maximizer
    w_cp: CriticalPoint | None = None
    try:
        w_cp = global_maximize(p, opts, scale=max(1.0, constants.rho), trace=trace)
        stages.append(
            StageStatus(
                "global-max",
                w_cp.converged,
                "" if w_cp.converged else "iteration budget exhausted",
            )
        )
        points.append(w_cp)
    except NotAntiCoerciveError as exc:
        stages.append(StageStatus("global-max", False, str(exc)))

    dist, count, note = _distinct_count(points, opts.distinct_rtol)
    return PipelineResult(
        lam=p.lam,
        constants=constants,
        lambda_result=lambda_result,
        lambda_admissible=admissible,
        points=points,
        certificate=cert,
        geometry=geometry,
        rho1=rho1,
        rho1_source=rho1_source,
        rho1_exceeds_rho=rho1 >= constants.rho,
        rho1_exceeds_norm_u=rho1 > norm_u,
        x1=GridVector(p.shape, x1) if x1 is not None else None,
        j_origin=p.energy_origin(),
        distances=dist,
        distinct_count=count,
        coincidence_note=note,
        stages=stages,
    )
