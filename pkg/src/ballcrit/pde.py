"""Mesh-scaled realization of the continuous Dirichlet problem
-Laplace(u) = lambda f(x, u) on a rectangle, with refinement studies.

A rectangle (0, a) x (0, b) with mesh width h (a/h and b/h integral) yields
the lattice problem with operator scale 1/h^2; node (i, j) sits at
(i h, j h).  Energies comparable across mesh levels use the h^2-weighted
quadrature J_h(u) = h^2 * J(u), which approximates the continuum energy
(1/2) int |grad u|^2 - lambda int F(x, u).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .dc import StructureConstants, discrete_constants
from .grid import GridProblem, GridShape, GridVector, Nonlinearity, OperatorA, eigen_analytic
from .solvers import PipelineResult, SolverOptions, newton_polish, three_point_pipeline

__all__ = [
    "RectDomain",
    "XYNonlinearity",
    "PoincareEstimate",
    "BranchLevel",
    "BranchTrack",
    "RefinementReport",
    "discretize",
    "poincare_estimate",
    "refinement_study",
    "interpolate_bilinear",
    "restrict_nested",
]


@dataclass(frozen=True)
class RectDomain:
    """Rectangle (0, width) x (0, height) meshed with width h."""

    width: float
    height: float
    h: float

    def __post_init__(self) -> None:
        if self.width <= 0.0 or self.height <= 0.0 or self.h <= 0.0:
            raise ValueError("domain extents and mesh width must be positive")
        for name, extent in (("width", self.width), ("height", self.height)):
            ratio = extent / self.h
            if abs(ratio - round(ratio)) > 1e-9 * max(1.0, ratio):
                raise ValueError(f"{name}={extent} is not an integer multiple of h={self.h}")
        if self.cols < 1 or self.rows < 1:
            raise ValueError(f"mesh too coarse: interior grid {self.cols}x{self.rows} is empty")

    @property
    def cols(self) -> int:
        return round(self.width / self.h) - 1

    @property
    def rows(self) -> int:
        return round(self.height / self.h) - 1

    def grid_shape(self) -> GridShape:
        return GridShape(self.cols, self.rows)

    def node_xy(self, i: int, j: int) -> tuple[float, float]:
        return (i * self.h, j * self.h)

    def refine(self) -> "RectDomain":
        return RectDomain(self.width, self.height, self.h / 2.0)


@dataclass(frozen=True)
class XYNonlinearity:
    """Continuous reaction term f(x, y, u) with primitive F(x, y, u).

    Callables must broadcast over numpy arrays in all three arguments.
    """

    f: Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]
    F: Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]
    fprime: Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray] | None = None
    odd: bool = False


def discretize(
    dom: RectDomain,
    nonlinearity: Nonlinearity | XYNonlinearity,
    lam: float,
    dense_cap: int = 4096,
) -> GridProblem:
    """Five-point discretization with operator scale 1/h^2.

    A plain Nonlinearity is applied uniformly at every node; an
    XYNonlinearity is sampled at the node coordinates (i h, j h).
    """
    shape = dom.grid_shape()
    op = OperatorA(shape, scale=1.0 / dom.h**2, dense_cap=dense_cap)
    if isinstance(nonlinearity, XYNonlinearity):
        h = dom.h
        xy = nonlinearity
        nl = Nonlinearity.from_callables(
            f=lambda i, j, x: xy.f(i * h, j * h, x),
            F=lambda i, j, x: xy.F(i * h, j * h, x),
            fprime=(lambda i, j, x: xy.fprime(i * h, j * h, x)) if xy.fprime else None,
            family="xy",
            odd=xy.odd,
        )
    else:
        nl = nonlinearity
    return GridProblem(shape, op, nl, lam)


def weighted_energy(dom: RectDomain, p: GridProblem, u) -> float:
    """h^2-weighted energy, comparable across mesh levels."""
    return dom.h**2 * p.energy(u)


@dataclass
class PoincareEstimate:
    """Smallest Dirichlet eigenvalue of the domain and the embedding constant.

    c = 1/sqrt(lambda_1) extrapolated at second order from the mesh ladder.
    """

    c: float
    lambda1: float
    per_level: list[tuple[float, float]]  # (h, alpha1/h^2)
    extrapolated: bool
    monotone: bool


def poincare_estimate(dom: RectDomain, levels: int = 3) -> PoincareEstimate:
    """Richardson-extrapolated lambda_1 from alpha_1/h^2 across a halving ladder."""
    if levels < 1:
        raise ValueError(f"need at least one ladder level, got {levels}")
    per_level: list[tuple[float, float]] = []
    d = dom
    for _ in range(levels):
        val = float(eigen_analytic(d.grid_shape(), 1.0 / d.h**2)[0])
        per_level.append((d.h, val))
        d = d.refine()
    vals = [v for _, v in per_level]
    monotone = all(vals[i] <= vals[i + 1] + 1e-12 for i in range(len(vals) - 1))
    if levels == 1:
        lam1 = vals[0]
        return PoincareEstimate(1.0 / math.sqrt(lam1), lam1, per_level, False, True)
    # second-order scheme: error ~ C h^2, halving divides it by 4
    lam1 = (4.0 * vals[-1] - vals[-2]) / 3.0
    return PoincareEstimate(1.0 / math.sqrt(lam1), lam1, per_level, True, monotone)


def continuum_constants(dom: RectDomain, rho: float, levels: int = 3) -> StructureConstants:
    """Constants for the gradient-norm setting: alpha = 2, gamma = 1, c = Poincare."""
    est = poincare_estimate(dom, levels)
    return StructureConstants(gamma=1.0, rho=rho, alpha=2.0, c=est.c)


def interpolate_bilinear(coarse: GridShape, values: np.ndarray, fine: GridShape) -> np.ndarray:
    """Bilinear prolongation from an interior grid to its factor-2 refinement.

    The zero Dirichlet boundary supplies the halo values.
    """
    if fine.m != 2 * coarse.m + 1 or fine.n != 2 * coarse.n + 1:
        raise ValueError(
            f"fine grid {fine.m}x{fine.n} is not the factor-2 refinement of {coarse.m}x{coarse.n}"
        )
    padded = np.zeros((coarse.n + 2, coarse.m + 2))
    padded[1:-1, 1:-1] = np.asarray(values, dtype=float).reshape(coarse.n, coarse.m)
    out = np.empty((fine.n, fine.m))
    for jf in range(1, fine.n + 1):
        for i_f in range(1, fine.m + 1):
            x = i_f / 2.0
            y = jf / 2.0
            x0, y0 = int(math.floor(x)), int(math.floor(y))
            wx, wy = x - x0, y - y0
            out[jf - 1, i_f - 1] = (
                (1 - wx) * (1 - wy) * padded[y0, x0]
                + wx * (1 - wy) * padded[y0, x0 + 1]
                + (1 - wx) * wy * padded[y0 + 1, x0]
                + wx * wy * padded[y0 + 1, x0 + 1]
            )
    return out.reshape(-1)


def restrict_nested(fine: GridShape, values: np.ndarray, coarse: GridShape, factor: int) -> np.ndarray:
    """Subsample a fine-grid vector at the nodes of a nested coarser grid."""
    if fine.m != factor * (coarse.m + 1) - 1 or fine.n != factor * (coarse.n + 1) - 1:
        raise ValueError(
            f"grid {fine.m}x{fine.n} does not nest {coarse.m}x{coarse.n} at factor {factor}"
        )
    g = np.asarray(values, dtype=float).reshape(fine.n, fine.m)
    return g[factor - 1 :: factor, factor - 1 :: factor].reshape(-1)


@dataclass
class BranchLevel:
    h: float
    point: GridVector
    energy_weighted: float
    residual: float


@dataclass
class BranchTrack:
    """One solution branch continued across the mesh ladder."""

    kind: str
    levels: list[BranchLevel] = field(default_factory=list)
    diffs: list[float] = field(default_factory=list)      # successive discrete-L2 gaps
    order: float | None = None                            # log2 of the last diff ratio
    lost_at: float | None = None                          # h where continuation failed


@dataclass
class RefinementReport:
    domain: RectDomain
    lam: float
    hs: list[float]
    branches: list[BranchTrack]
    poincare: PoincareEstimate
    pipeline: PipelineResult
    # gradient-norm-setting constants (gamma = 1, c = Poincare), informational
    continuum: StructureConstants | None = None


def refinement_study(
    dom: RectDomain,
    nonlinearity: Nonlinearity | XYNonlinearity,
    lam: float,
    levels: int = 3,
    opts: SolverOptions | None = None,
    rho: float = 1.0,
) -> RefinementReport:
    """Solve at the coarsest mesh, then continue each branch to finer meshes.

    Branches are warm-started by bilinear interpolation and re-solved by
    Newton; a branch whose continuation fails is recorded as lost and the
    study proceeds.  Successive differences are measured in the discrete L2
    norm on the coarsest grid, where all levels nest.
    """
    if opts is None:
        opts = SolverOptions()
    if levels < 1:
        raise ValueError(f"need at least one ladder level, got {levels}")

    domains = [dom]
    for _ in range(levels - 1):
        domains.append(domains[-1].refine())
    problems = [discretize(d, nonlinearity, lam, dense_cap=opts.dense_cap) for d in domains]
    coarse_shape = domains[0].grid_shape()
    h0 = domains[0].h

    constants = discrete_constants(problems[0].operator, rho)
    pipeline = three_point_pipeline(problems[0], constants, opts)

    branches: list[BranchTrack] = []
    for cp in pipeline.points:
        if not cp.converged:
            continue
        track = BranchTrack(kind=cp.kind)
        snapshots: list[np.ndarray] = []
        x = cp.point.values
        for li, (d, p) in enumerate(zip(domains, problems)):
            if li > 0:
                warm = interpolate_bilinear(domains[li - 1].grid_shape(), x, d.grid_shape())
                x, res, ok, _ = newton_polish(
                    p, warm, tol=opts.tol, max_iter=opts.newton_max_iter, dense_cap=opts.dense_cap
                )
                if not ok:
                    track.lost_at = d.h
                    break
            track.levels.append(
                BranchLevel(
                    h=d.h,
                    point=GridVector(d.grid_shape(), x.copy()),
                    energy_weighted=weighted_energy(d, p, x),
                    residual=p.residual(x),
                )
            )
            snapshots.append(
                restrict_nested(d.grid_shape(), x, coarse_shape, round(h0 / d.h))
            )
        for a, b in zip(snapshots, snapshots[1:]):
            track.diffs.append(float(h0 * np.linalg.norm(b - a)))
        if len(track.diffs) >= 2 and track.diffs[-1] > 0.0:
            track.order = math.log2(track.diffs[-2] / track.diffs[-1])
        branches.append(track)

    poincare = poincare_estimate(dom, max(2, levels))
    return RefinementReport(
        domain=dom,
        lam=lam,
        hs=[d.h for d in domains],
        branches=branches,
        poincare=poincare,
        pipeline=pipeline,
        continuum=StructureConstants(gamma=1.0, rho=rho, alpha=2.0, c=poincare.c),
    )
