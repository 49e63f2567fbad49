"""Discrete variational problem on a rectangular lattice of interior nodes.

The unknown lives on the m*n interior nodes of a rectangle with zero
Dirichlet boundary.  Flattening is column-block order,

    u = (u(1,1), ..., u(m,1); u(1,2), ..., u(m,2); ...; u(1,n), ..., u(m,n))^T,

so site (i, j) with 1 <= i <= m, 1 <= j <= n sits at flat index
(j-1)*m + (i-1).  The operator is the 5-point stencil

    (A u)(i,j) = scale * (4 u(i,j) - u(i-1,j) - u(i+1,j) - u(i,j-1) - u(i,j+1))

with out-of-range neighbours read as zero; equivalently the block
tridiagonal matrix with tridiag(-1, 4, -1) blocks on the diagonal and -I
off the diagonal.  The energy is

    J(u) = 1/2 u^T A u - lambda * sum_{i,j} F((i,j), u(i,j))

with gradient A u - lambda f(u), whose zeros solve A u = lambda f(u).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterator, Sequence

import numpy as np

__all__ = [
    "DENSE_CAP",
    "ShapeMismatchError",
    "DenseCapError",
    "DerivativeUnavailableError",
    "GridShape",
    "GridVector",
    "OperatorA",
    "Nonlinearity",
    "GridProblem",
    "assemble_dense",
    "eigen_analytic",
    "make_nonlinearity",
]

# Above this flattened dimension dense assembly is refused; use the
# matrix-free stencil and iterative methods instead.
DENSE_CAP = 4096

FD_STEP = 1e-6


class ShapeMismatchError(ValueError):
    """Vector length or grid shape does not match the operand."""


class DenseCapError(ValueError):
    """Dense assembly requested above the configured cap; use matrix-free."""


class DerivativeUnavailableError(RuntimeError):
    """No closed-form f' and the finite-difference fallback is disabled."""


@dataclass(frozen=True)
class GridShape:
    """Interior grid extent: m columns (first index), n rows (second index)."""

    m: int
    n: int

    def __post_init__(self) -> None:
        if self.m < 1 or self.n < 1:
            raise ValueError(f"grid shape must be at least 1x1, got {self.m}x{self.n}")

    @property
    def size(self) -> int:
        return self.m * self.n

    def flat_index(self, i: int, j: int) -> int:
        if not (1 <= i <= self.m and 1 <= j <= self.n):
            raise IndexError(f"site ({i},{j}) outside {self.m}x{self.n} grid")
        return (j - 1) * self.m + (i - 1)

    def sites(self) -> Iterator[tuple[int, int]]:
        """All sites (i, j) in flattening order."""
        for j in range(1, self.n + 1):
            for i in range(1, self.m + 1):
                yield (i, j)

    def site_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        """1-based index arrays (I, J) aligned with the flattening."""
        ii = np.tile(np.arange(1, self.m + 1), self.n)
        jj = np.repeat(np.arange(1, self.n + 1), self.m)
        return ii, jj


def as_values(shape: GridShape, u: "GridVector | Sequence[float] | np.ndarray") -> np.ndarray:
    """Coerce to a float64 vector of length shape.size, checking the shape."""
    if isinstance(u, GridVector):
        if u.shape != shape:
            raise ShapeMismatchError(f"vector shape {u.shape} != problem shape {shape}")
        return u.values
    arr = np.asarray(u, dtype=float).reshape(-1)
    if arr.size != shape.size:
        raise ShapeMismatchError(f"vector length {arr.size} != {shape.size} for {shape}")
    return arr


@dataclass(frozen=True)
class GridVector:
    """A flattened grid function in the canonical column-block layout."""

    shape: GridShape
    values: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.values, dtype=float).reshape(-1)
        if arr.size != self.shape.size:
            raise ShapeMismatchError(
                f"vector length {arr.size} != {self.shape.size} for {self.shape}"
            )
        object.__setattr__(self, "values", arr)

    def at(self, i: int, j: int) -> float:
        return float(self.values[self.shape.flat_index(i, j)])

    def as_grid(self) -> np.ndarray:
        """(n, m) array with entry [j-1, i-1] = u(i, j)."""
        return self.values.reshape(self.shape.n, self.shape.m)

    def norm(self) -> float:
        return float(np.linalg.norm(self.values))

    @classmethod
    def zeros(cls, shape: GridShape) -> "GridVector":
        return cls(shape, np.zeros(shape.size))

    @classmethod
    def from_grid(cls, shape: GridShape, table: np.ndarray) -> "GridVector":
        arr = np.asarray(table, dtype=float)
        if arr.shape != (shape.n, shape.m):
            raise ShapeMismatchError(f"table shape {arr.shape} != (n={shape.n}, m={shape.m})")
        return cls(shape, arr.reshape(-1))


class OperatorA:
    """The scaled 5-point stencil operator; symmetric positive definite."""

    def __init__(self, shape: GridShape, scale: float = 1.0, dense_cap: int = DENSE_CAP):
        if scale <= 0.0:
            raise ValueError(f"operator scale must be positive, got {scale}")
        self.shape = shape
        self.scale = float(scale)
        self.dense_cap = int(dense_cap)
        self._dense: np.ndarray | None = None

    def __repr__(self) -> str:
        return f"OperatorA(shape={self.shape}, scale={self.scale})"

    def apply(self, u: np.ndarray | GridVector) -> np.ndarray:
        """Matrix-free A u with zero Dirichlet halo."""
        vals = as_values(self.shape, u)
        g = vals.reshape(self.shape.n, self.shape.m)
        out = 4.0 * g
        out[:, 1:] -= g[:, :-1]   # u(i-1, j)
        out[:, :-1] -= g[:, 1:]   # u(i+1, j)
        out[1:, :] -= g[:-1, :]   # u(i, j-1)
        out[:-1, :] -= g[1:, :]   # u(i, j+1)
        return self.scale * out.reshape(-1)

    def quadratic(self, u: np.ndarray | GridVector) -> float:
        vals = as_values(self.shape, u)
        return float(vals @ self.apply(vals))

    def dense(self) -> np.ndarray:
        if self._dense is None:
            self._dense = assemble_dense(self.shape, self.scale, dense_cap=self.dense_cap)
        return self._dense

    def eigenvalues(self) -> np.ndarray:
        return eigen_analytic(self.shape, self.scale)

    def alpha1(self) -> float:
        """Smallest eigenvalue; the coercivity constant of u^T A u >= a1 |u|^2."""
        return float(self.eigenvalues()[0])


def assemble_dense(shape: GridShape, scale: float = 1.0, dense_cap: int = DENSE_CAP) -> np.ndarray:
    """Dense N x N block-tridiagonal matrix: tridiag(-1,4,-1) blocks, -I couplings."""
    n_total = shape.size
    if n_total > dense_cap:
        raise DenseCapError(
            f"dense assembly of {n_total} > cap {dense_cap}: use matrix-free apply"
        )
    m, n = shape.m, shape.n
    a = np.zeros((n_total, n_total))
    block = 4.0 * np.eye(m) - np.eye(m, k=1) - np.eye(m, k=-1)
    for j in range(n):
        sl = slice(j * m, (j + 1) * m)
        a[sl, sl] = block
        if j + 1 < n:
            nxt = slice((j + 1) * m, (j + 2) * m)
            a[sl, nxt] = -np.eye(m)
            a[nxt, sl] = -np.eye(m)
    return scale * a


def eigen_analytic(shape: GridShape, scale: float = 1.0) -> np.ndarray:
    """All m*n eigenvalues scale*(4 - 2cos(i pi/(m+1)) - 2cos(j pi/(n+1))), ascending.

    Repeated values are kept with multiplicity.
    """
    i = np.arange(1, shape.m + 1)
    j = np.arange(1, shape.n + 1)
    ci = 2.0 * np.cos(i * np.pi / (shape.m + 1))
    cj = 2.0 * np.cos(j * np.pi / (shape.n + 1))
    vals = 4.0 - (ci[None, :] + cj[:, None])
    return scale * np.sort(vals.reshape(-1))


# --------------------------------------------------------------------------
# Nonlinearities
# --------------------------------------------------------------------------

SiteFunc = Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class Nonlinearity:
    """Site-wise reaction term f((i,j), x) with primitive F((i,j), x).

    The callables take broadcastable (i, j, x) arrays with 1-based site
    indices; site-independent families ignore i and j.  `odd` marks f odd in
    x; `f_sq_convex` marks x -> f(x)^2 convex as a function of x^2, which
    licenses the sphere-concentration shortcut in the dual-norm maximization.
    """

    family: str
    params: tuple | None
    f_func: SiteFunc
    F_func: SiteFunc
    fprime_func: SiteFunc | None = None
    odd: bool = False
    f_sq_convex: bool = False
    site_dependent: bool = False
    fd_fallback: bool = True

    # -- scalar / broadcast evaluation ------------------------------------

    def f(self, i, j, x):
        return self.f_func(np.asarray(i), np.asarray(j), np.asarray(x, dtype=float))

    def F(self, i, j, x):
        return self.F_func(np.asarray(i), np.asarray(j), np.asarray(x, dtype=float))

    @property
    def has_derivative(self) -> bool:
        return self.fprime_func is not None

    def fprime(self, i, j, x):
        if self.fprime_func is not None:
            return self.fprime_func(np.asarray(i), np.asarray(j), np.asarray(x, dtype=float))
        if not self.fd_fallback:
            raise DerivativeUnavailableError(
                f"nonlinearity {self.family!r} has no derivative and fallback is disabled"
            )
        x = np.asarray(x, dtype=float)
        h = np.maximum(FD_STEP, FD_STEP * np.abs(x))
        return (self.f(i, j, x + h) - self.f(i, j, x - h)) / (2.0 * h)

    # -- whole-grid evaluation ---------------------------------------------

    def f_grid(self, shape: GridShape, u: np.ndarray) -> np.ndarray:
        ii, jj = shape.site_arrays()
        return np.asarray(self.f_func(ii, jj, np.asarray(u, dtype=float)), dtype=float)

    def F_grid(self, shape: GridShape, u: np.ndarray) -> np.ndarray:
        ii, jj = shape.site_arrays()
        return np.asarray(self.F_func(ii, jj, np.asarray(u, dtype=float)), dtype=float)

    def F_sum(self, shape: GridShape, u: np.ndarray) -> float:
        return float(np.sum(self.F_grid(shape, u)))

    def fprime_grid(self, shape: GridShape, u: np.ndarray) -> np.ndarray:
        ii, jj = shape.site_arrays()
        return np.asarray(self.fprime(ii, jj, u), dtype=float)

    # -- built-in families ---------------------------------------------------

    @staticmethod
    def zero() -> "Nonlinearity":
        return Nonlinearity(
            family="zero",
            params=(),
            f_func=lambda i, j, x: np.zeros_like(x),
            F_func=lambda i, j, x: np.zeros_like(x),
            fprime_func=lambda i, j, x: np.zeros_like(x),
            odd=True,
            f_sq_convex=True,
        )

    @staticmethod
    def power(c1: float, mu: float, c2: float = 0.0) -> "Nonlinearity":
        """F = c1 |x|^mu + c2 with f = c1 mu |x|^(mu-2) x; requires mu >= 2."""
        if mu < 2.0:
            raise ValueError(f"power family needs mu >= 2 for a continuous f, got {mu}")
        if c1 <= 0.0:
            raise ValueError(f"power family needs c1 > 0, got {c1}")

        def f(i, j, x):
            return c1 * mu * np.abs(x) ** (mu - 2.0) * x

        def big_f(i, j, x):
            return c1 * np.abs(x) ** mu + c2

        def fp(i, j, x):
            return c1 * mu * (mu - 1.0) * np.abs(x) ** (mu - 2.0)

        return Nonlinearity(
            family="power",
            params=(float(c1), float(mu), float(c2)),
            f_func=f,
            F_func=big_f,
            fprime_func=fp,
            odd=True,
            f_sq_convex=True,
        )

    @staticmethod
    def odd_power(a: float = 1.0, k: int = 1) -> "Nonlinearity":
        """f = a x^(2k+1), F = a x^(2k+2) / (2k+2)."""
        if k < 0:
            raise ValueError(f"odd-power exponent index must be >= 0, got {k}")
        p = 2 * k + 1

        return Nonlinearity(
            family="odd-power",
            params=(float(a), int(k)),
            f_func=lambda i, j, x: a * x**p,
            F_func=lambda i, j, x: a * x ** (p + 1) / (p + 1),
            fprime_func=lambda i, j, x: a * p * x ** (p - 1),
            odd=True,
            f_sq_convex=True,
        )

    @staticmethod
    def linear(a: float = 1.0) -> "Nonlinearity":
        """f = a x, F = a x^2 / 2."""
        return Nonlinearity(
            family="linear",
            params=(float(a),),
            f_func=lambda i, j, x: a * np.asarray(x, dtype=float),
            F_func=lambda i, j, x: 0.5 * a * x**2,
            fprime_func=lambda i, j, x: np.full_like(np.asarray(x, dtype=float), a),
            odd=True,
            f_sq_convex=True,
        )

    @staticmethod
    def polynomial(coeffs: Sequence[float]) -> "Nonlinearity":
        """F(x) = sum_p coeffs[p] x^p; f and f' by formal differentiation."""
        c = np.asarray(coeffs, dtype=float)
        if c.ndim != 1 or c.size == 0:
            raise ValueError("polynomial family needs a nonempty 1-d coefficient list")
        dc = c[1:] * np.arange(1, c.size)
        ddc = dc[1:] * np.arange(1, dc.size) if dc.size > 1 else np.zeros(1)
        # F even in x (only even powers) makes f odd.
        is_odd = bool(np.all(c[1::2] == 0.0))

        def _eval(coef, x):
            out = np.zeros_like(np.asarray(x, dtype=float))
            for ck in coef[::-1]:
                out = out * x + ck
            return out

        return Nonlinearity(
            family="polynomial",
            params=tuple(float(v) for v in c),
            f_func=lambda i, j, x: _eval(dc, x) if dc.size else np.zeros_like(x),
            F_func=lambda i, j, x: _eval(c, x),
            fprime_func=lambda i, j, x: _eval(ddc, x) if dc.size > 1 else np.zeros_like(x),
            odd=is_odd,
            f_sq_convex=False,
        )

    @staticmethod
    def from_callables(
        f: SiteFunc,
        F: SiteFunc,
        fprime: SiteFunc | None = None,
        family: str = "custom",
        odd: bool = False,
        f_sq_convex: bool = False,
        fd_fallback: bool = True,
    ) -> "Nonlinearity":
        """Site-dependent nonlinearity from vectorized (i, j, x) callables."""
        return Nonlinearity(
            family=family,
            params=None,
            f_func=f,
            F_func=F,
            fprime_func=fprime,
            odd=odd,
            f_sq_convex=f_sq_convex,
            site_dependent=True,
            fd_fallback=fd_fallback,
        )

    @staticmethod
    def from_table(table: dict[tuple[int, int], "Nonlinearity"]) -> "Nonlinearity":
        """Per-site family table; every site used must appear in the table."""
        if not table:
            raise ValueError("site table must not be empty")

        def dispatch(attr):
            def call(i, j, x):
                i_arr, j_arr, x_arr = np.broadcast_arrays(
                    np.asarray(i), np.asarray(j), np.asarray(x, dtype=float)
                )
                out = np.empty_like(x_arr, dtype=float)
                for idx in np.ndindex(i_arr.shape):
                    site = (int(i_arr[idx]), int(j_arr[idx]))
                    sub = table.get(site)
                    if sub is None:
                        raise KeyError(f"site {site} missing from nonlinearity table")
                    out[idx] = getattr(sub, attr)(site[0], site[1], x_arr[idx])
                return out if out.shape else float(out)

            return call

        derivable = all(sub.has_derivative for sub in table.values())
        return Nonlinearity(
            family="site-table",
            params=tuple(sorted((site, sub.family, sub.params) for site, sub in table.items())),
            f_func=dispatch("f"),
            F_func=dispatch("F"),
            fprime_func=dispatch("fprime") if derivable else None,
            odd=all(sub.odd for sub in table.values()),
            f_sq_convex=all(sub.f_sq_convex for sub in table.values()),
            site_dependent=True,
        )


def make_nonlinearity(family: str, coefficients: Sequence[float]) -> Nonlinearity:
    """Catalog constructor used by configuration files.

    power:      coefficients (c1, mu[, c2])
    odd-power:  coefficients (a, k)
    polynomial: F coefficients, ascending powers
    linear:     coefficients (a,)
    zero:       no coefficients
    """
    name = family.strip().lower().replace("_", "-")
    coeffs = list(coefficients)
    if name == "power":
        if len(coeffs) == 2:
            coeffs.append(0.0)
        if len(coeffs) != 3:
            raise ValueError("power family takes coefficients (c1, mu[, c2])")
        return Nonlinearity.power(coeffs[0], coeffs[1], coeffs[2])
    if name == "odd-power":
        if len(coeffs) != 2:
            raise ValueError("odd-power family takes coefficients (a, k)")
        return Nonlinearity.odd_power(coeffs[0], int(coeffs[1]))
    if name == "polynomial":
        return Nonlinearity.polynomial(coeffs)
    if name == "linear":
        if len(coeffs) != 1:
            raise ValueError("linear family takes a single coefficient (a,)")
        return Nonlinearity.linear(coeffs[0])
    if name == "zero":
        return Nonlinearity.zero()
    raise ValueError(f"unknown nonlinearity family {family!r}")


# --------------------------------------------------------------------------
# The assembled problem
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class GridProblem:
    """A u = lambda f(u) together with its energy J = 1/2 u^T A u - lambda sum F.

    Immutable after construction; all evaluation methods are pure.
    """

    shape: GridShape
    operator: OperatorA
    nonlinearity: Nonlinearity
    lam: float

    def __post_init__(self) -> None:
        if self.operator.shape != self.shape:
            raise ShapeMismatchError(
                f"operator shape {self.operator.shape} != problem shape {self.shape}"
            )
        if not (self.lam > 0.0) or not math.isfinite(self.lam):
            raise ValueError(f"lambda must be a positive finite real, got {self.lam}")

    @classmethod
    def build(
        cls,
        m: int,
        n: int,
        nonlinearity: Nonlinearity,
        lam: float,
        scale: float = 1.0,
        dense_cap: int = DENSE_CAP,
    ) -> "GridProblem":
        shape = GridShape(m, n)
        return cls(shape, OperatorA(shape, scale, dense_cap), nonlinearity, lam)

    @property
    def size(self) -> int:
        return self.shape.size

    def energy(self, u) -> float:
        vals = as_values(self.shape, u)
        return 0.5 * float(vals @ self.operator.apply(vals)) - self.lam * self.nonlinearity.F_sum(
            self.shape, vals
        )

    def energy_origin(self) -> float:
        """J(0) = -lambda sum F(., 0); nonzero only for offset primitives."""
        return self.energy(np.zeros(self.size))

    def energy_shifted(self, u) -> float:
        """J(u) - J(0); removes constant offsets from the primitive."""
        return self.energy(u) - self.energy_origin()

    def gradient(self, u) -> np.ndarray:
        vals = as_values(self.shape, u)
        return self.operator.apply(vals) - self.lam * self.nonlinearity.f_grid(self.shape, vals)

    def residual(self, u) -> float:
        return float(np.linalg.norm(self.gradient(u)))

    def hessian_apply(self, u, w) -> np.ndarray:
        uvals = as_values(self.shape, u)
        wvals = as_values(self.shape, w)
        diag = self.nonlinearity.fprime_grid(self.shape, uvals)
        return self.operator.apply(wvals) - self.lam * diag * wvals

    def hessian_dense(self, u) -> np.ndarray:
        uvals = as_values(self.shape, u)
        diag = self.nonlinearity.fprime_grid(self.shape, uvals)
        return self.operator.dense() - self.lam * np.diag(diag)

    def alpha1(self) -> float:
        return self.operator.alpha1()
