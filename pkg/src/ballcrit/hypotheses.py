"""Sampling-based verdicts for the growth/convexity hypotheses on a nonlinearity.

Each check returns "pass_sampled" or "fail_witnessed": sampling can refute a
for-all statement with a concrete witness but never prove it, so a pass is
explicitly a sampled verdict.  Witnesses always re-evaluate to a strict
violation.  The checks cover:

    H4   growth of the primitive:  F((i,j),x) >= c1 |x|^mu + c2 for |x| >= d
    H5   convexity of F (midpoint test); same test serves H10
    H7   superlinearity (AR):      0 < theta F(x,v) <= v f(x,v) for v != 0
    H8   growth of f:              |f(x,v)| <= beta1 |v|^(eta-1) + beta2
    H9   vanishing slope at 0:     |f(x,v)| / |v| -> 0 as v -> 0
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dc import stream_rng
from .grid import GridShape, Nonlinearity

__all__ = [
    "HypothesisParams",
    "Witness",
    "CheckVerdict",
    "WitnessCache",
    "check_growth_h4",
    "check_ar_h7",
    "check_growth_h8",
    "check_vanishing_h9",
    "check_convexity_h5_h10",
    "run_all_checks",
    "params_for",
]

PASS = "pass_sampled"
FAIL = "fail_witnessed"


@dataclass(frozen=True)
class HypothesisParams:
    """Constants of the hypotheses plus the sampling layout.

    Samples are drawn from [-x_max, x_max], log-spaced plus uniform; the
    vanishing check walks the ladder v_k = 2^-k, k = 1..ladder_len.
    """

    c1: float = 1.0
    mu: float = 4.0
    c2: float = 0.0
    d: float = 1.0
    theta: float = 4.0
    beta1: float = 4.0
    eta: float = 4.0
    beta2: float = 0.0
    x_max: float = 10.0
    samples: int = 200
    ladder_len: int = 40
    ladder_tail: int = 8
    vanish_tol: float = 1e-4
    seed: int = 0


@dataclass(frozen=True)
class Witness:
    site: tuple[int, int]
    x: float | tuple[float, float]
    lhs: float
    rhs: float


@dataclass
class CheckVerdict:
    hypothesis: str
    verdict: str
    witness: Witness | None = None
    samples: int = 0

    @property
    def passed(self) -> bool:
        return self.verdict == PASS


class WitnessCache:
    """Remembers violations so that larger sample counts cannot flip a fail.

    Keyed by (hypothesis id, nonlinearity identity, constants); consulted
    before sampling and updated on every fresh witness.
    """

    def __init__(self) -> None:
        self._store: dict[tuple, list[Witness]] = {}

    @staticmethod
    def _key(hyp: str, nl: Nonlinearity, consts: tuple) -> tuple:
        ident = (nl.family, nl.params) if nl.params is not None else (nl.family, id(nl))
        return (hyp, ident, consts)

    def lookup(self, hyp: str, nl: Nonlinearity, consts: tuple) -> list[Witness]:
        return list(self._store.get(self._key(hyp, nl, consts), ()))

    def remember(self, hyp: str, nl: Nonlinearity, consts: tuple, w: Witness) -> None:
        self._store.setdefault(self._key(hyp, nl, consts), []).append(w)


def default_sites(nl: Nonlinearity, shape: GridShape | None = None) -> list[tuple[int, int]]:
    if shape is None:
        return [(1, 1)]
    if not nl.site_dependent:
        return [(1, 1)]
    return list(shape.sites())


def _sample_magnitudes(lo: float, hi: float, count: int, rng: np.random.Generator) -> np.ndarray:
    """Positive magnitudes in [lo, hi]: log-spaced ladder plus uniform draws."""
    lo = max(lo, 1e-12)
    half = max(count // 2, 1)
    ladder = np.geomspace(lo, hi, half)
    uniform = rng.uniform(lo, hi, size=count - half)
    return np.concatenate([ladder, uniform])


def _signed_samples(lo: float, hi: float, count: int, rng: np.random.Generator) -> np.ndarray:
    mags = _sample_magnitudes(lo, hi, count, rng)
    signs = np.where(np.arange(mags.size) % 2 == 0, 1.0, -1.0)
    return signs * mags


def check_growth_h4(
    nl: Nonlinearity,
    params: HypothesisParams,
    sites: list[tuple[int, int]] | None = None,
    cache: WitnessCache | None = None,
) -> CheckVerdict:
    """F((i,j),x) >= c1 |x|^mu + c2 for all sampled |x| in [d, x_max]."""
    if not params.mu > 2.0:
        raise ValueError(f"h4 growth exponent mu must exceed 2, got {params.mu}")
    if not params.c1 > 0.0:
        raise ValueError(f"h4 constant c1 must be positive, got {params.c1}")
    if not params.d > 0.0:
        raise ValueError(f"h4 threshold d must be positive, got {params.d}")
    consts = (params.c1, params.mu, params.c2, params.d)
    sites = sites or default_sites(nl)
    if cache is not None:
        for w in cache.lookup("H4", nl, consts):
            lhs = float(nl.F(w.site[0], w.site[1], w.x))
            rhs = params.c1 * abs(w.x) ** params.mu + params.c2
            if lhs < rhs:
                return CheckVerdict("H4", FAIL, Witness(w.site, w.x, lhs, rhs), 0)
    rng = stream_rng(params.seed, "h4")
    xs = _signed_samples(params.d, max(params.x_max, params.d * 2.0), params.samples, rng)
    checked = 0
    for site in sites:
        lhs = np.asarray(nl.F(site[0], site[1], xs), dtype=float)
        rhs = params.c1 * np.abs(xs) ** params.mu + params.c2
        checked += xs.size
        bad = np.nonzero(lhs < rhs)[0]
        if bad.size:
            k = int(bad[0])
            w = Witness(site, float(xs[k]), float(lhs[k]), float(rhs[k]))
            if cache is not None:
                cache.remember("H4", nl, consts, w)
            return CheckVerdict("H4", FAIL, w, checked)
    return CheckVerdict("H4", PASS, None, checked)


def check_ar_h7(
    nl: Nonlinearity,
    theta: float,
    params: HypothesisParams = HypothesisParams(),
    sites: list[tuple[int, int]] | None = None,
    cache: WitnessCache | None = None,
) -> CheckVerdict:
    """0 < theta F(x,v) <= v f(x,v) at sampled v != 0 (superlinearity)."""
    if not theta > 2.0:
        raise ValueError(f"superlinearity constant theta must exceed 2, got {theta}")
    consts = (theta,)
    sites = sites or default_sites(nl)

    def violation(site, v):
        lhs = theta * float(nl.F(site[0], site[1], v))
        rhs = v * float(nl.f(site[0], site[1], v))
        # strict slack guards against roundoff on the equality case
        eps = 1e-12 * max(1.0, abs(lhs), abs(rhs))
        if lhs <= 0.0 or lhs > rhs + eps:
            return Witness(site, float(v), lhs, rhs)
        return None

    if cache is not None:
        for w in cache.lookup("H7", nl, consts):
            hit = violation(w.site, w.x)
            if hit is not None:
                return CheckVerdict("H7", FAIL, hit, 0)
    rng = stream_rng(params.seed, "h7")
    vs = _signed_samples(1e-6, params.x_max, params.samples, rng)
    checked = 0
    for site in sites:
        for v in vs:
            checked += 1
            hit = violation(site, float(v))
            if hit is not None:
                if cache is not None:
                    cache.remember("H7", nl, consts, hit)
                return CheckVerdict("H7", FAIL, hit, checked)
    return CheckVerdict("H7", PASS, None, checked)


def check_growth_h8(
    nl: Nonlinearity,
    beta1: float,
    eta: float,
    beta2: float,
    params: HypothesisParams = HypothesisParams(),
    sites: list[tuple[int, int]] | None = None,
    cache: WitnessCache | None = None,
) -> CheckVerdict:
    """|f(x,v)| <= beta1 |v|^(eta-1) + beta2 at sampled v."""
    if not eta > 2.0:
        raise ValueError(f"growth exponent eta must exceed 2, got {eta}")
    consts = (beta1, eta, beta2)
    sites = sites or default_sites(nl)
    if cache is not None:
        for w in cache.lookup("H8", nl, consts):
            lhs = abs(float(nl.f(w.site[0], w.site[1], w.x)))
            rhs = beta1 * abs(w.x) ** (eta - 1.0) + beta2
            if lhs > rhs:
                return CheckVerdict("H8", FAIL, Witness(w.site, w.x, lhs, rhs), 0)
    rng = stream_rng(params.seed, "h8")
    vs = _signed_samples(1e-9, params.x_max, params.samples, rng)
    checked = 0
    for site in sites:
        lhs = np.abs(np.asarray(nl.f(site[0], site[1], vs), dtype=float))
        rhs = beta1 * np.abs(vs) ** (eta - 1.0) + beta2
        eps = 1e-12 * np.maximum(1.0, rhs)
        checked += vs.size
        bad = np.nonzero(lhs > rhs + eps)[0]
        if bad.size:
            k = int(bad[0])
            w = Witness(site, float(vs[k]), float(lhs[k]), float(rhs[k]))
            if cache is not None:
                cache.remember("H8", nl, consts, w)
            return CheckVerdict("H8", FAIL, w, checked)
    return CheckVerdict("H8", PASS, None, checked)


def check_vanishing_h9(
    nl: Nonlinearity,
    params: HypothesisParams = HypothesisParams(),
    sites: list[tuple[int, int]] | None = None,
    cache: WitnessCache | None = None,
) -> CheckVerdict:
    """|f(x,v)|/|v| -> 0 along the ladder v_k = 2^-k.

    Pass requires the last-rung ratio <= vanish_tol and a non-increasing
    tail over the final ladder_tail rungs, for both signs of v.
    """
    consts = (params.ladder_len, params.ladder_tail, params.vanish_tol)
    sites = sites or default_sites(nl)
    if cache is not None:
        for w in cache.lookup("H9", nl, consts):
            ratio = abs(float(nl.f(w.site[0], w.site[1], w.x))) / abs(w.x)
            if ratio > params.vanish_tol:
                return CheckVerdict("H9", FAIL, Witness(w.site, w.x, ratio, params.vanish_tol), 0)
    ladder = 2.0 ** -np.arange(1, params.ladder_len + 1)
    checked = 0
    for site in sites:
        for sign in (1.0, -1.0):
            vs = sign * ladder
            ratios = np.abs(np.asarray(nl.f(site[0], site[1], vs), dtype=float)) / ladder
            checked += vs.size
            last = float(ratios[-1])
            if last > params.vanish_tol:
                w = Witness(site, float(vs[-1]), last, params.vanish_tol)
                if cache is not None:
                    cache.remember("H9", nl, consts, w)
                return CheckVerdict("H9", FAIL, w, checked)
            tail = ratios[-params.ladder_tail :]
            inc = np.nonzero(np.diff(tail) > 1e-12 * np.maximum(1.0, tail[:-1]))[0]
            if inc.size:
                k = int(inc[0])
                w = Witness(
                    site,
                    float(vs[-params.ladder_tail + k + 1]),
                    float(tail[k + 1]),
                    float(tail[k]),
                )
                if cache is not None:
                    cache.remember("H9", nl, consts, w)
                return CheckVerdict("H9", FAIL, w, checked)
    return CheckVerdict("H9", PASS, None, checked)


def check_convexity_h5_h10(
    nl: Nonlinearity,
    params: HypothesisParams = HypothesisParams(),
    sites: list[tuple[int, int]] | None = None,
    cache: WitnessCache | None = None,
) -> CheckVerdict:
    """Midpoint convexity of F per site: F((x+y)/2) <= (F(x)+F(y))/2 + 1e-12.

    Pairs include symmetric brackets (-t, t) down to tiny t, which catch
    concavity dips at the origin, plus random pairs.
    """
    consts = ()
    sites = sites or default_sites(nl)

    def violation(site, x, y):
        mid = float(nl.F(site[0], site[1], 0.5 * (x + y)))
        avg = 0.5 * (float(nl.F(site[0], site[1], x)) + float(nl.F(site[0], site[1], y)))
        if mid > avg + 1e-12:
            return Witness(site, (float(x), float(y)), mid, avg)
        return None

    if cache is not None:
        for w in cache.lookup("H5", nl, consts):
            x, y = w.x  # type: ignore[misc]
            hit = violation(w.site, x, y)
            if hit is not None:
                return CheckVerdict("H5/H10", FAIL, hit, 0)
    rng = stream_rng(params.seed, "h5")
    pairs: list[tuple[float, float]] = []
    for t in np.geomspace(1e-6, params.x_max, 24):
        pairs.append((-float(t), float(t)))
    for _ in range(params.samples):
        x, y = rng.uniform(-params.x_max, params.x_max, size=2)
        pairs.append((float(x), float(y)))
    checked = 0
    for site in sites:
        for x, y in pairs:
            checked += 1
            hit = violation(site, x, y)
            if hit is not None:
                if cache is not None:
                    cache.remember("H5", nl, consts, hit)
                return CheckVerdict("H5/H10", FAIL, hit, checked)
    return CheckVerdict("H5/H10", PASS, None, checked)


def params_for(nl: Nonlinearity, rho: float = 1.0) -> HypothesisParams | None:
    """Derive natural hypothesis constants for catalog families, if possible.

    For F = c1|x|^mu + c2 the tight choices are theta = mu and
    |f| = c1 mu |v|^(mu-1), i.e. beta1 = c1 mu, eta = mu, beta2 = 0.
    """
    x_max = max(10.0 * rho, 10.0)
    if nl.family == "power" and nl.params is not None:
        c1, mu, c2 = nl.params
        return HypothesisParams(
            c1=c1, mu=mu, c2=c2, d=1.0, theta=mu, beta1=c1 * mu, eta=mu, beta2=0.0, x_max=x_max
        )
    if nl.family == "odd-power" and nl.params is not None:
        a, k = nl.params
        mu = 2.0 * k + 2.0
        return HypothesisParams(
            c1=abs(a) / mu,
            mu=mu,
            c2=0.0,
            d=1.0,
            theta=mu,
            beta1=abs(a),
            eta=mu,
            beta2=0.0,
            x_max=x_max,
        )
    return None


def run_all_checks(
    nl: Nonlinearity,
    params: HypothesisParams,
    sites: list[tuple[int, int]] | None = None,
    cache: WitnessCache | None = None,
) -> list[CheckVerdict]:
    """The full checklist in a fixed order, for reports and the CLI table."""
    out = []
    for verdict in (
        check_growth_h4(nl, params, sites, cache),
        check_convexity_h5_h10(nl, params, sites, cache),
        check_ar_h7(nl, params.theta, params, sites, cache),
        check_growth_h8(nl, params.beta1, params.eta, params.beta2, params, sites, cache),
        check_vanishing_h9(nl, params, sites, cache),
    ):
        out.append(verdict)
    return out
