"""Shared fixtures and independent oracles for the test suite."""

from __future__ import annotations

import itertools

import numpy as np
import pytest

from ballcrit.grid import GridProblem, Nonlinearity


@pytest.fixture
def quartic():
    """F = x^4, f = 4 x^3: the workhorse catalog pair."""
    return Nonlinearity.power(1.0, 4.0)


@pytest.fixture
def p11(quartic):
    """1x1 problem with lambda = 1/2: J(u) = 2u^2 - u^4/2."""
    return GridProblem.build(1, 1, quartic, 0.5)


@pytest.fixture
def p21(quartic):
    """2x1 problem with lambda = 1/2."""
    return GridProblem.build(2, 1, quartic, 0.5)


@pytest.fixture
def p22(quartic):
    """2x2 problem with lambda = 1/2."""
    return GridProblem.build(2, 2, quartic, 0.5)


def sphere_grid_argmax(func, n: int, radius: float, steps: int = 60) -> tuple[float, np.ndarray]:
    """Dense angular grid search for max of func on the sphere of given radius.

    Brute-force oracle, usable for n <= 3.
    """
    if n == 1:
        cands = [np.array([radius]), np.array([-radius])]
    elif n == 2:
        thetas = np.linspace(0.0, 2.0 * np.pi, steps, endpoint=False)
        cands = [radius * np.array([np.cos(t), np.sin(t)]) for t in thetas]
    elif n == 3:
        thetas = np.linspace(0.0, np.pi, steps)
        phis = np.linspace(0.0, 2.0 * np.pi, 2 * steps, endpoint=False)
        cands = [
            radius
            * np.array(
                [np.sin(t) * np.cos(ph), np.sin(t) * np.sin(ph), np.cos(t)]
            )
            for t, ph in itertools.product(thetas, phis)
        ]
    else:
        raise ValueError("grid search oracle only supports n <= 3")
    best_val, best_x = -np.inf, None
    for x in cands:
        v = func(x)
        if v > best_val:
            best_val, best_x = v, x
    return best_val, best_x


def fd_gradient(func, x: np.ndarray, h: float = 1e-6) -> np.ndarray:
    """Central finite differences of a scalar function."""
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    for k in range(x.size):
        e = np.zeros_like(x)
        e[k] = h
        out[k] = (func(x + e) - func(x - e)) / (2.0 * h)
    return out
