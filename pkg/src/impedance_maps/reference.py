"""Analytic reference fields and the impedance data that reproduce them.

A free-space solution evaluated at the complex-stretched node coordinates is
the exact solution of the PML-extended problem, so these helpers give exact
boundary data for manufactured-solution and reflection tests.
"""

from __future__ import annotations

import math
from typing import Callable

import numpy as np

from .solver import IMPEDANCE, HelmholtzProblem

FieldFn = Callable[[np.ndarray, np.ndarray], np.ndarray]

_NORMALS = {"left": (-1, 0), "right": (1, 0), "bottom": (0, -1), "top": (0, 1)}


def plane_waves(k: float, waves: list[tuple[complex, float, float]]) -> FieldFn:
    """Sum of ``a exp(i k (x cos θ + y sin θ) + i φ)`` terms, given as ``(a, θ, φ)``."""

    def u(x: np.ndarray, y: np.ndarray) -> np.ndarray:
        out = np.zeros(np.broadcast(x, y).shape, dtype=complex)
        for a, theta, phase in waves:
            out += a * np.exp(1j * (k * (x * math.cos(theta) + y * math.sin(theta)) + phase))
        return out

    return u


def two_wave(k: float, theta: float, wall: float) -> tuple[FieldFn, complex]:
    """Incident wave at angle ``θ`` plus its reflection off an impedance wall at ``x = wall``.

    Returns the field and the reflection coefficient ``R = (cos θ - 1)/(cos θ + 1)``
    referenced to the wall.
    """
    c = math.cos(theta)
    R = (c - 1.0) / (c + 1.0)
    # reflected wave travels at angle π - θ; the phase puts R at the wall
    return plane_waves(k, [(1.0, theta, 0.0), (R, math.pi - theta, 2.0 * k * c * wall)]), R


def discrete_plane_wave(k: float, theta: float, hx: float, hy: float) -> FieldFn:
    """Plane wave solving the 5-point stencil exactly.

    The tangential component ``k sin θ`` is kept; the normal one comes from the
    discrete dispersion relation.
    """
    ky = k * math.sin(theta)
    rest = k * k - (2.0 - 2.0 * math.cos(ky * hy)) / hy ** 2
    kx = math.acos(1.0 - 0.5 * rest * hx * hx) / hx
    kx = math.copysign(kx, math.cos(theta))

    def u(x: np.ndarray, y: np.ndarray) -> np.ndarray:
        return np.exp(1j * (kx * x + ky * y))

    return u


def field_on_grid(problem: HelmholtzProblem, u: FieldFn) -> np.ndarray:
    x, y = problem.stretched_coordinates()
    return u(x, y)


def impedance_data(problem: HelmholtzProblem, u: FieldFn, discrete: bool = False) -> dict[str, np.ndarray]:
    """Data ``u - ∂_n u / (i k)`` on every impedance edge, full lines included.

    With ``discrete`` the normal derivative is the centred difference used by
    the ghost-point rows, so a stencil-exact ``u`` is reproduced to round-off.
    """
    x, y = problem.stretched_coordinates()
    g = problem.grid
    kk = problem.k_imp
    out = {}
    for edge, kind in problem.kinds.items():
        if kind != IMPEDANCE:
            continue
        nx_, ny_ = _NORMALS[edge]
        sel = {"left": (slice(None), 0), "right": (slice(None), -1),
               "bottom": (0, slice(None)), "top": (-1, slice(None))}[edge]
        xs, ys = x[sel], y[sel]
        step = g.hx if nx_ else g.hy
        if discrete:
            dn = (u(xs + nx_ * step, ys + ny_ * step) - u(xs - nx_ * step, ys - ny_ * step)) / (2 * step)
        else:
            eps = 1e-6 * step
            dn = (u(xs + nx_ * eps, ys + ny_ * eps) - u(xs - nx_ * eps, ys - ny_ * eps)) / (2 * eps)
        out[edge] = u(xs, ys) - dn / (1j * kk)
    return out
