"""Event-driven ray tracer used as an independent check of the oracle.

The ray is stepped segment by segment through the rectangle with explicit
wall tests.  Nothing is unfolded: every reflection flips the horizontal
direction, and reflection counts per wall are kept so that either weight
convention can be applied at each crossing of the interior line.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .solver import CellGeometry


@dataclass(frozen=True)
class Deposit:
    x: float
    xi: float
    mass: float
    leftward: bool
    crossing: int  # 1-based crossing count of the interior line


def _weight(iota: int, s: float, leftward: bool, far_walls: int, near_walls: int, convention: str) -> float:
    refl = ((1.0 - s) / (1.0 + s)) ** 2
    if convention == "measure":
        if leftward:
            return ((-iota + s) / (-1.0 + s)) ** 2 * refl ** far_walls
        return ((iota + s) / (1.0 + s)) ** 2 * refl ** far_walls
    trace = ((-iota + s) / (1.0 + s)) ** 2 if leftward else ((iota + s) / (1.0 + s)) ** 2
    return trace * refl ** (far_walls + near_walls)


def trace_ray(
    x0: float,
    xi: float,
    geom: CellGeometry,
    iota: int,
    mass: float = 1.0,
    max_bounces: int = 64,
    mass_floor: float = 1e-12,
    model: str = "model2",
    convention: str = "measure",
) -> list[Deposit]:
    """All Γ_i deposits of the ray launched rightward from ``(0, x0)``."""
    s = math.sqrt(1.0 - xi * xi)
    refl = ((1.0 - s) / (1.0 + s)) ** 2
    L, d, h = geom.length, geom.d_l, geom.h
    x, y, dx = 0.0, x0, 1.0
    far = near = 0
    crossings = 0
    out: list[Deposit] = []
    while True:
        # next vertical event strictly ahead in the travel direction
        if dx > 0:
            targets = [t for t in (d, L) if t > x]
        else:
            targets = [t for t in (d, 0.0) if t < x]
        xt = max(targets) if dx < 0 else min(targets)
        y_next = y + abs(xt - x) * xi / s
        if not 0.0 < y_next < h:
            return out  # leaves through the top or bottom first
        x, y = xt, y_next
        if x == d:
            crossings += 1
            w = _weight(iota, s, dx < 0, far, near, convention)
            out.append(Deposit(y, xi, mass * w, dx < 0, crossings))
            if model != "model2":
                return out
            continue
        if x == L:
            if model != "model2" or far == max_bounces:
                return out
            far += 1
            if mass * refl ** far < mass_floor:
                return out
            dx = -1.0
        else:
            near += 1
            dx = 1.0
