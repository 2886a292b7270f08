"""High-frequency ray/measure predictions for the impedance maps.

Atoms ``(x', ξ', mass)`` on an interface are carried along straight rays
through the cell.  Every crossing of the interior line ``x₁ = d_l`` deposits
an atom on Γ_i whose mass is the squared impedance-trace factor times the
accumulated reflection factors.  Rays leaving through the top or bottom are
absorbed.

Two weight conventions are available:

``"measure"`` (default)
    Left-coming deposit ``q``: ``((ι+√r)/(1+√r))² · R^{q-1}``;
    right-coming deposit ``q``: ``((-ι+√r)/(-1+√r))² · R^{q}``,
    with ``R = ((1-√r)/(1+√r))²``.  Only reflections off the far wall are
    charged.
``"plane_wave"``
    Weights from the exact plane-wave algebra: every wall reflection costs
    ``R`` and the trace factor of a leftward wave is ``((-ι+√r)/(1+√r))²``.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import GlancingRay, LambdaOutOfRange, NoWitnessFound
from .solver import CellGeometry

log = logging.getLogger(__name__)


class CoincidentDeposits(UserWarning):
    """Two deposits landed on the same phase-space point and were merged."""

CONVENTIONS = ("measure", "plane_wave")
MAX_BOUNCES = 64
MASS_FLOOR = 1e-12


@dataclass(frozen=True)
class PhasePoint:
    x: float  # tangential position x'
    xi: float  # tangential frequency ξ'

    def __post_init__(self) -> None:
        if not 1.0 - self.xi * self.xi > 0.0:
            raise GlancingRay(f"ξ'={self.xi} is not hyperbolic")

    @property
    def r(self) -> float:
        return 1.0 - self.xi * self.xi

    @property
    def sqrt_r(self) -> float:
        return math.sqrt(self.r)


@dataclass(frozen=True)
class WeightedDirac:
    point: PhasePoint
    mass: float
    interface: str = "l"
    direction: str = "in"
    bounces: int = 0
    corner_critical: bool = False

    def __post_init__(self) -> None:
        if self.mass < 0:
            raise ValueError("mass must be non-negative")


@dataclass(frozen=True)
class MeasureEnsemble:
    """Finite sum of Diracs on one interface; coincident atoms are merged."""

    atoms: tuple[WeightedDirac, ...] = ()
    interface: str = "l"
    flagged: tuple[WeightedDirac, ...] = field(default=(), compare=False)

    @classmethod
    def build(cls, atoms: Iterable[WeightedDirac], interface: str = "l",
              flagged: Sequence[WeightedDirac] = ()) -> "MeasureEnsemble":
        merged: dict[tuple[float, float, str], WeightedDirac] = {}
        for a in atoms:
            key = (a.point.x, a.point.xi, a.direction)
            if key in merged:
                warnings.warn("coincident deposits merged by mass addition", CoincidentDeposits, stacklevel=2)
                log.debug("merged deposits at x'=%g, ξ'=%g", a.point.x, a.point.xi)
                old = merged[key]
                a = WeightedDirac(a.point, old.mass + a.mass, interface, a.direction,
                                  min(old.bounces, a.bounces), old.corner_critical or a.corner_critical)
            merged[key] = a
        return cls(tuple(merged.values()), interface, tuple(flagged))

    @classmethod
    def single(cls, x: float, xi: float, mass: float = 1.0) -> "MeasureEnsemble":
        return cls((WeightedDirac(PhasePoint(x, xi), mass),))

    def total_mass(self) -> float:
        return float(sum(a.mass for a in self.atoms))

    def __len__(self) -> int:
        return len(self.atoms)

    def to_rows(self) -> list[dict]:
        return [
            {"interface": a.interface, "x": a.point.x, "xi": a.point.xi, "mass": a.mass,
             "direction": a.direction, "bounces": a.bounces}
            for a in self.atoms
        ]


# ---------------------------------------------------------------------- elementary maps
def reflection_factor(xi: float) -> float:
    """Mass multiplier ``((1-√r)/(1+√r))²`` of one reflection at a unit-impedance wall."""
    s = math.sqrt(1.0 - xi * xi)
    return ((1.0 - s) / (1.0 + s)) ** 2


def flow_to_line(p: PhasePoint, from_x1: float, to_x1: float, h: float) -> PhasePoint | None:
    """Carry ``p`` along its straight ray between two vertical lines.

    Returns ``None`` when the ray leaves ``(0, h)`` first; landing exactly on
    ``0`` or ``h`` counts as leaving.
    """
    if from_x1 == to_x1:
        raise ValueError("from_x1 and to_x1 must differ")
    y = p.x + abs(to_x1 - from_x1) * p.xi / p.sqrt_r
    if not 0.0 < y < h:
        return None
    return PhasePoint(y, p.xi)


def trace_factor(iota: int, sqrt_r: float, leftward: bool, convention: str = "measure") -> float:
    """Squared impedance-trace factor relative to unit data on Γ_l."""
    if not leftward:
        return ((iota + sqrt_r) / (1.0 + sqrt_r)) ** 2
    if convention == "measure":
        return ((-iota + sqrt_r) / (-1.0 + sqrt_r)) ** 2
    return ((-iota + sqrt_r) / (1.0 + sqrt_r)) ** 2


def deposit_travel(q: int, leftward: bool, geom: CellGeometry) -> float:
    """Horizontal distance from Γ_l to the ``q``-th crossing of Γ_i."""
    L = geom.length
    return 2.0 * q * L - geom.d_l if leftward else 2.0 * (q - 1) * L + geom.d_l


def deposit_weight(iota: int, xi: float, q: int, leftward: bool, convention: str = "measure") -> float:
    """Mass factor of the ``q``-th left- or right-coming deposit.

    For right-coming deposits the singular trace factor of the ``"measure"``
    convention is cancelled against one reflection factor analytically, so
    normal incidence is handled without division by zero.
    """
    s = math.sqrt(1.0 - xi * xi)
    refl = reflection_factor(xi)
    if not leftward:
        n = q - 1 if convention == "measure" else 2 * (q - 1)
        return ((iota + s) / (1.0 + s)) ** 2 * refl ** n
    n = q - 1 if convention == "measure" else 2 * q - 1
    return ((-iota + s) / (1.0 + s)) ** 2 * refl ** n


def _events(max_bounces: int, model: str) -> Iterable[tuple[int, bool]]:
    """Crossings of Γ_i in order of travel: left 1, right 1, left 2, right 2, ..."""
    yield 1, False
    if model != "model2":
        return
    for q in range(1, max_bounces + 1):
        yield q, True
        yield q + 1, False


def propagate_to_interface(
    data: MeasureEnsemble,
    geom: CellGeometry,
    iota: int,
    max_bounces: int = MAX_BOUNCES,
    mass_floor: float = MASS_FLOOR,
    model: str = "model2",
    convention: str = "measure",
) -> MeasureEnsemble:
    """Deposit the Γ_i measure produced by data atoms on Γ_l.

    ``max_bounces`` caps the number of reflections off Γ_r.  For Model 1
    only the direct crossing exists.  Enumeration of an atom stops at the
    first absorption through the top or bottom, or once the accumulated
    reflection mass drops below ``mass_floor``.
    """
    if convention not in CONVENTIONS:
        raise ValueError(f"convention must be one of {CONVENTIONS}")
    if model == "model2" and geom.d_r <= 0:
        raise ValueError("Model 2 needs d_r > 0")
    h = geom.h
    deposits: list[WeightedDirac] = []
    flagged: list[WeightedDirac] = []
    for atom in data.atoms:
        p = atom.point
        slope = p.xi / p.sqrt_r
        refl = reflection_factor(p.xi)
        for q, leftward in _events(max_bounces, model):
            travel = deposit_travel(q, leftward, geom)
            y = p.x + travel * slope
            if not 0.0 < y < h:
                if y == 0.0 or y == h or _hits_corner(p.x, slope, geom, travel):
                    flagged.append(WeightedDirac(PhasePoint(min(max(y, 0.0), h), p.xi), atom.mass, "i",
                                                 "out" if leftward else "in", q, True))
                break
            walls = q if leftward else q - 1
            if walls and atom.mass * refl ** walls < mass_floor:
                break
            mass = atom.mass * deposit_weight(iota, p.xi, q, leftward, convention)
            deposits.append(WeightedDirac(PhasePoint(y, p.xi), mass, "i", "out" if leftward else "in", q))
    return MeasureEnsemble.build(deposits, "i", flagged)


def _hits_corner(y0: float, slope: float, geom: CellGeometry, travel: float) -> bool:
    """True when the ray reaches ``0`` or ``h`` exactly on a wall before ``travel``."""
    if slope == 0.0:
        return False
    L = geom.length
    for target in (0.0, geom.h):
        s = (target - y0) / slope
        if 0.0 < s <= travel:
            walls = s / L
            if abs(walls - round(walls)) < 1e-15 * max(1.0, walls):
                return True
    return False


# ---------------------------------------------------------------------- predictions
def model1_norm_prediction(geom: CellGeometry, iota: int) -> float:
    """Limit of ``‖𝓘₁^ι‖``: ``(1 + ι cos θ_max)/(1 + cos θ_max)``."""
    c = math.cos(geom.theta_max())
    return (1.0 + iota * c) / (1.0 + c)


def nilpotence_index(h: float, d_l_plus: float, d_l_minus: float, lam: float) -> float:
    """``n₀(λ) = h / (min(d_l⁺, d_l⁻) λ) · √(1-λ²)``."""
    if not 0.0 < lam < 1.0:
        raise LambdaOutOfRange(f"λ={lam} must lie in (0, 1)")
    return h / (min(d_l_plus, d_l_minus) * lam) * math.sqrt(1.0 - lam * lam)


def _word_geometry(word, sign: int) -> CellGeometry:
    h, d_l, d_r = word.geometries[sign]
    return CellGeometry(h, d_l, d_r, 1.0)


@dataclass(frozen=True)
class Witness:
    point: PhasePoint
    masses: tuple[float, ...]  # deposited mass after each letter
    positions: tuple[float, ...]  # x' on Γ_i after each letter
    paths: tuple[str, ...]  # "direct" or "reflected" per letter


def witness_path(sign: int) -> str:
    """Unit-mass path per letter: direct for ``+``, first reflection for ``-``."""
    return "direct" if sign > 0 else "reflected"


def witness_data(word, m0: int = 1, convention: str = "measure") -> Witness:
    """Largest ``ξ' = 2^{-m}`` whose designated path survives every letter.

    The start is ``x' = h/2``.  Each letter's path ends at a Γ_i position that
    becomes the next letter's Γ_l position.
    """
    if len(word) < 1:
        raise ValueError("word must be non-empty")
    h = word.h
    m = m0
    while True:
        xi = 2.0 ** -m
        if xi < 1e-12:
            raise NoWitnessFound("ξ' underflowed; geometry degenerate")
        y = 0.5 * h
        masses, positions, paths = [], [], []
        ok = True
        for sign in word.signs:
            geom = _word_geometry(word, sign)
            path = witness_path(sign)
            leftward = path == "reflected"
            travel = deposit_travel(1, leftward, geom)
            s_r = math.sqrt(1.0 - xi * xi)
            y = y + travel * xi / s_r
            if not 0.0 < y < h:
                ok = False
                break
            masses.append(deposit_weight(sign, xi, 1, leftward, convention))
            positions.append(y)
            paths.append(path)
        if ok:
            return Witness(PhasePoint(0.5 * h, xi), tuple(masses), tuple(positions), tuple(paths))
        m += 1


def composite_prediction(
    data: MeasureEnsemble,
    word,
    max_bounces: int = MAX_BOUNCES,
    mass_floor: float = MASS_FLOOR,
    convention: str = "measure",
) -> float:
    """Total Γ_i mass after applying the word letter by letter."""
    ens = data
    for sign in word.signs:
        if not ens.atoms:
            return 0.0
        geom = _word_geometry(word, sign)
        out = propagate_to_interface(ens, geom, sign, max_bounces, mass_floor, "model2", convention)
        # deposits on Γ_i become data on the next cell's Γ_l
        ens = MeasureEnsemble.build(
            (WeightedDirac(a.point, a.mass, "l", "in", a.bounces) for a in out.atoms), "l"
        )
    return ens.total_mass()


def witness_path_prediction(word, convention: str = "measure") -> float:
    """Mass carried by the designated witness path alone (product of per-letter masses)."""
    w = witness_data(word, convention=convention)
    return float(np.prod(w.masses))


def coherent_state_ensemble(y0: float, xi0: float, k: float, order: int = 16, mass: float = 1.0) -> MeasureEnsemble:
    """Quadrature atoms for the phase-space density of a Gaussian packet at finite ``k``.

    The Wigner function of the normalized packet is a product of Gaussians of
    variance ``ħ/2`` in ``x'`` and ``ξ'``; Gauss-Hermite nodes sample it.
    Atoms outside the hyperbolic set are dropped.  This is a finite-``k``
    diagnostic; the limit prediction uses the single atom at ``(y0, ξ0)``.
    """
    t, w = np.polynomial.hermite.hermgauss(order)
    root = math.sqrt(1.0 / k)
    atoms = []
    for ti, wi in zip(t, w):
        for tj, wj in zip(t, w):
            xi = xi0 + root * tj
            if abs(xi) >= 1.0:
                continue
            atoms.append(WeightedDirac(PhasePoint(y0 + root * ti, xi), mass * wi * wj / math.pi))
    return MeasureEnsemble(tuple(atoms))
