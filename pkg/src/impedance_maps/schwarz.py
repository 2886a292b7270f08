"""Parallel overlapping Schwarz method with impedance transmission on strips.

Subdomains ``Ω_ℓ = (a_ℓ, b_ℓ) x (0, 1)`` share one global grid.  Transmission
data are k-form impedance traces ``d = (1/i)∂_n u - k u`` on full vertical
lines, PML halo included.  The partition of unity ramps with a cubic
smoothstep strictly inside each overlap, one cell away from both interfaces,
so it is flat on the three nodes a centred trace touches.  That makes the
glued iterate and the error operator ``𝓣`` agree to round-off.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np
import scipy.sparse as sp

from .errors import LayoutInvalid, SegmentOffGrid
from .solver import (
    IMPEDANCE,
    PML,
    Box,
    ComplexField,
    Discretization,
    HelmholtzProblem,
    snap_spacing,
)

log = logging.getLogger(__name__)

OUTGOING = "outgoing"
IMPEDANCE_EXTERIOR = "impedance"
REGIMES = (OUTGOING, IMPEDANCE_EXTERIOR)


@dataclass(frozen=True)
class StripDecomposition:
    """Subdomain bounds ``(a_ℓ, b_ℓ)`` of the strip ``(0, L_Ω) x (0, height)``."""

    bounds: tuple[tuple[float, float], ...]
    height: float = 1.0

    def __post_init__(self) -> None:
        b = self.bounds
        if len(b) < 2:
            raise LayoutInvalid("a strip decomposition needs at least two subdomains")
        if abs(b[0][0]) > 1e-14:
            raise LayoutInvalid("the first subdomain must start at x = 0")
        for i, (lo, hi) in enumerate(b):
            if not hi > lo:
                raise LayoutInvalid(f"subdomain {i} has non-positive width")
        for i in range(len(b) - 1):
            if not b[i + 1][0] < b[i][1]:
                raise LayoutInvalid(f"subdomains {i} and {i + 1} do not overlap")
            if not (b[i][0] < b[i + 1][0] and b[i][1] < b[i + 1][1]):
                raise LayoutInvalid("subdomains must be ordered left to right")
        for i in range(len(b) - 2):
            if not b[i][1] <= b[i + 2][0]:
                raise LayoutInvalid(f"subdomains {i} and {i + 2} overlap")

    @property
    def n(self) -> int:
        return len(self.bounds)

    @property
    def length(self) -> float:
        return self.bounds[-1][1]

    def overlaps(self) -> list[float]:
        return [self.bounds[i][1] - self.bounds[i + 1][0] for i in range(self.n - 1)]

    def widths(self) -> list[float]:
        return [hi - lo for lo, hi in self.bounds]


def build_decomposition(
    n: int, delta: float, width: float | None = None, total_length: float | None = None, height: float = 1.0
) -> StripDecomposition:
    """Uniform layout from either the subdomain width or the total length.

    With ``width = L`` every subdomain has width ``L`` and neighbours overlap
    by ``δ``, so ``L_Ω = N L - (N-1) δ``.  With ``total_length`` the strip is
    cut into ``N`` equal cells and interior cuts are widened by ``δ/2`` each way.
    """
    if n < 2:
        raise LayoutInvalid("need N >= 2 subdomains")
    if (width is None) == (total_length is None):
        raise LayoutInvalid("give exactly one of width and total_length")
    if delta <= 0:
        raise LayoutInvalid("overlap must be positive")
    if width is not None:
        step = width - delta
        if step <= 0:
            raise LayoutInvalid("overlap must be smaller than the width")
        bounds = [(i * step, i * step + width) for i in range(n)]
    else:
        cell = total_length / n
        bounds = [
            (max(0.0, i * cell - delta / 2), min(total_length, (i + 1) * cell + delta / 2)) for i in range(n)
        ]
    return StripDecomposition(tuple(bounds), height)


def build_decomposition_explicit(bounds: Sequence[Sequence[float]], height: float = 1.0) -> StripDecomposition:
    return StripDecomposition(tuple((float(a), float(b)) for a, b in bounds), height)


@dataclass(frozen=True)
class ImpedanceDataVector:
    """Per-subdomain k-form traces on ``(Γ_ℓ⁻, Γ_ℓ⁺)``; ``None`` at the strip ends."""

    traces: tuple[tuple[np.ndarray | None, np.ndarray | None], ...]
    weights: np.ndarray  # quadrature weights of one vertical line

    def flat(self) -> np.ndarray:
        return np.concatenate([t for pair in self.traces for t in pair if t is not None])

    def with_flat(self, v: np.ndarray) -> "ImpedanceDataVector":
        out, pos, n = [], 0, len(self.weights)
        for lo, hi in self.traces:
            pair = []
            for t in (lo, hi):
                if t is None:
                    pair.append(None)
                else:
                    pair.append(np.asarray(v[pos:pos + n]))
                    pos += n
            out.append(tuple(pair))
        return replace(self, traces=tuple(out))

    def __sub__(self, other: "ImpedanceDataVector") -> "ImpedanceDataVector":
        return self.with_flat(self.flat() - other.flat())

    def scale(self, a: complex) -> "ImpedanceDataVector":
        return self.with_flat(a * self.flat())


def error_norm(data: ImpedanceDataVector) -> float:
    """``√(Σ_ℓ ‖(1/i)∂_n v - k v‖²)`` over the stored edges, trapezoid weighted."""
    total = 0.0
    for pair in data.traces:
        for t in pair:
            if t is not None:
                total += float(np.sum(data.weights * np.abs(t) ** 2))
    return math.sqrt(total)


@dataclass(frozen=True)
class SchwarzState:
    """Immutable snapshot of one Schwarz iterate."""

    n: int
    local: tuple[ComplexField | None, ...]
    glued: np.ndarray  # on the global grid
    regime: str


def product_impedance_trace(
    chi: np.ndarray, v: np.ndarray, column: int, hx: float, normal: int, k: float
) -> np.ndarray:
    """``χ((1/i)∂_n - k)v + (1/i)(∂_n χ) v`` on one column, centred differences.

    Arrays are ``[row, column]``.  This is the product rule used to move data
    of ``χ v`` onto a neighbouring interface; it vanishes to the first term
    where ``χ`` is flat.
    """
    if not 0 < column < v.shape[1] - 1:
        raise SegmentOffGrid("centred difference needs both neighbours")
    dv = (v[:, column + 1] - v[:, column - 1]) / (2 * hx)
    dchi = (chi[:, column + 1] - chi[:, column - 1]) / (2 * hx)
    c = chi[:, column]
    return c * (normal * dv / 1j - k * v[:, column]) + normal * dchi * v[:, column] / 1j


def smoothstep(t: np.ndarray) -> np.ndarray:
    t = np.clip(t, 0.0, 1.0)
    return t * t * (3.0 - 2.0 * t)


class SchwarzSolver:
    """Subdomain problems, partition of unity and the error operator of one layout.

    Parameters
    ----------
    decomp
        Strip layout.
    k
        Wavenumber.
    disc
        Discretization; ``hx``/``hy`` are snapped globally here.
    regime
        ``"outgoing"`` (PML on top, bottom and both ends) or ``"impedance"``.
    one_d
        Collapse the strip to one row (tangential terms dropped).
    """

    def __init__(
        self,
        decomp: StripDecomposition,
        k: float,
        disc: Discretization,
        regime: str = OUTGOING,
        one_d: bool = False,
        jobs: int = 1,
    ) -> None:
        if regime not in REGIMES:
            raise LayoutInvalid(f"regime must be one of {REGIMES}")
        self.decomp = decomp
        self.k = float(k)
        self.regime = regime
        self.one_d = one_d
        self.jobs = jobs
        nominal = disc.nominal_spacing(self.k)
        coords = sorted({c for ab in decomp.bounds for c in ab if c > 0})
        hx = disc.hx if disc.hx is not None else snap_spacing([min(coords)] + coords, nominal)
        hy = disc.hy if disc.hy is not None else (nominal if one_d else snap_spacing([decomp.height], nominal))
        self.disc = replace(disc, hx=hx, hy=hy)
        for ov in decomp.overlaps():
            if ov < 3 * hx - 1e-12:
                raise LayoutInvalid(f"overlap {ov:g} is narrower than three grid cells ({3 * hx:g})")

        ext = PML if regime == OUTGOING else IMPEDANCE
        self.problems: list[HelmholtzProblem] = []
        for i, (a, b) in enumerate(decomp.bounds):
            kinds = {
                "left": IMPEDANCE if i > 0 else ext,
                "right": IMPEDANCE if i < decomp.n - 1 else ext,
                "bottom": ext,
                "top": ext,
            }
            self.problems.append(HelmholtzProblem(Box(a, b, 0.0, decomp.height), self.k, self.disc, kinds, one_d=one_d))
        self.global_problem = HelmholtzProblem(
            Box(0.0, decomp.length, 0.0, decomp.height), self.k, self.disc,
            {"left": ext, "right": ext, "bottom": ext, "top": ext}, one_d=one_d,
        )
        self.grid = self.global_problem.grid
        self.k_imp = self.global_problem.k_imp
        self.offsets = [self.grid.column(p.box.x0) - p.grid.i0 for p in self.problems]
        self.chi = self._partition()
        self.line_weights = self.grid.line_weights(include_halo=True)
        self._trace_ops = self._build_trace_ops()

    # ------------------------------------------------------------------ partition of unity
    def _partition(self) -> list[np.ndarray]:
        """χ_ℓ on the global grid columns (constant along each column)."""
        x = self.grid.x
        hx = self.grid.hx
        n = self.decomp.n
        chis = []
        for i, (a, b) in enumerate(self.decomp.bounds):
            c = np.where((x >= a - 1e-12) & (x <= b + 1e-12), 1.0, 0.0)
            if i == 0:
                c[x < a] = 1.0
            if i == n - 1:
                c[x > b] = 1.0
            if i > 0:  # ramp up across the overlap with the left neighbour
                lo, hi = a + hx, self.decomp.bounds[i - 1][1] - hx
                c = np.where((x >= a - 1e-12) & (x <= hi + 1e-12), smoothstep((x - lo) / (hi - lo)), c)
            if i < n - 1:  # ramp down across the overlap with the right neighbour
                lo, hi = self.decomp.bounds[i + 1][0] + hx, b - hx
                c = np.where((x >= lo - hx - 1e-12) & (x <= b + 1e-12), c * (1.0 - smoothstep((x - lo) / (hi - lo))), c)
            chis.append(c)
        return chis

    def chi_on(self, ell: int) -> np.ndarray:
        """χ_ℓ restricted to subdomain ``ℓ`` and broadcast to its grid."""
        p = self.problems[ell]
        cols = np.arange(p.grid.shape[1]) + self.offsets[ell]
        return np.broadcast_to(self.chi[ell][cols], p.grid.shape)

    # ------------------------------------------------------------------ traces
    def _line(self, ell: int, side: int) -> float | None:
        """x-coordinate of Γ_ℓ⁻ (side=-1) or Γ_ℓ⁺ (side=+1); ``None`` at the strip ends."""
        if side < 0:
            return None if ell == 0 else self.decomp.bounds[ell][0]
        return None if ell == self.decomp.n - 1 else self.decomp.bounds[ell][1]

    def _build_trace_ops(self) -> dict:
        """Sparse maps from a subdomain's field to k-form data of ``χ_ℓ v`` on neighbour edges."""
        ops = {}
        for ell, p in enumerate(self.problems):
            chi = sp.diags(np.ascontiguousarray(self.chi_on(ell)).ravel())
            for nb, side in ((ell - 1, 1), (ell + 1, -1)):
                if not 0 <= nb < self.decomp.n:
                    continue
                x = self._line(nb, side)
                op = self.k_imp * p.trace_operator(x, side, -1, include_halo=True)
                ops[(nb, side, ell)] = (op @ chi).tocsr()
        return ops

    def data_from_global(self, u: np.ndarray) -> ImpedanceDataVector:
        """k-form impedance data of a global field on every subdomain interface."""
        u = np.asarray(u).reshape(self.grid.shape)
        traces = []
        for ell in range(self.decomp.n):
            pair = []
            for side in (-1, 1):
                x = self._line(ell, side)
                if x is None:
                    pair.append(None)
                    continue
                col = self.grid.column(x)
                du = (u[:, col + 1] - u[:, col - 1]) / (2 * self.grid.hx)
                pair.append(side * du / 1j - self.k_imp * u[:, col])
            traces.append(tuple(pair))
        return ImpedanceDataVector(tuple(traces), self.line_weights)

    def zero_data(self) -> ImpedanceDataVector:
        return self.data_from_global(np.zeros(self.grid.shape, dtype=complex))

    def random_data(self, rng: np.random.Generator) -> ImpedanceDataVector:
        z = self.zero_data()
        n = len(z.flat())
        return z.with_flat(rng.standard_normal(n) + 1j * rng.standard_normal(n))

    # ------------------------------------------------------------------ local solves
    def _local_rhs(self, ell: int, data: tuple, f: np.ndarray | None, g: Mapping[str, np.ndarray] | None) -> np.ndarray:
        p = self.problems[ell]
        edge_data = {}
        for side, edge in ((-1, "left"), (1, "right")):
            d = data[0 if side < 0 else 1]
            if d is not None:
                edge_data[edge] = -np.asarray(d) / self.k_imp  # semiclassical g = -d/k
        if g and self.regime == IMPEDANCE_EXTERIOR:
            cols = slice(self.offsets[ell], self.offsets[ell] + p.grid.shape[1])
            if ell == 0 and "left" in g:
                edge_data["left"] = g["left"]
            if ell == self.decomp.n - 1 and "right" in g:
                edge_data["right"] = g["right"]
            for edge in ("bottom", "top"):
                if edge in g and not self.one_d:
                    edge_data[edge] = np.asarray(g[edge])[cols]
        fl = None
        if f is not None:
            cols = slice(self.offsets[ell], self.offsets[ell] + p.grid.shape[1])
            fl = np.asarray(f).reshape(self.grid.shape)[:, cols]
        return p.rhs(edge_data, fl)

    def _map(self, fn, items):
        if self.jobs > 1:
            with ThreadPoolExecutor(max_workers=self.jobs) as pool:
                return list(pool.map(fn, items))
        return [fn(i) for i in items]

    def solve_local(self, data: ImpedanceDataVector, f=None, g=None) -> list[ComplexField]:
        def one(ell: int) -> ComplexField:
            p = self.problems[ell]
            return p.field(p.solve_vector(self._local_rhs(ell, data.traces[ell], f, g)))

        return self._map(one, range(self.decomp.n))

    def glue(self, fields: Sequence[ComplexField]) -> np.ndarray:
        """``Σ_ℓ χ_ℓ u_ℓ`` on the global grid."""
        u = np.zeros(self.grid.shape, dtype=complex)
        for ell, fld in enumerate(fields):
            cols = slice(self.offsets[ell], self.offsets[ell] + fld.values.shape[1])
            u[:, cols] += self.chi_on(ell) * fld.values
        return u

    # ------------------------------------------------------------------ iteration
    def initial_state(self, u0: np.ndarray | None = None) -> SchwarzState:
        u0 = np.zeros(self.grid.shape, dtype=complex) if u0 is None else np.asarray(u0, dtype=complex).reshape(self.grid.shape)
        return SchwarzState(0, (None,) * self.decomp.n, u0, self.regime)

    def iterate(self, state: SchwarzState, f=None, g=None) -> SchwarzState:
        """One parallel Schwarz step: local solves from the glued iterate, then glue."""
        data = self.data_from_global(state.glued)
        fields = self.solve_local(data, f, g)
        return SchwarzState(state.n + 1, tuple(fields), self.glue(fields), state.regime)

    def exact_solution(self, f=None, g=None) -> np.ndarray:
        p = self.global_problem
        edge_data = dict(g) if (g and self.regime == IMPEDANCE_EXTERIOR) else {}
        if self.one_d:
            edge_data.pop("bottom", None)
            edge_data.pop("top", None)
        return p.solve_vector(p.rhs(edge_data, f)).reshape(self.grid.shape)

    def apply_T(self, data: ImpedanceDataVector) -> ImpedanceDataVector:
        """Error-propagation operator: data of ``e^n`` to data of ``e^{n+1}``."""
        fields = self.solve_local(data)
        out = [[None, None] for _ in range(self.decomp.n)]
        for ell in range(self.decomp.n):
            for side, slot in ((-1, 0), (1, 1)):
                if self._line(ell, side) is None:
                    continue
                src = ell - 1 if side < 0 else ell + 1  # only the neighbour owning this edge contributes
                op = self._trace_ops[(ell, side, src)]
                out[ell][slot] = op @ fields[src].values.ravel()
        return ImpedanceDataVector(tuple(tuple(p) for p in out), self.line_weights)

    def t_matrix(self) -> np.ndarray:
        """Dense matrix of ``𝓣`` on the flattened data vector, batch-solved per subdomain."""
        z = self.zero_data()
        layout = []  # (ell, slot, start)
        pos = 0
        n_line = len(self.line_weights)
        for ell, pair in enumerate(z.traces):
            for slot, t in enumerate(pair):
                if t is not None:
                    layout.append((ell, slot, pos))
                    pos += n_line
        T = np.zeros((pos, pos), dtype=complex)
        start_of = {(ell, slot): s for ell, slot, s in layout}
        for ell, p in enumerate(self.problems):
            cols = []
            B = []
            for slot, edge in ((0, "left"), (1, "right")):
                if (ell, slot) not in start_of:
                    continue
                nodes = p.edge_nodes(edge)
                coeff = p.edge_coefficients(edge) * (-1.0 / self.k_imp)
                for j in range(n_line):
                    b = np.zeros(p.grid.size, dtype=complex)
                    b[nodes[j]] = coeff[j]
                    B.append(b)
                    cols.append(start_of[(ell, slot)] + j)
            if not cols:
                continue
            V = p.solve_many(np.stack(B, axis=1), jobs=self.jobs)
            for (nb, side, src), op in self._trace_ops.items():
                if src != ell:
                    continue
                r0 = start_of[(nb, 0 if side < 0 else 1)]
                T[r0:r0 + n_line, cols] = op @ V
        return T

    # ------------------------------------------------------------------ norms
    def weighted(self, A: np.ndarray) -> np.ndarray:
        w = np.tile(self.line_weights, A.shape[0] // len(self.line_weights))
        return np.sqrt(w)[:, None] * A / np.sqrt(w)[None, :]

    def power_norm_estimate(
        self, M: int, trials: int = 4, steps: int = 20, seed: int = 0, T: np.ndarray | None = None
    ) -> tuple[float, ImpedanceDataVector]:
        """Randomized lower estimate of ``‖𝓣^M‖`` with power refinement.

        Each trial starts from complex Gaussian data and runs ``steps`` power
        iterations on ``(𝓣^M)^H 𝓣^M`` in the weighted inner product.
        """
        z = self.zero_data()
        if M == 0:
            return 1.0, z
        T = self.t_matrix() if T is None else T
        B = np.linalg.matrix_power(self.weighted(T), M)
        rng = np.random.default_rng(seed)
        w = np.tile(self.line_weights, T.shape[0] // len(self.line_weights))
        best, best_v = -1.0, None
        for _ in range(trials):
            v = rng.standard_normal(B.shape[1]) + 1j * rng.standard_normal(B.shape[1])
            v /= np.linalg.norm(v)
            for _ in range(steps):
                y = B.conj().T @ (B @ v)
                nrm = np.linalg.norm(y)
                if nrm == 0:
                    break
                v = y / nrm
            est = float(np.linalg.norm(B @ v))
            if est > best:
                best, best_v = est, v
        return best, z.with_flat(best_v / np.sqrt(w))

    def exact_power_norm(self, M: int, T: np.ndarray | None = None) -> float:
        if M == 0:
            return 1.0
        T = self.t_matrix() if T is None else T
        return float(np.linalg.norm(np.linalg.matrix_power(self.weighted(T), M), 2))


def convergence_history(
    solver: SchwarzSolver, iterations: int, f=None, g=None, u0: np.ndarray | None = None
) -> list[dict]:
    """Error norms of the Schwarz iterates against the global discrete solution.

    Row ``n`` holds the boundary-energy norm of the impedance data of
    ``u^n - u`` on every subdomain interface, the global L² error and the
    per-subdomain contributions.
    """
    exact = solver.exact_solution(f, g)
    d_exact = solver.data_from_global(exact)
    state = solver.initial_state(u0)
    hx, hy = solver.grid.hx, (solver.grid.hy if not solver.one_d else solver.decomp.height)
    rows = []
    for n in range(iterations + 1):
        err = solver.data_from_global(state.glued) - d_exact
        per = [
            math.sqrt(sum(float(np.sum(err.weights * np.abs(t) ** 2)) for t in pair if t is not None))
            for pair in err.traces
        ]
        rows.append({
            "n": n,
            "energy": error_norm(err),
            "l2": float(np.sqrt(hx * hy * np.sum(np.abs(state.glued - exact) ** 2))),
            "per_subdomain": per,
        })
        if n < iterations:
            state = solver.iterate(state, f, g)
    return rows


def gaussian_source(solver: SchwarzSolver, center: tuple[float, float] | None = None, width: float | None = None) -> np.ndarray:
    """Smooth bump source on the global grid, zero in the absorbing layers."""
    g = solver.grid
    cx, cy = center or (0.5 * solver.decomp.length, 0.5 * solver.decomp.height)
    w = width or 2.0 * math.pi / solver.k
    X, Y = np.meshgrid(g.x, g.y)
    f = np.exp(-((X - cx) ** 2 + (Y - cy) ** 2) / (w * w))
    inside = (X >= 0) & (X <= solver.decomp.length) & (Y >= 0) & (Y <= solver.decomp.height)
    return np.where(inside, f, 0.0).astype(complex)
