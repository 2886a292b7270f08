"""Finite-difference Helmholtz solver on rectangles with impedance and PML edges.

The discrete operator is the 5-point stencil for ``-Δu - k²u`` with complex
coordinate stretching in the absorbing layers.  Rows are multiplied by
trapezoid control-volume weights, which makes the assembled matrix complex
symmetric (the discrete form of reciprocity).  Impedance edges use the
ghost-point eliminated condition ``∂_n u = i k (u - g)``, which is the
semiclassical condition ``(-ħD_n + 1)u = g`` written in the outward normal.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import InconsistentGeometry, SegmentOffGrid, SolveFailure

log = logging.getLogger(__name__)

EDGES = ("left", "right", "bottom", "top")
IMPEDANCE = "impedance"
PML = "pml"

# Round-trip amplitude attenuation targeted by the default PML strength.
PML_ROUND_TRIP = 1e-6
_SNAP_TOL = 1e-9


@dataclass(frozen=True)
class CellGeometry:
    """The cell ``(0, d_l + d_r) x (0, h)`` with wavenumber ``k``."""

    h: float
    d_l: float
    d_r: float
    k: float

    def __post_init__(self) -> None:
        if not (self.h > 0 and self.d_l > 0 and self.d_r >= 0 and self.k > 0):
            raise InconsistentGeometry(
                f"need h>0, d_l>0, d_r>=0, k>0; got h={self.h}, d_l={self.d_l}, "
                f"d_r={self.d_r}, k={self.k}"
            )

    @property
    def hbar(self) -> float:
        return 1.0 / self.k

    @property
    def length(self) -> float:
        return self.d_l + self.d_r

    def theta_max(self) -> float:
        return math.atan(self.h / self.d_l)

    def box(self) -> "Box":
        return Box(0.0, self.length, 0.0, self.h)

    def with_k(self, k: float) -> "CellGeometry":
        return CellGeometry(self.h, self.d_l, self.d_r, k)


@dataclass(frozen=True)
class Box:
    """Axis-aligned physical rectangle ``[x0, x1] x [y0, y1]``."""

    x0: float
    x1: float
    y0: float
    y1: float

    def __post_init__(self) -> None:
        if not (self.x1 > self.x0 and self.y1 >= self.y0):
            raise InconsistentGeometry(f"degenerate box {self}")


@dataclass(frozen=True)
class Discretization:
    """Grid and absorbing-layer parameters.

    ``pml_widths`` is either one width (in wavelengths) for every absorbing
    edge or a mapping from edge name to width.  ``pml_strength`` is the peak
    of ``σ(t) = σ₀ (t/w)^order``; ``None`` picks ``σ₀`` for a round-trip
    attenuation of 1e-6 at normal incidence.  ``hx``/``hy`` pin the spacings
    explicitly, which experiments use to share interface grids.
    ``matched_impedance`` replaces ``k`` in the impedance rows and traces by
    the discrete-dispersion value ``k sqrt(1 - (k hx / 2)²)``, which makes the
    1-D impedance condition exactly transparent for discrete plane waves.
    """

    points_per_wavelength: int = 20
    pml_widths: float | Mapping[str, float] = 1.0
    pml_strength: float | None = None
    pml_order: int = 2
    hx: float | None = None
    hy: float | None = None
    matched_impedance: bool = False

    def __post_init__(self) -> None:
        if int(self.points_per_wavelength) != self.points_per_wavelength or self.points_per_wavelength < 6:
            raise InconsistentGeometry("points_per_wavelength must be an integer >= 6")
        if self.pml_order < 0:
            raise InconsistentGeometry("pml_order must be non-negative")
        for edge in EDGES:
            if self.pml_width(edge) <= 0:
                raise InconsistentGeometry(f"PML width on {edge} must be positive")

    def pml_width(self, edge: str) -> float:
        if isinstance(self.pml_widths, Mapping):
            return float(self.pml_widths.get(edge, 1.0))
        return float(self.pml_widths)

    def nominal_spacing(self, k: float) -> float:
        return 2.0 * math.pi / (k * self.points_per_wavelength)

    def peak_absorption(self, width_wavelengths: float) -> float:
        if self.pml_strength is not None:
            return float(self.pml_strength)
        # exp(-2 k ∫σ) = PML_ROUND_TRIP with ∫σ = σ₀ w / (order + 1), k w = 2π W
        return (self.pml_order + 1) * math.log(1.0 / PML_ROUND_TRIP) / (4.0 * math.pi * width_wavelengths)


@dataclass(frozen=True)
class BoundaryTrace:
    """Samples on one vertical segment with trapezoid weights."""

    samples: np.ndarray
    weights: np.ndarray
    segment: str = ""
    y: np.ndarray | None = None

    def __post_init__(self) -> None:
        if len(self.samples) != len(self.weights):
            raise SegmentOffGrid("samples and weights differ in length")
        if np.any(np.asarray(self.weights) < 0):
            raise SegmentOffGrid("negative quadrature weight")

    def norm(self) -> float:
        return float(np.sqrt(np.sum(self.weights * np.abs(self.samples) ** 2)))

    def inner(self, other: "BoundaryTrace") -> complex:
        return complex(np.sum(self.weights * np.conj(self.samples) * other.samples))

    def __len__(self) -> int:
        return len(self.samples)


@dataclass(frozen=True)
class EdgeCondition:
    """Boundary condition on one edge of a rectangle.

    ``kind`` is ``"impedance"`` or ``"pml"``.  Impedance data are the
    semiclassical values ``g`` of ``(-ħD_n + 1)u = g``; ``None`` means the
    homogeneous condition.
    """

    edge: str
    kind: str
    data: np.ndarray | BoundaryTrace | None = None

    def __post_init__(self) -> None:
        if self.edge not in EDGES:
            raise InconsistentGeometry(f"unknown edge {self.edge!r}")
        if self.kind not in (IMPEDANCE, PML):
            raise InconsistentGeometry(f"unknown edge kind {self.kind!r}")
        if self.kind == PML and self.data is not None:
            raise InconsistentGeometry("PML edges carry no data")

    @property
    def values(self) -> np.ndarray | None:
        if self.data is None:
            return None
        if isinstance(self.data, BoundaryTrace):
            return np.asarray(self.data.samples, dtype=complex)
        return np.asarray(self.data, dtype=complex)


def impedance(edge: str, data=None) -> EdgeCondition:
    return EdgeCondition(edge, IMPEDANCE, data)


def pml(edge: str) -> EdgeCondition:
    return EdgeCondition(edge, PML)


def snap_spacing(lengths: Sequence[float], nominal: float) -> float:
    """Largest-ish spacing near ``nominal`` that divides every length.

    The first length drives the search; the others must then be integer
    multiples of the spacing within a relative tolerance.
    """
    lengths = [float(v) for v in lengths if v > 0]
    if not lengths:
        raise InconsistentGeometry("nothing to snap")
    base = lengths[0]
    n0 = max(1, round(base / nominal))
    for step in range(0, n0 + 1):
        for n in sorted({n0 + step, max(1, n0 - step)}, reverse=True):
            h = base / n
            if abs(h - nominal) > 0.5 * nominal:
                continue
            if all(abs(L / h - round(L / h)) <= _SNAP_TOL * max(1.0, L / h) for L in lengths):
                if abs(h - nominal) > 1e-12 * nominal:
                    log.info("grid spacing snapped from %.6g to %.6g", nominal, h)
                return h
    raise InconsistentGeometry(f"no spacing near {nominal:.6g} divides all of {lengths}")


def _count(length: float, h: float) -> int:
    n = round(length / h)
    if abs(length / h - n) > _SNAP_TOL * max(1.0, length / h):
        raise InconsistentGeometry(f"length {length} is not a multiple of spacing {h}")
    return int(n)


@dataclass(frozen=True)
class Grid:
    """Node layout: physical rectangle plus PML halo.

    Node ``(j, i)`` sits at ``(x0 + (i - pml[0]) hx, y0 + (j - pml[2]) hy)``.
    Each PML is closed by a zero-flux wall half a cell beyond its last node.
    A Dirichlet wall would spoil waves running parallel to the layer.
    ``one_d`` collapses the height to a single row whose quadrature weight
    is the box height.
    """

    x0: float
    y0: float
    hx: float
    hy: float
    nx: int
    ny: int
    pml: tuple[int, int, int, int]  # left, right, bottom, top
    height: float
    one_d: bool = False

    @property
    def shape(self) -> tuple[int, int]:
        return (self.ny + 1 + self.pml[2] + self.pml[3], self.nx + 1 + self.pml[0] + self.pml[1])

    @property
    def size(self) -> int:
        return self.shape[0] * self.shape[1]

    @property
    def i0(self) -> int:
        return self.pml[0]

    @property
    def j0(self) -> int:
        return self.pml[2]

    @property
    def x(self) -> np.ndarray:
        return self.x0 + self.hx * (np.arange(self.shape[1]) - self.pml[0])

    @property
    def y(self) -> np.ndarray:
        return self.y0 + self.hy * (np.arange(self.shape[0]) - self.pml[2])

    def column(self, x: float) -> int:
        t = (x - self.x0) / self.hx + self.pml[0]
        i = round(t)
        if abs(t - i) > 1e-7 or not 0 <= i < self.shape[1]:
            raise SegmentOffGrid(f"x={x} is not a grid line")
        return int(i)

    def physical_rows(self) -> slice:
        return slice(self.j0, self.j0 + self.ny + 1)

    def physical_cols(self) -> slice:
        return slice(self.i0, self.i0 + self.nx + 1)

    def line_weights(self, include_halo: bool = False) -> np.ndarray:
        """Trapezoid weights along a vertical line."""
        if self.one_d:
            return np.array([self.height])
        n = self.shape[0] if include_halo else self.ny + 1
        w = np.full(n, self.hy)
        w[0] = w[-1] = 0.5 * self.hy
        return w

    def line_y(self, include_halo: bool = False) -> np.ndarray:
        return self.y if include_halo else self.y[self.physical_rows()]


@dataclass(frozen=True)
class ComplexField:
    """Nodal values ``values[j, i]`` on a :class:`Grid` (PML halo included)."""

    values: np.ndarray
    grid: Grid
    k: float
    k_imp: float

    def physical(self) -> np.ndarray:
        return self.values[self.grid.physical_rows(), self.grid.physical_cols()]

    def physical_coords(self) -> tuple[np.ndarray, np.ndarray]:
        g = self.grid
        return np.meshgrid(g.x[g.physical_cols()], g.y[g.physical_rows()])


def trace_values(
    values: np.ndarray, grid: Grid, column: int, deriv_sign: int, sign: int, k_imp: float,
    include_halo: bool = False,
) -> np.ndarray:
    """``(1/(i k)) s ∂_x u + ι u`` on a column by centered differences."""
    if not 0 < column < grid.shape[1] - 1:
        raise SegmentOffGrid("centered trace needs neighbours on both sides")
    rows = slice(None) if include_halo else grid.physical_rows()
    du = (values[rows, column + 1] - values[rows, column - 1]) / (2.0 * grid.hx)
    return deriv_sign * du / (1j * k_imp) + sign * values[rows, column]


def trace(field: ComplexField, x: float, sign: int, include_halo: bool = False) -> BoundaryTrace:
    """Semiclassical impedance trace ``(ħD_{x₁} + ι)u`` on the line ``x₁ = x``."""
    if sign not in (1, -1):
        raise ValueError("sign must be +1 or -1")
    g = field.grid
    col = g.column(x)
    samples = trace_values(field.values, g, col, 1, sign, field.k_imp, include_halo)
    return BoundaryTrace(samples, g.line_weights(include_halo), f"x={x:g}", g.line_y(include_halo))


class HelmholtzProblem:
    """Assembled and (lazily) factorized discrete Helmholtz operator.

    Parameters
    ----------
    box
        Physical rectangle.
    k
        Wavenumber.
    disc
        Discretization parameters.
    kinds
        Edge name to ``"impedance"`` or ``"pml"``.  Top and bottom are
        ignored when ``one_d`` is set.
    snap_x
        Interior x-coordinates that must be grid lines.
    one_d
        Collapse the height to one row and drop tangential terms.
    """

    def __init__(
        self,
        box: Box,
        k: float,
        disc: Discretization,
        kinds: Mapping[str, str],
        snap_x: Iterable[float] = (),
        one_d: bool = False,
    ) -> None:
        self.box = box
        self.k = float(k)
        self.disc = disc
        self.one_d = one_d
        self.kinds = {e: kinds[e] for e in EDGES if not (one_d and e in ("bottom", "top"))}
        for e, kind in self.kinds.items():
            if kind not in (IMPEDANCE, PML):
                raise InconsistentGeometry(f"unknown edge kind {kind!r} on {e}")

        nominal = disc.nominal_spacing(self.k)
        lx = box.x1 - box.x0
        ly = box.y1 - box.y0
        x_lengths = [p - box.x0 for p in snap_x if box.x0 < p < box.x1] + [lx]
        hx = disc.hx if disc.hx is not None else snap_spacing(x_lengths, nominal)
        nx = _count(lx, hx)
        for p in x_lengths:
            _count(p, hx)
        if one_d:
            hy, ny = (disc.hy or nominal), 0
        else:
            if ly <= 0:
                raise InconsistentGeometry("2-D problem needs positive height")
            hy = disc.hy if disc.hy is not None else snap_spacing([ly], nominal)
            ny = _count(ly, hy)

        def layer(edge: str, spacing: float) -> int:
            if self.kinds.get(edge) != PML:
                return 0
            wavelength = 2.0 * math.pi / self.k
            return max(1, round(disc.pml_width(edge) * wavelength / spacing))

        self.grid = Grid(
            box.x0, box.y0, hx, hy, nx, ny,
            (layer("left", hx), layer("right", hx), layer("bottom", hy), layer("top", hy)),
            ly, one_d,
        )
        if disc.matched_impedance:
            arg = 1.0 - (self.k * hx / 2.0) ** 2
            if arg <= 0:
                raise InconsistentGeometry("grid too coarse for matched impedance")
            self.k_imp = self.k * math.sqrt(arg)
        else:
            self.k_imp = self.k
        self._assemble()
        self._lu = None

    # ------------------------------------------------------------------ assembly
    def _stretch(self, coord: np.ndarray, axis: str) -> np.ndarray:
        """Complex stretch factor ``1 + iσ(t)`` at coordinates along an axis."""
        g = self.grid
        s = np.ones_like(coord, dtype=complex)
        if axis == "x":
            lo, hi, sp_, edges = self.box.x0, self.box.x1, g.hx, ("left", "right")
            counts = (g.pml[0], g.pml[1])
        else:
            lo, hi, sp_, edges = self.box.y0, self.box.y1, g.hy, ("bottom", "top")
            counts = (g.pml[2], g.pml[3])
        for edge, n, depth in ((edges[0], counts[0], lo - coord), (edges[1], counts[1], coord - hi)):
            if n == 0:
                continue
            w = (n + 0.5) * sp_
            sigma0 = self.disc.peak_absorption(self.disc.pml_width(edge))
            t = np.clip(depth, 0.0, None) / w
            s = s + np.where(depth > 0, 1j * sigma0 * t ** self.disc.pml_order, 0.0)
        return s

    def _stretched(self, coord: np.ndarray, axis: str) -> np.ndarray:
        lo, hi = (self.box.x0, self.box.x1) if axis == "x" else (self.box.y0, self.box.y1)
        counts = self.grid.pml[:2] if axis == "x" else self.grid.pml[2:]
        spacing = self.grid.hx if axis == "x" else self.grid.hy
        edges = ("left", "right") if axis == "x" else ("bottom", "top")
        out = np.asarray(coord, dtype=complex).copy()
        p = self.disc.pml_order
        for edge, n, depth, sgn in ((edges[0], counts[0], lo - coord, -1), (edges[1], counts[1], coord - hi, 1)):
            if n == 0:
                continue
            w = (n + 0.5) * spacing
            sigma0 = self.disc.peak_absorption(self.disc.pml_width(edge))
            t = np.clip(depth, 0.0, None)
            out = out + sgn * 1j * sigma0 * t ** (p + 1) / ((p + 1) * w ** p)
        return out

    def stretched_coordinates(self) -> tuple[np.ndarray, np.ndarray]:
        """Complex coordinates ``x̃ = x + i∫σ`` of every node, shaped like the grid.

        Evaluating an analytic free-space solution at these coordinates gives
        the exact PML-extended solution.
        """
        g = self.grid
        xt = self._stretched(g.x, "x")
        yt = self._stretched(g.y, "y") if not self.one_d else g.y.astype(complex)
        return np.meshgrid(xt, yt)

    def _assemble(self) -> None:
        g = self.grid
        ny_n, nx_n = g.shape
        k2 = self.k ** 2
        x, y = g.x, g.y

        wx = np.full(nx_n, g.hx)
        if self.kinds["left"] == IMPEDANCE:
            wx[0] *= 0.5
        if self.kinds["right"] == IMPEDANCE:
            wx[-1] *= 0.5
        if self.one_d:
            wy = np.array([g.height])
        else:
            wy = np.full(ny_n, g.hy)
            if self.kinds["bottom"] == IMPEDANCE:
                wy[0] *= 0.5
            if self.kinds["top"] == IMPEDANCE:
                wy[-1] *= 0.5
        sx = self._stretch(x, "x")
        sy = self._stretch(y, "y") if not self.one_d else np.ones(1, dtype=complex)
        self.node_weights = np.outer(wy, wx).ravel()
        self._wx, self._wy, self._sx, self._sy = wx, wy, sx, sy

        idx = np.arange(g.size).reshape(g.shape)
        rows, cols, vals = [], [], []
        diag = (-k2 * np.outer(wy * sy, wx * sx)).astype(complex)

        # x-direction fluxes between neighbouring columns
        xh = 0.5 * (x[:-1] + x[1:])
        cx = np.outer(wy * sy, 1.0 / (self._stretch(xh, "x") * g.hx))
        a, b = idx[:, :-1].ravel(), idx[:, 1:].ravel()
        cflat = cx.ravel()
        rows += [a, b]
        cols += [b, a]
        vals += [-cflat, -cflat]
        diag[:, :-1] += cx
        diag[:, 1:] += cx
        # A PML edge simply has no flux past its last node: the layer is closed
        # by a zero-flux wall half a cell further out.
        for edge, col in (("left", 0), ("right", -1)):
            if self.kinds[edge] == IMPEDANCE:
                diag[:, col] -= 1j * self.k_imp * wy * sy

        if not self.one_d:
            yh = 0.5 * (y[:-1] + y[1:])
            cy = np.outer(1.0 / (self._stretch(yh, "y") * g.hy), wx * sx)
            a, b = idx[:-1, :].ravel(), idx[1:, :].ravel()
            cflat = cy.ravel()
            rows += [a, b]
            cols += [b, a]
            vals += [-cflat, -cflat]
            diag[:-1, :] += cy
            diag[1:, :] += cy
            for edge, row in (("bottom", 0), ("top", -1)):
                if self.kinds[edge] == IMPEDANCE:
                    diag[row, :] -= 1j * self.k_imp * wx * sx

        rows.append(idx.ravel())
        cols.append(idx.ravel())
        vals.append(diag.ravel())
        self.matrix = sp.csc_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(g.size, g.size)
        )

    # ------------------------------------------------------------------ right-hand sides
    def edge_nodes(self, edge: str) -> np.ndarray:
        """Flat indices of all nodes on an edge line (halo included)."""
        idx = np.arange(self.grid.size).reshape(self.grid.shape)
        return {"left": idx[:, 0], "right": idx[:, -1], "bottom": idx[0, :], "top": idx[-1, :]}[edge]

    def edge_coefficients(self, edge: str) -> np.ndarray:
        """Right-hand-side coefficient per edge node for unit impedance data."""
        if edge in ("left", "right"):
            return -1j * self.k_imp * self._wy * self._sy
        return -1j * self.k_imp * self._wx * self._sx

    def expand_edge_data(self, edge: str, data: np.ndarray) -> np.ndarray:
        """Place physical-segment data into the full edge line (zero in the halo)."""
        g = self.grid
        data = np.asarray(data, dtype=complex).ravel()
        full = len(self.edge_nodes(edge))
        if len(data) == full:
            return data
        phys, start = (g.ny + 1, g.j0) if edge in ("left", "right") else (g.nx + 1, g.i0)
        if self.one_d and edge in ("left", "right"):
            phys, start = 1, 0
        if len(data) != phys:
            raise SegmentOffGrid(f"{edge} data has {len(data)} samples, expected {phys} or {full}")
        out = np.zeros(full, dtype=complex)
        out[start:start + phys] = data
        return out

    def rhs(self, edge_data: Mapping[str, np.ndarray] | None = None, f: np.ndarray | None = None) -> np.ndarray:
        b = np.zeros(self.grid.size, dtype=complex)
        for edge, data in (edge_data or {}).items():
            if data is None:
                continue
            if self.kinds.get(edge) != IMPEDANCE:
                raise InconsistentGeometry(f"data given on non-impedance edge {edge}")
            full = self.expand_edge_data(edge, data)
            b[self.edge_nodes(edge)] += self.edge_coefficients(edge) * full
        if f is not None:
            f = np.asarray(f, dtype=complex).reshape(self.grid.shape)
            b += (np.outer(self._wy * self._sy, self._wx * self._sx) * f).ravel()
        return b

    # ------------------------------------------------------------------ solving
    def factorize(self):
        if self._lu is None:
            try:
                self._lu = spla.splu(self.matrix)
            except RuntimeError as exc:
                raise SolveFailure(f"factorization failed at k={self.k}: {exc}") from exc
        return self._lu

    def solve_vector(self, b: np.ndarray) -> np.ndarray:
        u = self.factorize().solve(np.asarray(b, dtype=complex))
        if not np.all(np.isfinite(u)):
            raise SolveFailure(f"non-finite solution at k={self.k}, grid {self.grid.shape}")
        return u

    def solve_many(self, B: np.ndarray, chunk: int = 32, jobs: int = 1) -> np.ndarray:
        """Solve for every column of ``B`` against the shared factorization."""
        lu = self.factorize()
        B = np.asarray(B, dtype=complex)
        starts = list(range(0, B.shape[1], chunk))

        def work(s: int) -> np.ndarray:
            return lu.solve(np.ascontiguousarray(B[:, s:s + chunk]))

        if jobs > 1 and len(starts) > 1:
            with ThreadPoolExecutor(max_workers=jobs) as pool:
                parts = list(pool.map(work, starts))
        else:
            parts = [work(s) for s in starts]
        X = np.concatenate(parts, axis=1) if parts else np.zeros((B.shape[0], 0), complex)
        if not np.all(np.isfinite(X)):
            raise SolveFailure(f"non-finite solution at k={self.k}")
        return X

    def solve(self, edge_data: Mapping[str, np.ndarray] | None = None, f: np.ndarray | None = None) -> ComplexField:
        u = self.solve_vector(self.rhs(edge_data, f))
        return self.field(u)

    def field(self, u: np.ndarray) -> ComplexField:
        return ComplexField(np.asarray(u).reshape(self.grid.shape), self.grid, self.k, self.k_imp)

    def trace_operator(self, x: float, deriv_sign: int, sign: int, include_halo: bool = False) -> sp.csr_matrix:
        """Sparse matrix mapping nodal values to ``(1/(ik)) s ∂_x u + ι u`` on a column."""
        g = self.grid
        col = g.column(x)
        if not 0 < col < g.shape[1] - 1:
            raise SegmentOffGrid("centered trace needs neighbours on both sides")
        rows = np.arange(g.shape[0]) if include_halo else np.arange(g.j0, g.j0 + g.ny + 1)
        n = len(rows)
        c = deriv_sign / (2j * g.hx * self.k_imp)
        flat = lambda i: rows * g.shape[1] + i  # noqa: E731
        r = np.concatenate([np.arange(n)] * 3)
        cc = np.concatenate([flat(col + 1), flat(col - 1), flat(col)])
        v = np.concatenate([np.full(n, c), np.full(n, -c), np.full(n, float(sign), dtype=complex)])
        return sp.csr_matrix((v, (r, cc)), shape=(n, g.size))


# ---------------------------------------------------------------------- high level
@dataclass(frozen=True)
class LinearSystem:
    """A sparse system ``A u = b`` together with the problem that built it."""

    matrix: sp.spmatrix
    rhs: np.ndarray
    problem: HelmholtzProblem = field(repr=False)

    def solve(self) -> ComplexField:
        return self.problem.field(self.problem.solve_vector(self.rhs))


def build_system(geom: CellGeometry, disc: Discretization, conditions: Sequence[EdgeCondition]) -> LinearSystem:
    edges = [c.edge for c in conditions]
    if sorted(edges) != sorted(EDGES):
        raise InconsistentGeometry(f"conditions must cover each edge exactly once, got {edges}")
    kinds = {c.edge: c.kind for c in conditions}
    problem = HelmholtzProblem(geom.box(), geom.k, disc, kinds, snap_x=(geom.d_l,))
    data = {c.edge: c.values for c in conditions if c.kind == IMPEDANCE}
    return LinearSystem(problem.matrix, problem.rhs(data), problem)


MODEL1_KINDS = {"left": IMPEDANCE, "right": PML, "bottom": PML, "top": PML}
MODEL2_KINDS = {"left": IMPEDANCE, "right": IMPEDANCE, "bottom": PML, "top": PML}
CANONICAL_KINDS = {"left": IMPEDANCE, "right": IMPEDANCE, "bottom": IMPEDANCE, "top": IMPEDANCE}


def cell_problem(geom: CellGeometry, disc: Discretization, model: str) -> HelmholtzProblem:
    """Assembled problem for ``"model1"``, ``"model2"`` or ``"canonical"``."""
    kinds = {"model1": MODEL1_KINDS, "model2": MODEL2_KINDS, "canonical": CANONICAL_KINDS}.get(model)
    if kinds is None:
        raise InconsistentGeometry(f"unknown model {model!r}")
    if model != "model1" and geom.d_r <= 0:
        raise InconsistentGeometry(f"{model} needs d_r > 0 so the interface is interior")
    return HelmholtzProblem(geom.box(), geom.k, disc, kinds, snap_x=(geom.d_l,))


def _data(g) -> np.ndarray:
    return np.asarray(g.samples if isinstance(g, BoundaryTrace) else g, dtype=complex)


def solve_model1(geom: CellGeometry, disc: Discretization, g) -> ComplexField:
    return cell_problem(geom, disc, "model1").solve({"left": _data(g)})


def solve_model2(geom: CellGeometry, disc: Discretization, g) -> ComplexField:
    return cell_problem(geom, disc, "model2").solve({"left": _data(g)})


def solve_subdomain(
    box: Box,
    k: float,
    disc: Discretization,
    conditions: Sequence[EdgeCondition],
    f: np.ndarray | None = None,
    one_d: bool = False,
) -> ComplexField:
    """Direct solve on an arbitrary rectangle with an optional volume source.

    ``f`` is sampled on the full node grid and enters as ``-Δu - k²u = f``.
    """
    kinds = {c.edge: c.kind for c in conditions}
    missing = [e for e in EDGES if e not in kinds and not (one_d and e in ("bottom", "top"))]
    if missing:
        raise InconsistentGeometry(f"missing conditions for {missing}")
    problem = HelmholtzProblem(box, k, disc, kinds, one_d=one_d)
    data = {c.edge: c.values for c in conditions if c.kind == IMPEDANCE}
    return problem.solve(data, f)


def physical_trace_grid(problem: HelmholtzProblem) -> tuple[np.ndarray, np.ndarray]:
    """Coordinates and trapezoid weights of the physical vertical segment."""
    g = problem.grid
    return g.line_y(), g.line_weights()
