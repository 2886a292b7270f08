"""Discrete impedance-to-impedance maps, their norms, composites and projections."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np
from scipy.special import erfc

from .errors import CutoffTooTight, DimensionMismatch, LambdaOutOfRange, SolveFailure
from .solver import (
    BoundaryTrace,
    CellGeometry,
    Discretization,
    HelmholtzProblem,
    cell_problem,
    snap_spacing,
)

log = logging.getLogger(__name__)

MODELS = ("model1", "model2", "canonical")
DENSE_LIMIT = 2000 * 2000


@dataclass(frozen=True)
class MapSpec:
    """Which map to assemble: model, cell, output sign ``ι`` and discretization."""

    model: str
    geom: CellGeometry
    iota: int
    disc: Discretization = field(default_factory=Discretization)

    def __post_init__(self) -> None:
        if self.model not in MODELS:
            raise ValueError(f"model must be one of {MODELS}")
        if self.iota not in (1, -1):
            raise ValueError("iota must be +1 or -1")


@dataclass(frozen=True)
class ImpedanceMapMatrix:
    """Nodal matrix from data on Γ_l to the impedance trace on Γ_i.

    ``entries[a, b]`` is the trace at output node ``a`` produced by unit data
    at input node ``b``.  Norms are taken in the trapezoid-weighted discrete
    L² spaces on both sides.
    """

    entries: np.ndarray
    in_weights: np.ndarray
    out_weights: np.ndarray
    spec: MapSpec | None = None
    in_y: np.ndarray | None = None
    out_y: np.ndarray | None = None
    label: str = ""

    def __post_init__(self) -> None:
        m, n = self.entries.shape
        if len(self.in_weights) != n or len(self.out_weights) != m:
            raise DimensionMismatch(f"matrix {self.entries.shape} vs weights {len(self.out_weights)}x{len(self.in_weights)}")

    @property
    def shape(self) -> tuple[int, int]:
        return self.entries.shape

    def weighted(self) -> np.ndarray:
        """``W_out^{1/2} M W_in^{-1/2}``, whose spectral norm is the operator norm."""
        return np.sqrt(self.out_weights)[:, None] * self.entries / np.sqrt(self.in_weights)[None, :]

    def apply(self, g: BoundaryTrace | np.ndarray) -> BoundaryTrace:
        samples = g.samples if isinstance(g, BoundaryTrace) else np.asarray(g)
        if len(samples) != self.shape[1]:
            raise DimensionMismatch(f"input has {len(samples)} samples, map expects {self.shape[1]}")
        return BoundaryTrace(self.entries @ samples, self.out_weights, "Γ_i", self.out_y)

    def __matmul__(self, other: "ImpedanceMapMatrix") -> "ImpedanceMapMatrix":
        """Composition ``self ∘ other``."""
        if self.shape[1] != other.shape[0] or not np.allclose(self.in_weights, other.out_weights, rtol=1e-9):
            raise DimensionMismatch("output grid of the inner map differs from the input grid of the outer map")
        return ImpedanceMapMatrix(
            self.entries @ other.entries, other.in_weights, self.out_weights, None, other.in_y, self.out_y,
            f"{self.label}∘{other.label}",
        )

    def with_entries(self, entries: np.ndarray, label: str = "") -> "ImpedanceMapMatrix":
        return replace(self, entries=entries, label=label or self.label)


def trapezoid_weights(y: np.ndarray) -> np.ndarray:
    dy = np.diff(y)
    w = np.zeros(len(y))
    w[:-1] += 0.5 * dy
    w[1:] += 0.5 * dy
    return w


# ---------------------------------------------------------------------- assembly
def map_problem(spec: MapSpec) -> HelmholtzProblem:
    return cell_problem(spec.geom, spec.disc, spec.model)


def assemble_map(
    spec: MapSpec,
    problem: HelmholtzProblem | None = None,
    chunk: int = 32,
    jobs: int = 1,
    include_halo: bool = False,
) -> ImpedanceMapMatrix:
    """Assemble the map column by column against one factorization.

    Column ``b`` is the Γ_i trace of the solution whose Γ_l impedance data is
    the nodal hat function at node ``b``.  The right-hand sides and the trace
    are both sparse, so only the ``n_out x n_in`` block is kept.  With
    ``include_halo`` the rows and columns extend through the absorbing layers.
    """
    problem = problem or map_problem(spec)
    g = problem.grid
    rows = slice(None) if include_halo else g.physical_rows()
    left = problem.edge_nodes("left")[rows]
    coeff = problem.edge_coefficients("left")[rows]
    n_in = len(left)
    T = problem.trace_operator(spec.geom.d_l, 1, spec.iota, include_halo=include_halo)
    out = np.empty((T.shape[0], n_in), dtype=complex)
    lu = problem.factorize()
    for start in range(0, n_in, chunk):
        cols = np.arange(start, min(start + chunk, n_in))
        B = np.zeros((g.size, len(cols)), dtype=complex)
        B[left[cols], np.arange(len(cols))] = coeff[cols]
        try:
            X = lu.solve(B)
        except Exception as exc:  # pragma: no cover - splu failures are rare
            raise SolveFailure(f"column block starting at {start}: {exc}") from exc
        if not np.all(np.isfinite(X)):
            raise SolveFailure(f"non-finite solution in column block starting at {start}")
        out[:, cols] = T @ X
    y = g.line_y(include_halo)
    w = g.line_weights(include_halo)
    log.debug("assembled %s map %s at k=%g", spec.model, out.shape, spec.geom.k)
    return ImpedanceMapMatrix(out, w, w.copy(), spec, y, y.copy(), f"{spec.model}{'+' if spec.iota > 0 else '-'}")


# ---------------------------------------------------------------------- norms
@dataclass(frozen=True)
class NormResult:
    norm: float
    witness: np.ndarray  # maximizing input samples (unit weighted norm)
    iterations: int
    converged: bool
    method: str = "power"

    def __float__(self) -> float:
        return self.norm


def operator_norm(
    m: ImpedanceMapMatrix, rtol: float = 1e-10, max_iter: int = 10_000, seed: int = 0
) -> NormResult:
    """Largest weighted singular value by power iteration on ``B^H B``.

    The iteration stops when successive estimates agree to ``rtol``.  On
    failure the best estimate is returned with ``converged=False``.
    """
    B = m.weighted()
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(B.shape[1]) + 1j * rng.standard_normal(B.shape[1])
    v /= np.linalg.norm(v)
    sigma_prev = 0.0
    sigma = 0.0
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        w = B @ v
        sigma = float(np.linalg.norm(w))
        if sigma == 0.0:
            converged = True
            break
        v = B.conj().T @ w
        v /= np.linalg.norm(v)
        if abs(sigma - sigma_prev) <= rtol * sigma:
            converged = True
            break
        sigma_prev = sigma
    sigma = float(np.linalg.norm(B @ v))
    if not converged and B.size <= DENSE_LIMIT:
        # clustered top singular values: fall back to the exact SVD
        u, s, vh = np.linalg.svd(B)
        log.info("power iteration stalled after %d steps, using dense SVD", max_iter)
        return NormResult(float(s[0]), vh[0].conj() / np.sqrt(m.in_weights), it, False, "svd")
    if not converged:
        log.warning("power iteration did not converge in %d steps (estimate %.6g)", max_iter, sigma)
    return NormResult(sigma, v / np.sqrt(m.in_weights), it, converged)


def dense_norm(m: ImpedanceMapMatrix) -> float:
    """Reference value from a full SVD."""
    return float(np.linalg.svd(m.weighted(), compute_uv=False)[0])


def trace_ratio(m: ImpedanceMapMatrix, g: BoundaryTrace) -> float:
    """``‖M g‖ / ‖g‖`` in the weighted norms."""
    return m.apply(g).norm() / g.norm()


# ---------------------------------------------------------------------- composites
@dataclass(frozen=True)
class SignWord:
    """Sequence of signs with the cell geometry ``(h, d_l, d_r)`` used for each sign."""

    signs: tuple[int, ...]
    geometries: Mapping[int, tuple[float, float, float]]

    def __post_init__(self) -> None:
        if len(self.signs) < 1 or any(s not in (1, -1) for s in self.signs):
            raise ValueError("a word is a non-empty sequence of +1/-1")
        hs = {self.geometries[s][0] for s in set(self.signs)}
        if len(hs) != 1:
            raise DimensionMismatch("all cells in a word must share the height h")

    @classmethod
    def parse(cls, text: str, h: float = 1.0, d_l: float = 1.0, d_r: float = 1.0,
              geometries: Mapping[int, tuple[float, float, float]] | None = None) -> "SignWord":
        """Build from a string such as ``"+-+"``."""
        signs = tuple(1 if c == "+" else -1 for c in text if c in "+-")
        if len(signs) != len(text.strip()):
            raise ValueError(f"bad sign word {text!r}")
        return cls(signs, geometries or {1: (h, d_l, d_r), -1: (h, d_l, d_r)})

    @property
    def h(self) -> float:
        return self.geometries[self.signs[0]][0]

    def text(self) -> str:
        return "".join("+" if s > 0 else "-" for s in self.signs)

    def geometry(self, sign: int, k: float) -> CellGeometry:
        h, d_l, d_r = self.geometries[sign]
        return CellGeometry(h, d_l, d_r, k)

    def __len__(self) -> int:
        return len(self.signs)


def shared_interface_disc(h: float, k: float, disc: Discretization) -> Discretization:
    """Pin ``hy`` so every factor of a composite shares one interface grid."""
    if disc.hy is not None:
        return disc
    return replace(disc, hy=snap_spacing([h], disc.nominal_spacing(k)))


def factor_maps(word: SignWord, k: float, disc: Discretization) -> dict[int, ImpedanceMapMatrix]:
    disc = shared_interface_disc(word.h, k, disc)
    return {s: assemble_map(MapSpec("model2", word.geometry(s, k), s, disc)) for s in sorted(set(word.signs))}


def compose(
    word: SignWord, k: float, disc: Discretization, factors: Mapping[int, ImpedanceMapMatrix] | None = None
) -> ImpedanceMapMatrix:
    """Product of Model-2 maps, first letter applied first."""
    factors = factors or factor_maps(word, k, disc)
    result = factors[word.signs[0]]
    for s in word.signs[1:]:
        result = factors[s] @ result
    return result.with_entries(result.entries, label=word.text())


# ---------------------------------------------------------------------- projection
def _exp_ramp(t: np.ndarray) -> np.ndarray:
    safe = np.where(t > 0, t, 1.0)
    with np.errstate(over="ignore"):
        return np.where(t > 0, np.exp(-1.0 / safe), 0.0)


def smooth_step(t: np.ndarray) -> np.ndarray:
    """C^∞ step: 0 for ``t <= 0``, 1 for ``t >= 1``."""
    t = np.asarray(t, dtype=float)
    a, b = _exp_ramp(t), _exp_ramp(1.0 - t)
    return a / (a + b)


def bump(z: np.ndarray) -> np.ndarray:
    """ψ: equal to 1 on [-1, 1], supported in [-2, 2]."""
    return smooth_step(2.0 - np.abs(np.asarray(z, dtype=float)))


def _check_lambda(lam: float, k: float, hy: float) -> None:
    if not 0.0 < lam < 1.0:
        raise LambdaOutOfRange(f"λ={lam} must lie in (0, 1)")
    if lam * k > 0.8 * math.pi / hy:
        raise LambdaOutOfRange(f"λk={lam * k:g} exceeds the Nyquist guard {0.8 * math.pi / hy:g}")


def projection_multiplier(n: int, hy: float, k: float, lam: float) -> np.ndarray:
    """``1 - ψ(ζ/λ)`` on the DFT frequencies of an ``n``-sample grid (``ζ = ω / k``)."""
    zeta = 2.0 * math.pi * np.fft.fftfreq(n, hy) / k
    return 1.0 - bump(zeta / lam)


def project_away_zero(g: BoundaryTrace, lam: float, k: float, padding: int = 4) -> BoundaryTrace:
    """Remove interface frequencies ``|ζ| ≲ λ`` with a smooth Fourier multiplier.

    ``padding`` zero-pads the samples to ``padding * n`` points before the
    transform; ``padding=1`` is the plain periodic DFT.
    """
    y = g.y if g.y is not None else np.arange(len(g))
    hy = float(y[1] - y[0])
    if not np.allclose(np.diff(y), hy, rtol=1e-9):
        raise ValueError("projection needs a uniform grid")
    _check_lambda(lam, k, hy)
    n = len(g)
    m = padding * n
    spec = np.fft.fft(np.asarray(g.samples, dtype=complex), m)
    out = np.fft.ifft(projection_multiplier(m, hy, k, lam) * spec)[:n]
    return BoundaryTrace(out, g.weights, g.segment, g.y)


def projection_matrix(y: np.ndarray, lam: float, k: float, padding: int = 4) -> np.ndarray:
    """Dense matrix of :func:`project_away_zero` on the grid ``y``."""
    n = len(y)
    hy = float(y[1] - y[0])
    _check_lambda(lam, k, hy)
    m = padding * n
    eye = np.zeros((m, n), dtype=complex)
    eye[:n] = np.eye(n)
    mult = projection_multiplier(m, hy, k, lam)
    return np.fft.ifft(mult[:, None] * np.fft.fft(eye, axis=0), axis=0)[:n]


def project_map(m: ImpedanceMapMatrix, lam: float, k: float, padding: int = 4) -> ImpedanceMapMatrix:
    """``M Π``: the map restricted to data with frequencies away from zero."""
    P = projection_matrix(m.in_y, lam, k, padding)
    return m.with_entries(m.entries @ P, label=f"{m.label}Π")


# ---------------------------------------------------------------------- coherent states
def cutoff(y: np.ndarray, h: float, eta: float) -> np.ndarray:
    """Smooth χ: 1 on [η, h-η], 0 outside (η/2, h-η/2)."""
    half = 0.5 * eta
    return smooth_step((y - half) / half) * smooth_step((h - half - y) / half)


def coherent_state(
    y: np.ndarray,
    y0: float,
    theta0: float,
    k: float,
    eta: float = 0.1,
    max_leak: float = 1e-8,
) -> BoundaryTrace:
    """Gaussian wave packet at ``(y0, sin θ0)`` on the nodes ``y`` of a segment starting at 0.

    The Gaussian mass falling outside the cutoff support must stay below
    ``max_leak``; experiments placing packets near a corner relax it.
    """
    y = np.asarray(y, dtype=float)
    h = float(y[-1] - y[0])
    if not eta < y0 < h - eta:
        raise CutoffTooTight(f"y0={y0} must lie in (η, h-η) = ({eta}, {h - eta})")
    if not -math.pi / 2 < theta0 < math.pi / 2:
        raise ValueError("θ0 must lie in (-π/2, π/2)")
    hbar = 1.0 / k
    root = math.sqrt(hbar)
    leak = 0.5 * erfc((y0 - eta / 2) / root) + 0.5 * erfc((h - eta / 2 - y0) / root)
    if leak > max_leak:
        raise CutoffTooTight(f"Gaussian mass {leak:.3g} outside the cutoff support exceeds {max_leak:g}")
    s = y - y0
    g = (math.pi * hbar) ** -0.25 * np.exp(1j * s * math.sin(theta0) / hbar - s * s / (2 * hbar))
    g = g * cutoff(y - y[0], h, eta)
    return BoundaryTrace(g, trapezoid_weights(y), "Γ_l", y)


def fourier_mass_fraction(g: BoundaryTrace, k: float, center: float, radius: float, padding: int = 8) -> float:
    """Fraction of ``|DFT g|²`` with ``|ζ - center| <= radius``."""
    y = g.y
    hy = float(y[1] - y[0])
    spec = np.fft.fft(g.samples, padding * len(g))
    zeta = 2.0 * math.pi * np.fft.fftfreq(padding * len(g), hy) / k
    p = np.abs(spec) ** 2
    return float(p[np.abs(zeta - center) <= radius].sum() / p.sum())


def interface_nodes(geom: CellGeometry, disc: Discretization) -> np.ndarray:
    """Nodes of the physical Γ_l segment for a given cell and discretization."""
    hy = disc.hy if disc.hy is not None else snap_spacing([geom.h], disc.nominal_spacing(geom.k))
    n = round(geom.h / hy)
    return np.linspace(0.0, geom.h, n + 1)

