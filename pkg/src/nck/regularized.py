"""Cutoff layer: the bounded regularization of x^(-1/2) and its operators.

The cutoff family (version "phin-1") is

    phi_n(x) = sqrt(n)        on [0, 1/n]
             = x^(-1/2)       on [1/n, n]
             = (n+1-x)/sqrt(n) on [n, n+1]
             = 0              beyond,

continuous, below x^(-1/2) everywhere, increasing to it pointwise.

Densities evolve on uniform grids with spacing 1/(4n).  On that lattice all
cutoff breakpoints and every kink of the pair interactions fall on half-cell
boundaries, so the gain operator reduces to discrete convolutions of
half-cell node arrays; those are evaluated by FFT, making one operator
application O(N log N).  The loss-side integrals use the exact antiderivative
of phi_n and are exact for piecewise-constant densities.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.fft as _fft

from .measure import GridSpec, RadialMeasure
from .quadrature import gauss_01
from .testfn import TestFunction, ell_kernel, lambda_kernel

PHIN_VERSION = "phin-1"
CELLS_PER_INNER_SCALE = 4   # grid spacing = 1/(4n): the 1/n inner scale gets 4 cells


class RegularizedError(ValueError):
    pass


def cutoff_eval(n: int, x) -> np.ndarray:
    """phi_n(x); vectorized."""
    x = np.asarray(x, dtype=float)
    rn = np.sqrt(float(n))
    with np.errstate(divide="ignore"):
        inv = np.where(x > 0, 1.0 / np.sqrt(np.abs(x) + 1e-300), np.inf)
    return np.select(
        [x <= 1.0 / n, x <= n, x <= n + 1.0],
        [rn, inv, (n + 1.0 - x) / rn],
        default=0.0,
    )


def cutoff_antiderivative(n: int, x) -> np.ndarray:
    """int_0^x phi_n; exact, piecewise."""
    x = np.asarray(x, dtype=float)
    rn = np.sqrt(float(n))
    x1, x2, x3 = 1.0 / n, float(n), n + 1.0
    f1 = rn * np.minimum(x, x1)
    f2 = np.where(x > x1, 2.0 * np.sqrt(np.clip(x, x1, x2)) - 2.0 / rn, 0.0)
    xr = np.clip(x, x2, x3)
    f3 = np.where(x > x2, ((n + 1.0) * (xr - x2) - 0.5 * (xr * xr - x2 * x2)) / rn, 0.0)
    return f1 + f2 + f3


def cutoff_x_antiderivative(n: int, x) -> np.ndarray:
    """int_0^x y phi_n(y) dy; exact, piecewise."""
    x = np.asarray(x, dtype=float)
    rn = np.sqrt(float(n))
    x1, x2, x3 = 1.0 / n, float(n), n + 1.0
    f1 = 0.5 * rn * np.minimum(x, x1) ** 2
    xm = np.clip(x, x1, x2)
    f2 = np.where(x > x1, (2.0 / 3.0) * (xm ** 1.5 - x1 ** 1.5), 0.0)
    xr = np.clip(x, x2, x3)
    f3 = np.where(x > x2,
                  ((n + 1.0) * 0.5 * (xr * xr - x2 * x2) - (xr ** 3 - x2 ** 3) / 3.0) / rn,
                  0.0)
    return f1 + f2 + f3


def evolution_grid(n: int, x_max: float | None = None) -> GridSpec:
    """Uniform grid with spacing 1/(4n), wide enough for every gain target.

    Sources live under supp phi_n = [0, n+1], so pair gains land below
    2(n+1); the default x_max covers that.  A larger x_max is rounded up to
    the lattice (cells beyond 2(n+1) are inert but carry their moments).
    """
    dx = 1.0 / (CELLS_PER_INNER_SCALE * n)
    target = 2.0 * (n + 1.0) if x_max is None else max(float(x_max), n + 1.0)
    cells = int(np.ceil(target / dx - 1e-12))
    return GridSpec.uniform(0.0, cells * dx, cells)


@dataclass
class DensityFn:
    """Bounded density on a uniform grid: one (cell-average) value per cell."""

    grid: GridSpec
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.grid.n_cells,):
            raise RegularizedError("one value per grid cell required")
        w = self.grid.widths
        if not np.allclose(w, w[0], rtol=1e-9, atol=0.0):
            raise RegularizedError("DensityFn requires a uniform grid")
        if self.grid.x_min != 0.0:
            raise RegularizedError("DensityFn grids start at x = 0")

    @property
    def dx(self) -> float:
        return float(self.grid.widths[0])

    def to_measure(self) -> RadialMeasure:
        if np.any(self.values < 0):
            raise RegularizedError("signed density cannot become a positive measure")
        return RadialMeasure.from_density(self.grid, self.values)

    def moment(self, alpha: float) -> float:
        from .measure import moment as _moment, power_cell_integrals
        return float(np.sum(self.values * power_cell_integrals(self.grid.edges, alpha)))


def _require_nonnegative(h: DensityFn) -> None:
    if np.any(h.values < 0):
        raise RegularizedError("operator input density must be nonnegative")
    if not np.all(np.isfinite(h.values)):
        raise RegularizedError("operator input density must be finite")


@lru_cache(maxsize=8)
def _fft_plan(S: int) -> tuple[int, np.ndarray]:
    """FFT length for linear convolution of two length-S arrays, plus the
    spectral phase that turns conj(rfft(u)) into rfft(u reversed)."""
    nfft = _fft.next_fast_len(2 * S - 1, real=True)
    f = np.arange(nfft // 2 + 1)
    phase = np.exp(-2j * np.pi * f * (S - 1) / nfft)
    return nfft, phase


@lru_cache(maxsize=8)
def _halfcell_tables(n: int, n_cells: int, dx: float, order: int):
    """phi_n at forward/reversed GL nodes of each half-cell, and exact masses.

    Returns (A, B, p_unit, px_unit): A[s,i] = phi_n at node i of half-cell s,
    B its node-reversed twin, p_unit[s] = int_s phi_n, px_unit[s] = int_s x phi_n.
    """
    delta = dx / 2.0
    S = 2 * n_cells
    t, w = gauss_01(order)
    s_edges = delta * np.arange(S + 1)
    y = s_edges[:-1, None] + delta * t[None, :]
    A = cutoff_eval(n, y)
    B = A[:, ::-1]
    F = cutoff_antiderivative(n, s_edges)
    Fx = cutoff_x_antiderivative(n, s_edges)
    return A, B, np.diff(F), np.diff(Fx), w


def _operator_fields(h: DensityFn, n: int, order: int = 6):
    """K_n split (pair-merge part, forward-transfer part), L_n, A_n at cell centers."""
    _require_nonnegative(h)
    N = h.grid.n_cells
    dx = h.dx
    delta = dx / 2.0
    A, B, p_unit, px_unit, w = _halfcell_tables(n, N, dx, order)
    h2 = np.repeat(h.values, 2)

    # gain: two convolution-type integrals over half-cell nodes, batched FFT.
    # The reversed-array transform comes from conj(FU) times a phase, so the
    # convolution and the autocorrelation share one forward transform of U.
    out_even = 2 * np.arange(N)           # I1 at conv lag 2k (cell centers)
    out_odd = out_even + 1                # I2 at autocorr lag 2k+1
    U = (h2[:, None] * A).T               # (order, S)
    V = (h2[:, None] * B).T
    S = h2.size
    nfft, phase = _fft_plan(S)
    FU = _fft.rfft(U, nfft)
    FV = _fft.rfft(V, nfft)
    conv = _fft.irfft(FU * FV, nfft)
    corr = _fft.irfft(FU * (np.conj(FU) * phase), nfft)
    k_merge = np.einsum("i,ik->k", w, conv[:, out_even])
    k_fwd = np.einsum("i,ik->k", w, corr[:, S - 1 + out_odd])
    # exact fields are nonnegative; FFT roundoff may leave ~1e-18 noise
    k_merge = np.maximum(k_merge * delta, 0.0)
    k_fwd = np.maximum(k_fwd * 2.0 * delta, 0.0)

    # loss-side integrals: exact for piecewise-constant h
    p = h2 * p_unit
    prefix = np.concatenate(([0.0], np.cumsum(p)))
    total = prefix[-1]
    centers = h.grid.centers
    l_field = 2.0 * (total - prefix[out_odd])
    a_field = cutoff_eval(n, centers) * (centers + 4.0 * prefix[out_odd])
    return k_merge, k_fwd, l_field, a_field


def k_n(h: DensityFn, n: int, order: int = 6, parts: bool = False):
    """Quadratic gain: int_0^x F(x-y)F(y) dy + 2 int_x^inf F(y)F(y-x) dy, F = h phi_n."""
    k_merge, k_fwd, _, _ = _operator_fields(h, n, order)
    if parts:
        return (DensityFn(h.grid, k_merge), DensityFn(h.grid, k_fwd))
    return DensityFn(h.grid, k_merge + k_fwd)


def l_n(h: DensityFn, n: int) -> DensityFn:
    """Linear gain 2 int_x^inf h phi_n; exact suffix sums of cell masses."""
    _, _, l_field, _ = _operator_fields(h, n)
    return DensityFn(h.grid, l_field)


def a_n(h: DensityFn, n: int) -> DensityFn:
    """Loss rate phi_n(x) (x + 4 int_0^x h phi_n); exact prefix sums."""
    _, _, _, a_field = _operator_fields(h, n)
    return DensityFn(h.grid, a_field)


@dataclass
class CollisionFields:
    """Gain/loss split of the regularized collision operator at cell centers."""

    gain: np.ndarray        # K_n(h) + L_n(h)
    loss_rate: np.ndarray   # A_n(h)
    h: np.ndarray

    @property
    def values(self) -> np.ndarray:
        return self.gain - self.h * self.loss_rate


def collision_fields(h: DensityFn, n: int, order: int = 6) -> CollisionFields:
    k_merge, k_fwd, l_field, a_field = _operator_fields(h, n, order)
    return CollisionFields(gain=k_merge + k_fwd + l_field, loss_rate=a_field,
                           h=h.values.copy())


def j3n(h: DensityFn, n: int) -> DensityFn:
    """K_n(h) + L_n(h) - h A_n(h); sign-indefinite."""
    f = collision_fields(h, n)
    return DensityFn(h.grid, f.values)


def production_rate(h: DensityFn, n: int) -> float:
    """Mass production of the regularized dynamics: int x phi_n(x) h dx (exact).

    Equals the weak form against phi = 1 and converges to M_{1/2}(h) as
    n grows; it is the amount the origin-atom subtraction must book to keep
    the reconstructed measure's mass constant.
    """
    _require_nonnegative(h)
    px = np.diff(cutoff_x_antiderivative(n, h.grid.edges))
    return float(np.sum(h.values * px))


def q3n_tilde(phi: TestFunction, h: DensityFn, n: int, order: int = 4) -> float:
    """Regularized weak form: pair kernel with phi_n phi_n weights minus the
    linear kernel with a phi_n weight; converges to the unregularized weak
    form on compactly supported densities as n grows."""
    _require_nonnegative(h)
    t, w = gauss_01(order)
    edges = h.grid.edges
    y = edges[:-1, None] + h.grid.widths[:, None] * t[None, :]
    wq = (h.grid.widths[:, None] * w[None, :]) * h.values[:, None]
    y = y.ravel()
    wq = wq.ravel()
    live = wq * cutoff_eval(n, y)
    keep = live != 0.0
    yk, lk = y[keep], live[keep]
    quad = 0.0
    block = 4096
    for i0 in range(0, yk.size, block):
        lam = lambda_kernel(phi, yk[i0:i0 + block, None], yk[None, :])
        quad += float(np.sum(lk[i0:i0 + block, None] * (lk[None, :] * lam)))
    lin = float(np.sum(live * ell_kernel(phi, y)))
    return quad - lin
