"""Finite positive radial measures on [0, inf).

A measure here is the sum of three parts: a weight sitting exactly at the
origin (the condensate), a finite list of atoms on (0, inf), and an
absolutely continuous part stored as cell averages on a grid.  Moments of
any order are integrated with the exact antiderivative of x^alpha per cell,
so moments of piecewise-power densities carry no quadrature error, and the
conservation checks downstream are limited by representation, not by the
integrator.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import special

from .quadrature import gauss_01

SCHEMA_VERSION = "nck-measure/1"


class MeasureError(ValueError):
    """Invalid construction or a request outside a measure's domain."""


@dataclass(frozen=True)
class GridSpec:
    """Strictly increasing cell edges on [x_min, x_max]."""

    edges: np.ndarray

    def __post_init__(self):
        edges = np.asarray(self.edges, dtype=float)
        if edges.ndim != 1 or edges.size < 2:
            raise MeasureError("grid needs at least two edges")
        if not np.all(np.diff(edges) > 0):
            raise MeasureError("grid edges must be strictly increasing")
        if edges[0] < 0:
            raise MeasureError("grid must live on [0, inf)")
        object.__setattr__(self, "edges", edges)

    @classmethod
    def uniform(cls, x_min: float, x_max: float, n_cells: int) -> "GridSpec":
        return cls(np.linspace(x_min, x_max, n_cells + 1))

    @classmethod
    def geometric(cls, x_max: float, n_cells: int, ratio: float = 1.05,
                  x_min: float = 0.0) -> "GridSpec":
        """Geometrically spaced edges, resolving x^(-1/2) behaviour near 0.

        With x_min == 0 the first cell is [0, x_max * ratio^(1-n)] and the
        remaining edges grow by `ratio`; a positive x_min gives a plain
        geometric progression from x_min to x_max.
        """
        if ratio <= 1.0:
            raise MeasureError("geometric ratio must exceed 1")
        if x_min > 0:
            edges = np.geomspace(x_min, x_max, n_cells + 1)
        else:
            inner = x_max * ratio ** (-np.arange(n_cells, dtype=float))[::-1]
            edges = np.concatenate(([0.0], inner))
        return cls(edges)

    @classmethod
    def geometric_ratio(cls, x_max: float, ratio: float, x_first: float) -> "GridSpec":
        """Edges [0, x_first, x_first*ratio, ...] up to at least x_max."""
        n = int(np.ceil(np.log(x_max / x_first) / np.log(ratio)))
        edges = np.concatenate(([0.0], x_first * ratio ** np.arange(n + 1)))
        return cls(edges)

    @classmethod
    def two_zone(cls, x_split: float, x_max: float, head_ratio: float,
                 bulk_ratio: float, x_first: float = 1e-8) -> "GridSpec":
        """Coarse geometric head on [0, x_split], fine geometric bulk after.

        The head resolves an x^(-1/2) profile in log-x; the bulk carries the
        curvature of smooth equilibria, which is where piecewise-constant
        projection error concentrates, so it gets the finer ratio.
        """
        n_head = int(np.ceil(np.log(x_split / x_first) / np.log(head_ratio)))
        head = x_first * head_ratio ** np.arange(n_head + 1)
        head = head[head < x_split * (1 - 1e-12)]
        n_bulk = int(np.ceil(np.log(x_max / x_split) / np.log(bulk_ratio)))
        bulk = x_split * bulk_ratio ** np.arange(n_bulk + 1)
        return cls(np.concatenate(([0.0], head, bulk)))

    @property
    def n_cells(self) -> int:
        return self.edges.size - 1

    @property
    def x_min(self) -> float:
        return float(self.edges[0])

    @property
    def x_max(self) -> float:
        return float(self.edges[-1])

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.edges)

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.edges[:-1] + self.edges[1:])


def _merge_atoms(atoms: np.ndarray) -> np.ndarray:
    """Sort atoms by position and sum weights of duplicates (canonical form)."""
    if atoms.size == 0:
        return atoms.reshape(0, 2)
    order = np.argsort(atoms[:, 0], kind="stable")
    atoms = atoms[order]
    x, inv = np.unique(atoms[:, 0], return_inverse=True)
    w = np.zeros_like(x)
    np.add.at(w, inv, atoms[:, 1])
    return np.column_stack([x, w])


@dataclass(frozen=True)
class RadialMeasure:
    """atom0 * delta_0 + sum_i w_i delta_{x_i} + piecewise-constant density."""

    atom0: float = 0.0
    atoms: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))
    grid: GridSpec | None = None
    density: np.ndarray | None = None

    def __post_init__(self):
        if self.atom0 < 0:
            raise MeasureError("atom0 must be nonnegative")
        atoms = np.asarray(self.atoms, dtype=float).reshape(-1, 2)
        if atoms.size:
            if np.any(atoms[:, 0] <= 0):
                raise MeasureError("atoms must sit on (0, inf); use atom0 for the origin")
            if np.any(atoms[:, 1] < 0):
                raise MeasureError("atom weights must be nonnegative")
            atoms = _merge_atoms(atoms[atoms[:, 1] > 0])
        object.__setattr__(self, "atoms", atoms)
        if (self.grid is None) != (self.density is None):
            raise MeasureError("grid and density must be given together")
        if self.density is not None:
            dens = np.asarray(self.density, dtype=float)
            if dens.shape != (self.grid.n_cells,):
                raise MeasureError("density needs one value per grid cell")
            if np.any(dens < 0):
                raise MeasureError("density cell values must be nonnegative")
            object.__setattr__(self, "density", dens)

    # -- constructors -------------------------------------------------
    @classmethod
    def from_atoms(cls, pairs, atom0: float = 0.0) -> "RadialMeasure":
        return cls(atom0=atom0, atoms=np.asarray(pairs, dtype=float).reshape(-1, 2))

    @classmethod
    def from_density(cls, grid: GridSpec, values, atom0: float = 0.0) -> "RadialMeasure":
        return cls(atom0=atom0, grid=grid, density=np.asarray(values, dtype=float))

    # -- structure ----------------------------------------------------
    @property
    def has_density(self) -> bool:
        return self.density is not None

    def with_atom0(self, value: float) -> "RadialMeasure":
        return RadialMeasure(atom0=value, atoms=self.atoms, grid=self.grid,
                             density=self.density)

    def total_mass(self) -> float:
        return moment(self, 0.0)

    # -- serialization (schema nck-measure/1) ---------------------------
    def to_json(self) -> str:
        doc = {
            "version": SCHEMA_VERSION,
            "atom0": self.atom0,
            "atoms": [[float(x), float(w)] for x, w in self.atoms],
            "grid": {"edges": self.grid.edges.tolist()} if self.grid else None,
            "density": self.density.tolist() if self.density is not None else None,
        }
        return json.dumps(doc)

    @classmethod
    def from_json(cls, text: str) -> "RadialMeasure":
        doc = json.loads(text)
        if doc.get("version") != SCHEMA_VERSION:
            raise MeasureError(f"unsupported measure schema: {doc.get('version')!r}")
        grid = GridSpec(np.asarray(doc["grid"]["edges"])) if doc.get("grid") else None
        dens = np.asarray(doc["density"]) if doc.get("density") is not None else None
        return cls(atom0=doc.get("atom0", 0.0),
                   atoms=np.asarray(doc.get("atoms", []), dtype=float).reshape(-1, 2),
                   grid=grid, density=dens)


def power_cell_integrals(edges: np.ndarray, alpha: float) -> np.ndarray:
    """Exact per-cell integrals of x^alpha (antiderivative x^(alpha+1)/(alpha+1))."""
    if alpha == 0.0:
        return np.diff(edges)
    if alpha == -1.0:
        with np.errstate(divide="ignore"):
            return np.diff(np.log(edges))
    p = alpha + 1.0
    with np.errstate(divide="ignore", invalid="ignore"):
        prim = np.where(edges > 0, edges ** p, 0.0 if p > 0 else np.inf)
    return np.diff(prim) / p


def moment(mu: RadialMeasure, alpha: float) -> float:
    """M_alpha(mu) = int x^alpha dmu, with the origin atom counted only at alpha = 0.

    Density cells are integrated with the exact antiderivative of x^alpha.
    Requesting alpha <= -1 against a density cell touching x = 0 is a
    non-integrable moment and raises.
    """
    total = mu.atom0 if alpha == 0.0 else 0.0
    if mu.atoms.size:
        total += float(np.sum(mu.atoms[:, 1] * mu.atoms[:, 0] ** alpha))
    if mu.has_density:
        edges = mu.grid.edges
        if alpha <= -1.0 and edges[0] == 0.0 and mu.density[0] > 0:
            raise MeasureError(
                f"moment of order {alpha} is not integrable against a density at 0")
        total += float(np.sum(mu.density * power_cell_integrals(edges, alpha)))
    return total


def partial_moment(mu: RadialMeasure, alpha: float, r: float) -> float:
    """int_{(0, r]} x^alpha dmu: atoms and density below r, origin atom excluded."""
    total = 0.0
    if mu.atoms.size:
        sel = mu.atoms[:, 0] <= r
        total += float(np.sum(mu.atoms[sel, 1] * mu.atoms[sel, 0] ** alpha))
    if mu.has_density:
        edges = np.minimum(mu.grid.edges, r)
        total += float(np.sum(mu.density * power_cell_integrals(edges, alpha)))
    return total


def split_atom(G: RadialMeasure) -> tuple[float, RadialMeasure]:
    """Split off the origin atom: G = n0*delta_0 + g with g(\\{0\\}) = 0."""
    return G.atom0, G.with_atom0(0.0)


# ---------------------------------------------------------------------------
# Bose-Einstein equilibria
# ---------------------------------------------------------------------------

def _be_integrand_u(beta: float, mu_chem: float) -> Callable[[np.ndarray], np.ndarray]:
    # After x = u^2 the integrand 2u * sqrt(x)/(e^(beta x - mu) - 1) = 2u^2/expm1(..)
    # is smooth down to u = 0 (limit 2/beta at mu = 0).
    def f(u):
        z = beta * u * u - mu_chem
        out = np.empty_like(u)
        small = z < 1e-8
        out[~small] = 2.0 * u[~small] ** 2 / np.expm1(z[~small])
        # z -> 0 only possible when mu = 0 and u -> 0: 2u^2/z -> 2/beta
        with np.errstate(divide="ignore", invalid="ignore"):
            out[small] = np.where(z[small] > 0, 2.0 * u[small] ** 2 / z[small], 2.0 / beta)
        return out
    return f


def bose_einstein_tail_mass(beta: float, mu_chem: float, x_max: float) -> float:
    """Mass of the equilibrium density beyond x_max (adaptive, log-spaced panels)."""
    f = _be_integrand_u(beta, mu_chem)
    u0 = np.sqrt(x_max)
    total = 0.0
    t, w = gauss_01(32)
    hi = u0
    while True:
        lo, hi = hi, hi * 1.5
        u = lo + (hi - lo) * t
        piece = float(np.sum(w * (hi - lo) * f(u)))
        total += piece
        if piece < 1e-18 * max(total, 1e-300) or hi * hi > x_max + 2000.0 / beta:
            break
    return total


def bose_einstein(beta: float, mu_chem: float, c: float, grid: GridSpec,
                  tail_tol: float = 1e-10) -> RadialMeasure:
    """Equilibrium measure sqrt(x)/(e^(beta x - mu) - 1) dx + c*delta_0.

    Constraint c * mu_chem = 0: a condensate piece is only admissible at
    zero chemical potential.  Cell values are cell averages obtained by
    quadrature in u = sqrt(x) (never a point evaluation at x = 0, where the
    mu = 0 density blows up like x^(-1/2)).  The truncation drift beyond
    grid.x_max is checked against tail_tol and reported in the error.
    """
    if beta <= 0:
        raise MeasureError("beta must be positive")
    if mu_chem > 0:
        raise MeasureError("chemical potential must be nonpositive")
    if c < 0:
        raise MeasureError("condensate weight must be nonnegative")
    if c > 0 and mu_chem < 0:
        raise MeasureError("c > 0 requires mu_chem = 0 (c * mu = 0)")
    tail = bose_einstein_tail_mass(beta, mu_chem, grid.x_max)
    if tail > tail_tol:
        raise MeasureError(
            f"grid.x_max={grid.x_max:g} truncates tail mass {tail:.3e} > {tail_tol:g}")
    f = _be_integrand_u(beta, mu_chem)
    t, w = gauss_01(12)
    ua = np.sqrt(grid.edges[:-1])[:, None]
    ub = np.sqrt(grid.edges[1:])[:, None]
    u = ua + (ub - ua) * t[None, :]
    cell_int = np.sum((ub - ua) * w[None, :] * f(u), axis=1)
    values = cell_int / grid.widths
    return RadialMeasure.from_density(grid, values, atom0=c)


# ---------------------------------------------------------------------------
# Mass- and energy-preserving mollifier
# ---------------------------------------------------------------------------

def mollify(mu: RadialMeasure, n: int, grid: GridSpec) -> RadialMeasure:
    """Smooth mu into a strictly positive density, preserving M0 and M1.

    The kernel is a e^(-b z^2) with a = 2 sqrt(b/pi) (unit mass on [0, inf))
    and b = pi^(-1) (M0/M1)^2, scaled by e^n and recentred at y(1 - e^(-n));
    that choice of b makes the energy of the output equal M1(mu) exactly,
    on the untruncated half-line.  Cell averages are exact for the atomic
    part (erf differences) and Gauss-Legendre-accurate for a density part.
    """
    if n < 1:
        raise MeasureError("mollifier index n must be >= 1")
    m0 = moment(mu, 0.0)
    m1 = moment(mu, 1.0)
    if m0 <= 0 or m1 <= 0:
        raise MeasureError("mollify needs positive mass and positive energy")
    b = (m0 / m1) ** 2 / np.pi
    sb = np.sqrt(b)
    en = np.exp(float(n))
    shrink = 1.0 - np.exp(-float(n))
    edges = grid.edges

    def kernel_cdf_between(lo: np.ndarray, hi: np.ndarray, s: np.ndarray) -> np.ndarray:
        # int_{lo}^{hi} e^n J(e^n (x - s)) dx for x-intervals clipped to x >= s
        z1 = np.maximum(lo - s, 0.0) * en * sb
        z2 = np.maximum(hi - s, 0.0) * en * sb
        return special.erf(z2) - special.erf(z1)

    cell_mass = np.zeros(grid.n_cells)
    sources = []          # (positions, weights) of point sources
    if mu.atom0 > 0:
        sources.append((np.array([0.0]), np.array([mu.atom0])))
    if mu.atoms.size:
        sources.append((mu.atoms[:, 0], mu.atoms[:, 1]))
    for pos, wgt in sources:
        s = (pos * shrink)[None, :]
        lo = edges[:-1][:, None]
        hi = edges[1:][:, None]
        cell_mass += np.sum(wgt[None, :] * kernel_cdf_between(lo, hi, s), axis=1)
    if mu.has_density:
        # y-integral per source cell by GL; the x-integral stays exact (erf).
        t, w = gauss_01(8)
        ya = mu.grid.edges[:-1][:, None]
        yb = mu.grid.edges[1:][:, None]
        y = (ya + (yb - ya) * t[None, :]).ravel()
        yw = ((yb - ya) * w[None, :] * mu.density[:, None]).ravel()
        keep = yw > 0

        s = (y[keep] * shrink)[None, :]
        lo = edges[:-1][:, None]
        hi = edges[1:][:, None]
        cell_mass += np.sum(yw[keep][None, :] * kernel_cdf_between(lo, hi, s), axis=1)
    return RadialMeasure.from_density(grid, cell_mass / grid.widths)
