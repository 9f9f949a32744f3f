"""Weak-form collision functionals on radial measures.

Quadratic, linear and cubic functionals of the three- and four-wave weak
forms.  Atomic parts are exact finite sums; density parts are integrated on
per-cell Gauss-Legendre panels in u = sqrt(x), which absorbs the 1/sqrt(xy)
factor analytically, with a nested-triangle correction on diagonal cell
pairs where the pair kernel has its |x-y| corner.  All reductions are
single-threaded numpy pairwise sums, so results are bit-reproducible.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .measure import RadialMeasure, moment
from .quadrature import gauss_01, sqrt_nodes
from .testfn import TestFunction, delta_phi, ell0_kernel, ell_kernel, lambda_kernel, phi_eps

IDENTITY_RTOL = 1e-12


class FunctionalError(ValueError):
    """Precondition or internal-consistency failure in a functional."""


def _require_no_origin_atom(g: RadialMeasure, who: str) -> None:
    if g.atom0 != 0.0:
        raise FunctionalError(f"{who} is defined on (0,inf)^2; split the origin atom first")


# ---------------------------------------------------------------------------
# Nodes for the measure nu = g(x) / sqrt(x) dx
# ---------------------------------------------------------------------------

def _nu_atom_nodes(g: RadialMeasure) -> tuple[np.ndarray, np.ndarray]:
    if not g.atoms.size:
        return np.empty(0), np.empty(0)
    x = g.atoms[:, 0]
    return x, g.atoms[:, 1] / np.sqrt(x)


def _nu_density_nodes(g: RadialMeasure, order: int) -> tuple[np.ndarray, np.ndarray]:
    if not g.has_density:
        return np.empty(0), np.empty(0)
    x, w = sqrt_nodes(g.grid.edges, order)
    w = w * g.density[:, None]
    return x.ravel(), w.ravel()


# ---------------------------------------------------------------------------
# Pair-kernel double sums
# ---------------------------------------------------------------------------

def _pair_sum_full(phi: TestFunction, x: np.ndarray, w: np.ndarray,
                   block: int = 2048) -> float:
    """sum_{k,l} w_k w_l Lambda(phi)(x_k, x_l) over all ordered pairs."""
    n = x.size
    total = 0.0
    for i0 in range(0, n, block):
        xi = x[i0:i0 + block, None]
        wi = w[i0:i0 + block, None]
        lam = lambda_kernel(phi, xi, x[None, :])
        total += float(np.sum(wi * (w[None, :] * lam)))
    return total


def _pair_sum_windowed(phi: TestFunction, x: np.ndarray, w: np.ndarray,
                       eps: float, block: int = 2048) -> float:
    """Same sum when Lambda(phi) vanishes outside the strip |x-y| < eps.

    That covers the shrinking family: x+y < eps forces |x-y| < eps too.
    Requires x sorted ascending; off-diagonal pairs are visited once with
    weight 2, so each row block only scans its forward slab.
    """
    n = x.size
    total = 0.0
    for i0 in range(0, n, block):
        hi = min(i0 + block, n)
        hi_col = int(np.searchsorted(x, x[hi - 1] + eps))
        xi = x[i0:hi, None]
        wi = w[i0:hi, None]
        xs = x[None, i0:hi_col]
        lam = lambda_kernel(phi, xi, xs)
        jj = np.arange(i0, hi_col)[None, :]
        kk = np.arange(i0, hi)[:, None]
        fac = np.where(jj > kk, 2.0, 1.0) * (jj >= kk)
        total += float(np.sum(wi * (w[None, i0:hi_col] * lam * fac)))
    return total


def _pair_sum_suffix(phi: TestFunction, x: np.ndarray, w: np.ndarray,
                     k: float, block: int = 2048) -> float:
    """Same sum when Lambda(phi) vanishes unless x + y > k (cap families)."""
    n = x.size
    total = 0.0
    for i0 in range(0, n, block):
        hi = min(i0 + block, n)
        lo_col = max(i0, int(np.searchsorted(x, k - x[hi - 1])))
        if lo_col >= n:
            continue
        xi = x[i0:hi, None]
        wi = w[i0:hi, None]
        xs = x[None, lo_col:]
        lam = lambda_kernel(phi, xi, xs)
        jj = np.arange(lo_col, n)[None, :]
        kk = np.arange(i0, hi)[:, None]
        fac = np.where(jj > kk, 2.0, 1.0) * (jj >= kk) * ((xi + xs) > k)
        total += float(np.sum(wi * (w[None, lo_col:] * lam * fac)))
    return total


def _min_sq_pair_sum(x: np.ndarray, w: np.ndarray) -> float:
    """sum_{k,l} w_k w_l * 2 min(x_k, x_l)^2 via prefix sums (x sorted)."""
    wx2 = w * x * x
    prefix = np.concatenate(([0.0], np.cumsum(wx2)))[:-1]
    return float(np.sum(2.0 * (2.0 * w * prefix + w * wx2)))


def _pair_sum(phi: TestFunction, x: np.ndarray, w: np.ndarray) -> float:
    if x.size == 0:
        return 0.0
    order = np.argsort(x, kind="stable")
    x, w = x[order], w[order]
    name = phi.name
    if name.startswith("phi_eps:") and phi.kinks:
        return _pair_sum_windowed(phi, x, w, eps=phi.kinks[0])
    if name.startswith("cap:") and phi.kinks:
        return _pair_sum_suffix(phi, x, w, k=phi.kinks[0])
    if name == "pow:2":
        return _min_sq_pair_sum(x, w)
    return _pair_sum_full(phi, x, w)


def _diagonal_cell_correction(phi: TestFunction, g: RadialMeasure, order: int,
                              tri_order: int = 8) -> float:
    """Replace the tensor panel on each (cell, cell) pair by a triangle rule.

    The integrand Lambda(phi)(u^2, v^2) has a corner on u = v; splitting the
    square into its two triangles restores high-order convergence there.
    Returns (triangle estimate) - (tensor estimate) summed over cells.
    """
    edges = g.grid.edges
    rho = g.density
    live = rho > 0
    if not np.any(live):
        return 0.0
    ua = np.sqrt(edges[:-1])[live]
    ub = np.sqrt(edges[1:])[live]
    r = rho[live]
    t, wt = gauss_01(tri_order)
    # tensor estimate on the cell's own nodes (same rule as the global sum)
    ts, tw = gauss_01(order)
    un = ua[:, None] + (ub - ua)[:, None] * ts[None, :]
    wn = 2.0 * (ub - ua)[:, None] * tw[None, :]
    lam = lambda_kernel(phi, un[:, :, None] ** 2, un[:, None, :] ** 2)
    tensor = np.sum(wn[:, :, None] * wn[:, None, :] * lam, axis=(1, 2))
    # triangle estimate: 2 * int_{ua<u<v<ub}, outer v, inner u in [ua, v]
    v = ua[:, None] + (ub - ua)[:, None] * t[None, :]
    wv = (ub - ua)[:, None] * wt[None, :]
    u = ua[:, None, None] + (v - ua[:, None])[:, :, None] * t[None, None, :]
    wu = (v - ua[:, None])[:, :, None] * wt[None, None, :]
    lam = lambda_kernel(phi, u * u, v[:, :, None] ** 2)
    tri = 2.0 * 4.0 * np.sum(wv[:, :, None] * wu * lam, axis=(1, 2))
    return float(np.sum(r * r * (tri - tensor)))


def _cross_atom_density(phi: TestFunction, g: RadialMeasure, order: int) -> float:
    """2 * sum_atoms int Lambda(phi)(x_i, y) dnu(y) * w_i/sqrt(x_i).

    The cell containing the atom is re-integrated with a split at y = x_i,
    where the pair kernel has its corner.
    """
    if not (g.atoms.size and g.has_density):
        return 0.0
    xd, wd = _nu_density_nodes(g, order)
    edges = g.grid.edges
    total = 0.0
    for xi, wi in g.atoms:
        vals = float(np.sum(wd * lambda_kernel(phi, xi, xd)))
        c = int(np.searchsorted(edges, xi, side="right")) - 1
        if 0 <= c < g.grid.n_cells and g.density[c] > 0 and edges[c] < xi < edges[c + 1]:
            sub_old = np.array([edges[c], edges[c + 1]])
            sub_new = np.array([edges[c], xi, edges[c + 1]])
            for sub, sign in ((sub_old, -1.0), (sub_new, +1.0)):
                xs, ws = sqrt_nodes(sub, max(order, 8))
                vals += sign * g.density[c] * float(
                    np.sum(ws * lambda_kernel(phi, xi, xs)))
        total += 2.0 * (wi / math.sqrt(xi)) * vals
    return total


def q3_quadratic(phi: TestFunction, g: RadialMeasure, order: int = 4) -> float:
    """Quadratic functional: iint Lambda(phi)(x,y)/sqrt(xy) g(x)g(y) dx dy.

    Atom pairs (including each atom against itself) are summed exactly;
    density panels get the sqrt-substituted rule plus the diagonal-cell
    triangle correction; atom-density cross terms are 1-D panels split at
    the atom position.
    """
    _require_no_origin_atom(g, "q3_quadratic")
    xa, wa = _nu_atom_nodes(g)
    total = _pair_sum(phi, xa, wa) if xa.size else 0.0
    if g.has_density:
        xd, wd = _nu_density_nodes(g, order)
        total += _pair_sum(phi, xd, wd)
        total += _diagonal_cell_correction(phi, g, order)
        total += _cross_atom_density(phi, g, order)
    return total


def _linear_sum(kernel, phi: TestFunction, g: RadialMeasure, order: int) -> float:
    total = 0.0
    if g.atoms.size:
        x = g.atoms[:, 0]
        total += float(np.sum(g.atoms[:, 1] * kernel(phi, x) / np.sqrt(x)))
    if g.has_density:
        edges = g.grid.edges
        if phi.kinks:
            inner = [k for k in phi.kinks if edges[0] < k < edges[-1]]
            if inner:
                edges = np.unique(np.concatenate([edges, inner]))
                rho = g.density[np.searchsorted(g.grid.edges, edges[:-1], side="right") - 1]
            else:
                rho = g.density
        else:
            rho = g.density
        x, w = sqrt_nodes(edges, order)
        total += float(np.sum(rho[:, None] * w * kernel(phi, x)))
    return total


def q3_linear(phi: TestFunction, g: RadialMeasure, order: int = 8) -> float:
    """Linear functional with the origin-weighted kernel: int L0(phi)(x)/sqrt(x) g dx."""
    _require_no_origin_atom(g, "q3_linear")
    return _linear_sum(ell0_kernel, phi, g, order)


def q3_linear_tilde(phi: TestFunction, g: RadialMeasure, order: int = 8) -> float:
    """Linear functional with the plain kernel: int L(phi)(x)/sqrt(x) g dx."""
    _require_no_origin_atom(g, "q3_linear_tilde")
    return _linear_sum(ell_kernel, phi, g, order)


def q3_pair(phi: TestFunction, g: RadialMeasure, order: int = 4,
            linear_order: int = 8) -> tuple[float, float]:
    """(q3, q3_tilde) with the shift identity asserted.

    q3 = quadratic - linear(L0); q3_tilde = quadratic - linear(L); they must
    differ by phi(0) M_{1/2}(g) to IDENTITY_RTOL of the natural scale.
    """
    quad = q3_quadratic(phi, g, order)
    lin0 = q3_linear(phi, g, linear_order)
    lin = q3_linear_tilde(phi, g, linear_order)
    v3 = quad - lin0
    v3t = quad - lin
    phi0 = float(phi.f(np.array(0.0)))
    shift = phi0 * moment(g, 0.5)
    resid = abs(v3 - (v3t - shift))
    scale = abs(quad) + abs(lin0) + abs(lin) + abs(shift) + 1e-300
    if resid > IDENTITY_RTOL * max(scale, 1e-30):
        raise FunctionalError(
            f"shift identity violated: residual {resid:.3e} vs scale {scale:.3e}")
    return v3, v3t


def q3(phi: TestFunction, g: RadialMeasure, order: int = 4) -> float:
    """Three-wave functional Q3 = Q3^(2) - Q3^(1)."""
    return q3_pair(phi, g, order)[0]


def q3_tilde(phi: TestFunction, g: RadialMeasure, order: int = 4) -> float:
    """Variant without the origin weighting; Q3 = Q3~ - phi(0) M_{1/2}(g)."""
    return q3_pair(phi, g, order)[1]


# ---------------------------------------------------------------------------
# Boundary-completed weight and the cubic functionals
# ---------------------------------------------------------------------------

def weight_w(x1, x2, x3):
    """min(sqrt x1..x4)/sqrt(x1 x2 x3) on the open octant, extended to the
    boundary by its continuous limits; zero where no limit exists."""
    x1, x2, x3 = np.broadcast_arrays(np.asarray(x1, float), np.asarray(x2, float),
                                     np.asarray(x3, float))
    x4 = np.maximum(x1 + x2 - x3, 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        interior = (x1 > 0) & (x2 > 0) & (x3 > 0)
        w_min = np.minimum(np.minimum(np.sqrt(x1), np.sqrt(x2)),
                           np.minimum(np.sqrt(np.abs(x3)), np.sqrt(x4)))
        face3 = (x3 == 0) & (x1 > 0) & (x2 > 0)
        face2 = (x2 == 0) & (x1 > x3) & (x3 > 0)
        face1 = (x1 == 0) & (x2 > x3) & (x3 > 0)
        out = np.select(
            [interior, face3, face2, face1],
            [w_min / np.sqrt(np.abs(x1 * x2 * x3) + 1e-300),
             1.0 / np.sqrt(np.abs(x1 * x2) + 1e-300),
             1.0 / np.sqrt(np.abs(x1 * x3) + 1e-300),
             1.0 / np.sqrt(np.abs(x2 * x3) + 1e-300)],
            default=0.0,
        )
    return out


def phi_capital(phi: TestFunction, x1, x2, x3):
    """Phi_phi = W * Delta(phi); continuous up to the boundary for C^{1,1} phi."""
    return weight_w(x1, x2, x3) * delta_phi(phi, x1, x2, x3)


def _all_atoms(G: RadialMeasure) -> tuple[np.ndarray, np.ndarray]:
    xs = G.atoms[:, 0] if G.atoms.size else np.empty(0)
    ws = G.atoms[:, 1] if G.atoms.size else np.empty(0)
    if G.atom0 > 0:
        xs = np.concatenate(([0.0], xs))
        ws = np.concatenate(([G.atom0], ws))
    return xs, ws


def _pair_x3_integral(phi: TestFunction, xi: float, xj: float, order: int = 16) -> float:
    """int_0^{xi+xj} sqrt(x3) Phi_phi(xi, xj, x3) dx3.

    The weight's min switches at x3 in {xi, xj, s/2} and phi's curvature
    breaks at its kinks (as x3 or through x4 = s - x3); segments are split
    there and integrated in u = sqrt(x3) on [0, s/2] and v = sqrt(s - x3)
    on [s/2, s], which removes the square-root endpoints.
    """
    s = xi + xj
    if s <= 0:
        return 0.0
    brk = {0.0, s, 0.5 * s, xi, xj}
    for kappa in phi.kinks:
        brk.add(kappa)
        brk.add(s - kappa)
    brk = np.array(sorted(b for b in brk if 0.0 <= b <= s))
    t, wt = gauss_01(order)
    total = 0.0
    for lo, hi in zip(brk[:-1], brk[1:]):
        if hi <= lo:
            continue
        if hi <= 0.5 * s + 1e-300:
            u0, u1 = math.sqrt(lo), math.sqrt(hi)
            u = u0 + (u1 - u0) * t
            x3 = u * u
            fac = 2.0 * u * (u1 - u0) * wt
        else:
            v0, v1 = math.sqrt(s - hi), math.sqrt(s - lo)
            v = v0 + (v1 - v0) * t
            x3 = s - v * v
            fac = 2.0 * v * (v1 - v0) * wt
        total += float(np.sum(fac * np.sqrt(x3) * phi_capital(phi, xi, xj, x3)))
    return total


def _q4_atomic(phi: TestFunction, xs: np.ndarray, ws: np.ndarray,
               x3_order: int = 16) -> float:
    if xs.size == 0:
        return 0.0
    cubic = float(np.sum(
        ws[:, None, None] * ws[None, :, None] * ws[None, None, :]
        * phi_capital(phi, xs[:, None, None], xs[None, :, None], xs[None, None, :])))
    quad = 0.0
    for i, (xi, wi) in enumerate(zip(xs, ws)):
        for xj, wj in zip(xs, ws):
            quad += wi * wj * _pair_x3_integral(phi, xi, xj, x3_order)
    return cubic + 0.5 * quad


def q4_full(phi: TestFunction, G: RadialMeasure) -> float:
    """Four-wave weak functional on an atomic measure (origin atom included).

    The cubic term is an exact triple sum with the boundary-completed weight;
    the quadratic term integrates x3 over [0, x1+x2] pairwise (the weight
    vanishes beyond since x4 = 0 there).  Densities are out of desk scope.
    """
    if G.has_density:
        raise FunctionalError("q4_full supports atomic measures only")
    xs, ws = _all_atoms(G)
    return _q4_atomic(phi, xs, ws)


def q4_script(phi: TestFunction, g: RadialMeasure) -> float:
    """Same functional restricted to measures with no origin atom."""
    _require_no_origin_atom(g, "q4_script")
    if g.has_density:
        raise FunctionalError("q4_script supports atomic measures only")
    return _q4_atomic(phi, g.atoms[:, 0] if g.atoms.size else np.empty(0),
                      g.atoms[:, 1] if g.atoms.size else np.empty(0))


# ---------------------------------------------------------------------------
# Transfer functional (mass flux into the condensate)
# ---------------------------------------------------------------------------

@dataclass
class TransferResult:
    eps: list[float]
    estimates: list[float]
    extrapolated: float
    converged: bool
    warnings: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"eps": self.eps, "estimates": self.estimates,
                "extrapolated": self.extrapolated, "converged": self.converged,
                "warnings": self.warnings}


def transfer_functional(g: RadialMeasure, eps_sequence, order: int = 4) -> TransferResult:
    """Limit of the quadratic functional against the shrinking family.

    Evaluates Q3^(2)(phi_eps, g) along eps_sequence (strictly decreasing) and
    Aitken-extrapolates.  Estimates with eps under the resolution floor
    (three grid cells at the origin) are computed but tagged: there they
    measure the mesh, not the measure.
    """
    eps_sequence = [float(e) for e in eps_sequence]
    if len(eps_sequence) < 1 or any(b >= a for a, b in zip(eps_sequence, eps_sequence[1:])):
        raise FunctionalError("eps_sequence must be strictly decreasing")
    warnings = []
    floor = 0.0
    if g.has_density and g.density[0] > 0:
        floor = float(g.grid.edges[min(3, g.grid.n_cells)])
    estimates = []
    for e in eps_sequence:
        if e < floor:
            warnings.append(f"eps={e:g} below resolution floor {floor:g}")
        estimates.append(q3_quadratic(phi_eps(e), g, order))
    vals = np.asarray(estimates)
    converged = True
    extrapolated = float(vals[-1])
    if vals.size >= 3:
        d = np.diff(vals)
        tail = np.abs(d[-2:])
        if tail[1] > tail[0] * 1.5 and tail[1] > 1e-12 * max(1.0, abs(vals[-1])):
            converged = False
            warnings.append("successive estimates diverge; no extrapolation")
        else:
            denom = d[-1] - d[-2]
            if abs(denom) > 1e-14 * max(1.0, abs(vals[-1])):
                extrapolated = float(vals[-1] - d[-1] ** 2 / denom)
    return TransferResult(eps_sequence, [float(v) for v in vals],
                          extrapolated, converged, warnings)


# ---------------------------------------------------------------------------
# JSON log records
# ---------------------------------------------------------------------------

@dataclass
class FunctionalRecord:
    functional: str
    phi: str
    value: float
    tol: float | None = None
    parts: dict | None = None

    def to_dict(self) -> dict:
        doc = {"functional": self.functional, "phi": self.phi, "value": self.value}
        if self.tol is not None:
            doc["tol"] = self.tol
        if self.parts is not None:
            doc["parts"] = self.parts
        return doc
