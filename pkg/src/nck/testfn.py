"""Test functions and the pointwise collision kernels.

A TestFunction bundles an evaluator with an exact antiderivative (F(0) = 0),
optional derivatives, and caller-asserted shape flags.  Flags cannot be
proven from an evaluator, so construction spot-audits them on random points
and raises on any violation.  The antiderivative is what turns the linear
kernels into closed forms:

    pair kernel      Lambda(phi)(x, y) = phi(x+y) + phi(|x-y|) - 2 phi(max(x, y))
    linear kernel    L(phi)(x)  = x phi(x) - 2 int_0^x phi
    origin variant   L0(phi)(x) = L(phi)(x) + x phi(0)
    four-point diff  Dphi(x1, x2, x3) = phi(x4) + phi(x3) - phi(x2) - phi(x1),
                     x4 = (x1 + x2 - x3)_+
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

_AUDIT_RNG = np.random.default_rng(20260809)
_AUDIT_POINTS = 64


class FlagAuditError(ValueError):
    """A caller-asserted flag failed its random spot check."""


@dataclass(frozen=True)
class TestFunction:
    """Scalar test function with exact antiderivative access.

    f and antiderivative must accept numpy arrays.  sup_norm / sup_deriv /
    sup_second are the sup norms used by the kernel bounds; lipschitz_constant
    defaults to sup_deriv.  kinks lists the curvature breakpoints of the
    built-in families so quadrature layers can split segments there.
    """

    name: str
    f: Callable[[np.ndarray], np.ndarray]
    antiderivative: Callable[[np.ndarray], np.ndarray]
    derivative: Callable[[np.ndarray], np.ndarray] | None = None
    second_derivative: Callable[[np.ndarray], np.ndarray] | None = None
    sup_norm: float | None = None
    sup_deriv: float | None = None
    sup_second: float | None = None
    bounded: bool = False
    convex: bool = False
    concave: bool = False
    nonincreasing: bool = False
    nonnegative: bool = False
    kinks: tuple[float, ...] = ()
    audit_scale: float = 4.0

    def __post_init__(self):
        self._audit()

    def __call__(self, x):
        return self.f(np.asarray(x, dtype=float))

    @property
    def lipschitz_constant(self) -> float | None:
        return self.sup_deriv

    def _audit(self):
        pts = _AUDIT_RNG.uniform(0.0, self.audit_scale, _AUDIT_POINTS)
        F0 = float(self.antiderivative(np.array(0.0)))
        if abs(F0) > 1e-12:
            raise FlagAuditError(f"{self.name}: antiderivative(0) = {F0!r}, expected 0")
        # antiderivative consistency: centered difference vs evaluator; the
        # step must sit below the family's finest feature scale
        h = 1e-5
        if self.kinks:
            h = min(h, 1.6e-3 * min(self.kinks))
        Fp = (self.antiderivative(pts + h) - self.antiderivative(pts - h)) / (2 * h)
        fv = self.f(pts)
        scale = np.maximum(np.abs(fv), 1.0)
        if np.any(np.abs(Fp - fv) > 2e-6 * scale):
            raise FlagAuditError(f"{self.name}: antiderivative inconsistent with evaluator")
        a, b = np.sort(_AUDIT_RNG.uniform(0.0, self.audit_scale, (2, _AUDIT_POINTS)), axis=0)
        mid = self.f((a + b) / 2)
        chord = (self.f(a) + self.f(b)) / 2
        if self.convex and np.any(mid > chord + 1e-10):
            raise FlagAuditError(f"{self.name}: convex flag fails midpoint inequality")
        if self.concave and np.any(mid < chord - 1e-10):
            raise FlagAuditError(f"{self.name}: concave flag fails midpoint inequality")
        if self.nonincreasing and np.any(self.f(b) > self.f(a) + 1e-10):
            raise FlagAuditError(f"{self.name}: nonincreasing flag violated")
        if self.nonnegative and np.any(fv < -1e-12):
            raise FlagAuditError(f"{self.name}: nonnegative flag violated")
        if self.bounded and self.sup_norm is not None:
            if np.any(np.abs(fv) > self.sup_norm * (1 + 1e-12) + 1e-12):
                raise FlagAuditError(f"{self.name}: sup_norm too small")


TestFunction.__test__ = False  # quiet pytest collection


# ---------------------------------------------------------------------------
# Kernels
# ---------------------------------------------------------------------------

def lambda_kernel(phi: TestFunction, x, y):
    """phi(x+y) + phi(|x-y|) - 2 phi(max(x, y)); symmetric in (x, y)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    return phi.f(x + y) + phi.f(np.abs(x - y)) - 2.0 * phi.f(np.maximum(x, y))


def ell_kernel(phi: TestFunction, x):
    """x phi(x) - 2 int_0^x phi, via the exact antiderivative."""
    x = np.asarray(x, dtype=float)
    return x * phi.f(x) - 2.0 * phi.antiderivative(x)


def ell0_kernel(phi: TestFunction, x):
    """ell_kernel + x phi(0) (identity used instead of a second quadrature)."""
    x = np.asarray(x, dtype=float)
    phi0 = float(phi.f(np.array(0.0)))
    return ell_kernel(phi, x) + x * phi0


def delta_phi(phi: TestFunction, x1, x2, x3):
    """phi(x4) + phi(x3) - phi(x2) - phi(x1) with x4 = (x1 + x2 - x3)_+."""
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    x3 = np.asarray(x3, dtype=float)
    x4 = np.maximum(x1 + x2 - x3, 0.0)
    return phi.f(x4) + phi.f(x3) - phi.f(x2) - phi.f(x1)


# ---------------------------------------------------------------------------
# Built-in families
# ---------------------------------------------------------------------------

def one() -> TestFunction:
    return TestFunction(
        name="one",
        f=lambda x: np.ones_like(x),
        antiderivative=lambda x: x,
        derivative=lambda x: np.zeros_like(x),
        second_derivative=lambda x: np.zeros_like(x),
        sup_norm=1.0, sup_deriv=0.0, sup_second=0.0,
        bounded=True, convex=True, concave=True,
        nonincreasing=True, nonnegative=True,
    )


def identity() -> TestFunction:
    return TestFunction(
        name="x",
        f=lambda x: x,
        antiderivative=lambda x: 0.5 * x * x,
        derivative=lambda x: np.ones_like(x),
        second_derivative=lambda x: np.zeros_like(x),
        sup_deriv=1.0, sup_second=0.0,
        convex=True, concave=True, nonnegative=True,
    )


def power(alpha: float) -> TestFunction:
    if alpha <= 0:
        raise ValueError("power family needs alpha > 0")
    return TestFunction(
        name=f"pow:{alpha:g}",
        f=lambda x: x ** alpha,
        antiderivative=lambda x: x ** (alpha + 1.0) / (alpha + 1.0),
        derivative=lambda x: alpha * np.maximum(x, 1e-300) ** (alpha - 1.0),
        second_derivative=(lambda x: alpha * (alpha - 1.0)
                           * np.maximum(x, 1e-300) ** (alpha - 2.0)),
        convex=alpha >= 1.0, concave=alpha <= 1.0, nonnegative=True,
    )


def phi_eps(eps: float) -> TestFunction:
    """The shrinking family (1 - x/eps)^2_+: convex, nonincreasing, phi(0) = 1."""
    if eps <= 0:
        raise ValueError("phi_eps needs eps > 0")
    e = float(eps)

    def f(x):
        return np.maximum(1.0 - x / e, 0.0) ** 2

    def F(x):
        # int_0^x (1 - t/e)^2 dt = (e/3)(1 - (1 - x/e)^3) for x <= e, e/3 after
        return (e / 3.0) * (1.0 - np.maximum(1.0 - x / e, 0.0) ** 3)

    def df(x):
        return -(2.0 / e) * np.maximum(1.0 - x / e, 0.0)

    def d2f(x):
        return np.where(x < e, 2.0 / (e * e), 0.0)

    return TestFunction(
        name=f"phi_eps:{eps:g}", f=f, antiderivative=F, derivative=df,
        second_derivative=d2f,
        sup_norm=1.0, sup_deriv=2.0 / e, sup_second=2.0 / (e * e),
        bounded=True, convex=True, nonincreasing=True, nonnegative=True,
        kinks=(e,), audit_scale=max(4.0, 2.0 * e),
    )


def cap(k: float) -> TestFunction:
    """Concave C^1 cap: x below k, quadratic blend x - (x-k)^2/4 on [k, k+2],
    constant k+1 after.  sup|phi'| = 1 uniformly in k."""
    if k <= 0:
        raise ValueError("cap family needs k > 0")
    kk = float(k)

    def f(x):
        mid = x - 0.25 * (x - kk) ** 2
        return np.where(x < kk, x, np.where(x <= kk + 2.0, mid, kk + 1.0))

    def F(x):
        below = 0.5 * x * x
        xm = np.clip(x, kk, kk + 2.0)
        mid_part = (0.5 * (xm * xm - kk * kk) - (xm - kk) ** 3 / 12.0)
        above = np.maximum(x - kk - 2.0, 0.0) * (kk + 1.0)
        return np.where(x < kk, below, 0.5 * kk * kk + mid_part + above)

    def df(x):
        return np.where(x < kk, 1.0,
                        np.where(x <= kk + 2.0, 1.0 - 0.5 * (x - kk), 0.0))

    def d2f(x):
        return np.where((x >= kk) & (x <= kk + 2.0), -0.5, 0.0)

    return TestFunction(
        name=f"cap:{k:g}", f=f, antiderivative=F, derivative=df,
        second_derivative=d2f,
        sup_norm=kk + 1.0, sup_deriv=1.0, sup_second=0.5,
        bounded=True, concave=True, nonnegative=True,
        kinks=(kk, kk + 2.0), audit_scale=max(4.0, kk + 4.0),
    )


def linear_combination(phis: Sequence[TestFunction], coeffs: Sequence[float],
                       name: str | None = None) -> TestFunction:
    """Nonnegative combinations preserve convex/nonincreasing/nonnegative flags."""
    coeffs = [float(c) for c in coeffs]
    if len(coeffs) != len(phis):
        raise ValueError("one coefficient per function")
    nonneg_coeffs = all(c >= 0 for c in coeffs)

    def f(x):
        return sum(c * p.f(x) for c, p in zip(coeffs, phis))

    def F(x):
        return sum(c * p.antiderivative(x) for c, p in zip(coeffs, phis))

    sup_norm = (sum(abs(c) * p.sup_norm for c, p in zip(coeffs, phis))
                if all(p.sup_norm is not None for p in phis) else None)
    sup_deriv = (sum(abs(c) * p.sup_deriv for c, p in zip(coeffs, phis))
                 if all(p.sup_deriv is not None for p in phis) else None)
    kinks = tuple(sorted({k for p in phis for k in p.kinks}))
    return TestFunction(
        name=name or "+".join(f"{c:g}*{p.name}" for c, p in zip(coeffs, phis)),
        f=f, antiderivative=F,
        sup_norm=sup_norm, sup_deriv=sup_deriv,
        bounded=all(p.bounded for p in phis),
        convex=nonneg_coeffs and all(p.convex for p in phis),
        nonincreasing=nonneg_coeffs and all(p.nonincreasing for p in phis),
        nonnegative=nonneg_coeffs and all(p.nonnegative for p in phis),
        kinks=kinks,
    )


def by_name(spec: str) -> TestFunction:
    """Resolve config names: "one", "x", "pow:a", "phi_eps:e", "cap:k"."""
    head, _, arg = spec.partition(":")
    if head == "one":
        return one()
    if head == "x":
        return identity()
    if head == "pow":
        return power(float(arg))
    if head == "phi_eps":
        return phi_eps(float(arg))
    if head == "cap":
        return cap(float(arg))
    raise ValueError(f"unknown test function {spec!r}")
