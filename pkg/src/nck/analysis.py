"""Closed-form constants and inequality evaluators for trajectories.

Everything here is a pure function of numbers or of persisted trajectory
columns; nothing reaches into solver internals.  The checks return
BoundReport rows, the machine-readable verdict format the CLI serializes to
bounds.json.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .evolution import Trajectory, moment_envelope

# Riemann zeta at 3/2 and 5/2, 12 significant digits (standard tables; cf.
# scipy.special.zeta, which reproduces these to full double precision).
ZETA_3_2 = 2.61237534869
ZETA_5_2 = 1.34148725725


class AnalysisError(ValueError):
    pass


@dataclass
class BoundReport:
    """One inequality verdict: lhs <= rhs within slack, or an equality check."""

    name: str
    tag: str
    lhs: float
    rhs: float
    slack: float
    verdict: str                      # PASS | FAIL | NOT_APPLICABLE
    location: float | None = None     # t (or tau) of the worst margin
    detail: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        doc = {"name": self.name, "tag": self.tag, "lhs": self.lhs,
               "rhs": self.rhs, "slack": self.slack, "verdict": self.verdict,
               "location": self.location}
        if self.detail:
            doc["detail"] = self.detail
        return doc


def _verdict(lhs: float, rhs: float, slack: float) -> str:
    return "PASS" if lhs <= slack * rhs else "FAIL"


# ---------------------------------------------------------------------------
# Closed forms
# ---------------------------------------------------------------------------

def moment_bound_apriori(m_alpha0: float, E: float, alpha: float, tau: float) -> float:
    """Growth envelope for moments of order alpha >= 3 in the tau variable."""
    return float(moment_envelope(m_alpha0, E, alpha, tau))


def uniform_moment_constants(alpha: float, E: float) -> tuple[float, float]:
    """(C, gamma) of the tau-uniform moment bound.

    C is the unique positive root of
        2^(alpha-2) (alpha+1) E^((2alpha+3)/(2(alpha-1))) (1 + C)
            = C^((2alpha-1)/(2(alpha-1))),
    found by bracketing and brentq to 1e-12 relative; gamma follows as
    (C/E)^(1/(2(alpha-1))) / (2(alpha+1)).
    """
    if alpha < 3 or E <= 0:
        raise AnalysisError("need alpha >= 3 and E > 0")
    K = 2.0 ** (alpha - 2.0) * (alpha + 1.0) * E ** ((2 * alpha + 3) / (2 * (alpha - 1)))
    p = (2 * alpha - 1) / (2 * (alpha - 1))

    def f(c):
        return c ** p - K * (1.0 + c)

    hi = max(10.0, (4.0 * K) ** (1.0 / (p - 1.0)))
    for _ in range(200):
        if f(hi) > 0:
            break
        hi *= 4.0
    else:
        raise AnalysisError("no sign change while bracketing the moment constant")
    C = float(brentq(f, 1e-30, hi, xtol=1e-300, rtol=1e-14))
    gamma = (C / E) ** (1.0 / (2.0 * (alpha - 1.0))) / (2.0 * (alpha + 1.0))
    return C, gamma


def uniform_moment_bound(alpha: float, E: float, tau: float) -> float:
    """C(alpha,E) (1 - e^(-gamma tau))^(-2(alpha-1)); +inf as tau -> 0+."""
    if tau <= 0:
        raise AnalysisError("tau must be positive")
    C, gamma = uniform_moment_constants(alpha, E)
    return C * (1.0 / (-math.expm1(-gamma * tau))) ** (2.0 * (alpha - 1.0))


def decay_threshold(alpha: float) -> float:
    """Critical coefficient of E > C(alpha) N^(5/3) for moment decay."""
    if not 1.0 < alpha <= 3.0:
        raise AnalysisError("alpha must lie in (1, 3]")
    if alpha <= 2.0:
        return ((2.0 ** alpha - 2.0) * (alpha + 1.0) / (alpha - 1.0)) ** (2.0 / 3.0)
    return (alpha * (alpha + 1.0)) ** (2.0 / 3.0)


def critical_constant_b() -> float:
    """b in E/N^(5/3) = b T/T_c."""
    return 3.0 * (2.0 * math.pi) ** (-1.0 / 3.0) * ZETA_5_2 / ZETA_3_2 ** (5.0 / 3.0)


def temperature_ratio(N: float, E: float) -> float:
    """T/T_c of the equilibrium with the same particle number and energy."""
    if N <= 0:
        raise AnalysisError("N must be positive")
    return E / (critical_constant_b() * N ** (5.0 / 3.0))


def decay_integral_bound(N: float, E: float, alpha: float, m_alpha_t0: float) -> float | None:
    """m_alpha_t0 * C(N, E, alpha) bounding the remaining condensate integral.

    Requires the supercriticality condition E > C(alpha) N^(5/3); returns
    None when it fails (the caller reports NOT_APPLICABLE).
    """
    if not 1.0 < alpha <= 3.0:
        raise AnalysisError("alpha must lie in (1, 3]")
    if E <= decay_threshold(alpha) * N ** (5.0 / 3.0):
        return None
    c1 = (2.0 ** alpha - 2.0) if alpha <= 2.0 else alpha * (alpha - 1.0)
    denom = ((alpha - 1.0) / (alpha + 1.0)) * E ** ((2 * alpha + 1) / 2.0) \
        * N ** ((1 - 2 * alpha) / 2.0) - c1 * N ** (3.0 - alpha) * E ** (alpha - 1.0)
    if denom <= 0:
        return None
    return m_alpha_t0 / denom


def origin_flux_bound(N: float, E: float, R: float, alpha: float, T: float,
                      int_n_dt: float) -> float:
    """Bound on int_0^T n(t) int_(0,R] x^alpha G dx dt.

    Blows up as alpha -> -1/2 (below which no such bound can hold, since the
    equilibria carry exactly the x^(-1/2) profile).
    """
    if alpha <= -0.5:
        raise AnalysisError("alpha must exceed -1/2")
    pref = 2.0 * R ** (0.5 + alpha) / (1.0 - (2.0 / 3.0) ** (0.5 + alpha))
    return pref * math.sqrt(int_n_dt) * (math.sqrt(E) / 2.0 * int_n_dt + math.sqrt(N))


def concentration_times(delta: float) -> float:
    """T0(delta) = 64/delta^3 (1 - delta/2): waiting time of the mass-shift lemma."""
    if not 0.0 < delta <= 1.0:
        raise AnalysisError("delta must lie in (0, 1]")
    return 64.0 / delta ** 3 * (1.0 - delta / 2.0)


def t_star(alpha: float) -> float:
    """Iterated concentration time for the power-law floor with exponent alpha."""
    if not 0.0 < alpha < 1.0:
        raise AnalysisError("alpha must lie in (0, 1)")
    delta = 1.0 - 2.0 ** (-alpha)
    return concentration_times(delta) / (1.0 - 2.0 ** (-(1.0 - alpha)))


def lower_envelope_check(traj: Trajectory, alpha: float, tau0: float) -> BoundReport:
    """Descriptive power-law floor fit: mass([0, r]) >= C r^alpha for r <= R*.

    The largest (C, R*) pair consistent with the sampled records at tau >=
    tau0 is reported; absence of near-origin mass gives NOT_APPLICABLE.
    This is a report, never a failure: the constants are existential.
    """
    if not 0.0 < alpha < 1.0:
        raise AnalysisError("alpha must lie in (0, 1)")
    radii = sorted(float(r) for r in traj.meta.get("envelope_radii", []))
    if not radii:
        raise AnalysisError("trajectory carries no cumulative-mass columns")
    taus = traj.columns["tau"]
    sel = taus >= tau0
    if not np.any(sel):
        return BoundReport("lower-envelope", "power-law-floor", 0.0, 0.0, 1.0,
                           "NOT_APPLICABLE", detail={"reason": "no records past tau0"})
    best = (0.0, 0.0, None)  # (C * R*^alpha, R*, location)
    for i, rstar in enumerate(radii):
        cvals = []
        for r in radii[: i + 1]:
            col = traj.columns[f"cum_r{r:g}"][sel]
            cvals.append((float(np.min(col)) / r ** alpha, float(taus[sel][np.argmin(col)])))
        c, loc = min(cvals, key=lambda p: p[0])
        if c * rstar ** alpha > best[0]:
            best = (c * rstar ** alpha, rstar, loc)
    strength, rstar, loc = best
    if strength <= 0.0:
        return BoundReport("lower-envelope", "power-law-floor", 0.0, 0.0, 1.0,
                           "NOT_APPLICABLE",
                           detail={"reason": "no mass near the origin yet"})
    C = strength / rstar ** alpha
    return BoundReport("lower-envelope", "power-law-floor", C, rstar, 1.0, "PASS",
                       location=loc, detail={"alpha": alpha, "C": C, "R_star": rstar})


# ---------------------------------------------------------------------------
# Trajectory check suite
# ---------------------------------------------------------------------------

def run_checks(traj: Trajectory, slack: float = 1.01,
               suite: str = "full") -> list[BoundReport]:
    """Evaluate every applicable bound against a persisted trajectory.

    Pure function of the CSV contents (plus its meta line): N and E are read
    off the first record, moment orders off the column names.
    """
    c = traj.columns
    t = c["t"]
    tau = c["tau"]
    n = c["n_of_t"]
    N = float(c["M0_G"][0])
    E = float(c["M1_h"][0])
    reports: list[BoundReport] = []

    def add(name, tag, lhs, rhs, verdict=None, location=None, detail=None):
        reports.append(BoundReport(name, tag, float(lhs), float(rhs), slack,
                                   verdict or _verdict(lhs, rhs, slack),
                                   location, detail or {}))

    # conservation of the reconstructed measure and of the h-energy
    dev = np.abs(c["M0_G"] - N) / N
    add("mass-of-G-constant", "mass-conservation", np.max(dev),
        traj.meta.get("conservation_tol", 1e-3),
        location=t[int(np.argmax(dev))])
    dev = np.abs(c["M1_h"] - E) / E
    add("energy-of-h-constant", "energy-conservation", np.max(dev),
        traj.meta.get("conservation_tol", 1e-3),
        location=t[int(np.argmax(dev))])
    # g-energy matches up to the proxy region's booked energy
    xc = float(c["xc"][0])
    allowance = 1e-3 * E + xc * float(np.max(c["m_proxy"]))
    dev_g = np.abs(c["M1_g"] - E)
    add("energy-of-g-within-proxy-allowance", "energy-conservation",
        np.max(dev_g), allowance, location=t[int(np.argmax(dev_g))])

    # mass envelope in tau
    env = (np.sqrt(E) / 2.0 * tau + np.sqrt(N)) ** 2
    margin = c["M0_h"] / env
    add("mass-envelope", "mass-envelope", np.max(margin), 1.0,
        location=t[int(np.argmax(margin))])

    alphas = [float(a) for a in traj.meta.get("alphas", [])]
    for a in alphas:
        if a >= 3.0:
            ma0 = float(c[f"Mh_{a:g}"][0])
            env = moment_envelope(ma0, E, a, tau)
            margin = c[f"Mh_{a:g}"] / env
            add(f"moment-envelope-{a:g}", "apriori-moment-envelope",
                np.max(margin), 1.0, location=t[int(np.argmax(margin))])
            C, gamma = uniform_moment_constants(a, E)
            late = tau >= 0.1
            if np.any(late):
                bound = C * (1.0 / (-np.expm1(-gamma * tau[late]))) ** (2 * (a - 1))
                margin = c[f"Mh_{a:g}"][late] / bound
                add(f"uniform-moment-bound-{a:g}", "uniform-moment-bound",
                    np.max(margin), 1.0, location=t[late][int(np.argmax(margin))],
                    detail={"C": C, "gamma": gamma})
        if 1.0 < a <= 3.0:
            col = c[f"M{a:g}_G"]
            if E > decay_threshold(a) * N ** (5.0 / 3.0):
                floor = np.minimum.accumulate(col)
                rises = (col[1:] - floor[:-1]) / np.maximum(floor[:-1], 1e-300)
                worst = float(np.max(rises)) if rises.size else 0.0
                add(f"moment-decreasing-{a:g}", "moment-decrease",
                    1.0 + max(worst, 0.0), 1.0,
                    location=t[1:][int(np.argmax(rises))] if rises.size else None)
                bound = decay_integral_bound(N, E, a, float(col[0]))
                tail = np.trapz(n, t)
                add(f"condensate-integral-{a:g}", "condensate-integral-bound",
                    tail, bound, detail={"C_NEalpha": bound / float(col[0])})
            else:
                add(f"moment-decreasing-{a:g}", "moment-decrease", 0.0, 0.0,
                    verdict="NOT_APPLICABLE",
                    detail={"reason": "below the decay threshold",
                            "threshold": decay_threshold(a) * N ** (5.0 / 3.0)})

    # condensate positivity and its exponential lower bound
    if n[0] > 0:
        add("condensate-positive", "condensate-positivity",
            0.0 if np.all(n > 0) else 1.0, 0.5,
            verdict="PASS" if np.all(n > 0) else "FAIL")
        rate = c["mhalf_g"]
        integral = np.concatenate(
            ([0.0], np.cumsum(0.5 * np.diff(t) * (rate[:-1] + rate[1:]))))
        floor = n[0] * np.exp(-integral)
        margin = floor / np.maximum(n, 1e-300)
        add("condensate-lower-bound", "condensate-lower-bound",
            np.max(margin), 1.0, location=t[int(np.argmax(margin))])

    # balance measure
    if "mu_cumulative" in c:
        mu = c["mu_cumulative"]
        drops = np.diff(mu)
        scale = max(float(np.max(np.abs(mu))), 1e-12)
        worst = float(np.min(drops)) / scale
        add("balance-nondecreasing", "balance-nondecreasing",
            -min(worst, 0.0), max(slack - 1.0, 1e-9),
            location=t[1:][int(np.argmin(drops))])
        add("balance-positive", "balance-positive",
            0.0 if np.all(mu[1:] > -1e-12 * scale) else 1.0, 0.5,
            verdict="PASS" if np.all(mu[1:] > -1e-12 * scale) else "FAIL")

    # origin flux bounds for every recorded probe
    for r, a in (tuple(p) for p in traj.meta.get("flux_probes", [])):
        col = c[f"flux_r{r:g}_a{a:g}"]
        lhs = np.trapz(n * col, t)
        int_n = np.trapz(n, t)
        rhs = origin_flux_bound(N, E, r, a, float(t[-1]), float(int_n))
        add(f"origin-flux-r{r:g}-a{a:g}", "origin-flux", lhs, rhs,
            detail={"R": r, "alpha": a, "int_n_dt": float(int_n)})

    if suite == "full":
        try:
            reports.append(lower_envelope_check(traj, alpha=0.5,
                                                tau0=float(tau[-1]) * 0.25))
        except AnalysisError:
            pass
    return reports


def reports_to_json(reports: list[BoundReport]) -> str:
    return json.dumps([r.to_dict() for r in reports], indent=2, sort_keys=True)


def summarize(reports: list[BoundReport]) -> dict:
    counts = {"PASS": 0, "FAIL": 0, "NOT_APPLICABLE": 0}
    for r in reports:
        counts[r.verdict] = counts.get(r.verdict, 0) + 1
    return counts
