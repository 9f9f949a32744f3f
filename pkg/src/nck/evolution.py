"""Time integration of the regularized kinetic equation and the measure
reconstruction behind it.

The pipeline: evolve a density h in the condensate-weighted time tau with an
exponential-Euler stepper (positivity-preserving, loss term integrated
exactly against its frozen rate), subtract the accumulated mass production
as a signed origin atom to form H, invert the time change
t = int d(sigma)/H_atom0 to get back to physical time, and resample
everything on a t-grid as the trajectory of G = n(t) delta_0 + g(t).

The condensate has no literal atom at finite resolution; its proxy is the
mass in [0, xc) with xc a grid edge.  Every reported condensate quantity
carries the (n, mesh, xc) triple via the run configuration.

Two bookkeeping rules keep the reconstruction conservative at finite
resolution:

* the origin-atom subtraction accumulates the mass the discrete dynamics
  actually produced each step, so the reconstructed total mass is constant
  to rounding;
* the gain field is rebalanced across the first cells so its discrete
  energy production vanishes identically, as it does in the continuum.
  The rearrangement is below grid resolution (it moves gain mass between
  adjacent origin cells) and is reported per step in the diagnostics.
"""
from __future__ import annotations

import io
import json
from collections import deque
from dataclasses import dataclass, field, asdict

import numpy as np

from .measure import GridSpec, RadialMeasure, mollify, power_cell_integrals
from .regularized import CollisionFields, DensityFn, collision_fields, \
    evolution_grid, production_rate

TRAJECTORY_SCHEMA = "nck-trajectory/1"


class EvolutionError(RuntimeError):
    pass


class NonFiniteState(EvolutionError):
    """Stepper hit a nonfinite cell; carries the offending state for a dump."""

    def __init__(self, msg: str, state: "SolverState"):
        super().__init__(msg)
        self.state = state


@dataclass
class SolverConfig:
    n: int = 16
    x_max: float | None = None           # default: 2(n+1), every gain target
    dtau: float = 1e-3
    dtau_control: str = "adaptive"       # "fixed" | "adaptive"
    target_local_error: float = 3e-8     # relative L1, step-doubling estimate
    tau_end: float = 1.0
    xc: float | None = None              # condensate proxy edge; default max(4dx, 1/n)
    conservation_tol: float = 1e-3
    identity_tol: float = 1e-12
    record_every: int = 4                # record cadence in accepted steps
    n_snapshots: int = 33                # retained full-density states
    alphas: tuple[float, ...] = (3.0,)
    subtract_mode: str = "production"    # | "half_moment_excl" | "half_moment_full"
    mollifier_index: int = 8
    energy_rebalance: bool = True
    t_max: float = 10.0
    n_t_records: int = 201
    flux_probes: tuple[tuple[float, float], ...] = ((0.5, 0.0), (0.5, 0.25),
                                                    (1.0, 0.0), (1.0, 0.25))
    envelope_radii: tuple[float, ...] = (0.05, 0.1, 0.2, 0.4, 0.8)
    check_slack: float = 1.01
    seed: int = 0                        # reserved for sweeps; dynamics is deterministic

    def resolved(self, grid: GridSpec) -> "SolverConfig":
        dx = float(grid.widths[0])
        xc = self.xc
        if xc is None:
            xc = max(4.0 * dx, 1.0 / self.n)
        # snap to the lattice so the proxy region is a union of whole cells
        xc = round(xc / dx) * dx
        if xc < dx:
            raise EvolutionError("xc must be at least one grid cell wide")
        return SolverConfig(**{**asdict(self), "xc": xc, "x_max": grid.x_max})

    @classmethod
    def from_dict(cls, doc: dict) -> "SolverConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(doc) - known
        if unknown:
            raise EvolutionError(f"unknown config fields: {sorted(unknown)}")
        doc = dict(doc)
        for key in ("alphas", "envelope_radii"):
            if key in doc:
                doc[key] = tuple(float(v) for v in doc[key])
        if "flux_probes" in doc:
            doc["flux_probes"] = tuple((float(r), float(a)) for r, a in doc["flux_probes"])
        return cls(**doc)


@dataclass
class SolverState:
    tau: float
    h: DensityFn
    accumulated_halfmoment: float        # the active origin-atom subtraction
    m_proxy: float
    integrals: dict                      # all subtraction variants
    diagnostics: deque = field(default_factory=lambda: deque(maxlen=64))
    next_dtau: float | None = None


def _proxy_cells(grid: GridSpec, xc: float) -> int:
    return max(int(round(xc / grid.widths[0])), 1)


def _expm1_ratio(z: np.ndarray) -> np.ndarray:
    """(1 - e^-z)/z with its z -> 0 limit."""
    out = np.ones_like(z)
    big = z > 1e-12
    out[big] = -np.expm1(-z[big]) / z[big]
    return out


def _rebalance_gain(fields: CollisionFields, centers: np.ndarray,
                    widths: np.ndarray) -> float:
    """Move gain mass between origin cells until int x (gain - h*loss) dx = 0.

    Mass-neutral by construction; returns the energy residual that was
    absorbed.  Transfers cascade outward if a donor cell runs dry.
    """
    resid = float(np.sum(centers * (fields.gain - fields.h * fields.loss_rate) * widths))
    dx = float(widths[0])
    remaining = resid
    # moving density `give` from cell k to cell 0 changes the energy rate by
    # -give * k * dx^2 and leaves the mass rate untouched
    for k in range(1, min(12, fields.gain.size)):
        if abs(remaining) <= 1e-18 * max(abs(resid), 1.0):
            break
        if remaining > 0.0:
            give = min(remaining / (k * dx * dx), fields.gain[k])
            fields.gain[k] -= give
            fields.gain[0] += give
            remaining -= give * k * dx * dx
        else:
            give = min(-remaining / (k * dx * dx), fields.gain[0])
            fields.gain[0] -= give
            fields.gain[k] += give
            remaining += give * k * dx * dx
    return resid


def _prepared_fields(h: DensityFn, n: int, rebalance: bool) -> tuple[CollisionFields, float]:
    fields = collision_fields(h, n)
    resid = 0.0
    if rebalance:
        resid = _rebalance_gain(fields, h.grid.centers, h.grid.widths)
    return fields, resid


def _apply_step(h: np.ndarray, fields: CollisionFields, dtau: float) -> np.ndarray:
    z = fields.loss_rate * dtau
    return h * np.exp(-z) + fields.gain * dtau * _expm1_ratio(z)


def step(state: SolverState, cfg: SolverConfig, dtau: float | None = None) -> SolverState:
    """One accepted exponential-Euler step (adaptive by step doubling).

    The update h -> h e^(-A dtau) + (K + L)(1 - e^(-A dtau))/A freezes the
    fields at the step start; it is unconditionally positivity-preserving.
    A step is rejected and halved when the doubling estimate exceeds the
    local error target or the energy drifts more than conservation_tol.
    """
    h = state.h
    if cfg.xc is None:
        cfg = cfg.resolved(h.grid)
    n = cfg.n
    kc = _proxy_cells(h.grid, cfg.xc)
    fields, resid = _prepared_fields(h, n, cfg.energy_rebalance)
    dtau = cfg.dtau if dtau is None else dtau
    cell_w = h.grid.widths
    m1_w = h.grid.centers * cell_w
    m1_old = float(np.sum(h.values * m1_w))
    mass_scale = float(np.sum(h.values * cell_w)) + 1e-300
    rejected = 0
    while True:
        full = _apply_step(h.values, fields, dtau)
        if cfg.dtau_control == "adaptive":
            half = _apply_step(h.values, fields, dtau / 2.0)
            mid_fields, _ = _prepared_fields(DensityFn(h.grid, half), n,
                                             cfg.energy_rebalance)
            fine = _apply_step(half, mid_fields, dtau / 2.0)
            err = float(np.sum(np.abs(full - fine) * cell_w)) / mass_scale
            new_h = fine
        else:
            err = 0.0
            new_h = full
        if not np.all(np.isfinite(new_h)):
            raise NonFiniteState(f"nonfinite cell at tau={state.tau:g}", state)
        m1_new = float(np.sum(new_h * m1_w))
        drift = abs(m1_new - m1_old) / max(m1_old, 1e-300)
        ok_err = err <= cfg.target_local_error or cfg.dtau_control == "fixed"
        if ok_err and drift <= cfg.conservation_tol:
            break
        dtau /= 2.0
        rejected += 1
        if rejected > 60:
            raise EvolutionError(f"step size underflow at tau={state.tau:g}")
    # realized mass production of this step: the subtraction books exactly it
    realized = float(np.sum((new_h - h.values) * cell_w))
    hn = DensityFn(h.grid, new_h)
    rates_old = _halfmoment_rates(h, kc)
    rates_new = _halfmoment_rates(hn, kc)
    integrals = dict(state.integrals)
    integrals["production"] += realized
    for key in ("half_moment_full", "half_moment_excl"):
        integrals[key] += 0.5 * dtau * (rates_old[key] + rates_new[key])
    m_proxy = float(np.sum(new_h[:kc] * cell_w[:kc]))
    if cfg.dtau_control == "adaptive" and err > 0:
        grow = 0.9 * (cfg.target_local_error / err) ** 0.5
        next_dtau = dtau * min(2.0, max(0.5, grow))
    else:
        next_dtau = dtau
    out = SolverState(tau=state.tau + dtau, h=hn,
                      accumulated_halfmoment=integrals[cfg.subtract_mode],
                      m_proxy=m_proxy, integrals=integrals,
                      diagnostics=state.diagnostics, next_dtau=next_dtau)
    out.diagnostics.append({"tau": out.tau, "dtau": dtau, "err": err,
                            "drift": drift, "rejected": rejected,
                            "energy_rebalanced": resid})
    return out


def _halfmoment_rates(h: DensityFn, kc: int) -> dict:
    edges = h.grid.edges
    half = np.diff((2.0 / 3.0) * edges ** 1.5)
    return {
        "half_moment_full": float(np.sum(h.values * half)),
        "half_moment_excl": float(np.sum(h.values[kc:] * half[kc:])),
    }


@dataclass
class RunResult:
    cfg: SolverConfig
    grid: GridSpec
    N: float
    E: float
    records: dict                        # column name -> np.ndarray over tau-records
    snapshots: list                      # (tau, DensityFn)
    failed_checks: list
    n_steps: int

    @property
    def states(self) -> list:
        return self.snapshots


def _as_density(h0, cfg: SolverConfig, grid: GridSpec) -> DensityFn:
    if isinstance(h0, DensityFn):
        if h0.grid.n_cells != grid.n_cells or abs(h0.grid.x_max - grid.x_max) > 1e-12:
            raise EvolutionError("initial density lives on a different grid")
        return h0
    if not isinstance(h0, RadialMeasure):
        raise EvolutionError("initial data must be a RadialMeasure or DensityFn")
    if h0.atom0 == 0 and not h0.atoms.size and h0.has_density \
            and h0.grid.n_cells == grid.n_cells \
            and np.allclose(h0.grid.edges, grid.edges):
        return DensityFn(grid, h0.density)
    smoothed = mollify(h0, cfg.mollifier_index, grid)
    return DensityFn(grid, smoothed.density)


class _Recorder:
    """Precomputed cell weights for the per-record columns."""

    def __init__(self, cfg: SolverConfig, grid: GridSpec, kc: int):
        edges = grid.edges
        self.kc = kc
        self.w = grid.widths
        self.m1 = np.diff(0.5 * edges ** 2)
        self.half = np.diff((2.0 / 3.0) * edges ** 1.5)
        self.alpha_cells = {a: power_cell_integrals(edges, a) for a in cfg.alphas}
        self.flux_cells = {(r, a): power_cell_integrals(np.minimum(edges, r), a)
                           for r, a in cfg.flux_probes}
        self.cum_cells = {r: np.diff(np.minimum(edges, r)) for r in cfg.envelope_radii}
        self.cfg = cfg

    def __call__(self, state: SolverState) -> dict:
        v = state.h.values
        kc = self.kc
        rec = {
            "tau": state.tau,
            "m_proxy": state.m_proxy,
            "sub": state.accumulated_halfmoment,
            "production": state.integrals["production"],
            "mhalf_full": float(np.sum(v * self.half)),
            "mhalf_g": float(np.sum(v[kc:] * self.half[kc:])),
            "M0_h": float(np.sum(v * self.w)),
            "M1_h": float(np.sum(v * self.m1)),
            "M0_g": float(np.sum(v[kc:] * self.w[kc:])),
            "M1_g": float(np.sum(v[kc:] * self.m1[kc:])),
        }
        for a, cells in self.alpha_cells.items():
            rec[f"Mh_{a:g}"] = float(np.sum(v * cells))
            rec[f"Mg_{a:g}"] = float(np.sum(v[kc:] * cells[kc:]))
        for (r, a), cells in self.flux_cells.items():
            rec[f"flux_r{r:g}_a{a:g}"] = float(np.sum(v * cells))
        for r, cells in self.cum_cells.items():
            rec[f"cum_r{r:g}"] = float(np.sum(v * cells))
        return rec


def moment_envelope(m_alpha0: float, E: float, alpha: float, tau) -> np.ndarray:
    """A-priori growth envelope for moments of order alpha >= 3."""
    if alpha < 3:
        raise ValueError("envelope defined for alpha >= 3")
    tau = np.asarray(tau, dtype=float)
    p = 2.0 / (alpha - 1.0)
    return (m_alpha0 ** p + alpha * 2.0 ** (alpha - 1.0)
            * E ** ((alpha + 1.0) / (alpha - 1.0)) * tau) ** (1.0 / p)


def run_h(h0, cfg: SolverConfig) -> RunResult:
    """Evolve h to tau_end, recording moments, proxies and running checks.

    Accepts a RadialMeasure (mollified onto the evolution grid, preserving
    mass and energy) or a DensityFn already on that grid.  Envelope or
    conservation violations mark the run failed but do not abort it.
    """
    grid = evolution_grid(cfg.n, cfg.x_max)
    cfg = cfg.resolved(grid)
    h = _as_density(h0, cfg, grid)
    kc = _proxy_cells(grid, cfg.xc)
    N = h.moment(0.0)
    E = h.moment(1.0)
    if N <= 0 or E <= 0:
        raise EvolutionError("initial data needs positive mass and energy")
    state = SolverState(tau=0.0, h=DensityFn(grid, h.values.copy()),
                        accumulated_halfmoment=0.0,
                        m_proxy=float(np.sum(h.values[:kc] * grid.widths[:kc])),
                        integrals={"production": 0.0, "half_moment_full": 0.0,
                                   "half_moment_excl": 0.0})
    recorder = _Recorder(cfg, grid, kc)
    records = [recorder(state)]
    snapshots = [(0.0, DensityFn(grid, h.values.copy()))]
    snap_interval = cfg.tau_end / max(cfg.n_snapshots - 1, 1)
    failed = []
    m_alpha0 = {a: records[0][f"Mh_{a:g}"] for a in cfg.alphas}
    n_steps = 0
    dtau = cfg.dtau
    while state.tau < cfg.tau_end * (1 - 1e-12):
        dtau = min(dtau, cfg.tau_end - state.tau)
        state = step(state, cfg, dtau)
        dtau = state.next_dtau
        n_steps += 1
        at_end = state.tau >= cfg.tau_end * (1 - 1e-12)
        if n_steps % cfg.record_every == 0 or at_end:
            rec = recorder(state)
            records.append(rec)
            slack = cfg.check_slack
            tau = rec["tau"]
            mass_env = (np.sqrt(E) / 2.0 * tau + np.sqrt(N)) ** 2
            if rec["M0_h"] > slack * mass_env:
                failed.append(("mass-envelope", tau, rec["M0_h"], mass_env))
            if abs(rec["M1_h"] - E) > cfg.conservation_tol * E:
                failed.append(("energy-conservation", tau, rec["M1_h"], E))
            for a in cfg.alphas:
                if a >= 3:
                    env = float(moment_envelope(m_alpha0[a], E, a, tau))
                    if rec[f"Mh_{a:g}"] > slack * env:
                        failed.append((f"moment-envelope-{a:g}", tau,
                                       rec[f"Mh_{a:g}"], env))
        if state.tau >= len(snapshots) * snap_interval - 1e-12:
            snapshots.append((state.tau, DensityFn(grid, state.h.values.copy())))
    if snapshots[-1][0] < state.tau:
        snapshots.append((state.tau, DensityFn(grid, state.h.values.copy())))
    cols = {k: np.array([r[k] for r in records]) for k in records[0]}
    return RunResult(cfg=cfg, grid=grid, N=N, E=E, records=cols,
                     snapshots=snapshots, failed_checks=failed, n_steps=n_steps)


# ---------------------------------------------------------------------------
# Reconstruction: H, the time change, and the t-trajectory
# ---------------------------------------------------------------------------

@dataclass
class HSequence:
    taus: np.ndarray
    atom0: np.ndarray                    # signed origin weight of H
    records: dict                        # g-part and h-part columns
    run: RunResult

    def g_measure(self, snapshot_index: int) -> tuple[float, float, RadialMeasure]:
        """(tau, H_atom0, g) materialized from a retained snapshot."""
        tau, h = self.run.snapshots[snapshot_index]
        kc = _proxy_cells(self.run.grid, self.run.cfg.xc)
        vals = h.values.copy()
        vals[:kc] = 0.0
        atom0 = float(np.interp(tau, self.taus, self.atom0))
        return tau, atom0, RadialMeasure.from_density(self.run.grid, vals)


def reconstruct_H(run: RunResult) -> HSequence:
    """H(tau) = h(tau) - (accumulated subtraction) delta_0, as proxy numbers.

    The origin weight is m_proxy minus the accumulated subtraction integral;
    it may go negative, which is what defines tau_star downstream.
    """
    rec = run.records
    atom0 = rec["m_proxy"] - rec["sub"]
    return HSequence(taus=rec["tau"], atom0=atom0, records=rec, run=run)


@dataclass
class TimeChange:
    taus: np.ndarray
    xi: np.ndarray                       # t = xi(tau)
    tau_star: float                      # inf(tau: H_atom0 <= 0), inf if none

    def tau_of_t(self, t) -> np.ndarray:
        return np.interp(t, self.xi, self.taus)


def time_change(hseq: HSequence) -> TimeChange:
    """t = int_0^tau d(sigma)/H_atom0 by trapezoid on the record grid.

    Requires a strictly positive initial origin weight.  Records at or past
    the first nonpositive weight are dropped; the crossing is located by
    linear interpolation and reported as tau_star (physical time diverges
    as tau approaches it).
    """
    a = hseq.atom0
    if a[0] <= 0:
        raise EvolutionError("time change needs H_atom0(0) > 0")
    bad = np.nonzero(a <= 0)[0]
    if bad.size:
        k = int(bad[0])
        frac = a[k - 1] / (a[k - 1] - a[k])
        tau_star = float(hseq.taus[k - 1] + frac * (hseq.taus[k] - hseq.taus[k - 1]))
        taus = hseq.taus[:k]
        a = a[:k]
    else:
        tau_star = np.inf
        taus = hseq.taus
    inv = 1.0 / a
    xi = np.concatenate(([0.0], np.cumsum(0.5 * np.diff(taus) * (inv[:-1] + inv[1:]))))
    if np.any(np.diff(xi) <= 0):
        raise EvolutionError("time change lost monotonicity")
    return TimeChange(taus=taus, xi=xi, tau_star=tau_star)


@dataclass
class Trajectory:
    columns: dict
    meta: dict

    def column(self, name: str) -> np.ndarray:
        return self.columns[name]

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(f"# {TRAJECTORY_SCHEMA} meta={json.dumps(self.meta, sort_keys=True)}\n")
        names = list(self.columns)
        buf.write(",".join(names) + "\n")
        arrs = [self.columns[k] for k in names]
        for i in range(arrs[0].size):
            buf.write(",".join(repr(float(a[i])) for a in arrs) + "\n")
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "Trajectory":
        lines = text.strip().splitlines()
        meta = {}
        if lines[0].startswith("#"):
            head = lines.pop(0)
            if TRAJECTORY_SCHEMA not in head:
                raise EvolutionError("unknown trajectory schema")
            _, _, tail = head.partition("meta=")
            if tail:
                meta = json.loads(tail)
        names = lines[0].split(",")
        data = np.array([[float(v) for v in ln.split(",")] for ln in lines[1:]])
        return cls(columns={k: data[:, i] for i, k in enumerate(names)}, meta=meta)


def reconstruct_G(hseq: HSequence, change: TimeChange,
                  t_max: float | None = None, n_t: int | None = None) -> Trajectory:
    """Resample H at xi^{-1}(t) on a uniform t-grid: the physical trajectory.

    n(t) is the origin weight, g-moments ride along by monotone
    interpolation in tau; tau(t) itself is emitted so envelope and moment
    bounds can be evaluated in either variable.
    """
    run = hseq.run
    t_max = run.cfg.t_max if t_max is None else t_max
    n_t = run.cfg.n_t_records if n_t is None else n_t
    t_top = min(float(change.xi[-1]), float(t_max))
    t = np.linspace(0.0, t_top, n_t)
    tau_t = change.tau_of_t(t)
    cols = {"t": t, "tau": tau_t}
    cols["n_of_t"] = np.interp(tau_t, hseq.taus, hseq.atom0)
    rec = hseq.records
    for name in rec:
        if name == "tau":
            continue
        cols[name] = np.interp(tau_t, rec["tau"], rec[name])
    cols["M0_G"] = cols["n_of_t"] + cols["M0_g"]
    cols["M1_G"] = cols["M1_g"]
    for a in run.cfg.alphas:
        cols[f"M{a:g}_G"] = cols[f"Mg_{a:g}"]
    cols["xc"] = np.full_like(t, run.cfg.xc)
    meta = {"schema": TRAJECTORY_SCHEMA, "n": run.cfg.n,
            "cells": run.grid.n_cells, "xc": run.cfg.xc,
            "N": run.N, "E": run.E, "tau_star": change.tau_star,
            "alphas": list(run.cfg.alphas),
            "flux_probes": [list(p) for p in run.cfg.flux_probes],
            "envelope_radii": list(run.cfg.envelope_radii),
            "subtract_mode": run.cfg.subtract_mode}
    return Trajectory(columns=cols, meta=meta)


def condensate_balance(traj: Trajectory, tol: float = 1e-8) -> np.ndarray:
    """Source balance mu((0, t]) = n(t) - n(0) + int_0^t n M_{1/2}(g) ds.

    Appends the cumulative column and returns it.  A decrease beyond tol of
    the running scale marks the trajectory failed (recorded in meta).
    """
    t = traj.columns["t"]
    n = traj.columns["n_of_t"]
    rate = n * traj.columns["mhalf_g"]
    integral = np.concatenate(([0.0], np.cumsum(0.5 * np.diff(t) * (rate[:-1] + rate[1:]))))
    mu = n - n[0] + integral
    traj.columns["mu_cumulative"] = mu
    drops = np.diff(mu)
    scale = np.maximum.accumulate(np.abs(mu))[1:] + 1e-300
    bad = drops < -tol * np.maximum(scale, 1.0)
    traj.meta["mu_nondecreasing"] = not bool(np.any(bad))
    if np.any(bad):
        traj.meta["mu_first_drop_t"] = float(t[1:][bad][0])
    return mu


def run_pipeline(h0, cfg: SolverConfig) -> tuple[RunResult, Trajectory]:
    """run_h -> reconstruct_H -> time_change -> reconstruct_G -> balance."""
    run = run_h(h0, cfg)
    hseq = reconstruct_H(run)
    change = time_change(hseq)
    traj = reconstruct_G(hseq, change)
    condensate_balance(traj)
    return run, traj
