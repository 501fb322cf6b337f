"""Time integration of ``i u_t = H_{A(t)} u + sign b^γ f(u)``.

Strang splitting: half nonlinear phase flow, one Crank-Nicolson step of the
Peierls-link magnetic Laplacian with ``A`` frozen at the step midpoint, half
nonlinear phase flow.  Two ladder modes replace ``f`` by ``f_m`` or freeze
``A`` on ``n`` time windows.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .diagnostics import DiagnosticsSeries, EnergyLedger
from .errors import BlowupDetected, InvalidParameter, LeakageDetected, SolverDivergence
from .field import ComplexField, boundary_leakage, h1mg_norm
from .linsolve import CrankNicolson
from .nonlinearity import NonlinearitySpec, phase_multiplier
from .potential import PotentialSpec, SampledPotential

log = logging.getLogger(__name__)

LADDERS = ("none", "truncated", "piecewise_A")
LINEAR_SOLVERS = ("auto", "direct", "iterative")


@dataclass(frozen=True)
class SolverConfig:
    b: float
    dt: float
    t_end: float
    scheme: str = "strang"
    cn_tolerance: float = 1e-10
    cn_max_iterations: int = 500
    ladder: str = "none"
    ladder_m: int = 0
    ladder_n: int = 0
    snapshot_stride: int = 1
    linear_solver: str = "auto"
    blowup_factor: float = 1e3
    leakage_tol: float | None = 1e-6
    initial_leakage_tol: float | None = 1e-10
    keep_snapshots: bool = True

    def __post_init__(self):
        if not self.b > 0:
            raise InvalidParameter("b must be positive")
        if not (self.dt > 0 and self.t_end > 0):
            raise InvalidParameter("dt and t_end must be positive")
        if not self.dt < self.t_end:
            raise InvalidParameter(f"dt={self.dt} must be smaller than t_end={self.t_end}")
        if self.scheme != "strang":
            raise InvalidParameter(f"unknown scheme {self.scheme!r}")
        if not (0 < self.cn_tolerance < 1e-6):
            raise InvalidParameter("cn_tolerance must lie in (0, 1e-6)")
        if self.cn_max_iterations < 1 or self.snapshot_stride < 1:
            raise InvalidParameter("cn_max_iterations and snapshot_stride must be >= 1")
        if self.ladder not in LADDERS:
            raise InvalidParameter(f"unknown ladder {self.ladder!r}")
        if self.ladder == "truncated" and self.ladder_m < 1:
            raise InvalidParameter("truncated ladder needs m >= 1")
        if self.ladder == "piecewise_A":
            if self.ladder_n < 1:
                raise InvalidParameter("piecewise ladder needs n >= 1")
            if self.n_steps % self.ladder_n:
                raise InvalidParameter(f"{self.n_steps} steps do not split into {self.ladder_n} windows")
        if self.linear_solver not in LINEAR_SOLVERS:
            raise InvalidParameter(f"unknown linear solver {self.linear_solver!r}")

    @property
    def n_steps(self) -> int:
        return max(1, math.ceil(self.t_end / self.dt - 1e-9))

    def step_times(self, k: int) -> tuple[float, float]:
        """Start time and length of step ``k`` (0-based); the last step is clipped."""
        t0 = k * self.dt
        return t0, min(self.dt, self.t_end - t0) if k == self.n_steps - 1 else self.dt

    @property
    def truncation(self) -> int | None:
        return self.ladder_m if self.ladder == "truncated" else None


@dataclass
class Trajectory:
    times: list = field(default_factory=list)
    fields: list = field(default_factory=list)

    def append(self, t, u):
        self.times.append(t)
        self.fields.append(u)

    def __len__(self):
        return len(self.times)


@dataclass
class SolveResult:
    trajectory: Trajectory
    series: DiagnosticsSeries
    final: ComplexField
    time: float
    steps: int
    status: str = "ok"
    solver_stats: dict = field(default_factory=dict)


# ---------------------------------------------------------------- substeps


def nonlinear_step(u: ComplexField, spec: NonlinearitySpec, dt: float, b: float, m: int | None = None) -> ComplexField:
    """Exact flow of ``i u_t = sign b^γ f(u)`` (or ``f_m``): a pointwise phase rotation."""
    return ComplexField(u.grid, _nonlinear(u.values, spec, dt, b, m))


def _nonlinear(vals, spec, dt, b, m=None):
    if dt == 0.0:
        return vals
    c = spec.coupling(b)
    if c == 0.0:
        return vals
    ghat = phase_multiplier(spec, np.abs(vals), m)
    return vals * np.exp(-1j * c * dt * ghat)


def _cn_method(cfg, potential: PotentialSpec) -> str:
    if cfg is None:
        return "direct"
    if cfg.linear_solver != "auto":
        return cfg.linear_solver
    if not potential.time_dependent or cfg.ladder == "piecewise_A":
        return "direct"
    return "iterative"


def linear_step(u: ComplexField, spec: PotentialSpec, t: float, dt: float, b: float, cfg: SolverConfig | None = None) -> ComplexField:
    """One CN step of ``i u_t = H_A u`` with ``A`` frozen at ``t + dt/2``."""
    A = SampledPotential(spec, u.grid).A(t + 0.5 * dt, staggered=True)
    tol = cfg.cn_tolerance if cfg else 1e-10
    iters = cfg.cn_max_iterations if cfg else 500
    cn = CrankNicolson(A, b, dt, method=_cn_method(cfg, spec), tol=tol, max_iterations=iters)
    return ComplexField(u.grid, cn.apply(u.values))


def strang_step(u: ComplexField, potential: PotentialSpec, nonlinearity: NonlinearitySpec, t: float, dt: float,
                b: float, cfg: SolverConfig | None = None) -> ComplexField:
    m = cfg.truncation if cfg else None
    v = _nonlinear(u.values, nonlinearity, 0.5 * dt, b, m)
    v = linear_step(ComplexField(u.grid, v), potential, t, dt, b, cfg).values
    return ComplexField(u.grid, _nonlinear(v, nonlinearity, 0.5 * dt, b, m))


class _LinearCache:
    """Keeps the CN map for the most recent (frozen time, dt) pair."""

    def __init__(self, sampled: SampledPotential, cfg: SolverConfig, method: str):
        self.sampled = sampled
        self.cfg = cfg
        self.method = method
        self._key = None
        self._cn = None
        self.solves = 0
        self.iterations = 0
        self.max_residual = 0.0

    def step(self, vals, a_time, dt):
        key = (a_time if self.sampled.time_dependent else None, dt)
        if key != self._key:
            A = self.sampled.A(a_time, staggered=True)
            self._cn = CrankNicolson(A, self.cfg.b, dt, method=self.method, tol=self.cfg.cn_tolerance,
                                     max_iterations=self.cfg.cn_max_iterations)
            self._key = key
        out = self._cn.apply(vals)
        self.solves += 1
        self.iterations += self._cn.last_iterations
        self.max_residual = max(self.max_residual, self._cn.last_residual)
        return out


# ---------------------------------------------------------------- drivers


def solve(u0: ComplexField, potential: PotentialSpec, nonlinearity: NonlinearitySpec, cfg: SolverConfig) -> SolveResult:
    """Integrate to ``cfg.t_end`` honouring ``cfg.ladder``.

    Raises ``BlowupDetected`` when the magnetic H¹ norm exceeds
    ``blowup_factor`` times its initial value, ``LeakageDetected`` when mass
    reaches the outer half of the box, ``SolverDivergence`` from the linear
    solve.  Each exception carries the partial ``SolveResult``.
    """
    grid = u0.grid
    b = cfg.b
    sampled = SampledPotential(potential, grid)
    m = cfg.truncation
    piecewise = cfg.ladder == "piecewise_A"
    n_steps = cfg.n_steps
    window = n_steps // cfg.ladder_n if piecewise else None

    if cfg.initial_leakage_tol is not None:
        leak0 = boundary_leakage(u0.values, grid)
        if leak0 > cfg.initial_leakage_tol:
            raise LeakageDetected(f"initial data not localised: {leak0:.2e} of the mass in the outer half", 0.0)

    def frozen_time(k, t0, dt):
        if piecewise:
            return (k // window) * window * cfg.dt
        return t0 + 0.5 * dt

    def energy_A(k_done, t):
        # potential defining the (discrete) energy at time t after k_done steps
        if piecewise:
            w = min(k_done // window, cfg.ladder_n - 1)
            return sampled.A(w * window * cfg.dt, staggered=True)
        return sampled.A(t, staggered=True)

    series = DiagnosticsSeries()
    series.meta.update({
        "sign": nonlinearity.sign,
        "gamma": nonlinearity.gamma,
        "energy_convention": "E = 1/2 ||(i grad - bA)u||^2 + sign * b^gamma * G (G_m under truncation)",
        "ledger_convention": "energy_law_residual = E(t) - E(0) + int_0^t b Re<dA/dt u, (i grad - bA)u> ds",
        "ladder": cfg.ladder,
    })
    ledger = EnergyLedger(nonlinearity, b, m)
    traj = Trajectory()
    method = _cn_method(cfg, potential)
    lin = _LinearCache(sampled, cfg, method)

    vals = u0.values.copy()
    u = u0
    A_e = energy_A(0, 0.0)
    row0 = ledger.row(0, 0.0, u0, A_e)
    series.append(row0)
    if cfg.keep_snapshots:
        traj.append(0.0, u0)
    ceiling = cfg.blowup_factor * row0["h1mg_norm"]
    track_rate = sampled.time_dependent and not piecewise
    if not track_rate:
        ledger.skip_rate()

    t = 0.0
    k = 0

    def partial(status):
        return SolveResult(traj, series, u, t, k, status,
                           {"method": method, "solves": lin.solves, "iterations": lin.iterations,
                            "max_residual": lin.max_residual})

    try:
        for k in range(1, n_steps + 1):
            t0, dt = cfg.step_times(k - 1)
            a_time = frozen_time(k - 1, t0, dt)
            v = _nonlinear(vals, nonlinearity, 0.5 * dt, b, m)
            v = lin.step(v, a_time, dt)
            vals = _nonlinear(v, nonlinearity, 0.5 * dt, b, m)
            t = t0 + dt
            u_prev, u = u, ComplexField(grid, vals, allow_nonfinite=True)

            if not np.all(np.isfinite(vals)):
                series.aborted = "blowup"
                raise BlowupDetected(f"non-finite values at t={t:.6g}", t)

            if track_rate:
                ledger.advance(u, sampled.A(t, True), sampled.dtA(t, True), dt,
                               u_prev, sampled.A(t0, True), sampled.dtA(t0, True))
            if piecewise and k % window == 0 and k < n_steps:
                w = k // window
                ledger.window_jump(u, sampled.A((w - 1) * window * cfg.dt, True), sampled.A(w * window * cfg.dt, True))

            A_e = energy_A(k, t)
            h1 = h1mg_norm(u, A_e, b)
            leak = boundary_leakage(vals, grid)
            record = k % cfg.snapshot_stride == 0 or k == n_steps
            if record or h1 > ceiling or (cfg.leakage_tol is not None and leak > cfg.leakage_tol):
                series.append(ledger.row(k, t, u, A_e))
                if cfg.keep_snapshots:
                    traj.append(t, u)
            if h1 > ceiling:
                series.aborted = "blowup"
                raise BlowupDetected(f"magnetic H1 norm {h1:.3e} exceeded ceiling {ceiling:.3e} at t={t:.6g}", t)
            if cfg.leakage_tol is not None and leak > cfg.leakage_tol:
                series.aborted = "leakage"
                raise LeakageDetected(f"boundary leakage {leak:.2e} at t={t:.6g}", t)
    except (BlowupDetected, LeakageDetected) as exc:
        exc.result = partial(exc.reason)
        raise
    except SolverDivergence as exc:
        series.aborted = "solver-divergence"
        exc.result = partial("solver-divergence")
        raise

    series.meta["window_remainder"] = ledger.window_remainder
    res = partial("ok")
    log.debug("solve finished: %d steps, %s solver, %d iterations", k, method, lin.iterations)
    return res


def solve_truncated(u0, potential, nonlinearity, cfg: SolverConfig) -> SolveResult:
    if cfg.ladder != "truncated":
        raise InvalidParameter("solve_truncated needs ladder='truncated'")
    return solve(u0, potential, nonlinearity, cfg)


def solve_piecewise_A(u0, potential, nonlinearity, cfg: SolverConfig) -> SolveResult:
    if cfg.ladder != "piecewise_A":
        raise InvalidParameter("solve_piecewise_A needs ladder='piecewise_A'")
    return solve(u0, potential, nonlinearity, cfg)


def trajectory_distance(a: Trajectory, b: Trajectory) -> float:
    """``sup_t ‖u_a(t) - u_b(t)‖_{L²}`` over snapshot times present in both."""
    from .field import l2_norm

    lookup = {round(t, 12): f for t, f in zip(b.times, b.fields)}
    best = 0.0
    found = False
    for t, f in zip(a.times, a.fields):
        g = lookup.get(round(t, 12))
        if g is None:
            continue
        found = True
        best = max(best, l2_norm(f.values - g.values, f.grid))
    if not found:
        raise InvalidParameter("trajectories share no snapshot times")
    return best
