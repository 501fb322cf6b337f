"""Semiclassical (WKB) solutions in the strong-field regime.

With ``h = 1/b`` and rescaled time ``t = b s`` the equation
``i u_s = H_{A(s)} u + b² u g(|u|²)`` becomes
``i h v_t = (i h∇ - A(ht))² v + v g(|v|²)``.  Writing ``v = α e^{iφ/h}``
and ``V = ∇φ + A(ht)`` gives the system solved here::

    α_t = -2 (V·∇)α - α div V + i h Δα
    V_t = -2 (V·∇)V - 2 V×B(ht) - 2 g'(|α|²) Re(ᾱ ∇α) + h ∂_tA(ht)

(the ``V×B`` term comes from ``curl V = B``).  The phase is recovered from
``φ_t = -|V|² - g(|α|²)``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.fft as sfft

from .errors import CFLError, InvalidParameter, LeakageDetected, ResolutionError, ShockDetected
from .field import (ComplexField, Grid, RealVectorField, boundary_leakage, fourier_resample, l2_norm,
                    spectral_gradient)
from .nonlinearity import NonlinearitySpec, require_symmetrizable
from .potential import PotentialSpec, SampledPotential


@dataclass(frozen=True, eq=False)
class WKBState:
    grid: Grid
    alpha: np.ndarray
    v: tuple
    h: float
    t: float = 0.0

    @property
    def alpha1(self) -> np.ndarray:
        return self.alpha.real

    @property
    def alpha2(self) -> np.ndarray:
        return self.alpha.imag

    def as_vector(self) -> np.ndarray:
        """Pointwise ``w = (α1, α2, V_1, ..., V_n)`` with shape ``(n+2, *grid.shape)``."""
        return np.stack([self.alpha.real, self.alpha.imag, *self.v])


@dataclass(frozen=True, eq=False)
class WKBConfig:
    b: float
    t_end: float
    a0: ComplexField
    S: np.ndarray
    grad_S: tuple | None = None
    dt: float | None = None
    cfl: float = 0.5
    dealiasing: str = "two_thirds"
    snapshot_stride: int = 1
    shock_ceiling: float = 1e3
    leakage_tol: float | None = 1e-10

    def __post_init__(self):
        if not self.b > 0 or not self.t_end > 0:
            raise InvalidParameter("WKB needs b > 0 and t_end > 0")
        if self.dealiasing != "two_thirds":
            raise InvalidParameter(f"unsupported dealiasing {self.dealiasing!r}")
        if not 0 < self.cfl <= 1:
            raise InvalidParameter("cfl safety must lie in (0, 1]")

    @property
    def h(self) -> float:
        return 1.0 / self.b


@dataclass
class WKBTrajectory:
    """Snapshots of the WKB state and the running phase integral.

    ``phase_integral[i]`` is ``∫_0^{t_i} (|V|² + g(|α|²)) dτ`` accumulated by
    the trapezoid rule on every step.
    """

    grid: Grid
    b: float
    times: list = field(default_factory=list)
    states: list = field(default_factory=list)
    phase_integral: list = field(default_factory=list)
    steps: int = 0
    dt: float = 0.0
    status: str = "ok"


# ---------------------------------------------------------------- init and rhs


def wkb_init(a0: ComplexField, S: np.ndarray, potential: PotentialSpec, b: float, grad_S=None,
             leakage_tol: float | None = 1e-10) -> WKBState:
    """State at ``t = 0``: ``α = a0`` and ``V = ∇S + A(0)``.

    ``grad_S`` overrides the spectral gradient, for phases that are not
    periodic on the box.
    """
    grid = a0.grid
    if leakage_tol is not None:
        leak = boundary_leakage(a0.values, grid)
        if leak > leakage_tol:
            raise LeakageDetected(f"amplitude not localised: {leak:.2e} of the mass in the outer half", 0.0)
    S = np.asarray(S, dtype=float).reshape(grid.shape)
    if grad_S is None:
        grad_S = spectral_gradient(S, grid)
    A0 = SampledPotential(potential, grid).A(0.0)
    v = tuple(np.asarray(g, dtype=float).reshape(grid.shape) + a for g, a in zip(grad_S, A0.components))
    return WKBState(grid, np.array(a0.values), v, 1.0 / b, 0.0)


class _Spectral:
    def __init__(self, grid: Grid):
        self.grid = grid
        k = 2.0 * np.pi * sfft.fftfreq(grid.n, d=grid.spacing)
        k_odd = k.copy()
        k_odd[grid.n // 2] = 0.0
        self.ik = []
        for j in range(grid.dim):
            shape = [1] * grid.dim
            shape[j] = grid.n
            self.ik.append((1j * k_odd).reshape(shape))
        self.k2 = sum(kk**2 for kk in np.meshgrid(*([k] * grid.dim), indexing="ij"))
        cut = np.abs(k) < (2.0 / 3.0) * np.abs(k).max()
        mask = cut
        for _ in range(grid.dim - 1):
            mask = np.multiply.outer(mask, cut)
        self.mask = mask
        self.k_max = (2.0 / 3.0) * np.abs(k).max()

    def filt(self, a):
        out = sfft.ifftn(sfft.fftn(a) * self.mask)
        return out.real if np.isrealobj(a) else out

    def grad_hat(self, a_hat):
        return [sfft.ifftn(a_hat * ik) for ik in self.ik]


def _rhs(alpha, v, t, h, sampled: SampledPotential, nonlinearity: NonlinearitySpec, sp: _Spectral):
    grid = sp.grid
    a_hat = sfft.fftn(alpha) * sp.mask
    v_hat = [sfft.fftn(c) * sp.mask for c in v]
    alpha = sfft.ifftn(a_hat)
    v = [sfft.ifftn(c).real for c in v_hat]
    da = sp.grad_hat(a_hat)
    dv = [[d.real for d in sp.grad_hat(c)] for c in v_hat]
    lap_a = sfft.ifftn(-sp.k2 * a_hat)

    div_v = sum(dv[j][j] for j in range(grid.dim))
    adv_a = sum(v[j] * da[j] for j in range(grid.dim))
    dalpha = -2.0 * adv_a - alpha * div_v + 1j * h * lap_a

    rho = np.abs(alpha) ** 2
    gp = nonlinearity.profile_prime(rho)
    s = h * t
    dtA = sampled.dtA(s).components
    dV = []
    for k in range(grid.dim):
        adv = sum(v[j] * dv[k][j] for j in range(grid.dim))
        pressure = 2.0 * gp * (np.conj(alpha) * da[k]).real
        dV.append(-2.0 * adv - pressure + h * dtA[k])
    if grid.dim == 2:
        B = sampled.B12(s)
        dV[0] = dV[0] - 2.0 * v[1] * B
        dV[1] = dV[1] + 2.0 * v[0] * B
    dalpha = sp.filt(dalpha)
    dV = [sp.filt(c) for c in dV]
    return dalpha, dV


def wkb_rhs(state: WKBState, potential: PotentialSpec, nonlinearity: NonlinearitySpec):
    """Time derivative ``(dα/dt, dV/dt)`` of the state (pseudo-spectral, 2/3 dealiased)."""
    require_symmetrizable(nonlinearity, float(np.max(np.abs(state.alpha) ** 2)))
    sampled = SampledPotential(potential, state.grid)
    return _rhs(state.alpha, list(state.v), state.t, state.h, sampled, nonlinearity, _Spectral(state.grid))


# ---------------------------------------------------------------- symmetrizer


def flux_matrices(state: WKBState, nonlinearity: NonlinearitySpec, j: int, points=None) -> np.ndarray:
    """Coefficient of ``∂_j w`` in the quasilinear form, one matrix per point."""
    w = state.as_vector().reshape(state.grid.dim + 2, -1)
    if points is not None:
        w = w[:, points]
    n = state.grid.dim
    a1, a2, V = w[0], w[1], w[2:]
    gp = nonlinearity.profile_prime(a1**2 + a2**2)
    P = w.shape[1]
    M = np.zeros((P, n + 2, n + 2))
    for r in range(n + 2):
        M[:, r, r] = 2.0 * V[j]
    M[:, 0, 2 + j] = a1
    M[:, 1, 2 + j] = a2
    M[:, 2 + j, 0] = 2.0 * gp * a1
    M[:, 2 + j, 1] = 2.0 * gp * a2
    return M


def symmetrizer_check(state: WKBState, nonlinearity: NonlinearitySpec, j: int = 0, points=None) -> dict:
    """Max ``|ΣA_j - (ΣA_j)^T|`` and min eigenvalue of ``Σ = diag(1, 1, I/(2g'))``."""
    M = flux_matrices(state, nonlinearity, j, points)
    w = state.as_vector().reshape(state.grid.dim + 2, -1)
    if points is not None:
        w = w[:, points]
    gp = nonlinearity.profile_prime(w[0] ** 2 + w[1] ** 2)
    n = state.grid.dim
    diag = np.ones((M.shape[0], n + 2))
    diag[:, 2:] = (1.0 / (2.0 * gp))[:, None]
    SA = diag[:, :, None] * M
    asym = np.abs(SA - np.transpose(SA, (0, 2, 1))).max() if M.size else 0.0
    return {"max_asymmetry": float(asym), "min_eigenvalue": float(diag.min()), "direction": j, "points": M.shape[0]}


# ---------------------------------------------------------------- time stepping


def _wave_speed(alpha, v, nonlinearity):
    rho = np.abs(alpha) ** 2
    vmag = np.sqrt(sum(c**2 for c in v))
    sound = np.sqrt(2.0 * nonlinearity.profile_prime(rho) * rho)
    return float(np.max(2.0 * vmag + sound))


def _stable_dt(alpha, v, h, nonlinearity, sp: _Spectral, cfl):
    speed = _wave_speed(alpha, v, nonlinearity)
    dt_adv = cfl * sp.grid.spacing / speed if speed > 0 else np.inf
    # RK4 stability interval on the imaginary axis is 2√2
    dt_disp = cfl * 2.8 / (h * sp.k_max**2) if h > 0 else np.inf
    return min(dt_adv, dt_disp)


def _grad_max(v, sp):
    return max(float(np.max(np.abs(d))) for c in v for d in spectral_gradient(c, sp.grid)) if v else 0.0


def wkb_solve(cfg: WKBConfig, potential: PotentialSpec, nonlinearity: NonlinearitySpec) -> WKBTrajectory:
    """Classical RK4 in rescaled time up to ``cfg.t_end``.

    Raises ``ShockDetected`` (with the partial trajectory in ``.result``) when
    ``max|∇V|`` exceeds ``shock_ceiling``, and ``CFLError`` if the fixed step
    becomes unstable as the solution evolves.
    """
    state = wkb_init(cfg.a0, cfg.S, potential, cfg.b, cfg.grad_S, cfg.leakage_tol)
    grid = state.grid
    h = state.h
    sampled = SampledPotential(potential, grid)
    sp = _Spectral(grid)
    alpha = state.alpha.astype(complex)
    v = [c.copy() for c in state.v]
    require_symmetrizable(nonlinearity, float(np.max(np.abs(alpha) ** 2)) * 4.0)

    dt_max = _stable_dt(alpha, v, h, nonlinearity, sp, cfg.cfl)
    if cfg.dt is not None:
        dt_max = min(dt_max, cfg.dt)
    n_steps = max(1, math.ceil(cfg.t_end / dt_max - 1e-9))
    dt = cfg.t_end / n_steps

    def phase_rate(al, vv):
        return sum(c**2 for c in vv) + nonlinearity.profile(np.abs(al) ** 2)

    traj = WKBTrajectory(grid=grid, b=cfg.b, dt=dt)
    integral = np.zeros(grid.shape)
    rate = phase_rate(alpha, v)
    traj.times.append(0.0)
    traj.states.append(WKBState(grid, alpha.copy(), tuple(c.copy() for c in v), h, 0.0))
    traj.phase_integral.append(integral.copy())

    def f(al, vv, tt):
        return _rhs(al, vv, tt, h, sampled, nonlinearity, sp)

    t = 0.0
    for k in range(1, n_steps + 1):
        k1a, k1v = f(alpha, v, t)
        k2a, k2v = f(alpha + 0.5 * dt * k1a, [c + 0.5 * dt * d for c, d in zip(v, k1v)], t + 0.5 * dt)
        k3a, k3v = f(alpha + 0.5 * dt * k2a, [c + 0.5 * dt * d for c, d in zip(v, k2v)], t + 0.5 * dt)
        k4a, k4v = f(alpha + dt * k3a, [c + dt * d for c, d in zip(v, k3v)], t + dt)
        alpha = alpha + dt / 6.0 * (k1a + 2 * k2a + 2 * k3a + k4a)
        v = [c + dt / 6.0 * (a + 2 * b_ + 2 * c_ + d) for c, a, b_, c_, d in zip(v, k1v, k2v, k3v, k4v)]
        t = k * dt
        new_rate = phase_rate(alpha, v)
        integral = integral + 0.5 * dt * (rate + new_rate)
        rate = new_rate
        traj.steps = k

        if not (np.all(np.isfinite(alpha)) and all(np.all(np.isfinite(c)) for c in v)):
            traj.status = "shock"
            raise ShockDetected(f"WKB state became non-finite at t={t:.6g}", t, traj)
        if k == n_steps or k % cfg.snapshot_stride == 0:
            traj.times.append(t)
            traj.states.append(WKBState(grid, alpha.copy(), tuple(c.copy() for c in v), h, t))
            traj.phase_integral.append(integral.copy())
        if k % 10 == 0 or k == n_steps:
            gmax = _grad_max(v, sp)
            if gmax > cfg.shock_ceiling:
                traj.status = "shock"
                raise ShockDetected(f"max|grad V| = {gmax:.3e} exceeded {cfg.shock_ceiling:g} at t={t:.6g}", t, traj)
            if _wave_speed(alpha, v, nonlinearity) * dt > 1.0 * grid.spacing:
                raise CFLError(f"CFL number exceeded 1 at t={t:.6g}; reduce dt or cfl")
    return traj


# ---------------------------------------------------------------- reconstruction


@dataclass
class Reconstruction:
    """Fields in the original variables: ``u(s) = α(bs) e^{ibφ(bs)}`` at ``s = t/b``."""

    times: list
    fields: list
    phases: list
    defects: list


def _phase_grad(S_grad, integral, grid):
    gi = spectral_gradient(integral, grid)
    return [s - g for s, g in zip(S_grad, gi)]


def reconstruct(traj: WKBTrajectory, S: np.ndarray, b: float, potential: PotentialSpec | None = None,
                grad_S=None, defect_tol: float = 1e-3) -> Reconstruction:
    """Rebuild ``u`` from a WKB trajectory.

    ``φ = S - ∫_0^t (|V|² + g(|α|²))``.  The defect ``‖∇φ + A(ht) - V‖_{L²}``
    is recorded per snapshot; a warning is issued above ``defect_tol``.
    """
    grid = traj.grid
    S = np.asarray(S, dtype=float).reshape(grid.shape)
    if grad_S is None:
        grad_S = spectral_gradient(S, grid)
    sampled = SampledPotential(potential or PotentialSpec(), grid)
    out = Reconstruction([], [], [], [])
    worst = 0.0
    for t, st, integral in zip(traj.times, traj.states, traj.phase_integral):
        phi = S - integral
        u = st.alpha * np.exp(1j * b * phi)
        out.times.append(t / b)
        out.fields.append(ComplexField(grid, u))
        out.phases.append(phi)
        A = sampled.A(t / b).components
        gphi = _phase_grad(grad_S, integral, grid)
        diff = np.stack([gp + a - vv for gp, a, vv in zip(gphi, A, st.v)])
        d = math.sqrt(sum(l2_norm(c, grid) ** 2 for c in diff))
        out.defects.append(d)
        worst = max(worst, d)
    if worst > defect_tol:
        warnings.warn(f"WKB reconstruction defect {worst:.3e} exceeds {defect_tol:g}", RuntimeWarning, stacklevel=2)
    return out


def remark_h1mg(state: WKBState, phase_grad, A_nodes: RealVectorField, b: float) -> float:
    """``‖(i∇α - b(∇φ + A)α)‖ + ‖α‖``: the magnetic H¹ norm of ``α e^{ibφ}``."""
    grid = state.grid
    ga = spectral_gradient(state.alpha, grid)
    total = 0.0
    for j in range(grid.dim):
        comp = 1j * ga[j] - b * (phase_grad[j] + A_nodes.components[j]) * state.alpha
        total += l2_norm(comp, grid) ** 2
    return math.sqrt(total) + l2_norm(state.alpha, grid)


# ---------------------------------------------------------------- comparisons


def required_points(grid: Grid, b: float, vmax: float, points_per_wavelength: float = 8.0) -> int:
    need = grid.length * b * vmax * points_per_wavelength / (2.0 * math.pi)
    n = grid.n
    while n < need:
        n *= 2
    return n


def check_resolution(grid: Grid, b: float, state: WKBState, points_per_wavelength: float = 8.0):
    vmax = math.sqrt(float(np.max(sum(c**2 for c in state.v))))
    n_req = required_points(grid, b, vmax, points_per_wavelength)
    if n_req > grid.n:
        raise ResolutionError(f"grid with n={grid.n} does not resolve the oscillation b*|grad S + A| = {b * vmax:.3g}",
                              n_req)


def lift(traj: WKBTrajectory, index: int, fine: Grid, S_fine: np.ndarray, b: float) -> np.ndarray:
    """Reconstructed ``u`` of snapshot ``index`` evaluated on a finer grid.

    ``α`` and the phase integral are smooth, so they are Fourier interpolated;
    ``S`` is sampled directly on the fine grid.
    """
    st = traj.states[index]
    alpha = fourier_resample(st.alpha, traj.grid, fine)
    integral = fourier_resample(traj.phase_integral[index], traj.grid, fine)
    return alpha * np.exp(1j * b * (S_fine - integral))


@dataclass
class CompareRow:
    b: float
    discrepancy: float
    n_direct: int
    steps_direct: int
    n_wkb: int
    steps_wkb: int


def compare_to_direct(cfg: WKBConfig, potential: PotentialSpec, nonlinearity: NonlinearitySpec, b_list,
                      direct_grid: Grid, a0_func, S_func, phase_per_step: float = 0.02,
                      wkb_grid: Grid | None = None, points_per_wavelength: float = 8.0,
                      cn_tolerance: float = 1e-10, grad_S_func=None) -> list[CompareRow]:
    """Relative L² gap between the direct solve and the WKB reconstruction at ``s = T/b``.

    ``a0_func`` and ``S_func`` evaluate the amplitude and phase on a grid's
    coordinates so both solvers sample them natively.  ``direct_grid`` may be
    a callable ``b -> Grid`` so the direct resolution can follow the
    oscillation frequency.  ``grad_S_func`` gives the exact phase gradient
    when ``S`` is not periodic on the box.
    """
    from .propagator import SolverConfig, solve

    if nonlinearity.sign != 1 or nonlinearity.gamma != 2:
        raise InvalidParameter("WKB comparison needs sign=+1 and gamma=2")
    grid_for = direct_grid if callable(direct_grid) else (lambda _b: direct_grid)
    rows = []
    for b in b_list:
        direct_grid = grid_for(b)
        coarse = wkb_grid or direct_grid
        a0_w = ComplexField(coarse, a0_func(*coarse.coords()))
        S_w = np.asarray(S_func(*coarse.coords()), dtype=float)
        grad_w = None if grad_S_func is None else grad_S_func(*coarse.coords())
        wcfg = replace(cfg, b=float(b), a0=a0_w, S=S_w, grad_S=grad_w)
        init = wkb_init(a0_w, S_w, potential, b, grad_w, leakage_tol=cfg.leakage_tol)
        check_resolution(direct_grid, b, init, points_per_wavelength)
        traj = wkb_solve(wcfg, potential, nonlinearity)

        a0_d = a0_func(*direct_grid.coords())
        S_d = np.asarray(S_func(*direct_grid.coords()), dtype=float)
        u0 = ComplexField(direct_grid, a0_d * np.exp(1j * b * S_d))
        vmax2 = float(np.max(sum(c**2 for c in init.v)))
        omega = b**2 * (vmax2 + float(nonlinearity.profile(np.max(np.abs(a0_d)) ** 2)) + 1.0)
        t_phys = cfg.t_end / b
        steps = max(2, math.ceil(omega * t_phys / phase_per_step))
        scfg = SolverConfig(b=float(b), dt=t_phys / steps, t_end=t_phys, snapshot_stride=steps,
                            cn_tolerance=cn_tolerance, initial_leakage_tol=cfg.leakage_tol, blowup_factor=1e6)
        res = solve(u0, potential, nonlinearity, scfg)
        u_wkb = lift(traj, len(traj.times) - 1, direct_grid, S_d, b)
        gap = l2_norm(res.final.values - u_wkb, direct_grid) / l2_norm(u0.values, direct_grid)
        rows.append(CompareRow(float(b), gap, direct_grid.n, steps, coarse.n, traj.steps))
    return rows


# ---------------------------------------------------------------- instability


@dataclass
class InstabilityRow:
    b: float
    delta: float
    init_gap: float
    t_sep: float
    t_sep_times_b: float
    max_separation: float

    @property
    def separated(self) -> bool:
        return math.isfinite(self.t_sep)


def default_delta(b: float) -> float:
    return b**-0.5


def instability_experiment(grid: Grid, a0: ComplexField, S: np.ndarray, potential: PotentialSpec,
                           nonlinearity: NonlinearitySpec, b_list, t_rescaled: float = 0.1,
                           delta_rule=default_delta, threshold: float = 1.0, steps: int = 2000,
                           samples: int = 400, cn_tolerance: float = 1e-10,
                           leakage_tol: float | None = 1e-10) -> list[InstabilityRow]:
    """Two direct solves from ``a0 e^{ibS}`` and ``(1+δ_b) a0 e^{ibS}`` per ``b``.

    Reports the first sampled time at which the L² separation reaches
    ``threshold``; ``t_sep`` is ``inf`` if it never does before ``t_rescaled/b``.
    """
    from .propagator import SolverConfig, solve

    rows = []
    S = np.asarray(S, dtype=float).reshape(grid.shape)
    stride = max(1, steps // samples)
    for b in b_list:
        delta = float(delta_rule(b))
        phase = np.exp(1j * b * S)
        u0 = ComplexField(grid, a0.values * phase)
        v0 = ComplexField(grid, (1.0 + delta) * a0.values * phase)
        t_end = t_rescaled / b
        cfg = SolverConfig(b=float(b), dt=t_end / steps, t_end=t_end, snapshot_stride=stride,
                           cn_tolerance=cn_tolerance, initial_leakage_tol=leakage_tol,
                           leakage_tol=None if leakage_tol is None else 1e-6, blowup_factor=1e8)
        ru = solve(u0, potential, nonlinearity, cfg)
        rv = solve(v0, potential, nonlinearity, cfg)
        seps = [l2_norm(f.values - g.values, grid) for f, g in zip(ru.trajectory.fields, rv.trajectory.fields)]
        t_sep = math.inf
        for t, s in zip(ru.trajectory.times, seps):
            if s >= threshold:
                t_sep = t
                break
        rows.append(InstabilityRow(float(b), delta, seps[0], t_sep, t_sep * b, max(seps)))
    return rows


def constant_data_separation(amplitude: float, delta: float, b: float, nonlinearity: NonlinearitySpec,
                             t: np.ndarray, volume: float) -> np.ndarray:
    """Exact L² separation for spatially constant data on the torus.

    Constant data only rotate in phase, ``u(s) = a e^{-i b² g(|a|²) s}``.
    """
    a, at = amplitude, (1.0 + delta) * amplitude
    c = b**nonlinearity.gamma * nonlinearity.sign
    wa = c * float(nonlinearity.profile(abs(a) ** 2))
    wb = c * float(nonlinearity.profile(abs(at) ** 2))
    diff = a * np.exp(-1j * wa * t) - at * np.exp(-1j * wb * t)
    return np.abs(diff) * math.sqrt(volume)
