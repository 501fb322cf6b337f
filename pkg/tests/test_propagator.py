import numpy as np
import pytest
from scipy.integrate import solve_ivp

from magnls.errors import BlowupDetected, InvalidParameter, LeakageDetected, SolverDivergence
from magnls.field import ComplexField, Grid, l2_norm, lp_norm
from magnls.linsolve import CrankNicolson, MagneticLaplacian, cn_amplification
from magnls.nonlinearity import NonlinearitySpec
from magnls.potential import PotentialSpec, eval_A
from magnls.propagator import (SolverConfig, linear_step, nonlinear_step, solve, solve_piecewise_A,
                               solve_truncated, strang_step, trajectory_distance)

DEFOC = NonlinearitySpec(sigma=1.0, sign=1, gamma=0.0)
FOC = NonlinearitySpec(sigma=1.0, sign=-1, gamma=0.0)


def gaussian(grid, center=(0.0, 0.0), amp=1.0, width=1.0, k=(0.0, 0.0)):
    pts = grid.coords()
    r2 = sum((p - c) ** 2 for p, c in zip(pts, center))
    phase = sum(kk * p for kk, p in zip(k, pts))
    return ComplexField(grid, amp * np.exp(-r2 / width**2) * np.exp(1j * phase))


class TestConfig:
    def test_dt_below_t_end(self):
        with pytest.raises(InvalidParameter):
            SolverConfig(b=1, dt=1.0, t_end=1.0)

    def test_tolerance_bound(self):
        with pytest.raises(InvalidParameter):
            SolverConfig(b=1, dt=0.1, t_end=1.0, cn_tolerance=1e-5)

    def test_piecewise_windows_must_divide(self):
        with pytest.raises(InvalidParameter):
            SolverConfig(b=1, dt=0.1, t_end=1.0, ladder="piecewise_A", ladder_n=3)

    def test_last_step_clipped(self):
        cfg = SolverConfig(b=1, dt=0.3, t_end=1.0)
        assert cfg.n_steps == 4
        assert cfg.step_times(3) == (pytest.approx(0.9), pytest.approx(0.1))


class TestLinearSolver:
    def test_laplacian_hermitian(self):
        g = Grid(2, 8, 4.0)
        A = eval_A(PotentialSpec(kind="linear_plus_bump", b0=1.0, bump_amplitude=0.5), 0.0, g, staggered=True)
        H = MagneticLaplacian(A, 2.0).sparse().toarray()
        assert np.max(np.abs(H - H.conj().T)) < 1e-12
        rng = np.random.default_rng(0)
        u = rng.normal(size=g.shape) + 1j * rng.normal(size=g.shape)
        assert np.allclose(MagneticLaplacian(A, 2.0).apply(u).ravel(), H @ u.ravel())

    @pytest.mark.parametrize("method", ["direct", "iterative"])
    def test_plane_wave_amplification(self, method):
        g = Grid(1, 32, 2 * np.pi)
        x, = g.coords()
        k, dt = 3, 0.05
        u = np.exp(1j * k * x)
        A = eval_A(PotentialSpec(), 0.0, g, staggered=True)
        out = CrankNicolson(A, 1.0, dt, method=method).apply(u)
        lam = (4 / g.spacing**2) * np.sin(k * g.spacing / 2) ** 2
        amp = (1 - 0.5j * dt * lam) / (1 + 0.5j * dt * lam)
        assert np.allclose(out, amp * u, atol=1e-10)
        assert abs(abs(amp) - 1) < 1e-15
        assert np.allclose(np.abs(cn_amplification(g, dt)), 1.0, atol=1e-15)

    def test_iterative_matches_direct(self):
        g = Grid(2, 32, 8.0)
        A = eval_A(PotentialSpec(kind="constant_field", b0=1.0), 0.0, g, staggered=True)
        u = gaussian(g, (0.5, 0.0)).values
        d = CrankNicolson(A, 3.0, 0.01, "direct").apply(u)
        it = CrankNicolson(A, 3.0, 0.01, "iterative", tol=1e-12)
        assert np.max(np.abs(it.apply(u) - d)) < 1e-10
        assert it.last_residual <= 1e-11


class TestSteps:
    def test_nonlinear_phase(self):
        g = Grid(1, 8, 1.0)
        out = nonlinear_step(ComplexField(g, np.ones(8)), FOC, np.pi, 1.0)
        assert np.allclose(out.values, -1.0, atol=1e-15)

    def test_nonlinear_preserves_modulus(self):
        rng = np.random.default_rng(1)
        g = Grid(2, 16, 4.0)
        u = ComplexField(g, rng.normal(size=g.shape) + 1j * rng.normal(size=g.shape))
        out = nonlinear_step(u, DEFOC, 0.37, 2.0)
        assert np.allclose(np.abs(out.values), np.abs(u.values), rtol=1e-15, atol=0)
        assert lp_norm(out, 2) == pytest.approx(lp_norm(u, 2), rel=1e-15)
        assert np.array_equal(nonlinear_step(u, DEFOC, 0.0, 2.0).values, u.values)

    def test_strang_is_symmetric_composition(self):
        g = Grid(2, 16, 8.0)
        pot = PotentialSpec(kind="constant_field", b0=1.0)
        u = gaussian(g, amp=1.3)
        ref = nonlinear_step(linear_step(nonlinear_step(u, DEFOC, 0.01, 2.0), pot, 0.0, 0.02, 2.0), DEFOC, 0.01, 2.0)
        assert np.array_equal(strang_step(u, pot, DEFOC, 0.0, 0.02, 2.0).values, ref.values)

    def test_linear_step_order_two(self):
        # Richardson self-convergence with a time-dependent potential
        g = Grid(2, 32, 10.0)
        pot = PotentialSpec(kind="constant_field", b0=1.0, modulation="sinusoidal", mod_amplitude=0.8,
                            mod_frequency=6.0)
        u0 = gaussian(g, (0.5, 0.0))
        T = 0.2
        finals = []
        for n in (10, 20, 40):
            u = u0
            for k in range(n):
                u = linear_step(u, pot, k * T / n, T / n, 2.0)
            finals.append(u.values)
        ratio = np.linalg.norm(finals[0] - finals[1]) / np.linalg.norm(finals[1] - finals[2])
        assert 3.5 <= ratio <= 4.5

    def test_strang_order_two(self):
        g = Grid(1, 256, 20.0)
        u0 = gaussian(g, amp=1.5)
        cfg = dict(b=1.0, t_end=0.5, snapshot_stride=10**6, leakage_tol=None)
        finals = [solve(u0, PotentialSpec(), FOC, SolverConfig(dt=dt, **cfg)).final.values
                  for dt in (0.01, 0.005, 0.0025, 0.000625)]
        e1 = l2_norm(finals[0] - finals[3], g)
        e2 = l2_norm(finals[1] - finals[3], g)
        e3 = l2_norm(finals[2] - finals[3], g)
        # reference error shrinks the raw ratio; compare consecutive differences instead
        d1 = l2_norm(finals[0] - finals[1], g)
        d2 = l2_norm(finals[1] - finals[2], g)
        assert 3.5 <= d1 / d2 <= 4.5
        assert e1 > e2 > e3

    def test_time_reversal(self):
        g = Grid(2, 32, 10.0)
        pot = PotentialSpec(kind="linear_plus_bump", b0=1.0, bump_amplitude=0.4, modulation="sinusoidal",
                            mod_amplitude=0.3)
        u0 = gaussian(g, (0.3, 0.2), amp=1.2)
        dt = 0.01
        fwd = strang_step(u0, pot, DEFOC, 0.1, dt, 2.0)
        back = strang_step(fwd, pot, DEFOC, 0.1 + dt, -dt, 2.0)
        assert l2_norm(back.values - u0.values, g) <= dt**3


def test_cyclotron_ehrenfest():
    # (i∇ - bA)² = |p + bA|² with A = B0(-y, x)/2: the centre of mass follows the classical orbit
    g = Grid(2, 256, 16.0)
    b, B0 = 1.0, 1.0
    pot = PotentialSpec(kind="constant_field", b0=B0)
    quarter = 0.25 * 2 * np.pi / (2 * b * B0)
    steps = 200
    small = gaussian(g, (2.0, 0.0), amp=1e-4)
    res = solve(small, pot, DEFOC, SolverConfig(b=b, dt=quarter / steps, t_end=quarter, snapshot_stride=steps // 4,
                                                leakage_tol=None, initial_leakage_tol=None))

    def rhs(t, s):
        x, y, px, py = s
        vx, vy = 2 * (px - 0.5 * b * B0 * y), 2 * (py + 0.5 * b * B0 * x)
        return [vx, vy, -0.5 * b * B0 * vy, 0.5 * b * B0 * vx]

    sol = solve_ivp(rhs, (0, quarter), [2.0, 0.0, 0.0, 0.0], t_eval=res.trajectory.times, rtol=1e-12, atol=1e-12)
    radius = 1.0  # |v(0)| / (2bB0)
    x, y = g.coords()
    assert len(res.trajectory) == 5
    for i, f in enumerate(res.trajectory.fields):
        rho = np.abs(f.values) ** 2
        cx, cy = (rho * x).sum() / rho.sum(), (rho * y).sum() / rho.sum()
        assert np.hypot(cx - sol.y[0, i], cy - sol.y[1, i]) <= 0.01 * radius
    assert np.hypot(sol.y[0, -1] - 2.0, sol.y[1, -1]) > radius


class TestSolve:
    def test_zero_data(self):
        g = Grid(2, 16, 8.0)
        res = solve(ComplexField.zeros(g), PotentialSpec(kind="constant_field", b0=1.0), DEFOC,
                    SolverConfig(b=2.0, dt=0.01, t_end=0.05))
        assert np.all(res.final.values == 0)
        for c in ("mass", "kinetic", "nl_energy", "energy", "correction_integral", "energy_law_residual",
                  "h1mg_norm", "max_abs", "boundary_leakage"):
            assert np.all(res.series.column(c) == 0)

    def test_rows_follow_stride(self):
        g = Grid(1, 64, 20.0)
        res = solve(gaussian(g), PotentialSpec(), DEFOC, SolverConfig(b=1, dt=0.01, t_end=0.2, snapshot_stride=5))
        assert list(res.series.columns["step"]) == [0, 5, 10, 15, 20]
        assert res.series.columns["energy_law_residual"][0] == 0.0

    def test_defocusing_global_run(self):
        g = Grid(1, 512, 60.0)
        res = solve(gaussian(g, amp=1.0), PotentialSpec(), DEFOC,
                    SolverConfig(b=1.0, dt=5e-3, t_end=5.0, snapshot_stride=50, leakage_tol=None))
        h1 = res.series.column("h1mg_norm")
        assert res.status == "ok" and res.time == pytest.approx(5.0)
        assert h1.max() <= 1.5 * h1[0]

    def test_focusing_blowup_monitor(self):
        g = Grid(1, 1024, 20.0)
        quintic = NonlinearitySpec(sigma=2.0, sign=-1, gamma=0.0)
        with pytest.raises(BlowupDetected) as info:
            solve(gaussian(g, amp=3.0), PotentialSpec(), quintic,
                  SolverConfig(b=1.0, dt=1e-4, t_end=0.2, snapshot_stride=50, blowup_factor=10))
        exc = info.value
        assert exc.exit_code == 4 and 0 < exc.time < 0.2
        series = exc.result.series
        assert series.aborted == "blowup"
        assert series.column("h1mg_norm")[-1] > 10 * series.column("h1mg_norm")[0]
        assert series.column("time")[-1] == pytest.approx(exc.time)

    def test_initial_leakage(self):
        g = Grid(1, 64, 8.0)
        with pytest.raises(LeakageDetected):
            solve(gaussian(g, width=2.0), PotentialSpec(), DEFOC, SolverConfig(b=1, dt=0.01, t_end=0.1))

    def test_leakage_monitor(self):
        g = Grid(1, 256, 20.0)
        with pytest.raises(LeakageDetected) as info:
            solve(gaussian(g, k=(8.0,)), PotentialSpec(), DEFOC, SolverConfig(b=1, dt=0.005, t_end=1.0))
        assert info.value.exit_code == 5
        assert info.value.result.series.aborted == "leakage"

    def test_solver_divergence(self):
        g = Grid(2, 32, 16.0)
        pot = PotentialSpec(kind="constant_field", b0=1.0, modulation="sinusoidal", mod_amplitude=0.5)
        with pytest.raises(SolverDivergence) as info:
            solve(gaussian(g), pot, DEFOC, SolverConfig(b=1, dt=1e-2, t_end=0.05, cn_tolerance=1e-17,
                                                         cn_max_iterations=2))
        assert info.value.exit_code == 3 and info.value.residual > 1e-17
        assert info.value.result is not None

    @pytest.mark.parametrize("ladder", [dict(), dict(ladder="truncated", ladder_m=1),
                                        dict(ladder="piecewise_A", ladder_n=4)])
    def test_mass_conservation(self, ladder):
        g = Grid(2, 32, 16.0)
        pot = PotentialSpec(kind="linear_plus_bump", b0=1.0, bump_amplitude=0.5, modulation="sinusoidal",
                            mod_amplitude=0.4)
        cfg = SolverConfig(b=2.0, dt=0.01, t_end=0.2, **ladder)
        res = solve(gaussian(g, amp=1.5), pot, DEFOC, cfg)
        mass = res.series.column("mass")
        assert np.max(np.abs(mass - mass[0])) / mass[0] <= 10 * cfg.cn_tolerance * cfg.n_steps


class TestLadders:
    def test_piecewise_static_is_identical(self):
        g = Grid(2, 16, 16.0)
        pot = PotentialSpec(kind="constant_field", b0=1.0)
        u0 = gaussian(g)
        base = solve(u0, pot, DEFOC, SolverConfig(b=2.0, dt=0.01, t_end=0.08))
        for n in (1, 2, 8):
            r = solve_piecewise_A(u0, pot, DEFOC, SolverConfig(b=2.0, dt=0.01, t_end=0.08, ladder="piecewise_A",
                                                               ladder_n=n))
            assert np.array_equal(r.final.values, base.final.values)

    def test_piecewise_first_order(self):
        g = Grid(2, 32, 16.0)
        pot = PotentialSpec(kind="constant_field", b0=1.0, modulation="sinusoidal", mod_amplitude=0.5,
                            mod_frequency=4.0)
        u0 = gaussian(g, (0.5, 0.0), amp=1.2)
        kw = dict(b=2.0, dt=2e-3, t_end=0.256, snapshot_stride=8)
        ref = solve(u0, pot, DEFOC, SolverConfig(**kw))
        errs = [trajectory_distance(solve_piecewise_A(u0, pot, DEFOC, SolverConfig(ladder="piecewise_A", ladder_n=n,
                                                                                    **kw)).trajectory,
                                    ref.trajectory) for n in (4, 8)]
        assert 1.7 <= errs[0] / errs[1] <= 2.3

    def test_truncated_large_m_matches(self):
        g = Grid(1, 256, 20.0)
        u0 = gaussian(g, amp=1.5)
        kw = dict(b=1.0, dt=0.01, t_end=0.2, snapshot_stride=5)
        ref = solve(u0, PotentialSpec(), DEFOC, SolverConfig(**kw))
        r = solve_truncated(u0, PotentialSpec(), DEFOC, SolverConfig(ladder="truncated", ladder_m=3, **kw))
        assert trajectory_distance(r.trajectory, ref.trajectory) <= 5 * 1e-10

    def test_truncation_separates(self):
        g = Grid(1, 256, 20.0)
        u0 = gaussian(g, amp=2.5)
        kw = dict(b=1.0, dt=0.01, t_end=0.1, snapshot_stride=5)
        r1 = solve_truncated(u0, PotentialSpec(), DEFOC, SolverConfig(ladder="truncated", ladder_m=1, **kw))
        r2 = solve_truncated(u0, PotentialSpec(), DEFOC, SolverConfig(ladder="truncated", ladder_m=2, **kw))
        assert trajectory_distance(r1.trajectory, r2.trajectory) > 1e-2

    def test_ladder_mismatch(self):
        g = Grid(1, 64, 20.0)
        with pytest.raises(InvalidParameter):
            solve_truncated(gaussian(g), PotentialSpec(), DEFOC, SolverConfig(b=1, dt=0.1, t_end=0.5))


def test_trajectory_distance_needs_common_times():
    from magnls.propagator import Trajectory

    g = Grid(1, 8, 1.0)
    a, b_ = Trajectory(), Trajectory()
    a.append(0.0, ComplexField.zeros(g))
    b_.append(1.0, ComplexField.zeros(g))
    with pytest.raises(InvalidParameter):
        trajectory_distance(a, b_)
