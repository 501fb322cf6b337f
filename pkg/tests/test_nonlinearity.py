import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad

from magnls.errors import InvalidParameter, SymmetrizabilityError
from magnls.field import ComplexField, Grid, RealVectorField
from magnls.nonlinearity import (NonlinearitySpec, energy, energy_m, eval_f, eval_F, eval_fm, eval_Fm, eval_G,
                                 eval_Gm, phase_multiplier, require_symmetrizable, split_f1, split_f2,
                                 truncate_f2m)

CUBIC = NonlinearitySpec(sigma=1.0, sign=-1, gamma=0.0)
rng = np.random.default_rng(11)


def random_z(n, scale=3.0):
    return scale * (rng.normal(size=n) + 1j * rng.normal(size=n))


class TestSpec:
    def test_alpha(self):
        assert NonlinearitySpec(sigma=1.5).alpha == 3.0

    def test_bad_sign(self):
        with pytest.raises(InvalidParameter):
            NonlinearitySpec(sign=0)

    def test_bad_gamma(self):
        with pytest.raises(InvalidParameter):
            NonlinearitySpec(gamma=-1)

    def test_custom_profile_checked(self):
        ok = NonlinearitySpec(g_kind="custom", g=lambda s: s + s**2, g_prime=lambda s: 1 + 2 * s)
        assert ok.primitive(2.0) == pytest.approx(2.0 + 8.0 / 3.0, rel=1e-12)
        with pytest.raises(InvalidParameter):
            NonlinearitySpec(g_kind="custom", g=lambda s: -s, g_prime=lambda s: -np.ones_like(s))

    def test_coupling(self):
        assert NonlinearitySpec(sign=1, gamma=2.0).coupling(3.0) == 9.0
        assert CUBIC.coupling(5.0) == -1.0


class TestF:
    def test_values(self):
        assert eval_f(CUBIC, 2) == 8
        assert eval_f(CUBIC, 0) == 0
        assert eval_f(CUBIC, 1j) == 1j

    def test_gauge_structure(self):
        z = random_z(200)
        r = np.abs(z)
        assert np.allclose(eval_f(CUBIC, z), z / r * eval_f(CUBIC, r))


class TestSplitting:
    def test_examples(self):
        assert split_f1(CUBIC, 2) == 2 and split_f2(CUBIC, 2) == 6
        assert split_f1(CUBIC, 0.5) == 0.125 and split_f2(CUBIC, 0.5) == 0

    def test_sum_identity(self):
        z = random_z(1000)
        assert np.max(np.abs(split_f1(CUBIC, z) + split_f2(CUBIC, z) - eval_f(CUBIC, z))) <= 1e-12 * np.max(np.abs(z)) ** 3

    def test_f1_lipschitz(self):
        # one constant over |z| <= 100; the cubic's is 3 (from |z|²z on the unit disc)
        z1, z2 = random_z(20000, 30.0), random_z(20000, 30.0)
        keep = (np.abs(z1) <= 100) & (np.abs(z2) <= 100)
        small = random_z(20000, 0.4)
        z1 = np.concatenate([z1[keep], small])
        z2 = np.concatenate([z2[keep], small + random_z(20000, 0.01)])
        ratio = np.abs(split_f1(CUBIC, z1) - split_f1(CUBIC, z2)) / np.abs(z1 - z2)
        assert ratio.max() <= 3.0 + 1e-9


class TestTruncation:
    def test_examples(self):
        assert truncate_f2m(CUBIC, 5, 3) == pytest.approx(40)
        assert truncate_f2m(CUBIC, 2, 3) == pytest.approx(6)

    @pytest.mark.parametrize("m", [1, 2, 5])
    def test_continuity(self, m):
        lo = truncate_f2m(CUBIC, m * (1 - 1e-12), m)
        hi = truncate_f2m(CUBIC, m * (1 + 1e-12), m)
        assert abs(lo - hi) <= 1e-9 * (abs(lo) + 1)

    @pytest.mark.parametrize("m", [0, -2, 1.5])
    def test_invalid_m(self, m):
        with pytest.raises(InvalidParameter):
            truncate_f2m(CUBIC, 1.0, m)

    def test_exact_below_threshold(self):
        for m in (1, 2, 4, 8):
            z = random_z(500)
            z = z[np.abs(z) <= m]
            assert np.allclose(eval_fm(CUBIC, z, m), eval_f(CUBIC, z), rtol=0, atol=1e-12)

    def test_multiplier_is_real(self):
        r = np.linspace(0, 10, 101)
        assert np.isrealobj(phase_multiplier(CUBIC, r, 3))

    def test_uniform_convergence_on_bounded_family(self):
        g = Grid(1, 128, 16.0)
        x, = g.coords()
        sample = []
        for _ in range(50):
            a, c, w = rng.uniform(0.5, 6.0), rng.uniform(-2, 2), rng.uniform(0.5, 1.5)
            sample.append(a * np.exp(-((x - c) / w) ** 2) * np.exp(1j * rng.normal() * x))
        sups = []
        for m in range(1, 9):
            sups.append(max(np.sqrt(np.sum(np.abs(truncate_f2m(CUBIC, u, m) - split_f2(CUBIC, u)) ** 2) * g.spacing)
                            for u in sample))
        assert all(b <= a for a, b in zip(sups, sups[1:]))
        assert sups[-1] < 1e-3 * sups[0]


class TestEnergies:
    def test_F_values(self):
        assert eval_F(CUBIC, 2) == pytest.approx(4.0)
        s = NonlinearitySpec(sigma=2.0)
        assert eval_F(s, 1.5) == pytest.approx(1.5**6 / 6)

    def test_F_is_primitive_of_f(self):
        for z in (0.3, 1.7, 4.0):
            val, _ = quad(lambda s: eval_f(CUBIC, s).real, 0, z)
            assert eval_F(CUBIC, z) == pytest.approx(val, rel=1e-12)

    @pytest.mark.parametrize("m", [1, 2, 3])
    def test_Fm_is_primitive_of_fm(self, m):
        for z in (0.5, 1.0, 2.2, 3.5, 7.0):
            val, _ = quad(lambda s: eval_fm(CUBIC, s, m).real, 0, z, points=[1.0, float(m)], limit=200)
            assert eval_Fm(CUBIC, z, m) == pytest.approx(val, rel=1e-10)

    def test_G_zero(self):
        assert eval_G(CUBIC, ComplexField.zeros(Grid(2, 8, 2.0))) == 0

    def test_Gm_equals_G_below_threshold(self):
        g = Grid(2, 16, 4.0)
        for _ in range(20):
            u = ComplexField(g, rng.normal(size=g.shape) + 1j * rng.normal(size=g.shape))
            m = int(np.ceil(np.abs(u.values).max()))
            assert eval_Gm(CUBIC, u, m) == pytest.approx(eval_G(CUBIC, u), rel=1e-12)

    @pytest.mark.parametrize("sign", [1, -1])
    def test_plane_wave_energy(self, sign):
        g = Grid(1, 64, 2 * np.pi)
        x, = g.coords()
        c, k = 0.7, 3
        spec = NonlinearitySpec(sigma=1.0, sign=sign, gamma=0.0)
        u = ComplexField(g, c * np.exp(1j * k * x))
        lam = (4 / g.spacing**2) * np.sin(k * g.spacing / 2) ** 2
        expected = 0.5 * lam * c**2 * g.length + sign * 0.25 * c**4 * g.length
        assert energy(spec, 5.0, u, RealVectorField.zeros(g)) == pytest.approx(expected, rel=1e-12)

    def test_energy_zero_and_m(self):
        g = Grid(1, 32, 8.0)
        A = RealVectorField.zeros(g)
        assert energy(CUBIC, 2.0, ComplexField.zeros(g), A) == 0
        u = ComplexField(g, 1.5 * np.exp(-g.axis() ** 2))
        assert energy_m(CUBIC, 2.0, u, A, 2) == pytest.approx(energy(CUBIC, 2.0, u, A), rel=1e-14)

    def test_symmetrizable(self):
        require_symmetrizable(CUBIC, 10.0)
        bad = NonlinearitySpec(sigma=0.5)  # g' = s^{-1/2}/2 is infinite at 0 but positive
        require_symmetrizable(bad, 4.0)


@settings(max_examples=200, deadline=None)
@given(st.complex_numbers(max_magnitude=50, allow_nan=False, allow_infinity=False), st.integers(1, 10))
def test_fm_split_identity(z, m):
    assert eval_fm(CUBIC, z, m) == pytest.approx(split_f1(CUBIC, z) + truncate_f2m(CUBIC, z, m), rel=1e-12, abs=1e-12)


def test_symmetrizability_lost_at_large_amplitude():
    # g' = 1 - s/200 is positive on the construction check range only
    spec = NonlinearitySpec(g_kind="custom", g=lambda s: s - s**2 / 400, g_prime=lambda s: 1 - s / 200)
    require_symmetrizable(spec, 150.0)
    with pytest.raises(SymmetrizabilityError):
        require_symmetrizable(spec, 300.0)
