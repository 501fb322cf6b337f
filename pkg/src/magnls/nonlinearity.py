"""Gauge-invariant nonlinearities ``f(u) = u g(|u|^2)``, truncations and energies.

Everything is written in terms of the radial profile ``f(r) = r g(r^2)`` for
``r >= 0`` and the primitive ``P(s) = ∫_0^s g``, so that
``F(z) = ∫_0^{|z|} f = P(|z|^2) / 2``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import InvalidParameter, SymmetrizabilityError
from .field import ComplexField, RealVectorField, covariant_gradient, lp_norm

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(32)


@dataclass(frozen=True, eq=False)
class NonlinearitySpec:
    """``sign * b**gamma * f(u)`` enters ``i u_t = H u + ...``.

    ``sign=-1`` is the focusing convention ``i u_t = H u - b^γ f`` for a
    positive profile; ``sign=+1`` the defocusing one ``i u_t = H u + b^γ f``.
    """

    g_kind: str = "power"
    sigma: float = 1.0
    sign: int = -1
    gamma: float = 0.0
    g: Callable | None = field(default=None, repr=False)
    g_prime: Callable | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.sign not in (-1, 1):
            raise InvalidParameter(f"sign must be +1 or -1, got {self.sign}")
        if self.gamma < 0:
            raise InvalidParameter("gamma must be nonnegative")
        if self.g_kind == "power":
            if not self.sigma > 0:
                raise InvalidParameter("power nonlinearity needs sigma > 0")
        elif self.g_kind == "custom":
            if self.g is None or self.g_prime is None:
                raise InvalidParameter("custom profile needs g and g_prime callables")
            s = np.linspace(0.0, 100.0, 2001)
            if not np.all(np.asarray(self.g_prime(s)) > 0):
                raise InvalidParameter("custom profile rejected: g' not positive on [0, 100]")
        else:
            raise InvalidParameter(f"unknown g_kind {self.g_kind!r}")

    @property
    def alpha(self) -> float:
        """Growth exponent of ``f`` (``2σ`` for the power profile)."""
        if self.g_kind == "power":
            return 2.0 * self.sigma
        return float("nan")

    @property
    def defocusing(self) -> bool:
        return self.sign == 1

    def coupling(self, b: float) -> float:
        return self.sign * b**self.gamma

    # profile and primitive
    def profile(self, s):
        s = np.asarray(s, dtype=float)
        if self.g_kind == "power":
            return s**self.sigma
        return np.asarray(self.g(s), dtype=float)

    def profile_prime(self, s):
        s = np.asarray(s, dtype=float)
        if self.g_kind == "power":
            if self.sigma == 1.0:
                return np.ones_like(s)
            with np.errstate(divide="ignore"):
                return self.sigma * s ** (self.sigma - 1.0)
        return np.asarray(self.g_prime(s), dtype=float)

    def primitive(self, s):
        s = np.asarray(s, dtype=float)
        if self.g_kind == "power":
            return s ** (self.sigma + 1.0) / (self.sigma + 1.0)
        half = 0.5 * s[..., None]
        nodes = half * (_GL_NODES + 1.0)
        return np.sum(self.profile(nodes) * _GL_WEIGHTS, axis=-1) * half[..., 0]


# ---------------------------------------------------------------- f and its splitting


def _radial_f(spec, r):
    return r * spec.profile(r * r)


def eval_f(spec: NonlinearitySpec, z):
    z = np.asarray(z, dtype=complex)
    out = z * spec.profile(np.abs(z) ** 2)
    return out if out.ndim else complex(out)


def _ratio_f1(spec, r):
    """``f̃1(r) / r``: the multiplier of z in the globally Lipschitz part."""
    g1 = float(spec.profile(1.0))
    return np.where(r <= 1.0, spec.profile(np.minimum(r, 1.0) ** 2), g1)


def _ratio_f2(spec, r):
    g1 = float(spec.profile(1.0))
    return np.where(r >= 1.0, spec.profile(r * r) - g1, 0.0)


def _ratio_f2m(spec, r, m):
    g1 = float(spec.profile(1.0))
    ratio_m = float(spec.profile(float(m) ** 2)) - g1  # f̃2(m)/m
    return np.where(r <= m, _ratio_f2(spec, np.minimum(r, m)), ratio_m)


def _as_output(z, out):
    return out if np.ndim(out) else complex(out)


def split_f1(spec: NonlinearitySpec, z):
    z = np.asarray(z, dtype=complex)
    return _as_output(z, z * _ratio_f1(spec, np.abs(z)))


def split_f2(spec: NonlinearitySpec, z):
    z = np.asarray(z, dtype=complex)
    return _as_output(z, z * _ratio_f2(spec, np.abs(z)))


def _check_m(m):
    if not (isinstance(m, (int, np.integer)) and m >= 1):
        raise InvalidParameter(f"truncation level must be a positive integer, got {m!r}")


def truncate_f2m(spec: NonlinearitySpec, z, m: int):
    _check_m(m)
    z = np.asarray(z, dtype=complex)
    return _as_output(z, z * _ratio_f2m(spec, np.abs(z), m))


def eval_fm(spec: NonlinearitySpec, z, m: int):
    _check_m(m)
    z = np.asarray(z, dtype=complex)
    return _as_output(z, z * phase_multiplier(spec, np.abs(z), m))


def phase_multiplier(spec: NonlinearitySpec, r, m: int | None = None):
    """Real ``ĝ`` with ``f(z) = z ĝ(|z|)`` (or ``f_m``).

    The gauge structure makes both ``f`` and ``f_m`` real multiples of ``z``,
    so their flows are pointwise phase rotations.
    """
    r = np.asarray(r, dtype=float)
    if m is None:
        return spec.profile(r * r)
    return _ratio_f1(spec, r) + _ratio_f2m(spec, r, m)


# ---------------------------------------------------------------- energies


def eval_F(spec: NonlinearitySpec, z):
    r2 = np.abs(np.asarray(z)) ** 2
    out = 0.5 * spec.primitive(r2)
    return out if np.ndim(out) else float(out)


def eval_Fm(spec: NonlinearitySpec, z, m: int):
    _check_m(m)
    r = np.abs(np.asarray(z, dtype=complex))
    r2 = r * r
    g1 = float(spec.profile(1.0))
    P1 = float(spec.primitive(1.0))
    # ∫_0^r f̃1
    F1 = np.where(r <= 1.0, 0.5 * spec.primitive(np.minimum(r2, 1.0)), 0.5 * P1 + 0.5 * g1 * (r2 - 1.0))
    # ∫_0^r f̃2,m
    mm = float(m)
    rc = np.clip(r2, 1.0, mm * mm)
    F2 = 0.5 * (spec.primitive(rc) - P1) - 0.5 * g1 * (rc - 1.0)
    ratio_m = float(spec.profile(mm * mm)) - g1
    F2 = F2 + np.where(r2 > mm * mm, 0.5 * ratio_m * (r2 - mm * mm), 0.0)
    out = F1 + F2
    return out if np.ndim(out) else float(out)


def eval_G(spec: NonlinearitySpec, field: ComplexField) -> float:
    return float(np.sum(eval_F(spec, field.values)) * field.grid.cell_volume)


def eval_Gm(spec: NonlinearitySpec, field: ComplexField, m: int) -> float:
    return float(np.sum(eval_Fm(spec, field.values, m)) * field.grid.cell_volume)


def kinetic_energy(field: ComplexField, A: RealVectorField, b: float) -> float:
    """``½‖(i∇ - bA)u‖²`` with edge differences, i.e. ``½<u, H u>``."""
    comps = covariant_gradient(field, A, b, scheme="forward")
    return 0.5 * sum(lp_norm(c, 2) ** 2 for c in comps)


def energy(spec: NonlinearitySpec, b: float, field: ComplexField, A: RealVectorField, m: int | None = None) -> float:
    """Total energy ``½‖(i∇ - bA)u‖² + sign b^γ G(u)`` (``G_m`` if ``m`` given).

    ``A`` is the potential already evaluated at the time of interest.
    """
    G = eval_G(spec, field) if m is None else eval_Gm(spec, field, m)
    return kinetic_energy(field, A, b) + spec.coupling(b) * G


def energy_m(spec: NonlinearitySpec, b: float, field: ComplexField, A: RealVectorField, m: int) -> float:
    return energy(spec, b, field, A, m=m)


def require_symmetrizable(spec: NonlinearitySpec, s_max: float):
    s = np.linspace(0.0, max(float(s_max), 1.0), 257)
    gp = spec.profile_prime(s)
    if not np.all(gp > 0):
        raise SymmetrizabilityError("g' must be positive on the sampled range of |alpha|^2")
