"""Analytic magnetic potentials A(t, x) and everything derived from them.

A potential is ``A(t, x) = m(t) A_base(x) + ∇χ(x)`` where ``m`` is the time
modulation and ``χ`` an optional static gauge bump.  All time derivatives,
field strengths and time integrals are closed form.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from itertools import combinations_with_replacement

import numpy as np

from .errors import DimensionError, InvalidParameter
from .field import Grid, RealVectorField, spectral_derivative

KINDS = ("zero", "constant_field", "linear_plus_bump", "tabulated")
MODULATIONS = ("none", "sinusoidal")


@dataclass(frozen=True, eq=False)
class PotentialSpec:
    kind: str = "zero"
    b0: float = 0.0
    bump_amplitude: float = 0.0
    bump_width: float = 1.0
    bump_center: tuple = (0.0, 0.0)
    modulation: str = "none"
    mod_amplitude: float = 0.0
    mod_frequency: float = 1.0
    epsilon_decay: float = 1.0
    gauge_amplitude: float = 0.0
    gauge_width: float = 1.0
    gauge_center: tuple = (0.0, 0.0)
    table: tuple | None = field(default=None, repr=False)
    table_grid: Grid | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidParameter(f"unknown potential kind {self.kind!r}")
        if self.modulation not in MODULATIONS:
            raise InvalidParameter(f"unknown time modulation {self.modulation!r}")
        if not self.epsilon_decay > 0:
            raise InvalidParameter("epsilon_decay must be positive")
        if self.bump_width <= 0 or self.gauge_width <= 0:
            raise InvalidParameter("bump and gauge widths must be positive")
        if self.kind == "tabulated":
            if self.table is None or self.table_grid is None:
                raise InvalidParameter("tabulated potential needs table and table_grid")
            comps = tuple(np.asarray(c, dtype=float).reshape(self.table_grid.shape) for c in self.table)
            if len(comps) != self.table_grid.dim:
                raise DimensionError("table needs one component per dimension")
            object.__setattr__(self, "table", comps)

    def validate_for(self, grid: Grid):
        if grid.dim == 1 and self.kind not in ("zero", "tabulated"):
            raise DimensionError(f"{self.kind} needs dim=2; in 1D only zero or tabulated potentials exist")
        if self.kind == "tabulated" and self.table_grid != grid:
            raise DimensionError(f"tabulated potential sampled on {self.table_grid}, used on {grid}")

    @property
    def time_dependent(self) -> bool:
        return self.modulation != "none" and self.mod_amplitude != 0.0 and self.kind != "zero"

    def with_gauge(self, amplitude, width=1.0, center=(0.0, 0.0)) -> "PotentialSpec":
        return dataclasses.replace(self, gauge_amplitude=amplitude, gauge_width=width, gauge_center=tuple(center))

    # modulation m(t) and its derivative
    def modulation_factor(self, t: float) -> float:
        if self.modulation == "sinusoidal":
            return 1.0 + self.mod_amplitude * np.sin(self.mod_frequency * t)
        return 1.0

    def modulation_rate(self, t: float) -> float:
        if self.modulation == "sinusoidal":
            return self.mod_amplitude * self.mod_frequency * np.cos(self.mod_frequency * t)
        return 0.0


# ---------------------------------------------------------------- base potential


def _bump(spec, x, y):
    cx, cy = spec.bump_center[0], spec.bump_center[1]
    w2 = spec.bump_width**2
    dx, dy = x - cx, y - cy
    psi = spec.bump_amplitude * np.exp(-(dx**2 + dy**2) / w2)
    return dx, dy, w2, psi


def _base_at(spec: PotentialSpec, grid: Grid, pts) -> list[np.ndarray]:
    """A_base evaluated at the points ``pts`` (tuple of coordinate arrays)."""
    if spec.kind == "zero":
        return [np.zeros_like(pts[0]) for _ in range(grid.dim)]
    x, y = pts
    a1 = -0.5 * spec.b0 * y
    a2 = 0.5 * spec.b0 * x
    if spec.kind == "linear_plus_bump":
        # divergence-free bump (-∂_y ψ, ∂_x ψ) with Gaussian stream function ψ
        dx, dy, w2, psi = _bump(spec, x, y)
        a1 = a1 + 2.0 * dy / w2 * psi
        a2 = a2 - 2.0 * dx / w2 * psi
    return [a1, a2]


def _tabulated_edges(spec: PotentialSpec, grid: Grid) -> list[np.ndarray]:
    # band-limited half-cell shift of periodic nodal data
    k = 2.0 * np.pi * np.fft.fftfreq(grid.n, d=grid.spacing)
    out = []
    for j, comp in enumerate(spec.table):
        shape = [1] * grid.dim
        shape[j] = grid.n
        phase = np.exp(0.5j * k * grid.spacing)
        phase[grid.n // 2] = 0.0  # a half-cell shift of the Nyquist mode is not real
        shifted = np.fft.ifftn(np.fft.fftn(comp) * phase.reshape(shape)).real
        out.append(shifted)
    return out


def _base_nodes(spec, grid):
    if spec.kind == "tabulated":
        return [np.array(c) for c in spec.table]
    return _base_at(spec, grid, grid.coords())


def _base_edges(spec, grid):
    if spec.kind == "tabulated":
        return _tabulated_edges(spec, grid)
    out = []
    for j in range(grid.dim):
        shift = [0.0] * grid.dim
        shift[j] = 0.5
        out.append(_base_at(spec, grid, grid.coords(shift))[j])
    return out


def gauge_chi(spec: PotentialSpec, grid: Grid) -> np.ndarray:
    """Static gauge function χ at the grid nodes."""
    if spec.gauge_amplitude == 0.0:
        return np.zeros(grid.shape)
    pts = grid.coords()
    r2 = sum((p - c) ** 2 for p, c in zip(pts, spec.gauge_center))
    return spec.gauge_amplitude * np.exp(-r2 / spec.gauge_width**2)


def _gauge_grad_nodes(spec, grid):
    chi = gauge_chi(spec, grid)
    pts = grid.coords()
    return [-2.0 * (p - c) / spec.gauge_width**2 * chi for p, c in zip(pts, spec.gauge_center)]


def _gauge_grad_edges(spec, grid):
    # exact link integrals of ∇χ: differences of nodal χ
    chi = gauge_chi(spec, grid)
    return [(np.roll(chi, -1, axis=j) - chi) / grid.spacing for j in range(grid.dim)]


# ---------------------------------------------------------------- evaluation


def eval_A(spec: PotentialSpec, t: float, grid: Grid, staggered: bool = False) -> RealVectorField:
    """Sample ``A(t, ·)`` on the nodes, or as edge averages if ``staggered``.

    Edge averages use midpoint quadrature for the base potential and exact
    differences of χ for the gauge part.
    """
    spec.validate_for(grid)
    m = spec.modulation_factor(t)
    base = _base_edges(spec, grid) if staggered else _base_nodes(spec, grid)
    comps = [m * c for c in base]
    if spec.gauge_amplitude != 0.0:
        gauge = _gauge_grad_edges(spec, grid) if staggered else _gauge_grad_nodes(spec, grid)
        comps = [c + g for c, g in zip(comps, gauge)]
    return RealVectorField(grid, tuple(comps), staggered=staggered)


def eval_dtA(spec: PotentialSpec, t: float, grid: Grid, staggered: bool = False) -> RealVectorField:
    spec.validate_for(grid)
    rate = spec.modulation_rate(t)
    if rate == 0.0:
        return RealVectorField.zeros(grid, staggered)
    base = _base_edges(spec, grid) if staggered else _base_nodes(spec, grid)
    return RealVectorField(grid, tuple(rate * c for c in base), staggered=staggered)


def eval_W(spec: PotentialSpec, t: float, t2: float, grid: Grid, staggered: bool = False) -> RealVectorField:
    """``∫_t^{t2} ∂_s A(s, ·) ds`` (closed form: the modulation difference)."""
    if t2 < t:
        raise InvalidParameter("eval_W needs t <= t2")
    spec.validate_for(grid)
    dm = spec.modulation_factor(t2) - spec.modulation_factor(t)
    if t2 == t or dm == 0.0:
        return RealVectorField.zeros(grid, staggered)
    base = _base_edges(spec, grid) if staggered else _base_nodes(spec, grid)
    return RealVectorField(grid, tuple(dm * c for c in base), staggered=staggered)


def _base_curl(spec: PotentialSpec, grid: Grid) -> np.ndarray:
    if spec.kind == "zero":
        return np.zeros(grid.shape)
    if spec.kind == "tabulated":
        a1, a2 = spec.table
        return spectral_derivative(a2, grid, 0) - spectral_derivative(a1, grid, 1)
    B = np.full(grid.shape, float(spec.b0))
    if spec.kind == "linear_plus_bump":
        x, y = grid.coords()
        dx, dy, w2, psi = _bump(spec, x, y)
        B = B + psi * (4.0 * (dx**2 + dy**2) / w2**2 - 4.0 / w2)
    return B


def eval_B(spec: PotentialSpec, t: float, grid: Grid) -> np.ndarray:
    """Field matrix ``B_jk = ∂_j A_k - ∂_k A_j`` with shape ``(dim, dim, *grid.shape)``."""
    spec.validate_for(grid)
    out = np.zeros((grid.dim, grid.dim) + grid.shape)
    if grid.dim == 1:
        return out
    b12 = spec.modulation_factor(t) * _base_curl(spec, grid)
    out[0, 1] = b12
    out[1, 0] = -b12
    return out


def modulation_sup(spec: PotentialSpec, t0: float, t1: float) -> float:
    """``sup |m'(t)|`` over ``[t0, t1]`` (closed form for the sinusoid)."""
    if spec.modulation != "sinusoidal" or spec.mod_amplitude == 0.0:
        return 0.0
    w = spec.mod_frequency
    amp = abs(spec.mod_amplitude * w)
    if w == 0:
        return 0.0
    # |cos| reaches 1 if a multiple of π/w lies in the window
    k0 = np.ceil(t0 * abs(w) / np.pi)
    if k0 * np.pi / abs(w) <= t1:
        return amp
    return amp * max(abs(np.cos(w * t0)), abs(np.cos(w * t1)))


# ---------------------------------------------------------------- Assumption audit


@dataclass
class AssumptionAudit:
    """Sampled suprema for the three decay/boundedness clauses on A.

    ``sup_dtA`` is ``m_A``; list entries are indexed by derivative order
    starting at 1.  The audit samples the grid and a uniform time mesh, so it
    is advisory, never a proof.
    """

    sup_dtA: float
    sup_dx_dtA: list
    sup_dxA: list
    sup_weighted_dxB: list
    bound: float
    clause1: bool
    clause2: bool
    clause3: bool

    @property
    def passed(self) -> bool:
        return self.clause1 and self.clause2 and self.clause3

    def as_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["passed"] = self.passed
        return d


def _derivatives(arr: np.ndarray, grid: Grid, order: int):
    """All mixed partial derivatives of exactly ``order`` (finite differences)."""
    h = grid.spacing
    out = []
    for idx in combinations_with_replacement(range(grid.dim), order):
        d = arr
        for ax in idx:
            d = np.gradient(d, h, axis=ax, edge_order=2)
        out.append(d)
    return out


def _sup_order(fields, grid, order, weight=None):
    best = 0.0
    for f in fields:
        for d in _derivatives(f, grid, order):
            if weight is not None:
                d = d * weight
            best = max(best, float(np.max(np.abs(d))))
    return best


def audit_assumption1(spec: PotentialSpec, grid: Grid, time_window=(0.0, 1.0), order: int = 2,
                      n_times: int = 17, bound: float = 10.0) -> AssumptionAudit:
    if not 1 <= order <= 2:
        raise InvalidParameter("audit order must be 1 or 2")
    spec.validate_for(grid)
    t0, t1 = time_window
    times = np.linspace(t0, t1, n_times)
    base = _base_nodes(spec, grid)
    rate_sup = max(max(abs(spec.modulation_rate(t)) for t in times), modulation_sup(spec, t0, t1))
    m_sup = max(abs(spec.modulation_factor(t)) for t in times)

    # ∂_t A = m'(t) A_base, so sampled suprema scale with sup |m'|
    m_A = rate_sup * max((float(np.max(np.abs(c))) for c in base), default=0.0)
    sup_dx_dtA = [rate_sup * _sup_order(base, grid, k) for k in range(1, order + 1)]

    gauge = _gauge_grad_nodes(spec, grid) if spec.gauge_amplitude else None
    sup_dxA = []
    for k in range(1, order + 1):
        if gauge is None:
            sup_dxA.append(m_sup * _sup_order(base, grid, k))
        else:
            sup_dxA.append(max(_sup_order([m * c + g for c, g in zip(base, gauge)], grid, k)
                               for m in (spec.modulation_factor(t) for t in times)))

    weight = (1.0 + sum(p**2 for p in grid.coords())) ** (0.5 * (1.0 + spec.epsilon_decay))
    if grid.dim == 2:
        curl = _base_curl(spec, grid)
        sup_B = [m_sup * _sup_order([curl], grid, k, weight) for k in range(1, order + 1)]
    else:
        sup_B = [0.0] * order

    def ok(values):
        return all(np.isfinite(v) and v <= bound for v in values)

    return AssumptionAudit(
        sup_dtA=m_A,
        sup_dx_dtA=sup_dx_dtA,
        sup_dxA=sup_dxA,
        sup_weighted_dxB=sup_B,
        bound=bound,
        clause1=ok([m_A] + sup_dx_dtA),
        clause2=ok(sup_dxA),
        clause3=ok(sup_B),
    )


def norm_equivalence_factor(m_A: float, T: float, beta: float = 1.0) -> float:
    """Constant relating magnetic Sobolev norms at times ``|t - t'| <= T/b``."""
    return (1.0 + 2.0 * m_A * T + (m_A * T) ** 2) ** beta


class SampledPotential:
    """Pre-sampled base and gauge arrays of a spec on one grid.

    Evaluating ``A(t)`` is then one multiply-add per component, which is what
    the time steppers call every step.
    """

    def __init__(self, spec: PotentialSpec, grid: Grid):
        spec.validate_for(grid)
        self.spec = spec
        self.grid = grid
        self._base = {False: _base_nodes(spec, grid), True: _base_edges(spec, grid)}
        if spec.gauge_amplitude != 0.0:
            self._gauge = {False: _gauge_grad_nodes(spec, grid), True: _gauge_grad_edges(spec, grid)}
        else:
            self._gauge = None
        self._curl = _base_curl(spec, grid) if grid.dim == 2 else None

    @property
    def time_dependent(self) -> bool:
        return self.spec.time_dependent

    def A(self, t: float, staggered: bool = False) -> RealVectorField:
        m = self.spec.modulation_factor(t)
        comps = [m * c for c in self._base[staggered]]
        if self._gauge is not None:
            comps = [c + g for c, g in zip(comps, self._gauge[staggered])]
        return RealVectorField(self.grid, tuple(comps), staggered=staggered)

    def dtA(self, t: float, staggered: bool = False) -> RealVectorField:
        rate = self.spec.modulation_rate(t)
        return RealVectorField(self.grid, tuple(rate * c for c in self._base[staggered]), staggered=staggered)

    def W(self, t: float, t2: float, staggered: bool = False) -> RealVectorField:
        dm = self.spec.modulation_factor(t2) - self.spec.modulation_factor(t)
        return RealVectorField(self.grid, tuple(dm * c for c in self._base[staggered]), staggered=staggered)

    def B12(self, t: float) -> np.ndarray:
        if self._curl is None:
            return np.zeros(self.grid.shape)
        return self.spec.modulation_factor(t) * self._curl
