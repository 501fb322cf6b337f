"""Periodic grids, complex fields, spectral transforms and magnetic norms.

Every field lives on the periodic box ``[-L/2, L/2)^dim`` sampled with
``n`` points per axis.  Arrays are stored with ``indexing='ij'`` so that
axis ``j`` of an array is the ``x_j`` direction.
"""

from __future__ import annotations

import io
import json
from dataclasses import dataclass, field as dc_field
from pathlib import Path

import numpy as np
import scipy.fft as sfft

from .errors import DimensionError, InvalidParameter

__all__ = [
    "Grid",
    "ComplexField",
    "RealVectorField",
    "lp_norm",
    "l2_norm",
    "covariant_gradient",
    "h1mg_norm",
    "spectral_derivative",
    "spectral_gradient",
    "forward_transform",
    "inverse_transform",
    "boundary_leakage",
    "write_snapshot",
    "read_snapshot",
]


@dataclass(frozen=True)
class Grid:
    dim: int
    n: int
    length: float

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise InvalidParameter(f"dim must be 1 or 2, got {self.dim}")
        n = int(self.n)
        if n < 8 or n & (n - 1):
            raise InvalidParameter(f"points per axis must be a power of two >= 8, got {self.n}")
        if not self.length > 0:
            raise InvalidParameter(f"box length must be positive, got {self.length}")
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "length", float(self.length))

    @property
    def spacing(self) -> float:
        # n is a power of two, so this division is exact
        return self.length / self.n

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n,) * self.dim

    @property
    def size(self) -> int:
        return self.n**self.dim

    @property
    def cell_volume(self) -> float:
        return self.spacing**self.dim

    def axis(self) -> np.ndarray:
        return -0.5 * self.length + self.spacing * np.arange(self.n)

    def coords(self, shift=None) -> tuple[np.ndarray, ...]:
        """Node coordinates, optionally shifted by ``shift[j] * spacing`` along axis j."""
        x = self.axis()
        if shift is None:
            shift = (0.0,) * self.dim
        axes = [x + s * self.spacing for s in shift]
        return tuple(np.meshgrid(*axes, indexing="ij"))

    def wavenumbers(self) -> tuple[np.ndarray, ...]:
        k = 2.0 * np.pi * sfft.fftfreq(self.n, d=self.spacing)
        return tuple(np.meshgrid(*([k] * self.dim), indexing="ij"))

    def laplacian_symbol(self) -> np.ndarray:
        """Eigenvalues of the 3-point (per axis) discrete ``-Laplacian``."""
        h = self.spacing
        k = 2.0 * np.pi * sfft.fftfreq(self.n, d=h)
        lam1 = (4.0 / h**2) * np.sin(0.5 * k * h) ** 2
        if self.dim == 1:
            return lam1
        return lam1[:, None] + lam1[None, :]

    def check_same(self, other: "Grid"):
        if self != other:
            raise DimensionError(f"grid mismatch: {self} vs {other}")


def _readonly(arr: np.ndarray) -> np.ndarray:
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class ComplexField:
    grid: Grid
    values: np.ndarray
    allow_nonfinite: bool = dc_field(default=False, repr=False)

    def __post_init__(self):
        vals = np.array(self.values, dtype=np.complex128, copy=True)
        if vals.size != self.grid.size:
            raise DimensionError(f"expected {self.grid.size} values, got {vals.size}")
        vals = vals.reshape(self.grid.shape)
        if not self.allow_nonfinite and not np.all(np.isfinite(vals)):
            raise InvalidParameter("field contains NaN or Inf")
        object.__setattr__(self, "values", _readonly(vals))

    @classmethod
    def zeros(cls, grid: Grid) -> "ComplexField":
        return cls(grid, np.zeros(grid.shape, dtype=np.complex128))

    @classmethod
    def from_function(cls, grid: Grid, func) -> "ComplexField":
        return cls(grid, func(*grid.coords()))

    def with_values(self, values) -> "ComplexField":
        return ComplexField(self.grid, values)

    def __mul__(self, c):
        return ComplexField(self.grid, self.values * c)

    __rmul__ = __mul__

    def __add__(self, other: "ComplexField"):
        self.grid.check_same(other.grid)
        return ComplexField(self.grid, self.values + other.values)

    def __sub__(self, other: "ComplexField"):
        self.grid.check_same(other.grid)
        return ComplexField(self.grid, self.values - other.values)


@dataclass(frozen=True, eq=False)
class RealVectorField:
    """One real array per spatial direction.

    With ``staggered=True`` component ``j`` holds the average of ``A_j`` along
    the grid edge from node ``p`` to ``p + e_j`` (i.e. the link integral divided
    by the spacing) instead of the nodal value.
    """

    grid: Grid
    components: tuple
    staggered: bool = False

    def __post_init__(self):
        comps = tuple(np.array(c, dtype=np.float64).reshape(self.grid.shape) for c in self.components)
        if len(comps) != self.grid.dim:
            raise DimensionError(f"need {self.grid.dim} components, got {len(comps)}")
        object.__setattr__(self, "components", tuple(_readonly(c) for c in comps))

    @classmethod
    def zeros(cls, grid: Grid, staggered=False) -> "RealVectorField":
        return cls(grid, tuple(np.zeros(grid.shape) for _ in range(grid.dim)), staggered)

    def to_edges(self) -> "RealVectorField":
        if self.staggered:
            return self
        comps = [0.5 * (c + np.roll(c, -1, axis=j)) for j, c in enumerate(self.components)]
        return RealVectorField(self.grid, tuple(comps), staggered=True)

    def __add__(self, other: "RealVectorField"):
        self.grid.check_same(other.grid)
        if self.staggered != other.staggered:
            raise DimensionError("cannot add nodal and staggered vector fields")
        comps = tuple(a + b for a, b in zip(self.components, other.components))
        return RealVectorField(self.grid, comps, self.staggered)

    def scaled(self, c: float) -> "RealVectorField":
        return RealVectorField(self.grid, tuple(c * a for a in self.components), self.staggered)

    def max_abs(self) -> float:
        mag2 = sum(c**2 for c in self.components)
        return float(np.sqrt(mag2.max()))


# ---------------------------------------------------------------- spectral


def forward_transform(values: np.ndarray) -> np.ndarray:
    return sfft.fftn(values)


def inverse_transform(coeffs: np.ndarray) -> np.ndarray:
    return sfft.ifftn(coeffs)


def _axis_multiplier(grid: Grid, axis: int, order: int) -> np.ndarray:
    k = 2.0 * np.pi * sfft.fftfreq(grid.n, d=grid.spacing)
    mult = (1j * k) ** order
    if order % 2 == 1:
        mult[grid.n // 2] = 0.0
    shape = [1] * grid.dim
    shape[axis] = grid.n
    return mult.reshape(shape)


def spectral_derivative(values: np.ndarray, grid: Grid, axis: int, order: int = 1) -> np.ndarray:
    """``d^order/dx_axis^order`` by Fourier multiplier.

    Returns a real array when ``values`` is real.
    """
    coeffs = sfft.fftn(values) * _axis_multiplier(grid, axis, order)
    out = sfft.ifftn(coeffs)
    if np.isrealobj(values):
        return out.real
    return out


def spectral_gradient(values: np.ndarray, grid: Grid) -> tuple[np.ndarray, ...]:
    coeffs = sfft.fftn(values)
    real = np.isrealobj(values)
    out = []
    for j in range(grid.dim):
        d = sfft.ifftn(coeffs * _axis_multiplier(grid, j, 1))
        out.append(d.real if real else d)
    return tuple(out)


# ---------------------------------------------------------------- norms


def lp_norm(field: ComplexField, p: float = 2.0) -> float:
    """Discrete ``L^p`` norm with rectangle-rule quadrature."""
    if not (p >= 1):
        raise InvalidParameter(f"p must be >= 1, got {p}")
    mod = np.abs(field.values)
    if np.isinf(p):
        return float(mod.max())
    if p == 2:
        return float(np.sqrt(np.vdot(field.values, field.values).real * field.grid.cell_volume))
    return float((np.sum(mod**p) * field.grid.cell_volume) ** (1.0 / p))


def l2_norm(values: np.ndarray, grid: Grid) -> float:
    v = values.ravel()
    return float(np.sqrt(np.vdot(v, v).real * grid.cell_volume))


def _edge_potential(A: RealVectorField, grid: Grid) -> RealVectorField:
    grid.check_same(A.grid)
    return A.to_edges()


def transport_phases(A: RealVectorField, b: float) -> tuple[np.ndarray, ...]:
    """Link phases ``exp(i b ∫_edge A·dl)`` for each direction."""
    edges = A.to_edges()
    h = A.grid.spacing
    return tuple(np.exp(1j * b * h * c) for c in edges.components)


def covariant_gradient(field: ComplexField, A: RealVectorField, b: float, scheme: str = "centered"):
    """Components of ``(i∇ - bA) u``.

    ``scheme`` is ``"centered"`` (nodal, gauge covariant), ``"forward"`` (edge
    centred; the form whose squared norm is ``<u, H u>`` for the discrete
    magnetic Laplacian) or ``"spectral"`` (nodal ``A``, diagnostics only).
    """
    grid = field.grid
    grid.check_same(A.grid)
    u = field.values
    h = grid.spacing
    if scheme == "spectral":
        if A.staggered:
            raise DimensionError("spectral covariant gradient needs a nodal potential")
        grads = spectral_gradient(u, grid)
        return tuple(ComplexField(grid, 1j * g - b * a * u) for g, a in zip(grads, A.components))
    links = transport_phases(A, b)
    out = []
    for j, U in enumerate(links):
        up = np.roll(u, -1, axis=j)
        if scheme == "forward":
            d = (U * up - u) / h
        elif scheme == "centered":
            um = np.roll(u, 1, axis=j)
            Um = np.roll(U, 1, axis=j)
            d = (U * up - np.conj(Um) * um) / (2.0 * h)
        else:
            raise InvalidParameter(f"unknown scheme {scheme!r}")
        out.append(ComplexField(grid, 1j * d))
    return tuple(out)


def h1mg_norm(field: ComplexField, A: RealVectorField, b: float, scheme: str = "centered") -> float:
    """``‖(i∇ - bA)u‖ + ‖u‖`` with the gradient measured as one vector in L²."""
    comps = covariant_gradient(field, A, b, scheme=scheme)
    grad2 = sum(lp_norm(c, 2) ** 2 for c in comps)
    return float(np.sqrt(grad2) + lp_norm(field, 2))


def boundary_leakage(values: np.ndarray, grid: Grid) -> float:
    """Fraction of the mass lying outside the central half ``[-L/4, L/4)^dim``."""
    x = grid.axis()
    inside = np.abs(x) < 0.25 * grid.length
    mask = inside
    for _ in range(grid.dim - 1):
        mask = np.multiply.outer(mask, inside)
    dens = np.abs(values) ** 2
    total = dens.sum()
    if total == 0:
        return 0.0
    return float(dens[~mask].sum() / total)


# ---------------------------------------------------------------- snapshots


def write_snapshot(path, field: ComplexField, time: float, b: float, **extra) -> None:
    """JSON header line followed by little-endian float64 (re, im) pairs, row-major."""
    header = {"dim": field.grid.dim, "n": field.grid.n, "length": field.grid.length, "time": time, "b": b}
    header.update(extra)
    data = np.ascontiguousarray(field.values).astype("<c16", copy=False)
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode("utf-8") + b"\n")
        fh.write(data.tobytes(order="C"))


def read_snapshot(path) -> tuple[ComplexField, dict]:
    raw = Path(path).read_bytes()
    buf = io.BytesIO(raw)
    header = json.loads(buf.readline().decode("utf-8"))
    grid = Grid(header["dim"], header["n"], header["length"])
    vals = np.frombuffer(buf.read(), dtype="<c16")
    return ComplexField(grid, vals.reshape(grid.shape)), header


def fourier_resample(values: np.ndarray, grid: Grid, new_grid: Grid) -> np.ndarray:
    """Band-limited interpolation between two grids on the same box."""
    if grid.dim != new_grid.dim or grid.length != new_grid.length:
        raise DimensionError("resampling needs the same box and dimension")
    if grid.n == new_grid.n:
        return np.array(values)
    real = np.isrealobj(values)
    coeffs = sfft.fftshift(sfft.fftn(values))
    n, m = grid.n, new_grid.n
    out = np.zeros(new_grid.shape, dtype=complex)
    if m > n:
        lo = (m - n) // 2
        sl = tuple(slice(lo, lo + n) for _ in range(grid.dim))
        out[sl] = coeffs
    else:
        lo = (n - m) // 2
        sl = tuple(slice(lo, lo + m) for _ in range(grid.dim))
        out = coeffs[sl].copy()
    res = sfft.ifftn(sfft.ifftshift(out)) * (m / n) ** grid.dim
    return res.real if real else res
