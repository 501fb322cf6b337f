"""Conserved quantities, the non-autonomous energy ledger and mixed norms."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidParameter
from .field import ComplexField, RealVectorField, boundary_leakage, h1mg_norm, lp_norm, transport_phases
from .nonlinearity import NonlinearitySpec, eval_G, eval_Gm, kinetic_energy

COLUMNS = (
    "step",
    "time",
    "mass",
    "kinetic",
    "nl_energy",
    "energy",
    "correction_integral",
    "energy_law_residual",
    "h1mg_norm",
    "max_abs",
    "boundary_leakage",
)


def kinetic_rate(u: ComplexField, A: RealVectorField, dA: RealVectorField, b: float) -> float:
    """Derivative of ``½‖(i∇ - bA)u‖²`` along ``A -> A + s dA`` at ``s = 0``.

    Uses the same edge links as the propagator, so the semi-discrete energy
    balance closes exactly.
    """
    grid = u.grid
    vals = u.values
    h = grid.spacing
    links = transport_phases(A, b)
    dA = dA.to_edges()
    total = 0.0
    for j, U in enumerate(links):
        up = U * np.roll(vals, -1, axis=j)
        d = (up - vals) / h
        total += np.sum((np.conj(d) * (1j * b) * dA.components[j] * up).real)
    return float(total * grid.cell_volume)


def correction_integrand(u: ComplexField, A: RealVectorField, dtA: RealVectorField, b: float) -> float:
    """``b Re<∂_tA u, (i∇ - bA) u>``, the rate at which the energy is lost."""
    return -kinetic_rate(u, A, dtA, b)


@dataclass
class DiagnosticsSeries:
    columns: dict = field(default_factory=lambda: {c: [] for c in COLUMNS})
    meta: dict = field(default_factory=dict)
    aborted: str | None = None

    def append(self, row: dict):
        times = self.columns["time"]
        if times and not row["time"] > times[-1]:
            raise InvalidParameter("diagnostic times must increase strictly")
        for c in COLUMNS:
            self.columns[c].append(row[c])

    def __len__(self):
        return len(self.columns["time"])

    def column(self, name) -> np.ndarray:
        return np.asarray(self.columns[name], dtype=float)

    def last(self) -> dict:
        return {c: self.columns[c][-1] for c in COLUMNS}

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(COLUMNS)
        for i in range(len(self)):
            row = []
            for c in COLUMNS:
                v = self.columns[c][i]
                row.append(str(int(v)) if c == "step" else repr(float(v)))
            w.writerow(row)
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
        return text


class EnergyLedger:
    """Running bookkeeping of the energy law.

    The correction integral is advanced by the trapezoid rule on
    ``b Re<∂_tA u, (i∇ - bA)u>``; ``energy_law_residual`` is
    ``E(t) - E(0) + correction_integral`` and vanishes for the exact flow.
    """

    def __init__(self, nonlinearity: NonlinearitySpec, b: float, m: int | None = None):
        self.nonlinearity = nonlinearity
        self.b = b
        self.m = m
        self.correction = 0.0
        self.window_remainder = 0.0
        self.E0 = None
        self._prev_rate = None

    def nonlinear_energy(self, u: ComplexField) -> float:
        G = eval_G(self.nonlinearity, u) if self.m is None else eval_Gm(self.nonlinearity, u, self.m)
        return self.nonlinearity.coupling(self.b) * G

    def advance(self, u_next: ComplexField, A_next, dtA_next, dt: float, u_prev=None, A_prev=None, dtA_prev=None):
        rate_next = correction_integrand(u_next, A_next, dtA_next, self.b)
        if self._prev_rate is None:
            self._prev_rate = correction_integrand(u_prev, A_prev, dtA_prev, self.b)
        self.correction += 0.5 * dt * (self._prev_rate + rate_next)
        self._prev_rate = rate_next

    def skip_rate(self):
        """Static potential: the integrand is identically zero."""
        self._prev_rate = 0.0

    def window_jump(self, u: ComplexField, A_old: RealVectorField, A_new: RealVectorField) -> float:
        """Account for switching a frozen potential at a window boundary.

        The first-order part of the kinetic jump goes into the correction
        integral; the exact jump minus that part is the quadratic remainder
        (the ``‖W u‖²`` bookkeeping term), returned and accumulated.
        """
        dA = RealVectorField(A_new.grid, tuple(a - b for a, b in zip(A_new.to_edges().components,
                                                                     A_old.to_edges().components)),
                             staggered=True)
        first = kinetic_rate(u, A_old, dA, self.b)
        jump = kinetic_energy(u, A_new, self.b) - kinetic_energy(u, A_old, self.b)
        self.correction -= first
        self.window_remainder += jump - first
        return jump - first

    def row(self, step: int, t: float, u: ComplexField, A: RealVectorField, A_nodes: RealVectorField | None = None):
        kin = kinetic_energy(u, A, self.b)
        nl = self.nonlinear_energy(u)
        E = kin + nl
        if self.E0 is None:
            self.E0 = E
        return {
            "step": step,
            "time": t,
            "mass": lp_norm(u, 2),
            "kinetic": kin,
            "nl_energy": nl,
            "energy": E,
            "correction_integral": self.correction,
            "energy_law_residual": E - self.E0 + self.correction,
            "h1mg_norm": h1mg_norm(u, A, self.b),
            "max_abs": float(np.abs(u.values).max()),
            "boundary_leakage": boundary_leakage(u.values, u.grid),
        }


def update_ledger(series: DiagnosticsSeries, u_prev: ComplexField, u_next: ComplexField, potential,
                  nonlinearity: NonlinearitySpec, t: float, dt: float, b: float, ledger: EnergyLedger | None = None):
    """Advance the energy ledger by one step and append the row at ``t + dt``.

    ``potential`` is a ``PotentialSpec`` or ``SampledPotential``.  Pass the
    same ``ledger`` on consecutive calls; a fresh one is seeded from
    ``u_prev`` at ``t``.
    """
    from .potential import SampledPotential

    sampled = potential if isinstance(potential, SampledPotential) else SampledPotential(potential, u_prev.grid)
    if ledger is None:
        ledger = EnergyLedger(nonlinearity, b)
        if not len(series):
            series.append(ledger.row(0, t, u_prev, sampled.A(t, True)))
        else:
            ledger.E0 = series.columns["energy"][0]
            ledger.correction = series.columns["correction_integral"][-1]
    A1 = sampled.A(t + dt, True)
    ledger.advance(u_next, A1, sampled.dtA(t + dt, True), dt, u_prev, sampled.A(t, True), sampled.dtA(t, True))
    step = int(series.columns["step"][-1]) + 1 if len(series) else 1
    series.append(ledger.row(step, t + dt, u_next, A1))
    return ledger


# ---------------------------------------------------------------- mixed norms


def mixed_norm(trajectory, q: float, r: float) -> float:
    """``‖u‖_{L^q(I, L^r)}`` over the stored snapshots (trapezoid in time)."""
    times = np.asarray(trajectory.times, dtype=float)
    fields = trajectory.fields
    if len(fields) == 0:
        raise InvalidParameter("empty trajectory")
    if r < 2:
        raise InvalidParameter("mixed_norm needs r >= 2")
    norms = np.array([lp_norm(f, r) for f in fields])
    if np.isinf(q):
        return float(norms.max())
    if len(fields) == 1:
        return 0.0
    return float(np.trapezoid(norms**q, times) ** (1.0 / q))


def admissible_q(dim: int, r: float) -> float:
    """Time exponent pairing with ``r`` under ``2/q = n(1/2 - 1/r)``."""
    s = dim * (0.5 - 1.0 / r)
    return np.inf if s == 0 else 2.0 / s
