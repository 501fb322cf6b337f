"""Crank-Nicolson solves for the Peierls-link magnetic Laplacian.

``H u(p) = Σ_j [2u(p) - U_j(p) u(p+e_j) - conj(U_j(p-e_j)) u(p-e_j)] / h²``
with ``U_j = exp(i b h Ā_j)`` and ``Ā_j`` the edge average of ``A_j``.
``H`` is Hermitian, so the CN map is unitary up to the solve tolerance.
"""

from __future__ import annotations

import numpy as np
import scipy.fft as sfft
import scipy.sparse as sp
from scipy.sparse.linalg import LinearOperator, gmres, splu

from .errors import SolverDivergence
from .field import Grid, RealVectorField, transport_phases


class MagneticLaplacian:
    def __init__(self, A: RealVectorField, b: float):
        self.grid = A.grid
        self.b = b
        self.links = transport_phases(A, b)
        self._h2 = self.grid.spacing**2

    def apply(self, u: np.ndarray) -> np.ndarray:
        out = (2.0 * self.grid.dim) * u
        for j, U in enumerate(self.links):
            out -= U * np.roll(u, -1, axis=j)
            out -= np.roll(np.conj(U) * u, 1, axis=j)
        return out / self._h2

    def sparse(self) -> sp.csc_matrix:
        g = self.grid
        idx = np.arange(g.size).reshape(g.shape)
        rows, cols, vals = [idx.ravel()], [idx.ravel()], [np.full(g.size, 2.0 * g.dim / self._h2, dtype=complex)]
        for j, U in enumerate(self.links):
            nb = np.roll(idx, -1, axis=j).ravel()
            off = -U.ravel() / self._h2
            rows += [idx.ravel(), nb]
            cols += [nb, idx.ravel()]
            vals += [off, np.conj(off)]
        H = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                          shape=(g.size, g.size))
        return H.tocsc()


class CrankNicolson:
    """One frozen-``H`` CN map ``(I + i dt/2 H)^{-1} (I - i dt/2 H)``.

    ``method`` is ``"direct"`` (sparse LU, factorised once) or
    ``"iterative"`` (GMRES preconditioned by the exact inverse for ``A = 0``).
    """

    def __init__(self, A: RealVectorField, b: float, dt: float, method: str = "direct",
                 tol: float = 1e-10, max_iterations: int = 500):
        self.H = MagneticLaplacian(A, b)
        self.grid = A.grid
        self.dt = dt
        self.method = method
        self.tol = tol
        self.max_iterations = max_iterations
        self.last_residual = 0.0
        self.last_iterations = 0
        if method == "direct":
            n = self.grid.size
            M = sp.identity(n, dtype=complex, format="csc") + (0.5j * dt) * self.H.sparse()
            self._lu = splu(M.tocsc(), permc_spec="MMD_AT_PLUS_A")
        elif method == "iterative":
            self._precond_symbol = 1.0 / (1.0 + 0.5j * dt * self.grid.laplacian_symbol())
        else:
            raise ValueError(f"unknown linear solver {method!r}")

    def _lhs(self, u):
        return u + (0.5j * self.dt) * self.H.apply(u)

    def _precondition(self, r):
        return sfft.ifftn(sfft.fftn(r) * self._precond_symbol)

    def residual(self, u_new, rhs) -> float:
        r = rhs - self._lhs(u_new)
        denom = np.linalg.norm(rhs)
        return float(np.linalg.norm(r) / denom) if denom > 0 else float(np.linalg.norm(r))

    def apply(self, u: np.ndarray) -> np.ndarray:
        rhs = u - (0.5j * self.dt) * self.H.apply(u)
        if not np.any(rhs):
            return np.zeros_like(u)
        shape = u.shape
        if self.method == "direct":
            out = self._lu.solve(rhs.ravel()).reshape(shape)
            self.last_iterations = 1
            return out
        n = self.grid.size
        op = LinearOperator((n, n), matvec=lambda v: self._lhs(v.reshape(shape)).ravel(), dtype=complex)
        pc = LinearOperator((n, n), matvec=lambda v: self._precondition(v.reshape(shape)).ravel(), dtype=complex)
        count = [0]

        def cb(_):
            count[0] += 1

        x0 = self._precondition(rhs).ravel()
        sol, info = gmres(op, rhs.ravel(), x0=x0, rtol=self.tol, atol=0.0, restart=40,
                          maxiter=self.max_iterations, M=pc, callback=cb, callback_type="pr_norm")
        out = sol.reshape(shape)
        res = self.residual(out, rhs)
        self.last_residual = res
        self.last_iterations = count[0]
        if info != 0 or res > 10 * self.tol:
            raise SolverDivergence("Crank-Nicolson solve did not converge", res)
        return out


def cn_amplification(grid: Grid, dt: float) -> np.ndarray:
    """Per-mode CN multiplier for ``A = 0`` (unit modulus)."""
    theta = 0.5 * dt * grid.laplacian_symbol()
    return (1.0 - 1j * theta) / (1.0 + 1j * theta)
