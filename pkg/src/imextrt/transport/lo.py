"""Gray low-order moment system on a staggered finite-volume mesh.

Unknowns are the cell energies ``E`` and temperatures ``T`` and the face
fluxes ``F`` (``K+1`` values).  With frozen collapsed opacities and
consistency source ``gamma`` the rates are

    dE_k/dt = -(F_{k+1/2} - F_{k-1/2})/h_k - c sE_k E_k + sP_k Phi(T_k)
    dF_f/dt = -(c^2/3) (dE/dx)_f - c sR_f F_f + gamma_f
    rho_cv dT_k/dt = c sE_k E_k - sP_k Phi(T_k)

with ``Phi(T) = 4 pi sum_g B_g(T)`` (``= a c T^4`` for open outer groups).
Faces at reflecting ends hold ``F = 0``.  At the other ends the gradient
uses the frozen boundary-face energy of the transport solution.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.linalg import solve_banded

from .constants import A_RAD, C_LIGHT
from .grid import SlabMesh
from .planck import planck_group, planck_group_dT

__all__ = ["LOFrozen", "LOSystem", "LOSolveError", "LOSolution"]


class LOSolveError(RuntimeError):
    pass


@dataclass
class LOFrozen:
    """Data held fixed during one LO solve."""

    sigma_E: np.ndarray
    sigma_P: np.ndarray
    sigma_R_face: np.ndarray
    gamma: np.ndarray
    E_face: np.ndarray  # only the two end values are used


@dataclass
class LOSolution:
    E: np.ndarray
    F: np.ndarray
    T: np.ndarray
    iterations: int
    residual: float


class LOSystem:
    def __init__(self, mesh: SlabMesh, rho_cv, planck_edges, left_reflecting=False,
                 right_reflecting=False, c: float = C_LIGHT):
        self.mesh = mesh
        self.h = np.asarray(mesh.widths)
        self.K = mesh.cells
        self.delta = mesh.face_spacing()
        self.rho_cv = np.broadcast_to(np.asarray(rho_cv, dtype=float), (self.K,)).copy()
        self.edges = np.asarray(planck_edges)
        self.c = c
        # open outer groups integrate the full spectrum: Phi = a c T^4
        self._open = self.edges[0] == 0.0 and np.isinf(self.edges[-1])
        self.a_c = A_RAD * c
        self.pinned = np.zeros(self.K + 1, dtype=bool)
        self.pinned[0] = left_reflecting
        self.pinned[-1] = right_reflecting

    # -- pieces -----------------------------------------------------------
    def phi(self, T):
        if self._open:
            return self.a_c * np.asarray(T) ** 4
        return 4 * np.pi * planck_group(T, self.edges).sum(axis=-1)

    def dphi(self, T):
        if self._open:
            return 4 * self.a_c * np.asarray(T) ** 3
        return 4 * np.pi * planck_group_dT(T, self.edges).sum(axis=-1)

    def face_sigma(self, sigma_R):
        """Distance-weighted harmonic mean of cell values at faces."""
        s = np.empty(self.K + 1)
        s[0], s[-1] = sigma_R[0], sigma_R[-1]
        hl = 0.5 * self.h[:-1] / sigma_R[:-1]
        hr = 0.5 * self.h[1:] / sigma_R[1:]
        s[1:-1] = self.delta[1:-1] / (hl + hr)
        return s

    def grad(self, E, E_face):
        g = np.empty(self.K + 1)
        g[1:-1] = np.diff(E) / self.delta[1:-1]
        g[0] = (E[0] - E_face[0]) / self.delta[0]
        g[-1] = (E_face[-1] - E[-1]) / self.delta[-1]
        return g

    def flux_rate(self, E, F, sigma_R_face, gamma, E_face):
        r = -(self.c**2 / 3) * self.grad(E, E_face) - self.c * sigma_R_face * F + gamma
        r[self.pinned] = 0.0
        return r

    def rates(self, E, F, T, fr: LOFrozen, emission=None):
        """``(dE/dt, dF/dt, dT/dt)``; ``emission`` overrides ``sigma_P * Phi(T)``."""
        em = fr.sigma_P * self.phi(T) if emission is None else emission
        absorb = self.c * fr.sigma_E * E
        dE = -np.diff(F) / self.h - absorb + em
        dF = self.flux_rate(E, F, fr.sigma_R_face, fr.gamma, fr.E_face)
        dT = (absorb - em) / self.rho_cv
        return dE, dF, dT

    # -- nonlinear stage system --------------------------------------------
    def split(self, x):
        K = self.K
        return x[:K], x[K:2 * K + 1], x[2 * K + 1:]

    def residual(self, x, known, mu, fr: LOFrozen):
        """``x - known - mu * N(x)`` for ``x = (E, F, T)``."""
        E, F, T = self.split(x)
        return x - known - mu * np.concatenate(self.rates(E, F, T, fr))

    def jacobian(self, x, mu, fr: LOFrozen):
        """Analytic sparse Jacobian of :meth:`residual`."""
        K, c = self.K, self.c
        E, F, T = self.split(x)
        nF = K + 1
        em_T = fr.sigma_P * self.dphi(T)
        rows, cols, vals = [], [], []

        def add(r, cidx, v):
            rows.append(np.atleast_1d(r))
            cols.append(np.atleast_1d(cidx))
            vals.append(np.broadcast_to(v, np.shape(np.atleast_1d(r))).astype(float))

        k = np.arange(K)
        f = np.arange(nF)
        iE, iF, iT = k, K + f, K + nF + k
        # energy rows
        add(iE, iE, 1 + mu * c * fr.sigma_E)
        add(iE, iF[1:], mu / self.h)
        add(iE, iF[:-1], -mu / self.h)
        add(iE, iT, -mu * em_T)
        # flux rows
        free = ~self.pinned
        add(iF, iF, np.where(free, 1 + mu * c * fr.sigma_R_face, 1.0))
        coef = np.where(free, mu * c**2 / 3 / self.delta, 0.0)
        add(iF[:-1], iE, coef[:-1])  # face f: +E_f (right cell)
        add(iF[1:], iE, -coef[1:])  # and -E_{f-1} (left cell)
        # temperature rows
        add(iT, iE, -mu * c * fr.sigma_E / self.rho_cv)
        add(iT, iT, 1 + mu * em_T / self.rho_cv)
        n = 2 * K + nF
        return sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                             shape=(n, n))

    def _relative_residual(self, x, known, mu, fr):
        K = self.K
        r = self.residual(x, known, mu, fr)
        E, F, T = self.split(x)
        scale_E = np.abs(E) + np.abs(known[:K]) + 1e-300
        return max(np.max(np.abs(r[:K]) / scale_E), np.max(np.abs(r[2 * K + 1:]) / T))

    def solve(self, known, mu, fr: LOFrozen, T_guess, tol=1e-10, max_iter=50,
              max_halvings=10) -> LOSolution:
        """Newton iteration on the ``Phi(T)`` nonlinearity.

        Each iterate linearizes ``Phi`` at the current temperature, eliminates
        ``T`` and ``F`` locally and solves a tridiagonal system for ``E``.
        """
        K, c = self.K, self.c
        Ek, Fk, Tk = self.split(np.asarray(known, dtype=float))
        T0 = np.array(T_guess, dtype=float)
        free = ~self.pinned
        den_F = 1 + mu * c * fr.sigma_R_face
        A = np.where(free, (Fk + mu * fr.gamma) / den_F, 0.0)
        B = np.where(free, -mu * (c**2 / 3) / self.delta / den_F, 0.0)
        Fconst = A.copy()
        Fconst[0] -= B[0] * fr.E_face[0]
        Fconst[-1] += B[-1] * fr.E_face[-1]
        mh = mu / self.h
        rho = self.rho_cv
        for it in range(1, max_iter + 1):
            P0, dP0 = self.phi(T0), self.dphi(T0)
            D = 1 + mu * fr.sigma_P * dP0 / rho
            alpha = (Tk - mu / rho * fr.sigma_P * (P0 - dP0 * T0)) / D
            beta = mu / rho * c * fr.sigma_E / D
            p = fr.sigma_P * (P0 + dP0 * (alpha - T0))
            q = fr.sigma_P * dP0 * beta
            ab = np.zeros((3, K))
            ab[1] = 1 + mu * c * fr.sigma_E - mu * q - mh * (B[1:] + B[:-1])
            ab[0, 1:] = mh[:-1] * B[1:-1]
            ab[2, :-1] = mh[1:] * B[1:-1]
            rhs = Ek + mu * p - mh * (Fconst[1:] - Fconst[:-1])
            E = solve_banded((1, 1), ab, rhs)
            T = alpha + beta * E
            lam = 1.0
            halvings = 0
            while not np.all(np.isfinite(T) & (T > 0)):
                halvings += 1
                if halvings > max_halvings:
                    raise LOSolveError("LO Newton produced nonpositive temperature")
                lam *= 0.5
                T = T0 + lam * (alpha + beta * E - T0)
            F = Fconst + B * np.concatenate([E, [0.0]]) - B * np.concatenate([[0.0], E])
            F[self.pinned] = 0.0
            change = np.max(np.abs(T - T0) / T)
            T0 = T
            if lam == 1.0 and change <= tol:
                x = np.concatenate([E, F, T])
                return LOSolution(E, F, T, it, self._relative_residual(x, known, mu, fr))
        raise LOSolveError(f"LO Newton did not converge in {max_iter} iterations")
