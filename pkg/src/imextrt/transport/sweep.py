"""Lumped linear upwind DG discretization of the slab S_N multigroup equation.

Intensities are stored as ``psi[k, node, m, g]`` with ``node`` 0/1 the
left/right DG node of cell ``k``.  For marching, each direction half is
viewed in "upstream order": cells ordered along the flight direction and
the node nearest the inflow face first.  In that view both halves obey the
same two-node cell equations, with ``m = |mu|``:

    (m/2 + a h/2) u + (m/2) d = h/2 q_u + m psi_in
   -(m/2) u + (m/2 + a h/2) d = h/2 q_d

where ``u``/``d`` are the upstream/downstream nodes, ``a = sigma + tau`` and
``tau = 1/(c mu dt)`` is the stage time coefficient.
"""

from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np

from .constants import C_LIGHT
from .grid import AngularQuadrature, BoundaryCondition, EnergyGroups, SlabMesh
from .planck import planck_group

__all__ = ["SlabTransport", "SweepResult", "FaceTraces"]


@numba.njit(cache=True)
def _march(h, a, qu, qd, m, inflow):
    K, M, G = qu.shape
    up = np.empty((K, M, G))
    dn = np.empty((K, M, G))
    cur = inflow.copy()
    for k in range(K):
        hh = 0.5 * h[k]
        for j in range(M):
            be = 0.5 * m[j]
            for g in range(G):
                al = be + a[k, g] * hh
                ru = hh * qu[k, j, g] + m[j] * cur[j, g]
                rd = hh * qd[k, j, g]
                det = al * al + be * be
                u = (al * ru - be * rd) / det
                d = (al * rd + be * ru) / det
                up[k, j, g] = u
                dn[k, j, g] = d
                cur[j, g] = d
    return up, dn, cur


@dataclass
class SweepResult:
    psi: np.ndarray
    clipped: float  # energy removed by the negativity fixup, erg/cm^2


@dataclass
class FaceTraces:
    """Upwind traces on the ``K+1`` faces for each direction half."""

    pos: np.ndarray  # (K+1, Mh, G), mu > 0
    neg: np.ndarray  # (K+1, Mh, G), mu < 0


class SlabTransport:
    """Discrete transport operator on a slab with fixed boundary conditions."""

    def __init__(self, mesh: SlabMesh, quad: AngularQuadrature, groups: EnergyGroups,
                 left: BoundaryCondition, right: BoundaryCondition, c: float = C_LIGHT):
        self.mesh, self.quad, self.groups = mesh, quad, groups
        self.left, self.right = left, right
        self.c = c
        self.h = np.ascontiguousarray(mesh.widths)
        self.h_rev = np.ascontiguousarray(self.h[::-1])
        Mh = quad.half
        self.m = np.ascontiguousarray(quad.mu[Mh:])
        self.w = np.ascontiguousarray(quad.weights[Mh:])
        self.shape = (mesh.cells, 2, quad.size, groups.count)
        self.size = int(np.prod(self.shape))
        edges = groups.planck_edges()
        self._fixed_in = {}
        for side, bc in (("left", left), ("right", right)):
            if bc.kind == "planckian":
                Bg = planck_group(np.array([bc.temperature]), edges)[0]
                self._fixed_in[side] = np.repeat(Bg[None, :], Mh, axis=0)
            else:
                self._fixed_in[side] = np.zeros((Mh, groups.count))

    # -- direction-half views -------------------------------------------
    def halves(self, psi):
        """Upstream-ordered ``(u, d)`` arrays for the positive and negative halves."""
        Mh = self.quad.half
        pos = psi[:, :, Mh:, :]
        neg = psi[::-1, ::-1, Mh - 1::-1, :]
        return (pos[:, 0], pos[:, 1]), (neg[:, 0], neg[:, 1])

    def _assemble(self, pu, pd, nu, nd):
        Mh = self.quad.half
        psi = np.empty(self.shape)
        psi[:, 0, Mh:] = pu
        psi[:, 1, Mh:] = pd
        psi[::-1, 1, Mh - 1::-1] = nu
        psi[::-1, 0, Mh - 1::-1] = nd
        return psi

    def inflow(self, side):
        return self._fixed_in[side]

    # -- sweep ------------------------------------------------------------
    def sweep(self, sigma_g, q, tau, clip=True) -> SweepResult:
        """Solve ``tau psi + mu d_x psi + sigma psi = q`` for nodal ``q``.

        ``sigma_g`` has shape (K, G); ``q`` has the intensity shape.  Use
        ``tau = 0`` for the steady problem.
        """
        a = np.ascontiguousarray(sigma_g + tau)
        a_rev = np.ascontiguousarray(a[::-1])
        (qpu, qpd), (qnu, qnd) = self.halves(q)
        qpu, qpd = np.ascontiguousarray(qpu), np.ascontiguousarray(qpd)
        qnu, qnd = np.ascontiguousarray(qnu), np.ascontiguousarray(qnd)
        lref = self.left.kind == "reflecting"
        rref = self.right.kind == "reflecting"

        def pos(inflow, qu=qpu, qd=qpd):
            return _march(self.h, a, qu, qd, self.m, inflow)

        def neg(inflow, qu=qnu, qd=qnd):
            return _march(self.h_rev, a_rev, qu, qd, self.m, inflow)

        if lref and rref:
            zero = np.zeros_like(self._fixed_in["left"])
            pu, pd, pout = pos(zero)
            nu, nd, nout = neg(zero)
            zq = np.zeros_like(qpu)
            hpu, hpd, hpout = pos(np.ones_like(zero), zq, zq)
            hnu, hnd, hnout = neg(np.ones_like(zero), zq, zq)
            # x: left inflow (+), y: right inflow (-)
            #   x = nout + y * hnout ;  y = pout + x * hpout
            x = (nout + pout * hnout) / (1.0 - hpout * hnout)
            y = pout + x * hpout
            pu, pd = pu + x * hpu, pd + x * hpd
            nu, nd = nu + y * hnu, nd + y * hnd
        elif lref:
            nu, nd, nout = neg(self._fixed_in["right"])
            pu, pd, _ = pos(nout)
        elif rref:
            pu, pd, pout = pos(self._fixed_in["left"])
            nu, nd, _ = neg(pout)
        else:
            pu, pd, _ = pos(self._fixed_in["left"])
            nu, nd, _ = neg(self._fixed_in["right"])
        psi = self._assemble(pu, pd, nu, nd)
        clipped = 0.0
        if clip:
            negs = psi < 0.0
            if negs.any():
                wfull = self.quad.weights[None, None, :, None]
                hw = 0.5 * self.h[:, None, None, None]
                clipped = float(2 * np.pi / self.c * np.sum(np.where(negs, -psi, 0.0) * wfull * hw))
                psi = np.where(negs, 0.0, psi)
        return SweepResult(psi, clipped)

    # -- explicit operator -----------------------------------------------
    def _boundary_inflows(self, psi):
        """Inflow arrays (Mh, G) for the positive and negative halves."""
        Mh = self.quad.half
        lin = self._fixed_in["left"]
        rin = self._fixed_in["right"]
        if self.left.kind == "reflecting":
            # outgoing mu<0 at x0 is the left node of cell 0
            lin = psi[0, 0, Mh - 1::-1, :]
        if self.right.kind == "reflecting":
            rin = psi[-1, 1, Mh:, :]
        return lin, rin

    def _rate_half(self, h, sig, s, u, d, inflow):
        hh = h[:, None, None]
        m = self.m[None, :, None]
        sig = sig[:, None, :]
        s = s[:, None, :]
        ins = np.concatenate([inflow[None], d[:-1]], axis=0)
        du = self.c * (-m * (u + d) / hh + 2 * m * ins / hh - sig * u + s)
        dd = self.c * (-m * (d - u) / hh - sig * d + s)
        return du, dd

    def rate(self, psi, sigma_g, emission):
        """``d psi / dt`` of the semi-discrete system with isotropic group ``emission``."""
        lin, rin = self._boundary_inflows(psi)
        (pu, pd), (nu, nd) = self.halves(psi)
        du_p, dd_p = self._rate_half(self.h, sigma_g, emission, pu, pd, lin)
        du_n, dd_n = self._rate_half(self.h_rev, sigma_g[::-1], emission[::-1], nu, nd, rin)
        return self._assemble(du_p, dd_p, du_n, dd_n)

    # -- traces -----------------------------------------------------------
    def traces(self, psi) -> FaceTraces:
        lin, rin = self._boundary_inflows(psi)
        (pu, pd), (nu, nd) = self.halves(psi)
        pos = np.concatenate([lin[None], pd], axis=0)
        neg = np.concatenate([rin[None], nd], axis=0)[::-1]
        return FaceTraces(pos, neg)

    def trace_rates(self, psi, sigma_g, emission) -> FaceTraces:
        """Time derivatives of the upwind face traces; inflow data is steady."""
        (pu, pd), (nu, nd) = self.halves(psi)
        m = self.m[None, :, None]

        def half(h, sig, s, u, d):
            return self.c * (-m * (d - u) / h[:, None, None] - sig[:, None, :] * d
                             + s[:, None, :])

        rp = half(self.h, sigma_g, emission, pu, pd)
        rn = half(self.h_rev, sigma_g[::-1], emission[::-1], nu, nd)
        zero = np.zeros((1,) + rp.shape[1:])
        pos = np.concatenate([zero, rp], axis=0)
        neg = np.concatenate([zero, rn], axis=0)[::-1]
        return FaceTraces(pos, neg)
