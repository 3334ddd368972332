"""Opacity laws, materials and multigroup / collapsed opacity averages.

Within each group the frequency averages are computed with Gauss-Legendre
quadrature in ``ln(h nu)``.  Weight functions are handled in log space and
normalized per group, so Wien-tail groups at low temperature do not
underflow.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import EnergyGroups
from .planck import planck_group, planck_group_dT

__all__ = [
    "OpacityLaw",
    "GrayOpacity",
    "LarsenOpacity",
    "MaterialModel",
    "CollapsedOpacities",
    "GroupOpacityModel",
    "SIGMA_FLOOR",
]

SIGMA_FLOOR = 1e-30


class OpacityLaw:
    """Absorption opacity ``sigma(h nu [eV], T [eV])`` in 1/cm."""

    gray_value: float | None = None

    def __call__(self, E, T):
        raise NotImplementedError


@dataclass(frozen=True)
class GrayOpacity(OpacityLaw):
    sigma: float

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError("opacity must be positive")

    @property
    def gray_value(self):
        return float(self.sigma)

    def __call__(self, E, T):
        return np.full(np.broadcast_shapes(np.shape(E), np.shape(T)), float(self.sigma))


@dataclass(frozen=True)
class LarsenOpacity(OpacityLaw):
    """``sigma = gamma / E^3 * (1 - exp(-E/T))`` with ``gamma`` in eV^3/cm."""

    gamma: float

    def __post_init__(self):
        if not self.gamma > 0:
            raise ValueError("gamma must be positive")

    def __call__(self, E, T):
        E = np.asarray(E, dtype=float)
        return self.gamma / E**3 * (-np.expm1(-E / np.asarray(T, dtype=float)))


@dataclass(frozen=True)
class MaterialModel:
    opacity: OpacityLaw
    rho_cv: float  # erg / (cm^3 eV)

    def __post_init__(self):
        if not self.rho_cv > 0:
            raise ValueError("rho_cv must be positive")


@dataclass(frozen=True)
class CollapsedOpacities:
    sigma_E: np.ndarray
    sigma_P: np.ndarray
    sigma_R: np.ndarray


def _log_expm1(x):
    xs = np.minimum(x, 40.0)
    return np.where(x > 40.0, x, np.log(np.expm1(np.maximum(xs, 1e-300))))


def _normalized(logw):
    logw = logw - logw.max(axis=-1, keepdims=True)
    w = np.exp(logw)
    return w / w.sum(axis=-1, keepdims=True)


class GroupOpacityModel:
    """Group and cell-collapsed opacities for a mesh of materials.

    ``nodes`` is the per-group quadrature size for non-gray laws.
    """

    def __init__(self, groups: EnergyGroups, materials, cell_material, nodes: int = 16):
        self.groups = groups
        self.materials = tuple(materials)
        self.cell_material = np.asarray(cell_material, dtype=int)
        self.edges_planck = groups.planck_edges()
        self._sets = [(m, np.flatnonzero(self.cell_material == i))
                      for i, m in enumerate(self.materials)]
        self._sets = [(m, idx) for m, idx in self._sets if idx.size]
        self.rho_cv = np.array([self.materials[i].rho_cv for i in self.cell_material])
        self.all_gray = all(m.opacity.gray_value is not None for m in self.materials)
        if not self.all_gray:
            e = groups.edges
            if not (np.all(np.isfinite(e)) and e[0] > 0):
                raise ValueError("frequency-dependent opacity needs finite positive group edges")
            x, w = np.polynomial.legendre.leggauss(nodes)
            lo, hi = np.log(e[:-1]), np.log(e[1:])
            lnE = 0.5 * (hi - lo)[:, None] * x[None, :] + 0.5 * (hi + lo)[:, None]
            self.E_q = np.exp(lnE)  # (G, nq)
            # d(h nu) = E d(ln E)
            self.lnw_q = np.log(0.5 * (hi - lo)[:, None] * w[None, :]) + lnE

    @property
    def cells(self):
        return self.cell_material.size

    def _sigma_q(self, T_sig):
        out = np.empty((T_sig.size,) + self.E_q.shape)
        for m, idx in self._sets:
            out[idx] = m.opacity(self.E_q[None], T_sig[idx, None, None])
        return out

    def _gray(self):
        s = np.empty(self.cells)
        for m, idx in self._sets:
            s[idx] = m.opacity.gray_value
        return np.repeat(s[:, None], self.groups.count, axis=1)

    def planck_groups(self, T_sig, T_w):
        """Group opacities ``sigma(T_sig)`` averaged with weight ``B(nu, T_w)``."""
        T_sig = np.asarray(T_sig, dtype=float)
        if self.all_gray:
            return self._gray()
        x = self.E_q[None] / np.asarray(T_w, dtype=float)[:, None, None]
        w = _normalized(self.lnw_q[None] + 3 * np.log(self.E_q)[None] - _log_expm1(x))
        return np.einsum("kgq,kgq->kg", self._sigma_q(T_sig), w)

    def rosseland_inverse_groups(self, T_sig, T_w):
        """Group means of ``1/sigma(T_sig)`` weighted by ``dB/dT(nu, T_w)``."""
        T_sig = np.asarray(T_sig, dtype=float)
        if self.all_gray:
            return 1.0 / self._gray()
        x = self.E_q[None] / np.asarray(T_w, dtype=float)[:, None, None]
        w = _normalized(self.lnw_q[None] + 4 * np.log(self.E_q)[None] + x
                        - 2 * _log_expm1(x))
        return np.einsum("kgq,kgq->kg", 1.0 / self._sigma_q(T_sig), w)

    def emission_data(self, T_sig, T):
        """Group emission ``sigma_g B_g(T)`` and the cell Planck mean ``sigma_P``."""
        sg = self.planck_groups(T_sig, T)
        Bg = planck_group(T, self.edges_planck)
        eta = sg * Bg
        if self.all_gray:
            return eta, sg[:, 0].copy()
        sigma_P = eta.sum(axis=1) / np.maximum(Bg.sum(axis=1), SIGMA_FLOOR)
        return eta, sigma_P

    def rosseland(self, T_sig, T):
        if self.all_gray:
            return self._gray()[:, 0]
        dB = planck_group_dT(T, self.edges_planck)
        r = self.rosseland_inverse_groups(T_sig, T)
        return dB.sum(axis=1) / np.maximum((r * dB).sum(axis=1), SIGMA_FLOOR)

    def energy_weighted(self, sigma_g, phi_g, fallback):
        """``sum sigma_g phi_g / sum phi_g`` with ``fallback`` where the field vanishes."""
        if self.all_gray:
            return sigma_g[:, 0].copy()
        num = (sigma_g * phi_g).sum(axis=1)
        den = phi_g.sum(axis=1)
        ok = den > 1e-300
        return np.where(ok, num / np.where(ok, den, 1.0), fallback)

    def collapse(self, phi_g, T_star, T) -> CollapsedOpacities:
        """Partitioned collapsed opacities; ``T_star == T`` gives the joint form."""
        sigma_g = self.planck_groups(T_star, T_star)
        _, sP = self.emission_data(T_star, T)
        sR = self.rosseland(T_star, T)
        sE = self.energy_weighted(sigma_g, phi_g, sP)
        return CollapsedOpacities(sE, sP, sR)
