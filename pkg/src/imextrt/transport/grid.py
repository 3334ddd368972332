"""Slab mesh, discrete ordinates and photon energy groups."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = ["SlabMesh", "AngularQuadrature", "EnergyGroups", "BoundaryCondition"]


def _ro(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class SlabMesh:
    """Cell faces of a 1D slab in cm (strictly increasing)."""

    faces: np.ndarray
    centers: np.ndarray = field(init=False)
    widths: np.ndarray = field(init=False)

    def __post_init__(self):
        f = _ro(self.faces)
        if f.ndim != 1 or f.size < 2 or np.any(np.diff(f) <= 0):
            raise ValueError("mesh faces must be strictly increasing with at least one cell")
        object.__setattr__(self, "faces", f)
        object.__setattr__(self, "centers", _ro(0.5 * (f[1:] + f[:-1])))
        object.__setattr__(self, "widths", _ro(np.diff(f)))

    @classmethod
    def uniform(cls, length: float, cells: int, x0: float = 0.0) -> "SlabMesh":
        if cells < 1:
            raise ValueError("need at least one cell")
        return cls(np.linspace(x0, x0 + length, cells + 1))

    @property
    def cells(self) -> int:
        return self.widths.size

    def face_spacing(self) -> np.ndarray:
        """Center-to-center distances at interior faces; half widths at the ends."""
        h = self.widths
        d = np.empty(h.size + 1)
        d[0], d[-1] = 0.5 * h[0], 0.5 * h[-1]
        d[1:-1] = 0.5 * (h[1:] + h[:-1])
        return d


@dataclass(frozen=True)
class AngularQuadrature:
    """Gauss-Legendre S_N set on [-1, 1]; weights sum to 2.

    Directions are stored in ascending order, so ``mu[M-1-i] == -mu[i]``.
    """

    order: int
    mu: np.ndarray = field(init=False)
    weights: np.ndarray = field(init=False)

    def __post_init__(self):
        n = int(self.order)
        if n < 2 or n % 2:
            raise ValueError("S_N order must be a positive even integer")
        mu, w = np.polynomial.legendre.leggauss(n)
        object.__setattr__(self, "mu", _ro(mu))
        object.__setattr__(self, "weights", _ro(w))

    @property
    def size(self) -> int:
        return self.mu.size

    @property
    def half(self) -> int:
        return self.mu.size // 2


@dataclass(frozen=True)
class EnergyGroups:
    """Photon energy group boundaries in eV.

    With ``open_ends`` the lowest group extends to 0 and the highest to
    infinity when integrating the Planckian, so group emission sums to the
    full ``a c T^4``.  Opacity averages always use the nominal edges.
    """

    edges: np.ndarray
    open_ends: bool = True

    def __post_init__(self):
        e = _ro(self.edges)
        if e.ndim != 1 or e.size < 2 or np.any(np.diff(e) <= 0) or e[0] < 0:
            raise ValueError("group edges must be nonnegative and strictly increasing")
        object.__setattr__(self, "edges", e)

    @classmethod
    def log_spaced(cls, lo: float, hi: float, groups: int, open_ends: bool = True):
        return cls(np.geomspace(lo, hi, groups + 1), open_ends)

    @classmethod
    def gray(cls) -> "EnergyGroups":
        return cls(np.array([0.0, np.inf]), True)

    @property
    def count(self) -> int:
        return self.edges.size - 1

    def planck_edges(self) -> np.ndarray:
        e = np.array(self.edges)
        if self.open_ends:
            e[0], e[-1] = 0.0, np.inf
        return e


@dataclass(frozen=True)
class BoundaryCondition:
    """Inflow condition at one slab end: vacuum, reflecting or planckian(T)."""

    kind: str = "vacuum"
    temperature: float | None = None

    def __post_init__(self):
        if self.kind not in ("vacuum", "reflecting", "planckian"):
            raise ValueError(f"unknown boundary kind {self.kind!r}")
        if self.kind == "planckian" and not (self.temperature and self.temperature > 0):
            raise ValueError("planckian boundary needs a positive temperature")

    @classmethod
    def vacuum(cls):
        return cls("vacuum")

    @classmethod
    def reflecting(cls):
        return cls("reflecting")

    @classmethod
    def planckian(cls, T: float):
        return cls("planckian", float(T))
