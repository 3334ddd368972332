"""Benchmark problem definitions for slab radiative transfer."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .transport.constants import CONSTANTS, PhysicalConstants
from .transport.grid import AngularQuadrature, BoundaryCondition, EnergyGroups, SlabMesh
from .transport.opacity import GrayOpacity, LarsenOpacity, MaterialModel

__all__ = [
    "ProblemSpec",
    "make_larsen",
    "make_gray_slab",
    "make_equilibrium",
    "make_problem",
    "PROBLEMS",
    "LARSEN_RHO_CV",
]

LARSEN_RHO_CV = 5.109e11
LARSEN_LAYERS = ((1.0, 1e9), (2.0, 1e12), (4.0, 1e9))  # (right edge cm, gamma eV^3/cm)


@dataclass(frozen=True)
class ProblemSpec:
    """A slab problem: mesh, materials, boundaries and initial temperature.

    The initial radiation field is the Planckian at ``T_init`` (equilibrium
    start).
    """

    name: str
    mesh: SlabMesh
    materials: tuple
    cell_material: np.ndarray
    left: BoundaryCondition
    right: BoundaryCondition
    T_init: np.ndarray
    groups: EnergyGroups
    quadrature: AngularQuadrature
    constants: PhysicalConstants = field(default=CONSTANTS)

    def __post_init__(self):
        K = self.mesh.cells
        cm = np.asarray(self.cell_material, dtype=int)
        if cm.shape != (K,) or cm.min() < 0 or cm.max() >= len(self.materials):
            raise ValueError("cell_material must index materials for every cell")
        T0 = np.broadcast_to(np.asarray(self.T_init, dtype=float), (K,)).copy()
        if np.any(T0 <= 0):
            raise ValueError("initial temperature must be positive")
        object.__setattr__(self, "cell_material", cm)
        object.__setattr__(self, "T_init", T0)
        object.__setattr__(self, "materials", tuple(self.materials))

    def sigma_at(self, x: float, E: float = 1.0, T: float = 1.0) -> float:
        k = int(np.clip(np.searchsorted(self.mesh.faces, x) - 1, 0, self.mesh.cells - 1))
        return float(self.materials[self.cell_material[k]].opacity(E, T))

    def with_overrides(self, **kw) -> "ProblemSpec":
        return replace(self, **kw)


def _layer_ids(centers, right_edges):
    return np.searchsorted(np.asarray(right_edges), centers, side="right").clip(
        0, len(right_edges) - 1)


def make_larsen(cells: int = 256, sn: int = 8, groups: int = 50,
                T_boundary: float = 1000.0, T0: float = 1.0) -> ProblemSpec:
    """Multifrequency thin/thick/thin slab on [0, 4] cm, driven from the right."""
    if min(cells, sn, groups) < 1:
        raise ValueError("counts must be positive")
    mesh = SlabMesh.uniform(4.0, cells)
    mats = tuple(MaterialModel(LarsenOpacity(g), LARSEN_RHO_CV) for _, g in LARSEN_LAYERS)
    ids = _layer_ids(mesh.centers, [e for e, _ in LARSEN_LAYERS])
    return ProblemSpec(
        name="larsen",
        mesh=mesh,
        materials=mats,
        cell_material=ids,
        left=BoundaryCondition.vacuum(),
        right=BoundaryCondition.planckian(T_boundary),
        T_init=np.full(cells, T0),
        groups=EnergyGroups.log_spaced(1e-2, 1e6, groups),
        quadrature=AngularQuadrature(sn),
    )


def make_gray_slab(cells: int = 128, sn: int = 8, sigma_thin: float = 0.2,
                   sigma_thick: float = 2000.0, rho_cv: float = 1e12,
                   T_boundary: float = 500.0, T0: float = 50.0) -> ProblemSpec:
    """Gray thin/thick/thin layers on [0, 4] cm with Planckian inflow on the left."""
    if min(cells, sn) < 1:
        raise ValueError("counts must be positive")
    mesh = SlabMesh.uniform(4.0, cells)
    mats = (MaterialModel(GrayOpacity(sigma_thin), rho_cv),
            MaterialModel(GrayOpacity(sigma_thick), rho_cv))
    layer = _layer_ids(mesh.centers, [1.0, 2.0, 4.0])
    ids = np.where(layer == 1, 1, 0)
    return ProblemSpec(
        name="gray_slab",
        mesh=mesh,
        materials=mats,
        cell_material=ids,
        left=BoundaryCondition.planckian(T_boundary),
        right=BoundaryCondition.vacuum(),
        T_init=np.full(cells, T0),
        groups=EnergyGroups.gray(),
        quadrature=AngularQuadrature(sn),
    )


def make_equilibrium(T0: float = 1.0, cells: int = 8, sn: int = 4, groups: int = 1,
                     sigma: float = 10.0, rho_cv: float = 1e12,
                     opacity: str = "gray") -> ProblemSpec:
    """Uniform reflecting slab at radiative equilibrium.

    ``opacity="larsen"`` uses the frequency-dependent law with ``gamma=sigma``
    and ``groups`` log-spaced groups.
    """
    if not T0 > 0:
        raise ValueError("T0 must be positive")
    law = GrayOpacity(sigma) if opacity == "gray" else LarsenOpacity(sigma)
    grp = (EnergyGroups.gray() if opacity == "gray" and groups == 1
           else EnergyGroups.log_spaced(1e-2, 1e6, groups))
    return ProblemSpec(
        name="equilibrium",
        mesh=SlabMesh.uniform(1.0, cells),
        materials=(MaterialModel(law, rho_cv),),
        cell_material=np.zeros(cells, dtype=int),
        left=BoundaryCondition.reflecting(),
        right=BoundaryCondition.reflecting(),
        T_init=np.full(cells, float(T0)),
        groups=grp,
        quadrature=AngularQuadrature(sn),
    )


PROBLEMS = {
    "larsen": make_larsen,
    "gray_slab": make_gray_slab,
    "equilibrium": make_equilibrium,
}


def make_problem(name: str, **kw) -> ProblemSpec:
    try:
        build = PROBLEMS[name]
    except KeyError:
        raise KeyError(f"unknown problem {name!r}; choose from {', '.join(PROBLEMS)}") from None
    return build(**kw)
