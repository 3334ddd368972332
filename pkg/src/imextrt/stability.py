"""Linear stability of IMEX pairs and optimal embedding search.

The stability function of a pair for the split test problem
``y' = lam_tilde*y + lam*y`` is

    R(zt, z) = 1 + (zt + z) * w^T (I - zt*A_explicit - z*A_implicit)^{-1} 1

with ``w = b`` for the primary method and ``w = b_hat`` for the embedding.
Both tableaux are lower-triangular, so the solve is a forward substitution
that vectorizes over arbitrary broadcast shapes of ``zt`` and ``z``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .tableaux import ImexPair, quality

__all__ = [
    "SingularStageError",
    "InfeasibleEmbeddingError",
    "StabilityQuery",
    "RegionSpec",
    "stability_function",
    "embedded_stability_function",
    "implicit_limit",
    "is_A_stable_implicit",
    "stability_region",
    "embedding_objective",
    "optimize_embedding",
]

A_STABLE_TOL = 1e-10
LIMIT_RADII = (1e8, 1e10)


class SingularStageError(ZeroDivisionError):
    """The stage matrix ``I - zt*A_explicit - z*A_implicit`` is singular."""


class InfeasibleEmbeddingError(RuntimeError):
    pass


@dataclass(frozen=True)
class StabilityQuery:
    z_tilde: complex
    z: complex


@dataclass(frozen=True)
class RegionSpec:
    """Sampling plan for the sector stability region.

    ``alpha`` is the sector half-angle in radians.  The implicit eigenvalue
    is sampled on the rays ``arg z = pi`` and ``arg z = pi +- alpha`` at
    log-spaced radii up to ``r_max``; ``dense`` adds interior rays.
    """

    alpha: float = np.pi / 2
    xmin: float = -4.0
    xmax: float = 2.0
    ymin: float = -3.0
    ymax: float = 3.0
    n: int = 121
    n_radii: int = 200
    r_min: float = 1e-6
    r_max: float = 1e8
    dense: bool = False
    n_dense_rays: int = 16
    grid_shape: tuple = field(init=False)

    def __post_init__(self):
        if not 0.0 <= self.alpha <= np.pi / 2:
            raise ValueError("alpha must lie in [0, pi/2]")
        if self.n < 1:
            raise ValueError("grid must be nonempty")
        object.__setattr__(self, "grid_shape", (self.n, self.n))

    def grid(self) -> np.ndarray:
        re = np.linspace(self.xmin, self.xmax, self.n)
        im = np.linspace(self.ymin, self.ymax, self.n)
        return re[None, :] + 1j * im[:, None]

    def implicit_samples(self) -> np.ndarray:
        if self.dense:
            angles = np.linspace(-self.alpha, self.alpha, self.n_dense_rays + 1)
        else:
            angles = np.unique([-self.alpha, 0.0, self.alpha])
        radii = np.concatenate([np.geomspace(self.r_min, self.r_max, self.n_radii),
                                [LIMIT_RADII[1]]])
        return (radii[None, :] * np.exp(1j * (np.pi + angles[:, None]))).ravel()


def _stage_solve(A, At, zt, z):
    """Forward substitution for ``(I - zt*At - z*A) k = 1``, broadcasting."""
    s = A.shape[0]
    zt = np.asarray(zt, dtype=complex)
    z = np.asarray(z, dtype=complex)
    shape = np.broadcast_shapes(zt.shape, z.shape)
    k = np.empty((s,) + shape, dtype=complex)
    for i in range(s):
        acc = np.ones(shape, dtype=complex)
        for j in range(i):
            acc = acc + (zt * At[i, j] + z * A[i, j]) * k[j]
        denom = 1.0 - z * A[i, i] - zt * At[i, i]
        k[i] = acc / denom
    return k


def _rfun(pair, weights, zt, z, strict):
    A, At = pair.A_implicit, pair.A_explicit
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        k = _stage_solve(A, At, zt, z)
        r = 1.0 + (np.asarray(zt) + np.asarray(z)) * np.tensordot(weights, k, axes=1)
    if strict and not np.all(np.isfinite(r)):
        raise SingularStageError("stage matrix is singular at the requested point")
    return r


def stability_function(pair: ImexPair, zt, z, strict: bool = True):
    """Amplification factor of one primary step; broadcasts over inputs."""
    if isinstance(zt, StabilityQuery):
        zt, z = zt.z_tilde, zt.z
    r = _rfun(pair, pair.b, zt, z, strict)
    return r[()] if np.ndim(r) == 0 else r


def embedded_stability_function(pair: ImexPair, zt, z, strict: bool = True):
    """Amplification factor of one step of the embedded method."""
    if isinstance(zt, StabilityQuery):
        zt, z = zt.z_tilde, zt.z
    r = _rfun(pair, pair.b_hat, zt, z, strict)
    return r[()] if np.ndim(r) == 0 else r


def implicit_limit(A, weights) -> float:
    """``lim R(0, z)`` as ``|z| -> inf`` for a DIRK tableau with nonzero diagonal.

    Equals ``1 - w^T A^{-1} 1``.  Also checked against evaluations at
    ``|z| = 1e8`` and ``1e10``, which must agree to 1e-6.
    """
    A = np.asarray(A, dtype=float)
    w = np.asarray(weights, dtype=float)
    if np.any(np.diag(A) == 0.0):
        return np.inf
    lim = 1.0 - w @ np.linalg.solve(A, np.ones(len(w)))
    dummy = ImexPair("probe", A, np.zeros_like(A), w, w)
    far = [_rfun(dummy, w, 0.0, -r, strict=True) for r in LIMIT_RADII]
    if abs(far[1] - lim) > 1e-6 or abs(far[0] - far[1]) > 1e-6:
        raise ArithmeticError("large-|z| evaluations disagree with the rational limit")
    return float(lim)


def is_A_stable_implicit(A, weights, n: int = 400) -> tuple[bool, float]:
    """A-stability of the implicit tableau ``(A, weights)``.

    Samples ``|R(0, iy)|`` for ``|y|`` log-spaced in ``[1e-6, 1e8]`` (both
    signs, ``n`` points each) and includes the ``|z| -> inf`` limit.  Returns
    ``(stable, margin)`` where ``margin`` is the largest modulus seen.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    w = np.atleast_1d(np.asarray(weights, dtype=float))
    y = np.geomspace(1e-6, 1e8, n)
    zs = np.concatenate([1j * y, -1j * y])
    probe = ImexPair("probe", A, np.zeros_like(A), w, w)
    r = _rfun(probe, w, 0.0, zs, strict=False)
    mods = np.abs(r)
    if not np.all(np.isfinite(mods)):
        return False, np.inf
    margin = float(mods.max())
    if np.all(np.diag(A) != 0.0):
        margin = max(margin, abs(1.0 - w @ np.linalg.solve(A, np.ones(len(w)))))
    else:
        # explicit stages make R polynomial-like in z: unbounded at infinity
        margin = max(margin, float(np.abs(_rfun(probe, w, 0.0, -1e10, strict=False))))
    return bool(margin <= 1.0 + A_STABLE_TOL), margin


def stability_region(pair: ImexPair, spec: RegionSpec, use_embedded: bool = False,
                     chunk: int = 64) -> np.ndarray:
    """Boolean field over ``spec.grid()``: stable for every sampled sector ``z``.

    Only rays are sampled.  ``R`` is rational in ``z`` with poles at
    ``1/a_ii > 0``, outside the left sector, so by the maximum-modulus
    principle the boundary rays bound the interior.
    """
    w = pair.b_hat if use_embedded else pair.b
    zt = spec.grid()
    zs = spec.implicit_samples()
    out = np.empty(zt.shape, dtype=bool)
    flat_in = zt.ravel()
    flat_out = out.ravel()
    for start in range(0, flat_in.size, chunk):
        block = flat_in[start:start + chunk]
        r = _rfun(pair, w, block[:, None], zs[None, :], strict=False)
        mods = np.abs(r)
        ok = np.isfinite(mods) & (mods <= 1.0 + A_STABLE_TOL)
        flat_out[start:start + chunk] = ok.all(axis=1)
    return out


def embedding_objective(pair: ImexPair, b_hat) -> float:
    """Distance of the nine quality ratios from one."""
    try:
        q = quality(pair.with_weights(b_hat=b_hat))
    except ZeroDivisionError:
        return np.inf
    return float(np.linalg.norm(q.objective_vector() - 1.0))


@dataclass(frozen=True)
class EmbeddingResult:
    b_hat: np.ndarray
    objective: float
    margin: float
    starts: int


def _complete(x):
    return np.append(x, 1.0 - np.sum(x))


def optimize_embedding(pair: ImexPair, seeds: int = 16, rng_seed: int = 0,
                       spread: float = 1.0, xtol: float = 1e-10) -> EmbeddingResult:
    """Multi-start Nelder-Mead search for the best A-stable embedding.

    Free parameters are the first ``s-1`` entries of ``b_hat``; the last one
    closes ``sum(b_hat) = 1``.  Starts are drawn uniformly in a box of
    half-width ``spread`` around ``b``.  A-stability violations are
    penalized; the best feasible local minimum is returned.
    """
    rng = np.random.default_rng(rng_seed)
    s = pair.s

    def penalized(x):
        bh = _complete(x)
        ok, margin = is_A_stable_implicit(pair.A_implicit, bh)
        f = embedding_objective(pair, bh)
        if not ok:
            f += 1e3 * (1.0 + min(margin - 1.0, 1e6))
        return f

    best = None
    for _ in range(seeds):
        x0 = pair.b[: s - 1] + rng.uniform(-spread, spread, s - 1)
        res = minimize(penalized, x0, method="Nelder-Mead",
                       options={"xatol": xtol, "fatol": 1e-14,
                                "maxiter": 4000 * s, "maxfev": 8000 * s})
        bh = _complete(res.x)
        ok, margin = is_A_stable_implicit(pair.A_implicit, bh)
        if not ok:
            continue
        f = embedding_objective(pair, bh)
        if best is None or f < best.objective:
            best = EmbeddingResult(bh, f, margin, seeds)
    if best is None:
        raise InfeasibleEmbeddingError(
            f"no A-stable embedding found for {pair.name} from {seeds} starts")
    return best
