"""Semi-implicit(-explicit) Runge-Kutta stepping with embedded error control.

A system exposes ``N(y_star, y)``, where ``y_star`` is read only through the
components listed in ``explicit_projection``.  One step of a pair is

    Y*_i = y_n + dt * sum_{j<i}  At_ij K_j      (projected components only)
    Y_i  = y_n + dt * sum_{j<=i} A_ij  K_j      (implicit stage solve)
    K_i  = N(Y*_i, Y_i)

with ``y_{n+1}`` and the embedded ``y_hat`` both assembled from the stored
``K_i``.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .tableaux import ImexPair

log = logging.getLogger(__name__)

__all__ = [
    "PartitionedSystem",
    "FunctionSystem",
    "StepControllerConfig",
    "StepRecord",
    "StepResult",
    "IntegrationResult",
    "StageSolveError",
    "NonFiniteStateError",
    "StepControlError",
    "step",
    "error_norm",
    "propose_dt",
    "integrate",
    "write_history",
]


class StageSolveError(RuntimeError):
    """An implicit stage solve failed to converge."""


class NonFiniteStateError(FloatingPointError):
    pass


class StepControlError(RuntimeError):
    """Adaptive control gave up (too many rejects or dt below ``dt_min``)."""


class PartitionedSystem:
    """Base class for right-hand sides ``N(y_star, y)``.

    Subclasses set ``size`` and ``explicit_projection`` (an index array, a
    slice, or ``None`` for every component) and implement :meth:`eval` and
    :meth:`solve_stage`.
    """

    size: int
    explicit_projection = None
    labels: dict = {}

    def project(self, y: np.ndarray) -> np.ndarray:
        p = self.explicit_projection
        return np.array(y, copy=True) if p is None else np.array(y[p], copy=True)

    def eval(self, y_star: np.ndarray, y: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def solve_stage(self, known: np.ndarray, mu: float,
                    y_star: np.ndarray) -> tuple[np.ndarray, dict]:
        """Return ``Y`` with ``Y = known + mu * N(y_star, Y)`` and solver stats."""
        raise NotImplementedError


class FunctionSystem(PartitionedSystem):
    """Small dense systems given by callables; stages solved by Newton.

    ``rhs(y_star, y)`` returns the derivative and ``jac(y_star, y)`` its
    Jacobian with respect to ``y``.  Without ``jac`` a central-difference
    Jacobian is used.
    """

    def __init__(self, rhs: Callable, size: int, jac: Callable | None = None,
                 explicit_projection=None, tol: float = 1e-14, max_iter: int = 50):
        self.rhs = rhs
        self.jac = jac
        self.size = size
        self.explicit_projection = explicit_projection
        self.tol = tol
        self.max_iter = max_iter

    def _full_star(self, y_star, y):
        if self.explicit_projection is None:
            return y_star
        full = np.array(y, dtype=float, copy=True)
        full[self.explicit_projection] = y_star
        return full

    def eval(self, y_star, y):
        return np.asarray(self.rhs(self._full_star(y_star, y), y), dtype=float)

    def _jacobian(self, ys, y):
        if self.jac is not None:
            return np.atleast_2d(self.jac(ys, y))
        n = len(y)
        J = np.empty((n, n))
        for k in range(n):
            h = 1e-7 * max(1.0, abs(y[k]))
            e = np.zeros(n)
            e[k] = h
            J[:, k] = (self.rhs(ys, y + e) - self.rhs(ys, y - e)) / (2 * h)
        return J

    def solve_stage(self, known, mu, y_star):
        ys = self._full_star(y_star, known)
        y = np.array(known, dtype=float, copy=True)
        eye = np.eye(len(y))
        for it in range(1, self.max_iter + 1):
            r = y - known - mu * np.asarray(self.rhs(ys, y), dtype=float)
            J = eye - mu * self._jacobian(ys, y)
            dy = np.linalg.solve(J, -r)
            y = y + dy
            if np.max(np.abs(dy)) <= self.tol * max(1.0, np.max(np.abs(y))):
                return y, {"newton_iters": it}
        raise StageSolveError(f"Newton stage solve did not converge in {self.max_iter} iterations")


@dataclass
class StepControllerConfig:
    """Tolerances and clamps for the adaptive controller.

    ``error_mask`` selects the components entering the error norm (index
    array, slice or ``None`` for all).  ``dt_max=None`` means ``tf - t0``.
    """

    atol: float | np.ndarray = 1e-6
    rtol: float | np.ndarray = 1e-6
    safety: float = 0.9
    growth_max: float = 5.0
    shrink_min: float = 0.1
    dt_min: float = 1e-16
    dt_max: float | None = None
    dt0: float = 1e-13
    error_mask: object = None
    max_rejects_per_step: int = 50

    def __post_init__(self):
        if np.any(np.asarray(self.atol) <= 0) or np.any(np.asarray(self.rtol) <= 0):
            raise ValueError("tolerances must be positive")
        if not 0.0 < self.shrink_min < 1.0 < self.growth_max:
            raise ValueError("need 0 < shrink_min < 1 < growth_max")


@dataclass
class StepRecord:
    t: float
    dt: float
    err: float
    accepted: bool
    rejects: int
    ho_solves: int = 0
    lo_iters: int = 0

    def __post_init__(self):
        if self.accepted and not self.err <= 1.0:
            raise ValueError("accepted step with err > 1")


@dataclass
class StepResult:
    y_next: np.ndarray
    y_hat: np.ndarray
    stats: dict = field(default_factory=dict)


@dataclass
class IntegrationResult:
    y: np.ndarray
    t: float
    history: list
    snapshots: dict = field(default_factory=dict)

    def accepted(self) -> list:
        return [r for r in self.history if r.accepted]


def _merge(total: dict, part: dict):
    for k, v in part.items():
        total[k] = total.get(k, 0) + v


def step(system: PartitionedSystem, pair: ImexPair, y_n: np.ndarray, dt: float) -> StepResult:
    """One step of the pair; returns primary and embedded solutions.

    Stage derivatives are stored once and reused for both outputs, and only
    the projected components of each explicit stage are formed.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    A, At = pair.A_implicit, pair.A_explicit
    s = pair.s
    proj = system.explicit_projection
    y_n = np.asarray(y_n, dtype=float)
    yn_star = system.project(y_n)
    K: list[np.ndarray] = []
    stats = {"stage_solves": 0, "evals": 0}
    for i in range(s):
        y_star = yn_star.copy()
        known = y_n.copy()
        for j in range(i):
            if At[i, j] != 0.0:
                y_star += dt * At[i, j] * (K[j] if proj is None else K[j][proj])
            if A[i, j] != 0.0:
                known += dt * A[i, j] * K[j]
        mu = dt * A[i, i]
        if mu != 0.0:
            Y, info = system.solve_stage(known, mu, y_star)
            stats["stage_solves"] += 1
            _merge(stats, info)
        else:
            Y = known
        Ki = system.eval(y_star, Y)
        stats["evals"] += 1
        if not np.all(np.isfinite(Ki)):
            raise NonFiniteStateError(f"non-finite stage derivative in stage {i + 1}")
        K.append(Ki)
    y_next = y_n.copy()
    y_hat = y_n.copy()
    for j in range(s):
        y_next += dt * pair.b[j] * K[j]
        y_hat += dt * pair.b_hat[j] * K[j]
    if not (np.all(np.isfinite(y_next)) and np.all(np.isfinite(y_hat))):
        raise NonFiniteStateError("non-finite step result")
    return StepResult(y_next, y_hat, stats)


def _select(x, mask):
    x = np.asarray(x, dtype=float)
    if x.ndim == 0:
        return x
    return x if mask is None else x[mask]


def error_norm(y_n, y_next, y_hat, cfg: StepControllerConfig) -> float:
    """Weighted RMS of ``y_next - y_hat`` over the masked components."""
    mask = cfg.error_mask
    yn, y1, yh = (_select(v, mask) for v in (y_n, y_next, y_hat))
    if y1.size == 0:
        raise ValueError("error mask selects no components")
    atol = _select(cfg.atol, mask)
    rtol = _select(cfg.rtol, mask)
    scale = atol + rtol * np.maximum(np.abs(yn), np.abs(y1))
    return float(np.sqrt(np.mean(((y1 - yh) / scale) ** 2)))


def propose_dt(err: float, dt: float, p: int, p_hat: int, cfg: StepControllerConfig,
               dt_max: float | None = None) -> float:
    """I-controller ``safety * dt * err^(-1/(min(p, p_hat)+1))`` with clamps."""
    if err < 0:
        raise ValueError("err must be nonnegative")
    if err == 0.0:
        ratio = cfg.growth_max
    elif not math.isfinite(err):
        ratio = cfg.shrink_min
    else:
        ratio = cfg.safety * err ** (-1.0 / (min(p, p_hat) + 1))
    ratio = min(max(ratio, cfg.shrink_min), cfg.growth_max)
    upper = dt_max if dt_max is not None else (cfg.dt_max if cfg.dt_max is not None else math.inf)
    return min(max(ratio * dt, cfg.dt_min), upper)


def integrate(system: PartitionedSystem, pair: ImexPair, y0, t0: float, tf: float,
              cfg: StepControllerConfig | None = None, mode: str = "adaptive",
              dt: float | None = None, output_times: Sequence[float] = (),
              on_step: Callable | None = None,
              history: list | None = None) -> IntegrationResult:
    """Integrate from ``t0`` to ``tf``.

    ``mode="fixed"`` takes uniform steps of ``dt`` (the last one truncated to
    land on ``tf``).  ``mode="adaptive"`` starts from ``dt`` or ``cfg.dt0``
    and accepts a step iff ``err <= 1``.  Requested ``output_times`` are hit
    exactly by shortening the step; the solution there is stored in
    ``snapshots``.  In adaptive mode a failed stage solve or non-finite
    state counts as a rejected attempt.  Pass ``history`` to collect step
    records in a caller-owned list (kept even if integration fails).
    """
    if not tf > t0:
        raise ValueError("tf must exceed t0")
    cfg = cfg or StepControllerConfig()
    dt_max = cfg.dt_max if cfg.dt_max is not None else tf - t0
    outs = sorted(t for t in output_times if t0 < t <= tf)
    y = np.array(y0, dtype=float, copy=True)
    t = t0
    history = [] if history is None else history
    snaps: dict = {}
    scale_t = max(abs(tf), abs(t0), 1e-300)

    def next_stop():
        for to in outs:
            if to > t + 1e-12 * scale_t:
                return to
        return tf

    if mode == "fixed":
        if dt is None or dt <= 0:
            raise ValueError("fixed mode requires dt > 0")
        n = max(1, int(round((tf - t0) / dt)))
        while t < tf - 1e-12 * scale_t:
            stop = next_stop()
            h = min(dt, stop - t)
            if abs((stop - t) - dt) <= 1e-9 * dt:
                h = stop - t
            res = step(system, pair, y, h)
            history.append(StepRecord(t, h, 0.0, True, 0,
                                      res.stats.get("ho_solves", 0), res.stats.get("lo_iters", 0)))
            y = res.y_next
            t = stop if abs(stop - (t + h)) <= 1e-9 * h else t + h
            if t == stop and stop in outs:
                snaps[stop] = y.copy()
            if on_step:
                on_step(t, y, history[-1])
            if len(history) > 100 * n:
                raise StepControlError("fixed-step loop did not terminate")
        return IntegrationResult(y, t, history, snaps)

    if mode != "adaptive":
        raise ValueError(f"unknown mode {mode!r}")
    h_next = dt if dt is not None else cfg.dt0
    p, p_hat = pair.p, pair.p_hat
    while t < tf - 1e-12 * scale_t:
        stop = next_stop()
        h = min(h_next, stop - t, dt_max)
        truncated = h < h_next
        if (stop - t) - h <= 1e-9 * h:
            h = stop - t
        rejects = 0
        while True:
            try:
                res = step(system, pair, y, h)
                err = error_norm(y, res.y_next, res.y_hat, cfg)
                stats = res.stats
            except (StageSolveError, NonFiniteStateError, FloatingPointError) as exc:
                log.debug("attempt at t=%g dt=%g failed: %s", t, h, exc)
                err, stats = math.inf, {}
            accepted = err <= 1.0
            history.append(StepRecord(t, h, err, accepted, rejects,
                                      stats.get("ho_solves", 0), stats.get("lo_iters", 0)))
            if accepted:
                break
            rejects += 1
            if rejects > cfg.max_rejects_per_step:
                raise StepControlError(
                    f"exceeded {cfg.max_rejects_per_step} rejects at t={t:.6e} (err={err:.3e})")
            if h <= cfg.dt_min * (1 + 1e-12):
                raise StepControlError(f"dt underflow at t={t:.6e}: dt={h:.3e}, err={err:.3e}")
            h = max(propose_dt(err, h, p, p_hat, cfg, dt_max), cfg.dt_min)
        y = res.y_next
        landed = abs(stop - (t + h)) <= 1e-12 * scale_t
        t = stop if landed else t + h
        if landed and stop in outs:
            snaps[stop] = y.copy()
        h_prop = propose_dt(err, h, p, p_hat, cfg, dt_max)
        # a step shortened to hit an output time should not shrink the next one
        h_next = max(h_prop, h_next) if truncated and landed else h_prop
        if on_step:
            on_step(t, y, history[-1])
    return IntegrationResult(y, t, history, snaps)


def write_history(path, history: Sequence[StepRecord], header_lines: Sequence[str] = ()):
    """CSV with columns ``t,dt,err,accepted,rejects,ho_solves,lo_iters``."""
    with open(path, "w", newline="") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        w = csv.writer(fh)
        w.writerow(["t", "dt", "err", "accepted", "rejects", "ho_solves", "lo_iters"])
        for r in history:
            w.writerow([repr(r.t), repr(r.dt), repr(r.err), int(r.accepted), r.rejects,
                        r.ho_solves, r.lo_iters])
