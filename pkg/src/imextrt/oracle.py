"""Independent checks: reference solutions, observed orders, derivative and
local-error verification.

The local-error validator builds its expected coefficients symbolically with
sympy from a small analytic two-component system.  The integrator is only
exercised as a black box, one step at a time.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import sympy

from .integrator import FunctionSystem, integrate, step
from .tableaux import ImexPair, builtin_scheme, residuals

__all__ = [
    "REFERENCE_SCHEME",
    "reference_solve",
    "observed_order",
    "relative_errors",
    "fd_check",
    "LocalErrorSystem",
    "LocalErrorReport",
    "default_local_error_system",
    "local_error_validator",
]

REFERENCE_SCHEME = "SSP-LDIRK3(3,3,2)"


def reference_solve(system, y0, t0: float, tf: float, dt_ref: float,
                    scheme: str = REFERENCE_SCHEME, on_step=None) -> np.ndarray:
    """Fixed-step solution with the reference scheme."""
    n = (tf - t0) / dt_ref
    if abs(n - round(n)) > 1e-6 * max(1.0, n):
        raise ValueError("dt_ref must divide the interval")
    res = integrate(system, builtin_scheme(scheme), y0, t0, tf, mode="fixed", dt=dt_ref,
                    on_step=on_step)
    return res.y


def observed_order(errors, dts) -> np.ndarray:
    """Pairwise rates ``log(e[i-1]/e[i]) / log(dt[i-1]/dt[i])``."""
    e = np.asarray(errors, dtype=float)
    h = np.asarray(dts, dtype=float)
    if e.shape != h.shape or e.size < 2:
        raise ValueError("need matching sequences of length >= 2")
    if np.any(e <= 0):
        raise ValueError("errors must be positive")
    if np.any(np.diff(h) >= 0):
        raise ValueError("dts must be strictly decreasing")
    return np.log(e[:-1] / e[1:]) / np.log(h[:-1] / h[1:])


def relative_errors(x, ref) -> dict:
    """Relative discrete L1, L2 and Linf errors (uniform weights)."""
    d = np.abs(np.asarray(x) - np.asarray(ref))
    r = np.abs(np.asarray(ref))
    return {
        "L1": float(d.sum() / r.sum()),
        "L2": float(np.sqrt((d * d).sum() / (r * r).sum())),
        "Linf": float(d.max() / r.max()),
    }


def fd_check(fun, x0, analytic, rel_step: float = 1e-4, floor: float = 1e-300) -> float:
    """Worst relative mismatch between ``analytic`` and a Richardson-corrected
    central difference of ``fun`` at ``x0``.

    ``analytic`` is the Jacobian (dense or sparse) or directional derivative
    matrix, shape ``(len(fun(x0)), len(x0))``.  Scalars are treated as 1-vectors.
    """
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    J = analytic.toarray() if hasattr(analytic, "toarray") else np.asarray(analytic, dtype=float)
    f0 = np.atleast_1d(fun(x0))
    J = J.reshape(f0.size, x0.size)
    num = np.empty_like(J)
    for k in range(x0.size):
        h = rel_step * max(abs(x0[k]), 1e-8)
        e = np.zeros_like(x0)

        def cd(hh):
            e[k] = hh
            out = (np.atleast_1d(fun(x0 + e)) - np.atleast_1d(fun(x0 - e))) / (2 * hh)
            e[k] = 0.0
            return out

        d1, d2 = cd(h), cd(h / 2)
        num[:, k] = (4 * d2 - d1) / 3
    scale = np.maximum(np.abs(J), np.abs(num))
    # entries of negligible size relative to their row are compared absolutely
    row = np.maximum(scale.max(axis=1, keepdims=True), floor)
    denom = np.maximum(scale, 1e-8 * row)
    return float(np.max(np.abs(J - num) / denom))


# ---------------------------------------------------------------------------
# local error expansion


@dataclass
class LocalErrorSystem:
    """Analytic right-hand side ``N(y*, y)`` on R^2 with sympy expressions."""

    ys: tuple
    y: tuple
    expr: sympy.Matrix
    y0: np.ndarray

    def __post_init__(self):
        args = list(self.ys) + list(self.y)
        self._f = sympy.lambdify(args, list(self.expr), "numpy")
        self._jy = sympy.lambdify(args, self.expr.jacobian(sympy.Matrix(self.y)), "numpy")

    def rhs(self, ys, y):
        return np.array(self._f(*ys, *y), dtype=float)

    def jac(self, ys, y):
        return np.array(self._jy(*ys, *y), dtype=float)

    def function_system(self) -> FunctionSystem:
        return FunctionSystem(self.rhs, 2, jac=self.jac, tol=1e-15)

    def elementary_differentials(self) -> dict:
        """Vectors multiplying each residual in the h^2 and h^3 error terms.

        With ``D1`` the derivative in the implicit argument and ``D2`` in the
        explicit one, evaluated at ``(y0, y0)``.
        """
        ys, y = sympy.Matrix(self.ys), sympy.Matrix(self.y)
        N = self.expr
        D1 = N.jacobian(y)
        D2 = N.jacobian(ys)
        sub = {s: v for s, v in zip(list(self.ys) + list(self.y),
                                    list(self.y0) + list(self.y0))}

        def ev(m):
            return np.array(m.subs(sub).evalf(30), dtype=float).ravel()

        N0 = N.subs(sub)
        D1_0, D2_0 = D1.subs(sub), D2.subs(sub)

        def hess(vars_a, vars_b, u, v):
            # second derivative of N in (vars_a, vars_b) applied to vectors u, v
            out = sympy.zeros(2, 1)
            for i in range(2):
                for a in range(2):
                    for b in range(2):
                        out[i] += sympy.diff(N[i], vars_a[a], vars_b[b]) * u[a] * v[b]
            return out.subs(sub)

        yv, ysv = list(self.y), list(self.ys)
        return {
            "tau1_2": ev(D1_0 * N0),
            "tau2_2": ev(D2_0 * N0),
            "tau1_3": ev(D1_0 * D1_0 * N0),
            "tau2_3": ev(D1_0 * D2_0 * N0),
            "tau3_3": ev(D2_0 * D1_0 * N0),
            "tau4_3": ev(D2_0 * D2_0 * N0),
            "tau5_3": ev(hess(yv, yv, N0, N0)),
            "tau6_3": ev(hess(yv, ysv, N0, N0)),
            "tau7_3": ev(hess(ysv, ysv, N0, N0)),
        }


def default_local_error_system() -> LocalErrorSystem:
    a, b, c, d = sympy.symbols("a b c d")  # (y*_1, y*_2, y_1, y_2)
    expr = sympy.Matrix([
        -c * (1 + a * a) + sympy.sin(b) * d,
        a * c - d * (1 + sympy.Rational(1, 2) * b) + sympy.cos(a) * b * d,
    ])
    return LocalErrorSystem((a, b), (c, d), expr, np.array([0.7, -0.4]))


@dataclass
class LocalErrorReport:
    scheme: str
    weights: str
    c2_measured: np.ndarray
    c2_expected: np.ndarray
    c3_measured: np.ndarray
    c3_expected: np.ndarray
    rel_err2: float
    rel_err3: float
    scale2: float

    @property
    def ok(self) -> bool:
        return self.rel_err3 <= 0.01 and self.rel_err2 <= 0.01


def _exact_flow(sys: LocalErrorSystem, h: float) -> np.ndarray:
    from scipy.integrate import solve_ivp

    sol = solve_ivp(lambda t, u: sys.rhs(u, u), (0.0, h), sys.y0, method="DOP853",
                    rtol=3e-14, atol=1e-16)
    return sol.y[:, -1]


def local_error_validator(pair: ImexPair, system: LocalErrorSystem | None = None,
                          h0: float = 0.04, levels: int = 4) -> list[LocalErrorReport]:
    """Compare one-step error coefficients with the residual expansion.

    The one-step defect ``y(h) - y_1 = C2 h^2 + C3 h^3 + C4 h^4 + ...`` is
    sampled at ``h0 / 2^k``; ``C2`` and ``C3`` are extracted by a
    Richardson-style polynomial fit and compared against
    ``sum_i tau_i^(j) (elementary differential)_i``.
    """
    sys = system or default_local_error_system()
    ed = sys.elementary_differentials()
    r = residuals(pair)
    hs = h0 / 2.0 ** np.arange(levels)
    exact = [_exact_flow(sys, h) for h in hs]
    fs = sys.function_system()
    reports = []
    for label, t2, t3 in (("primary", r.tau2, r.tau3), ("embedded", r.tau2_hat, r.tau3_hat)):
        defects = []
        for h, ye in zip(hs, exact):
            res = step(fs, pair, sys.y0, h)
            y1 = res.y_next if label == "primary" else res.y_hat
            defects.append(ye - y1)
        D = np.array(defects)
        # fit D(h) = C2 h^2 + C3 h^3 + C4 h^4 + C5 h^5 exactly through the samples
        V = np.vander(hs, levels + 2, increasing=True)[:, 2:]
        coef = np.linalg.solve(V, D)
        c2, c3 = coef[0], coef[1]
        e2 = t2[0] * ed["tau1_2"] + t2[1] * ed["tau2_2"]
        e3 = sum(t3[i] * ed[f"tau{i + 1}_3"] for i in range(7))
        scale2 = max(np.linalg.norm(e2), np.linalg.norm(e3))
        rel2 = np.linalg.norm(c2 - e2) / (np.linalg.norm(e2) if np.linalg.norm(e2) > 1e-14
                                          else scale2)
        rel3 = np.linalg.norm(c3 - e3) / np.linalg.norm(e3)
        reports.append(LocalErrorReport(pair.name, label, c2, e2, c3, e3, float(rel2),
                                        float(rel3), float(scale2)))
    return reports
