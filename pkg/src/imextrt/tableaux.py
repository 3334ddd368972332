"""Shared-weight IMEX Butcher tableau pairs with embedded weights.

A pair couples an explicit tableau (``A_explicit``, ``c_explicit``) with a
diagonally implicit one (``A_implicit``, ``c_implicit``).  Both use the same
weights ``b`` and the same embedded weights ``b_hat``.

Order-condition residuals follow the semi-implicit local error expansion up
to third order.  In the residual names below, index 1 refers to derivatives
with respect to the implicit argument (paired with ``c``, ``A``) and index 2
to the explicit argument (paired with ``c_explicit``, ``A_explicit``).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

__all__ = [
    "ImexPair",
    "ResidualSet",
    "QualityReport",
    "SCHEME_NAMES",
    "builtin_scheme",
    "residuals",
    "quality",
    "validate",
]

ORDER_TOL = 1e-12


def _frozen(x) -> np.ndarray:
    arr = np.array(x, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class ImexPair:
    """Explicit/implicit tableau pair sharing ``b`` and ``b_hat``.

    Abscissae default to the row sums of the corresponding matrix when not
    given explicitly.
    """

    name: str
    A_implicit: np.ndarray
    A_explicit: np.ndarray
    b: np.ndarray
    b_hat: np.ndarray
    c_implicit: np.ndarray | None = None
    c_explicit: np.ndarray | None = None
    p: int = 2
    p_hat: int = 1
    s: int = field(init=False)

    def __post_init__(self):
        A = _frozen(self.A_implicit)
        At = _frozen(self.A_explicit)
        object.__setattr__(self, "A_implicit", A)
        object.__setattr__(self, "A_explicit", At)
        object.__setattr__(self, "b", _frozen(self.b))
        object.__setattr__(self, "b_hat", _frozen(self.b_hat))
        c = A.sum(axis=1) if self.c_implicit is None else self.c_implicit
        ct = At.sum(axis=1) if self.c_explicit is None else self.c_explicit
        object.__setattr__(self, "c_implicit", _frozen(c))
        object.__setattr__(self, "c_explicit", _frozen(ct))
        object.__setattr__(self, "s", len(self.b))

    def with_weights(self, b_hat=None, b=None, name=None) -> "ImexPair":
        """Return a copy with replaced primary and/or embedded weights."""
        return replace(
            self,
            b=self.b if b is None else b,
            b_hat=self.b_hat if b_hat is None else b_hat,
            name=self.name if name is None else name,
        )

    def embedded_method(self) -> "ImexPair":
        """The pair that propagates the embedded solution (``b`` := ``b_hat``)."""
        return replace(self, b=self.b_hat, name=f"{self.name}-embedded",
                       p=self.p_hat)


@dataclass(frozen=True)
class ResidualSet:
    tau1: np.ndarray
    tau2: np.ndarray
    tau3: np.ndarray
    tau1_hat: np.ndarray
    tau2_hat: np.ndarray
    tau3_hat: np.ndarray


@dataclass(frozen=True)
class QualityReport:
    """Principal error norms and embedding-quality ratios.

    ``A3``, ``A2_hat`` and ``A3_hat`` are norms over both outputs of the
    duplicated (y*, y) system, so each shared-weight residual enters twice.
    The ratios are unaffected by that convention.
    """

    A3: float
    A2_hat: float
    A3_hat: float
    B3: float
    C3: float
    E3: float
    B3_I: float
    C3_I: float
    E3_I: float
    B3_E: float
    C3_E: float
    E3_E: float

    def objective_vector(self) -> np.ndarray:
        return np.array([self.B3, self.C3, self.E3,
                         self.B3_I, self.C3_I, self.E3_I,
                         self.B3_E, self.C3_E, self.E3_E])


def _imex_residuals(w, A, At, c, ct):
    e = np.ones_like(w)
    t1 = np.array([1.0 - w @ e])
    t2 = np.array([0.5 - w @ c, 0.5 - w @ ct])
    t3 = np.array([
        1 / 6 - w @ A @ c,
        1 / 6 - w @ A @ ct,
        1 / 6 - w @ At @ c,
        1 / 6 - w @ At @ ct,
        1 / 6 - 0.5 * w @ (c * c),
        1 / 3 - w @ (c * ct),
        1 / 6 - 0.5 * w @ (ct * ct),
    ])
    return t1, t2, t3


def _classical_residuals(w, A, c):
    # single-tableau analog: trees of order <= 3
    t2 = np.array([0.5 - w @ c])
    t3 = np.array([1 / 6 - w @ A @ c, 1 / 6 - 0.5 * w @ (c * c)])
    return t2, t3


def residuals(pair: ImexPair) -> ResidualSet:
    """All order <= 3 residuals for the primary and embedded weights."""
    args = (pair.A_implicit, pair.A_explicit, pair.c_implicit, pair.c_explicit)
    t1, t2, t3 = _imex_residuals(pair.b, *args)
    h1, h2, h3 = _imex_residuals(pair.b_hat, *args)
    return ResidualSet(t1, t2, t3, h1, h2, h3)


def _measures(t3, h2, h3, copies=1):
    # ``copies`` counts identical output components: the duplicated (y*, y)
    # system carries every residual twice because both outputs use ``b``.
    k = np.sqrt(copies)
    a2_hat = k * np.linalg.norm(h2)
    if a2_hat == 0.0:
        raise ZeroDivisionError(
            "embedded second-order residuals vanish; embedding is not first order")
    a3 = k * np.linalg.norm(t3)
    a3_hat = k * np.linalg.norm(h3)
    c3 = k * np.linalg.norm(h3 - t3) / a2_hat
    return a3, a2_hat, a3_hat, a3_hat / a2_hat, c3, a3 / a2_hat


def quality(pair: ImexPair) -> QualityReport:
    """Principal error norms and embedding-quality ratios.

    Raises ``ZeroDivisionError`` if the embedding has no second-order error.
    """
    r = residuals(pair)
    a3, a2h, a3h, B, C, E = _measures(r.tau3, r.tau2_hat, r.tau3_hat, copies=2)
    sub = {}
    for tag, A, c in (("I", pair.A_implicit, pair.c_implicit),
                      ("E", pair.A_explicit, pair.c_explicit)):
        _, t3 = _classical_residuals(pair.b, A, c)
        h2, h3 = _classical_residuals(pair.b_hat, A, c)
        _, _, _, sub[f"B3_{tag}"], sub[f"C3_{tag}"], sub[f"E3_{tag}"] = _measures(t3, h2, h3)
    return QualityReport(A3=a3, A2_hat=a2h, A3_hat=a3h, B3=B, C3=C, E3=E, **sub)


def validate(pair: ImexPair, tol: float = ORDER_TOL) -> list[str]:
    """Structural and second-order diagnostics; an empty list means valid."""
    out = []
    A, At = pair.A_implicit, pair.A_explicit
    s = len(pair.b)
    for label, M in (("A_implicit", A), ("A_explicit", At)):
        if M.shape != (s, s):
            out.append(f"{label} has shape {M.shape}, expected {(s, s)}")
    if out:
        return out
    if np.any(np.triu(A, 1) != 0.0):
        out.append("A_implicit is not lower-triangular")
    if np.any(np.triu(At, 0) != 0.0):
        out.append("A_explicit is not strictly lower-triangular")
    if len(pair.b_hat) != s:
        out.append("b_hat length differs from b")
        return out
    if not np.allclose(pair.c_implicit, A.sum(axis=1), atol=tol, rtol=0):
        out.append("c_implicit differs from row sums of A_implicit")
    if not np.allclose(pair.c_explicit, At.sum(axis=1), atol=tol, rtol=0):
        out.append("c_explicit differs from row sums of A_explicit")
    r = residuals(pair)
    if abs(r.tau1[0]) > tol:
        out.append(f"tau1^(1) != 0 (sum(b) - 1 = {-r.tau1[0]:.3e})")
    if abs(r.tau1_hat[0]) > tol:
        out.append(f"tau1_hat^(1) != 0 (sum(b_hat) - 1 = {-r.tau1_hat[0]:.3e})")
    for i, t in enumerate(r.tau2, start=1):
        if abs(t) > tol:
            out.append(f"tau{i}^(2) != 0 ({t:.3e}); primary is not second order")
    return out


def _h_ldirk2():
    g = 1.0 - 1.0 / np.sqrt(2.0)
    return ImexPair(
        name="H-LDIRK2(2,2,2)",
        A_explicit=[[0.0, 0.0], [1.0, 0.0]],
        A_implicit=[[g, 0.0], [1.0 - 2.0 * g, g]],
        b=[0.5, 0.5],
        b_hat=[3 / 10, 7 / 10],
    )


def _ssp_ldirk2():
    return ImexPair(
        name="SSP-LDIRK2(3,3,2)",
        A_explicit=[[0, 0, 0], [0.5, 0, 0], [0.5, 0.5, 0]],
        A_implicit=[[0.25, 0, 0], [0, 0.25, 0], [1 / 3, 1 / 3, 1 / 3]],
        b=[1 / 3, 1 / 3, 1 / 3],
        b_hat=[7 / 41, 13 / 33, 589 / 1353],
    )


def _ssp_ldirk3():
    g = 1.0 - 1.0 / np.sqrt(2.0)
    return ImexPair(
        name="SSP-LDIRK3(3,3,2)",
        A_explicit=[[0, 0, 0], [1.0, 0, 0], [0.25, 0.25, 0]],
        A_implicit=[[g, 0, 0], [1 - 2 * g, g, 0], [0.5 - g, 0, g]],
        b=[1 / 6, 1 / 6, 2 / 3],
        b_hat=[-2 / 17, 2 / 13, 213 / 221],
    )


def _imex_nprk2_42b():
    r2 = np.sqrt(2.0)
    g = 1.0 - 1.0 / r2
    return ImexPair(
        name="IMEX-NPRK2[42]b",
        A_explicit=[[0.0, 0.0], [(26 + 3 * r2) / 42, 0.0]],
        A_implicit=[[g, 0.0], [(-20 + 23 * r2) / 42, g]],
        b=[(16 + 9 * r2) / 94, (78 - 9 * r2) / 94],
        b_hat=[1 / 15, 14 / 15],
    )


_BUILDERS = {
    "H-LDIRK2(2,2,2)": _h_ldirk2,
    "SSP-LDIRK2(3,3,2)": _ssp_ldirk2,
    "SSP-LDIRK3(3,3,2)": _ssp_ldirk3,
    "IMEX-NPRK2[42]b": _imex_nprk2_42b,
}
SCHEME_NAMES = tuple(_BUILDERS)


def builtin_scheme(name: str) -> ImexPair:
    """Return one of the four built-in embedded pairs by name.

    Matching ignores case.  Unknown names raise ``KeyError`` listing the
    valid identifiers.
    """
    for key, build in _BUILDERS.items():
        if key.lower() == name.strip().lower():
            return build()
    raise KeyError(f"unknown scheme {name!r}; valid names: {', '.join(SCHEME_NAMES)}")
