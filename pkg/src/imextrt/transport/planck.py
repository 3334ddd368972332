"""Group-integrated Planck functions.

With ``x = h nu / T`` the frequency integral of the Planckian over a group is

    B_g(T) = (a c / 4 pi) T^4 (15 / pi^4) [P(x_hi) - P(x_lo)],
    P(x)  = int_0^x t^3 / (e^t - 1) dt.

``P`` is summed from its Bernoulli power series for ``x <= 2`` and from the
complementary tail ``pi^4/15 - P(x) = sum_n e^{-nx} (x^3/n + 3x^2/n^2 +
6x/n^3 + 6/n^4)`` above.  Differences of two large arguments are taken from
the tails so that Wien-limit groups keep full relative precision.
"""

from __future__ import annotations

import math

import numba
import numpy as np
from scipy.special import bernoulli

from .constants import A_RAD, C_LIGHT

__all__ = [
    "P_INF",
    "planck_lower",
    "planck_upper",
    "planck_fraction",
    "planck_group",
    "planck_group_dT",
    "planck_total",
]

P_INF = math.pi**4 / 15.0
_SPLIT = 2.0
_NTAIL = 24

_B = bernoulli(40)
_SERIES = [(k, _B[k] / (math.factorial(k) * (k + 3))) for k in range(41) if _B[k] != 0.0]


_COEF = np.array([c for _, c in _SERIES])
_POW = np.array([k + 3 for k, _ in _SERIES], dtype=np.int64)


@numba.njit(cache=True)
def _lower_scalar(x):
    acc = 0.0
    for i in range(_COEF.size):
        acc += _COEF[i] * x ** _POW[i]
    return acc


@numba.njit(cache=True)
def _upper_scalar(x):
    if not np.isfinite(x):
        return 0.0
    x2 = x * x
    x3 = x2 * x
    acc = 0.0
    for n in range(1, _NTAIL + 1):
        e = np.exp(-n * x)
        term = e * (x3 / n + 3 * x2 / n**2 + 6 * x / n**3 + 6 / n**4)
        acc += term
        if term <= 1e-17 * acc:
            break
    return acc


@numba.njit(cache=True)
def _p_tail(x, P, tail):
    for i in range(x.size):
        xi = x[i]
        if xi <= _SPLIT:
            lo = _lower_scalar(xi)
            P[i] = lo
            tail[i] = P_INF - lo
        else:
            hi = _upper_scalar(xi)
            P[i] = P_INF - hi
            tail[i] = hi


def planck_lower(x):
    """``P(x)`` for ``0 <= x <= 2`` by the Bernoulli series (relative 1e-14)."""
    x = np.asarray(x, dtype=float)
    flat = np.ascontiguousarray(x).ravel()
    return np.array([_lower_scalar(v) for v in flat]).reshape(x.shape)


def planck_upper(x):
    """Tail ``pi^4/15 - P(x)`` for ``x >= 2``; returns 0 at ``x = inf``."""
    x = np.asarray(x, dtype=float)
    flat = np.ascontiguousarray(x).ravel()
    return np.array([_upper_scalar(v) for v in flat]).reshape(x.shape)


def _P_and_tail(x):
    x = np.asarray(x, dtype=float)
    flat = np.ascontiguousarray(x).ravel()
    P = np.empty_like(flat)
    tail = np.empty_like(flat)
    _p_tail(flat, P, tail)
    return P.reshape(x.shape), tail.reshape(x.shape)


def planck_fraction(x_lo, x_hi):
    """``(15/pi^4) int_{x_lo}^{x_hi} t^3/(e^t-1) dt`` with cancellation-safe branches."""
    P_lo, tail_lo = _P_and_tail(x_lo)
    P_hi, tail_hi = _P_and_tail(x_hi)
    both_large = np.asarray(x_lo) > _SPLIT
    diff = np.where(both_large, tail_lo - tail_hi, P_hi - P_lo)
    return diff / P_INF


def _x_edges(T, edges):
    T = np.asarray(T, dtype=float)
    if np.any(T <= 0):
        raise ValueError("temperature must be positive")
    e = np.asarray(edges, dtype=float)
    with np.errstate(divide="ignore"):
        x = e[None, :] / T.reshape(-1, 1)
    return T, x


def planck_total(T):
    """``a c T^4 / 4 pi``: the all-frequency Planck integral per steradian."""
    T = np.asarray(T, dtype=float)
    return A_RAD * C_LIGHT * T**4 / (4.0 * np.pi)


def planck_group(T, edges):
    """Group Planck integrals ``B_g(T)`` [erg cm^-2 s^-1 sr^-1], shape ``T.shape + (G,)``.

    ``edges`` are photon energies in eV; use ``0`` and ``inf`` for open
    outer groups.
    """
    T0 = np.asarray(T, dtype=float)
    if np.any(T0 <= 0):
        raise ValueError("temperature must be positive")
    Tf, x = _x_edges(T0, edges)
    frac = planck_fraction(x[:, :-1], x[:, 1:])
    out = planck_total(Tf.reshape(-1, 1)) * frac
    return out.reshape(T0.shape + (len(edges) - 1,))


def _xfun(x):
    # x^4 / (e^x - 1): zero at 0 and at infinity
    x = np.asarray(x, dtype=float)
    fin = np.isfinite(x) & (x > 0)
    xf = np.where(fin, x, 1.0)
    with np.errstate(over="ignore", under="ignore"):
        val = xf**4 / np.expm1(xf)
    return np.where(fin, val, 0.0)


def planck_group_dT(T, edges):
    """Analytic ``dB_g/dT`` with the same shape convention as :func:`planck_group`."""
    T0 = np.asarray(T, dtype=float)
    Tf, x = _x_edges(T0, edges)
    frac = planck_fraction(x[:, :-1], x[:, 1:])
    dfx = (_xfun(x[:, 1:]) - _xfun(x[:, :-1])) / P_INF
    pref = A_RAD * C_LIGHT / (4.0 * np.pi) * Tf.reshape(-1, 1) ** 3
    out = pref * (4.0 * frac - dfx)
    return out.reshape(T0.shape + (len(edges) - 1,))
