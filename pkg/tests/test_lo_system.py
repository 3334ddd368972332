import numpy as np
import pytest

from imextrt.integrator import integrate
from imextrt.oracle import fd_check
from imextrt.problems import make_equilibrium, make_gray_slab, make_larsen
from imextrt.tableaux import builtin_scheme
from imextrt.transport.constants import A_RAD
from imextrt.transport.grid import SlabMesh
from imextrt.transport.lo import LOFrozen, LOSystem
from imextrt.transport.system import TRTSystem


def frozen(K, rng, sigma=5.0):
    return LOFrozen(sigma_E=np.full(K, sigma) * (1 + 0.1 * rng.random(K)),
                    sigma_P=np.full(K, sigma) * (1 + 0.1 * rng.random(K)),
                    sigma_R_face=np.full(K + 1, sigma),
                    gamma=1e18 * rng.normal(size=K + 1),
                    E_face=A_RAD * np.array([1.0] + [0.0] * (K - 1) + [3.0**4]))


@pytest.mark.parametrize("reflect", [(False, False), (True, False), (True, True)])
def test_jacobian_matches_finite_differences(reflect):
    rng = np.random.default_rng(0)
    K = 6
    lo = LOSystem(SlabMesh.uniform(1.0, K), 1e12, [0.0, np.inf], *reflect)
    fr = frozen(K, rng)
    T = 1.0 + rng.random(K)
    x = np.concatenate([A_RAD * T**4 * (1 + 0.3 * rng.random(K)), 1e19 * rng.normal(size=K + 1), T])
    mu = 1e-11
    known = x * 0.9
    # residual rows mix magnitudes; a wide step keeps cancellation below 1e-6
    err = fd_check(lambda v: lo.residual(v, known, mu, fr), x, lo.jacobian(x, mu, fr),
                   rel_step=1e-2)
    assert err <= 1e-6


def test_jacobian_multigroup_phi():
    rng = np.random.default_rng(2)
    K = 4
    lo = LOSystem(SlabMesh.uniform(1.0, K), 1e12, [0.01, 1.0, 10.0, 100.0])
    fr = frozen(K, rng)
    T = 2.0 + rng.random(K)
    x = np.concatenate([A_RAD * T**4, 1e19 * rng.normal(size=K + 1), T])
    err = fd_check(lambda v: lo.residual(v, x, 1e-11, fr), x, lo.jacobian(x, 1e-11, fr),
                   rel_step=1e-2)
    assert err <= 1e-6


def test_solve_satisfies_residual():
    rng = np.random.default_rng(1)
    K = 10
    lo = LOSystem(SlabMesh.uniform(2.0, K), 1e11, [0.0, np.inf])
    fr = frozen(K, rng, sigma=50.0)
    T = np.full(K, 1.0)
    known = np.concatenate([A_RAD * (T * 3) ** 4, np.zeros(K + 1), T])
    sol = lo.solve(known, 1e-10, fr, T)
    x = np.concatenate([sol.E, sol.F, sol.T])
    r = lo.residual(x, known, 1e-10, fr)
    assert np.max(np.abs(r[:K]) / sol.E) < 1e-9
    assert np.max(np.abs(r[2 * K + 1:]) / sol.T) < 1e-9
    assert sol.T.min() > 1.0


def test_single_cell_conserves_energy():
    lo = LOSystem(SlabMesh.uniform(1.0, 1), 1e10, [0.0, np.inf], True, True)
    fr = LOFrozen(np.array([300.0]), np.array([300.0]), np.array([1.0, 1.0]),
                  np.zeros(2), np.zeros(2))
    E0, T0 = A_RAD * 10.0**4, 1.0
    sol = lo.solve(np.array([E0, 0.0, 0.0, T0]), 1e-9, fr, np.array([T0]))
    total0 = E0 + 1e10 * T0
    assert (sol.E[0] + 1e10 * sol.T[0]) == pytest.approx(total0, rel=1e-13)
    assert np.all(sol.F == 0.0)
    assert sol.T[0] > T0


@pytest.mark.parametrize("opacity,groups,form", [("gray", 1, "semi"), ("gray", 1, "imex"),
                                                 ("larsen", 8, "semi"), ("larsen", 8, "imex")])
def test_equilibrium_preserved(opacity, groups, form):
    s = TRTSystem(make_equilibrium(T0=2.0, groups=groups, opacity=opacity), form)
    y0 = s.initial_state()
    res = integrate(s, builtin_scheme("SSP-LDIRK2(3,3,2)"), y0, 0.0, 1e-10, mode="fixed", dt=1e-12)
    for key in ("I", "E", "T"):
        a, b = res.y[s.labels[key]], y0[s.labels[key]]
        assert np.max(np.abs(a - b)) <= 1e-10 * np.max(np.abs(b))
    assert np.max(np.abs(res.y[s.labels["F"]])) <= 1e-10 * A_RAD * 16 * s.c


@pytest.mark.parametrize("form", ["semi", "imex"])
def test_closed_gray_slab_conserves(form):
    prob = make_gray_slab(cells=16, sn=4).with_overrides(
        left=make_equilibrium().left, right=make_equilibrium().right)
    s = TRTSystem(prob, form, lo_tol=1e-10)
    y = s.initial_state()
    psi, E, F, T = s.unpack(y)
    T = T.copy()
    T[:4] = 200.0  # hot block inside reflecting walls
    y = s.pack(psi, E, F, T)
    e_prev = s.total_energy(y)
    pair = builtin_scheme("H-LDIRK2(2,2,2)")

    def check(t, yy, rec):
        nonlocal e_prev
        e = s.total_energy(yy)
        assert abs(e - e_prev) <= 10 * s.lo_tol * e_prev
        e_prev = e

    integrate(s, pair, y, 0.0, 2e-10, mode="fixed", dt=1e-11, on_step=check)


def test_semi_and_imex_eval_agree_at_equal_arguments():
    prob = make_larsen(cells=8, sn=4, groups=6)
    a, b = TRTSystem(prob, "semi"), TRTSystem(prob, "imex")
    y = a.initial_state()
    psi, E, F, T = a.unpack(y)
    T = T * np.linspace(1.0, 3.0, 8)
    y = a.pack(psi, E, F, T)
    assert np.array_equal(a.eval(T, y), b.eval(T, y))
    assert not np.allclose(a.eval(T * 1.1, y), b.eval(T * 1.1, y))


def test_nonpositive_temperature_is_stage_failure():
    from imextrt.integrator import StageSolveError

    s = TRTSystem(make_equilibrium())
    y = s.initial_state()
    with pytest.raises(StageSolveError):
        s.eval(-np.ones(s.K), y)


def test_mask_selection():
    s = TRTSystem(make_equilibrium(cells=3))
    assert len(s.mask("T")) == 3 and len(s.mask("Er")) == 3 and len(s.mask("both")) == 6
    with pytest.raises(ValueError):
        s.mask("F")
    with pytest.raises(ValueError):
        TRTSystem(make_equilibrium(), "explicit")


@pytest.mark.parametrize("form", ["semi", "imex"])
def test_eval_vanishes_at_equilibrium(form):
    s = TRTSystem(make_equilibrium(T0=5.0, groups=4, opacity="larsen"), form)
    y = s.initial_state()
    d = s.eval(y[s.labels["T"]], y)
    psi, E, F, T = s.unpack(d)
    scale = s.c * 10.0 * A_RAD * 5.0**4
    assert np.max(np.abs(E)) <= 1e-12 * scale
    assert np.max(np.abs(T)) <= 1e-12 * scale / 1e12


def test_semi_stage_consistency_decreases():
    s = TRTSystem(make_larsen(cells=16, sn=4, groups=8), "semi", holo_tol=1e-12)
    y = s.initial_state()
    s.solve_stage(y, 1e-13 * 0.29, y[s.labels["T"]])
    hist = s.last_report.consistency
    assert hist[-1] <= 1e-12 or len(hist) > 1
    assert all(b <= a for a, b in zip(hist, hist[1:]))


def test_imex_stage_is_one_sweep():
    s = TRTSystem(make_larsen(cells=16, sn=4, groups=8), "imex")
    y = s.initial_state()
    _, stats = s.solve_stage(y, 1e-12, y[s.labels["T"]])
    assert stats["ho_solves"] == 1 and s.last_report.sweeps == 1
