import math

import numpy as np
import pytest

from imextrt.integrator import (
    FunctionSystem,
    StageSolveError,
    StepControlError,
    StepControllerConfig,
    error_norm,
    integrate,
    propose_dt,
    step,
    write_history,
)
from imextrt.tableaux import SCHEME_NAMES, builtin_scheme


def linear(lam=-1.0):
    return FunctionSystem(lambda ys, y: lam * y, 1, jac=lambda ys, y: np.array([[lam]]))


@pytest.mark.parametrize("name", SCHEME_NAMES)
def test_linear_step_matches_stability_function(name):
    from imextrt.stability import stability_function

    p = builtin_scheme(name)
    r = step(linear(-3.0), p, np.array([1.0]), 0.5)
    assert r.y_next[0] == pytest.approx(stability_function(p, 0.0, -1.5).real, rel=1e-12)


def test_explicit_part_uses_projection():
    # y' = -y* with only y* nonzero explicit: the explicit copy feeds stage 2
    sys = FunctionSystem(lambda ys, y: -ys, 1, jac=lambda ys, y: np.zeros((1, 1)))
    p = builtin_scheme("H-LDIRK2(2,2,2)")
    r = step(sys, p, np.array([1.0]), 0.1)
    # explicit part is forward Euler then trapezoid (Heun): 1 - h + h^2/2
    assert r.y_next[0] == pytest.approx(1 - 0.1 + 0.005, rel=1e-13)


def test_fixed_mode_hits_tf_and_outputs():
    res = integrate(linear(), builtin_scheme("SSP-LDIRK2(3,3,2)"), [1.0], 0.0, 1.0,
                    mode="fixed", dt=0.3, output_times=[0.5])
    assert res.t == pytest.approx(1.0)
    assert 0.5 in res.snapshots
    assert res.y[0] == pytest.approx(math.exp(-1), rel=1e-2)


def test_adaptive_meets_tolerance():
    cfg = StepControllerConfig(atol=1e-8, rtol=1e-8, dt0=1e-3)
    res = integrate(linear(-2.0), builtin_scheme("SSP-LDIRK3(3,3,2)"), [1.0], 0.0, 2.0, cfg)
    assert res.t == pytest.approx(2.0)
    assert all(r.err <= 1.0 for r in res.accepted())
    assert abs(res.y[0] - math.exp(-4)) < 1e-5


def test_error_norm_mask_and_weights():
    cfg = StepControllerConfig(atol=1.0, rtol=1e-300, error_mask=np.array([1]))
    assert error_norm(np.zeros(2), np.array([5.0, 2.0]), np.array([0.0, 0.0]), cfg) == 2.0
    with pytest.raises(ValueError):
        error_norm(np.zeros(2), np.zeros(2), np.zeros(2),
                   StepControllerConfig(error_mask=np.array([], dtype=int)))


def test_propose_dt_clamps():
    cfg = StepControllerConfig(dt_max=10.0)
    assert propose_dt(0.0, 1.0, 2, 1, cfg) == 5.0
    assert propose_dt(math.inf, 1.0, 2, 1, cfg) == 0.1
    assert propose_dt(1.0, 1.0, 2, 1, cfg) == pytest.approx(0.9)
    assert propose_dt(1e-12, 4.0, 2, 1, cfg) == 10.0


def test_failed_stage_counts_as_reject():
    calls = {"n": 0}

    class Flaky(FunctionSystem):
        def solve_stage(self, known, mu, y_star):
            calls["n"] += 1
            if mu > 0.05:
                raise StageSolveError("too large")
            return super().solve_stage(known, mu, y_star)

    sys = Flaky(lambda ys, y: -y, 1, jac=lambda ys, y: -np.eye(1))
    cfg = StepControllerConfig(atol=1e-3, rtol=1e-3, dt0=1.0)
    res = integrate(sys, builtin_scheme("H-LDIRK2(2,2,2)"), [1.0], 0.0, 0.2, cfg)
    assert any(not r.accepted for r in res.history)
    assert res.t == pytest.approx(0.2)


def test_step_control_gives_up():
    sys = FunctionSystem(lambda ys, y: -y, 1)
    cfg = StepControllerConfig(atol=1e-30, rtol=1e-30, dt0=1e-3, dt_min=1e-6,
                               max_rejects_per_step=3)
    with pytest.raises(StepControlError):
        integrate(sys, builtin_scheme("H-LDIRK2(2,2,2)"), [1.0], 0.0, 1.0, cfg)


def test_history_csv(tmp_path):
    res = integrate(linear(), builtin_scheme("H-LDIRK2(2,2,2)"), [1.0], 0.0, 0.2,
                    mode="fixed", dt=0.1)
    path = tmp_path / "h.csv"
    write_history(path, res.history, ["digest abc"])
    lines = path.read_text().splitlines()
    assert lines[0] == "# digest abc"
    assert lines[1].startswith("t,dt,err")
    assert len(lines) == 4


def test_invalid_arguments():
    p = builtin_scheme("H-LDIRK2(2,2,2)")
    with pytest.raises(ValueError):
        integrate(linear(), p, [1.0], 1.0, 0.0)
    with pytest.raises(ValueError):
        integrate(linear(), p, [1.0], 0.0, 1.0, mode="fixed")
    with pytest.raises(ValueError):
        StepControllerConfig(atol=0.0)
