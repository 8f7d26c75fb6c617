import numpy as np
import pytest

from tacempc.errors import ConfigError, InfeasibleError
from tacempc.history import HistoryState, constant_history, eq6_rhs
from tacempc.ocp import (
    ORIGINAL,
    ROTATED,
    OcpSpec,
    constraint_residuals,
    open_loop_cost,
    rotated_identity_check,
    solve,
)


def _spec(builtin, N, T, x0, H0=None, **kw):
    model, cert, ss = builtin
    if H0 is None:
        h0 = np.atleast_1d(model.h(np.atleast_1d(x0), np.array([1.0])))
        H0 = constant_history(h0, T)
    return OcpSpec(model=model, cert=cert, ss=ss, N=N, T=T,
                   x0=np.atleast_1d(float(x0)), H0=H0, **kw)


def test_spec_validation(builtin):
    model, cert, ss = builtin
    H = constant_history([-2.0], 3)
    with pytest.raises(ConfigError):
        _spec(builtin, N=2, T=3, x0=1.0, H0=H)  # N < T
    with pytest.raises(ConfigError):
        OcpSpec(model=model, cert=cert, ss=ss, N=6, T=3,
                x0=np.array([1.0, 2.0]), H0=H)  # wrong dimension
    with pytest.raises(ConfigError):
        _spec(builtin, N=6, T=3, x0=12.0, H0=H)  # outside the box
    with pytest.raises(ConfigError):
        _spec(builtin, N=6, T=2, x0=1.0, H0=H)  # history period mismatch
    with pytest.raises(ConfigError):
        _spec(builtin, N=6, T=3, x0=1.0, H0=H, objective="economic")


def test_constraint_residual_layout(builtin):
    spec = _spec(builtin, N=6, T=3, x0=1.0)
    u = np.ones((6, 1))
    res = spec.model.n + spec.model.m  # rows per pointwise block
    g = constraint_residuals(spec, u)
    # 2 * N * (n + m) pointwise rows, T - 1 partial windows, N - T + 1 full
    assert g.shape == (2 * 6 * res + 2 + 4,)


def test_solution_feasible_and_stationary(builtin):
    sol = solve(_spec(builtin, N=10, T=3, x0=1.0))
    assert sol.converged
    assert sol.max_violation <= 1e-8
    assert sol.stationarity <= 1e-6
    g = constraint_residuals(sol.spec, sol.u)
    assert np.max(g) <= 1e-8


def test_benchmark_objectives(builtin, fig_history):
    assert solve(_spec(builtin, N=10, T=3, x0=1.0)).J == pytest.approx(
        24.76934015, rel=1e-6
    )
    assert solve(_spec(builtin, N=12, T=3, x0=1.0)).J == pytest.approx(
        28.85645866, rel=1e-6
    )
    assert solve(_spec(builtin, N=12, T=6, x0=2.0, H0=fig_history)).J == pytest.approx(
        22.69666243, rel=1e-6
    )


def test_rotated_objective_nonnegative_and_zero_at_steady(builtin):
    model, cert, ss = builtin
    H = HistoryState(ss.steady_history(6), T=6)
    sol = solve(OcpSpec(model=model, cert=cert, ss=ss, N=12, T=6,
                        x0=ss.x_s, H0=H, objective=ROTATED))
    assert sol.J == pytest.approx(0.0, abs=1e-8)
    np.testing.assert_allclose(sol.u, np.tile(ss.u_s, (12, 1)), atol=1e-6)

    sol2 = solve(_spec(builtin, N=10, T=3, x0=1.0, objective=ROTATED))
    assert sol2.J >= -1e-9


def test_rotated_identity_on_random_inputs(builtin):
    spec = _spec(builtin, N=8, T=2, x0=2.0,
                 H0=constant_history([0.0], 2))
    rng = np.random.default_rng(11)
    for _ in range(20):
        u = rng.uniform(0.9, 1.0, (8, 1))
        assert rotated_identity_check(spec, u) <= 1e-10


def test_eq6_bound_on_solutions(builtin, fig_history):
    for N, T, H0 in [(10, 3, None), (12, 6, fig_history)]:
        sol = solve(_spec(builtin, N=N, T=T, x0=1.0 if H0 is None else 2.0, H0=H0))
        total = np.sum(sol.h_pred, axis=0)
        assert np.all(total <= eq6_rhs(sol.spec.H0, N) + 1e-6)


def test_open_loop_cost_matches_solution(builtin):
    sol = solve(_spec(builtin, N=10, T=3, x0=1.0))
    assert open_loop_cost(sol.spec, sol.u) == pytest.approx(sol.J, rel=1e-12)


def test_solver_deterministic(builtin):
    a = solve(_spec(builtin, N=10, T=3, x0=1.0))
    b = solve(_spec(builtin, N=10, T=3, x0=1.0))
    np.testing.assert_array_equal(a.u, b.u)
    assert a.J == b.J


def test_warm_start_respected(builtin):
    cold = solve(_spec(builtin, N=10, T=3, x0=1.0))
    warm = solve(_spec(builtin, N=10, T=3, x0=1.0, warm_start=cold.u))
    assert warm.J == pytest.approx(cold.J, rel=1e-8)
    assert warm.iterations <= cold.iterations


def test_violation_history_refines(builtin):
    sol = solve(_spec(builtin, N=12, T=6, x0=2.0,
                      H0=HistoryState(np.full((1, 5), -2.0), T=6)))
    hist = sol.violation_history
    assert len(hist) >= 1
    assert hist[-1] <= 1e-8
    for prev, cur in zip(hist, hist[1:]):
        assert cur <= prev + 1e-12


def test_infeasible_history_raises(builtin):
    # the partial-window constraint demands h(0) <= -40, below the
    # attainable minimum of the constraint output on the box
    model, cert, ss = builtin
    spec = OcpSpec(model=model, cert=cert, ss=ss, N=2, T=2,
                   x0=np.array([2.0]), H0=HistoryState(np.array([[40.0]]), T=2))
    with pytest.raises(InfeasibleError) as err:
        solve(spec)
    assert err.value.best_residual > 1.0
