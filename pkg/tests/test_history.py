import numpy as np
import pytest

from tacempc.errors import DomainError
from tacempc.history import (
    HistoryState,
    constant_history,
    deviation_norm_replacement,
    eq6_rhs,
    iss_function,
    matrix_one_norm,
    norm_replacement,
    positive_part_measure,
    shift_update,
    steady_history,
    window_deficit,
)


def test_history_shape_validation():
    HistoryState(np.zeros((2, 4)), T=5)
    with pytest.raises(DomainError):
        HistoryState(np.zeros((2, 3)), T=5)
    with pytest.raises(DomainError):
        HistoryState(np.zeros((1, 1)), T=0)


def test_history_immutable():
    H = HistoryState(np.ones((1, 2)), T=3)
    with pytest.raises(ValueError):
        H.columns[0, 0] = 5.0


def test_history_t1_is_empty():
    H = steady_history([0.0], 1)
    assert H.columns.shape == (1, 0)
    assert shift_update(H, [3.0]) is H
    assert norm_replacement(H) == 0.0


def test_shift_update_drops_oldest():
    H = HistoryState(np.array([[1.0, 2.0, 3.0]]), T=4)
    H2 = shift_update(H, [4.0])
    np.testing.assert_array_equal(H2.columns, [[2.0, 3.0, 4.0]])
    assert H2.T == 4


def test_shift_update_range_check():
    H = HistoryState(
        np.array([[0.0, 0.0]]), T=3, h_low=np.array([-1.0]), h_high=np.array([1.0])
    )
    shift_update(H, [0.5])
    with pytest.raises(DomainError):
        shift_update(H, [2.0])


def test_one_based_column_accessor():
    H = HistoryState(np.array([[1.0, 2.0], [3.0, 4.0]]), T=3)
    np.testing.assert_array_equal(H.column(1), [1.0, 3.0])
    np.testing.assert_array_equal(H.column(2), [2.0, 4.0])


def test_positive_part_measure_examples():
    assert positive_part_measure(np.array([[-2.0, -1.0]])) == 0.0
    assert positive_part_measure(np.array([[1.0, -3.0]])) == 1.0
    assert positive_part_measure(np.array([[1.0, -3.0], [2.0, 1.0]])) == 3.0


def test_norm_replacement_axioms_random():
    rng = np.random.default_rng(23)
    for _ in range(1000):
        p = int(rng.integers(1, 4))
        T = int(rng.integers(2, 7))
        cols = rng.uniform(-2, 2, size=(p, T - 1))
        H = HistoryState(cols, T=T)
        val = norm_replacement(H)
        assert val >= 0.0
        assert (val == 0.0) == bool(np.all(cols <= 0.0))
        # entrywise increase cannot decrease the measure
        grown = HistoryState(cols + rng.uniform(0.0, 1.0, cols.shape), T=T)
        assert norm_replacement(grown) >= val - 1e-12
        # scaling a nonnegative matrix scales the measure
        pos = HistoryState(np.abs(cols), T=T)
        assert positive_part_measure(2.0 * np.abs(cols)) == pytest.approx(
            2.0 * norm_replacement(pos)
        )


def test_deviation_norm_replacement():
    H = HistoryState(np.array([[-2.0, 1.0]]), T=3)
    assert deviation_norm_replacement(H, [0.0]) == 1.0
    assert deviation_norm_replacement(H, [1.0]) == 0.0


def test_matrix_one_norm_is_max_column_abs_sum():
    cols = np.array([[1.0, -3.0], [2.0, 1.0]])
    assert matrix_one_norm(cols) == 4.0
    assert matrix_one_norm(np.zeros((2, 0))) == 0.0


def test_iss_function_requires_window():
    H = steady_history([0.0], 1)
    with pytest.raises(DomainError):
        iss_function(H, [0.0], 2.0)


def test_iss_function_weighted_sum():
    H = HistoryState(np.array([[-2.0, -2.0, -2.0, -2.0, -1.0]]), T=6)
    assert iss_function(H, [0.0], 2.0) == pytest.approx(45.0)
    assert iss_function(H, [0.0], 1.0) == pytest.approx(25.0)


def test_iss_sandwich_and_decrease_properties():
    rng = np.random.default_rng(29)
    for _ in range(1000):
        T = int(rng.choice([2, 3, 6]))
        p = int(rng.choice([1, 2]))
        kappa = float(rng.choice([1.0, 2.0]))
        cols = rng.uniform(-3, 3, size=(p, T - 1))
        h_s = rng.uniform(-1, 1, size=p)
        h_new = rng.uniform(-3, 3, size=p)
        H = HistoryState(cols, T=T)
        V = iss_function(H, h_s, kappa)
        dev = matrix_one_norm(cols - h_s.reshape(-1, 1))
        assert dev**kappa <= V + 1e-9
        assert V <= (T - 1) ** 2 * dev**kappa + 1e-9
        V_next = iss_function(shift_update(H, h_new), h_s, kappa)
        bound = -(dev**kappa) + (T - 1) * float(np.sum(np.abs(h_new - h_s))) ** kappa
        assert V_next - V <= bound + 1e-9


def test_window_deficit():
    assert window_deficit(12, 6) == 0
    assert window_deficit(10, 6) == 2
    assert window_deficit(10, 3) == 2
    assert window_deficit(6, 3) == 0
    assert window_deficit(7, 3) == 2


def test_eq6_rhs_zero_for_full_periods():
    H = HistoryState(np.array([[-2.0, -1.0]]), T=3)
    np.testing.assert_array_equal(eq6_rhs(H, 6), [0.0])
    np.testing.assert_array_equal(eq6_rhs(H, 3), [0.0])


def test_eq6_rhs_uses_newest_columns():
    H = HistoryState(np.array([[-2.0, -1.0]]), T=3)
    # N = 10: deficit 2, bound is minus the sum of the 2 newest columns
    np.testing.assert_allclose(eq6_rhs(H, 10), [3.0])
    # N = 11: deficit 1, only the newest column counts
    np.testing.assert_allclose(eq6_rhs(H, 11), [1.0])


def test_eq6_window_partition_property():
    # any h sequence whose every length-T window (including those using
    # the history) sums to <= 0 also satisfies the eq6 bound
    rng = np.random.default_rng(31)
    for _ in range(200):
        T = int(rng.integers(2, 6))
        N = int(rng.integers(T, 3 * T + 2))
        p = int(rng.integers(1, 3))
        past = rng.uniform(-1, 0, size=(p, T - 1))  # nonpositive history
        H = HistoryState(past, T=T)
        h = rng.uniform(-1.0, 0.0, size=(N, p))  # nonpositive outputs
        assert np.all(np.sum(h, axis=0) <= eq6_rhs(H, N) + 1e-12)


def test_constant_history_fill():
    H = constant_history([-2.0], 3)
    np.testing.assert_array_equal(H.columns, [[-2.0, -2.0]])
