import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from simcal.core import (
    Param,
    ParameterSpace,
    Trajectory,
    accuracy,
    aggregate,
    denormalize,
    normalize,
    spread,
    trajectory_mse,
)
from simcal.errors import EmptyInputError, RangeError, ShapeError

SPACE = ParameterSpace((Param("mass", 0.5, 2.0, "kg"), Param("damping", 0.0, 0.5)))
unit = st.floats(0.0, 1.0, allow_nan=False)


def traj(states, actions=None, start=None):
    states = np.asarray(states, dtype=float)
    if actions is None:
        actions = np.zeros((states.shape[0] - 1, 1))
    return Trajectory("pendulum", states[0] if start is None else start, states, actions)


def test_normalize_midpoint_and_boundary():
    assert normalize([1.25, 0.25], SPACE) == pytest.approx([0.5, 0.5])
    assert normalize([0.5, 0.0], SPACE) == pytest.approx([0.0, 0.0])


def test_normalize_out_of_range_names_parameter():
    with pytest.raises(RangeError, match="mass"):
        normalize([2.5, 0.1], SPACE)
    assert normalize([2.5, 0.1], SPACE, allow_out_of_range=True)[0] == pytest.approx(4 / 3)


def test_denormalize_edges():
    assert np.array_equal(denormalize([0.0, 0.0], SPACE), SPACE.low)
    assert np.array_equal(denormalize([1.0, 1.0], SPACE), SPACE.high)
    assert denormalize([0.5, 0.0], SPACE)[0] == 1.25
    with pytest.raises(ShapeError):
        denormalize([0.5], SPACE)


@given(arrays(float, 2, elements=unit))
def test_round_trip(theta):
    assert np.max(np.abs(normalize(denormalize(theta, SPACE), SPACE) - theta)) < 1e-12


def test_space_rejects_bad_ranges():
    with pytest.raises(RangeError):
        ParameterSpace((Param("x", 1.0, 1.0),))
    with pytest.raises(EmptyInputError):
        ParameterSpace(())


def test_trajectory_mse_cases():
    rng = np.random.default_rng(0)
    a = traj(rng.normal(size=(4, 2)))
    assert trajectory_mse(a, a) == 0.0
    b = traj(a.states + 0.3, start=a.start_state)
    assert trajectory_mse(a, b, check_start=False) == pytest.approx(0.09)
    c = traj(rng.normal(size=(4, 2)), start=a.start_state)
    total = 0.0
    for t in range(4):
        for j in range(2):
            total += (a.states[t, j] - c.states[t, j]) ** 2
    assert trajectory_mse(a, c, check_start=False) == pytest.approx(total / 8, rel=1e-14)


def test_trajectory_mse_shape_mismatch():
    with pytest.raises(ShapeError):
        trajectory_mse(traj(np.zeros((3, 2))), traj(np.zeros((4, 2))))


@given(arrays(float, (5, 2), elements=st.floats(-10, 10)), arrays(float, (5, 2), elements=st.floats(-10, 10)))
def test_mse_symmetric_nonnegative(x, y):
    a, b = traj(x), traj(y, start=x[0])
    assert trajectory_mse(a, b, check_start=False) == trajectory_mse(b, a, check_start=False) >= 0


def test_trajectory_shape_checks():
    with pytest.raises(ShapeError):
        Trajectory("pendulum", [0, 0], np.zeros((3, 2)), np.zeros((3, 1)))


def test_accuracy_examples():
    assert np.all(accuracy([0.3, 0.7], [0.3, 0.7]) == 1.0)
    assert accuracy([0.5], [0.3]) == pytest.approx([0.8])
    assert np.all(accuracy([1.0, 1.0], [0.0, 0.0]) == 0.0)
    with pytest.raises(ShapeError):
        accuracy([0.1], [0.1, 0.2])


def test_aggregate_examples():
    assert aggregate([0.9, 0.5], "mean") == pytest.approx(0.7)
    assert aggregate([0.9, 0.5], "min") == 0.5
    assert aggregate([0.9, 0.5], "max") == 0.9
    assert len({aggregate([0.4] * 3, m) for m in ("mean", "min", "max")}) == 1
    with pytest.raises(EmptyInputError):
        aggregate([], "mean")


@settings(max_examples=200)
@given(arrays(float, st.integers(1, 8), elements=unit), st.data())
def test_accuracy_and_ordering(est, data):
    true = data.draw(arrays(float, est.shape, elements=unit))
    acc = accuracy(est, true)
    assert np.all((acc >= 0) & (acc <= 1))
    assert aggregate(acc, "min") <= aggregate(acc, "mean") <= aggregate(acc, "max")
    assert (spread(acc) == 0) == bool(np.all(acc == acc[0]))
