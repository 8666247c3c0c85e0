import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from semimarkov import (
    StepFunction,
    StepMatrix,
    convolve,
    product_integral_matrix,
    product_integral_scalar,
)
from semimarkov.errors import DimensionMismatch, IncrementOutOfRange, NonStochasticFactor


def test_evaluate_before_first_jump():
    f = StepFunction([1.0], [1 / 3])
    assert f(0.999) == 0.0
    assert f(0.0) == 0.0


def test_evaluate_right_continuous_at_jump():
    f = StepFunction([1.0], [1 / 3])
    assert f(1.0) == pytest.approx(1 / 3, abs=0)


def test_evaluate_cumulative():
    f = StepFunction([1.0, 2.0], [1 / 3, 1 / 2])
    assert f(5.0) == pytest.approx(5 / 6, abs=1e-15)
    assert f.left_limit(2.0) == pytest.approx(1 / 3, abs=0)


def test_from_jumps_aggregates_ties_and_sorts():
    f = StepFunction.from_jumps([2.0, 1.0, 2.0], [0.5, 1.0, 0.25])
    assert list(f.times) == [1.0, 2.0]
    assert f(2.0) == pytest.approx(1.75)


def test_tiny_increments_dropped():
    f = StepFunction([1.0, 2.0], [1e-16, 0.5])
    assert f.times.tolist() == [2.0]


jump_lists = st.lists(
    st.tuples(
        st.floats(min_value=0.01, max_value=50, allow_nan=False),
        st.floats(min_value=-2, max_value=2, allow_nan=False),
    ),
    max_size=12,
)


@given(jump_lists)
def test_evaluate_construct_identity(jumps):
    """Evaluating at the stored jump times reproduces the cumulative sums."""
    f = StepFunction.from_jumps([t for t, _ in jumps], [v for _, v in jumps])
    running = 0.0
    for t, v in sorted(zip(f.times, f.increments)):
        running += v
        assert f(t) == pytest.approx(running, abs=1e-12)


@given(
    st.lists(st.floats(min_value=0.0, max_value=1.0, allow_nan=False), max_size=10),
    st.integers(min_value=0, max_value=2**32 - 1),
)
def test_km_identity(hazards, seed):
    """1 - G(x) equals the integral of G(u-) dB(u), essentially exactly."""
    rng = np.random.default_rng(seed)
    times = np.sort(rng.uniform(0.1, 20.0, size=len(hazards)))
    times = np.unique(times)
    hz = np.asarray(hazards[: times.size])
    times = times[: hz.size]
    b = StepFunction(times, hz)
    g = product_integral_scalar(b)
    for x in list(times) + [25.0]:
        integral = sum(
            g.left_limit(u) * db for u, db in zip(b.times, b.increments) if u <= x
        )
        assert abs((1.0 - g(x)) - integral) <= 1e-12


def test_product_integral_scalar_two_jumps():
    g = product_integral_scalar(StepFunction([1.0, 2.0], [1 / 3, 1 / 2]))
    assert g(0.5) == 1.0
    assert g(1.0) == pytest.approx(2 / 3, abs=1e-15)
    assert g(1.9) == pytest.approx(2 / 3, abs=1e-15)
    assert g(2.0) == pytest.approx(1 / 3, abs=1e-15)
    assert g(100.0) == pytest.approx(1 / 3, abs=1e-15)


def test_product_integral_scalar_empty_and_full():
    assert product_integral_scalar(StepFunction.zero())(3.0) == 1.0
    g = product_integral_scalar(StepFunction([2.0], [1.0]))
    assert g(1.999) == 1.0
    assert g(2.0) == 0.0
    assert g(10.0) == 0.0


def test_product_integral_scalar_rejects_bad_increment():
    with pytest.raises(IncrementOutOfRange):
        product_integral_scalar(StepFunction([1.0], [1.5]))
    with pytest.raises(IncrementOutOfRange):
        product_integral_scalar(StepFunction([1.0], [-0.2]))


def _markov_delta(r, i, j, mass, t):
    """StepMatrix with one jump at t moving `mass` from i to j (generator diag)."""
    return StepMatrix.from_cells(
        r,
        {
            (i, j): StepFunction([t], [mass]),
            (i, i): StepFunction([t], [-mass]),
        },
    )


def test_product_integral_matrix_two_jumps():
    a = _markov_delta(3, 0, 1, 1 / 3, 1.0) + _markov_delta(3, 0, 2, 1 / 2, 2.0)
    p = product_integral_matrix(a)
    row = p.value_at(2.0)[0]
    assert row == pytest.approx([1 / 3, 1 / 3, 1 / 3], abs=1e-15)
    assert p.value_at(1.5)[0] == pytest.approx([2 / 3, 1 / 3, 0.0], abs=1e-15)


def test_product_integral_matrix_trivial_cases():
    p = product_integral_matrix(StepMatrix.zeros(3))
    assert np.allclose(p.value_at(7.0), np.eye(3))
    p = product_integral_matrix(_markov_delta(3, 0, 1, 1.0, 2.0))
    assert p.value_at(2.0)[0] == pytest.approx([0.0, 1.0, 0.0], abs=0)


def test_product_integral_matrix_rejects_nonstochastic():
    with pytest.raises(NonStochasticFactor):
        product_integral_matrix(_markov_delta(2, 0, 1, 1.5, 1.0))


def test_product_integral_matrix_requires_generator_diagonal():
    a = StepMatrix.from_cells(2, {(0, 1): StepFunction([1.0], [0.5])})
    with pytest.raises(ValueError):
        product_integral_matrix(a)


def test_convolve_single_path():
    q = StepMatrix.from_cells(
        3,
        {
            (0, 1): StepFunction([1.0], [1 / 3]),
            (0, 2): StepFunction([2.0], [1 / 3]),
            (1, 2): StepFunction([2.0], [1.0]),
        },
    )
    qq = convolve(q, q)
    cell = qq[0, 2]
    assert cell(2.9) == 0.0
    assert cell(3.0) == pytest.approx(1 / 3, abs=1e-15)
    assert cell(50.0) == pytest.approx(1 / 3, abs=1e-15)


def test_convolve_identity_atom_both_sides():
    a = StepMatrix.from_cells(
        2, {(0, 1): StepFunction([1.0, 2.5], [0.25, 0.5])}
    )
    eye = StepMatrix.identity_atom(2)
    for result in (convolve(a, eye), convolve(eye, a)):
        assert np.allclose(result.value_at(3.0), a.value_at(3.0))
        assert np.allclose(result.value_at(1.0), a.value_at(1.0))


def test_convolve_zero_annihilates():
    a = StepMatrix.from_cells(2, {(0, 1): StepFunction([1.0], [0.5])})
    z = convolve(StepMatrix.zeros(2), a)
    assert np.allclose(z.value_at(10.0), 0.0)


def test_convolve_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        convolve(StepMatrix.zeros(2), StepMatrix.zeros(3))


def _random_step_matrix(rng, r=3, max_jumps=3):
    cells = {}
    for i in range(r):
        for j in range(r):
            if i == j or rng.uniform() < 0.4:
                continue
            k = rng.integers(1, max_jumps + 1)
            times = np.sort(rng.uniform(0.1, 5.0, size=k))
            cells[(i, j)] = StepFunction.from_jumps(times, rng.uniform(0.05, 0.5, size=k))
    return StepMatrix.from_cells(r, cells)


@pytest.mark.parametrize("seed", range(10))
def test_convolve_associative(seed):
    rng = np.random.default_rng(seed)
    a, b, c = (_random_step_matrix(rng) for _ in range(3))
    left = convolve(convolve(a, b), c)
    right = convolve(a, convolve(b, c))
    # float addition reorders jump times by ulps between the two sides, so
    # compare the functions at midpoints of gaps between distinct jump clusters
    times = np.unique(np.concatenate([left.jump_times(), right.jump_times(), [0.0, 20.0]]))
    gaps = np.diff(times) > 1e-9
    probes = ((times[:-1] + times[1:]) / 2.0)[gaps]
    for t in probes:
        assert np.max(np.abs(left.value_at(t) - right.value_at(t))) <= 1e-12
