import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nmfinpaint.exceptions import SymmetryViolation
from nmfinpaint.framing import (
    GapMask, frame_signal, make_sine_window, n_frames_for, overlap_add, window_coverage,
)


def test_sine_window_length_two():
    np.testing.assert_allclose(make_sine_window(2), [np.sin(np.pi / 4), np.sin(3 * np.pi / 4)])
    np.testing.assert_allclose(make_sine_window(2), [0.70711, 0.70711], atol=1e-5)


def test_sine_window_symmetric_and_open():
    w = make_sine_window(4)
    assert w[0] == pytest.approx(w[3]) and w[1] == pytest.approx(w[2])
    w = make_sine_window(64)
    assert np.all((w > 0) & (w < 1))


@pytest.mark.parametrize("bad", [0, 1, 3, 7])
def test_sine_window_rejects_odd_or_tiny(bad):
    with pytest.raises(ValueError):
        make_sine_window(bad)


@pytest.mark.parametrize("W", [2, 8, 64, 1000])
def test_window_squares_overlap_to_one(W):
    w = make_sine_window(W)
    np.testing.assert_allclose(w[: W // 2] ** 2 + w[W // 2:] ** 2, 1.0, atol=1e-14)


def test_gap_mask_validation():
    with pytest.raises(ValueError):
        GapMask(np.array([3, 2]), 5)
    with pytest.raises(ValueError):
        GapMask(np.array([5]), 5)
    with pytest.raises(ValueError):
        GapMask(np.arange(5), 5)
    m = GapMask.from_indices([4, 1, 1], 6)
    assert list(m.missing) == [1, 4]
    assert list(m.observed) == [0, 2, 3, 5]
    assert m.n_missing == 2


def test_gap_mask_runs():
    m = GapMask.from_indices([2, 3, 4, 9, 11, 12], 20)
    assert [tuple(r) for r in m.runs()] == [(2, 5), (9, 10), (11, 13)]


def test_constant_signal_interior_frames_equal_window():
    y = np.ones(16)
    fs = frame_signal(y, None, 4, 2)
    w = make_sine_window(4)
    for n in range(fs.n_frames - 2):
        np.testing.assert_allclose(fs.frames[:, n].real, w)


def test_compact_gap_touches_only_overlapping_frames():
    L = 20
    mask = GapMask.from_indices([9, 10, 11], L)
    fs = frame_signal(np.arange(L, dtype=float), mask, 4, 2)
    partial = [n for n in range(fs.n_frames) if len(fs.observed[n]) < 4]
    expected = [n for n in range(fs.n_frames) if 2 * n <= 11 and 2 * n + 3 >= 9]
    assert partial == expected


def test_frames_exclude_missing_values():
    y = np.arange(12, dtype=float)
    y[5] = 1e9
    mask = GapMask.from_indices([5], 12)
    fs = frame_signal(y, mask, 4, 2)
    assert np.max(np.abs(fs.frames)) < 100


def test_mask_conservation():
    rng = np.random.default_rng(0)
    L = 101
    mask = GapMask.from_indices(rng.choice(L, 40, replace=False), L)
    fs = frame_signal(rng.standard_normal(L), mask, 8, 4)
    for n in range(fs.n_frames):
        assert len(fs.observed[n]) + len(fs.missing(n)) == 8
        assert set(fs.observed[n]) <= set(range(8))


def test_padding_counts_as_observed_zero():
    fs = frame_signal(np.ones(10), None, 4, 2)
    assert fs.n_frames == n_frames_for(10, 2) == 5
    last = fs.frames[:, -1]
    assert np.all(last[2:] == 0) and len(fs.observed[-1]) == 4


def test_frame_signal_errors():
    with pytest.raises(ValueError):
        frame_signal(np.ones(3), None, 4, 2)
    with pytest.raises(ValueError):
        frame_signal(np.ones(16), None, 4, 1)


@pytest.mark.parametrize("W", [4, 64, 256])
def test_round_trip_interior(W):
    rng = np.random.default_rng(W)
    y = rng.standard_normal(10 * W + 3)
    fs = frame_signal(y, None, W, W // 2)
    y_hat = overlap_add(fs)
    inner = slice(W // 2, y.size - W)
    np.testing.assert_allclose(y_hat[inner], y[inner], atol=1e-12, rtol=0)
    np.testing.assert_allclose(y_hat / window_coverage(fs), y, atol=1e-10)


def test_overlap_add_zero_and_locality():
    fs = frame_signal(np.ones(40), None, 8, 4)
    assert not np.any(overlap_add(fs.with_frames(np.zeros_like(fs.frames))))
    X = np.zeros_like(fs.frames)
    X[:, 3] = 1.0
    out = overlap_add(fs.with_frames(X))
    support = np.flatnonzero(out)
    assert support.min() >= 12 and support.max() < 20


@settings(max_examples=25, deadline=None)
@given(a=st.floats(-3, 3), b=st.floats(-3, 3), seed=st.integers(0, 1000))
def test_overlap_add_linear(a, b, seed):
    rng = np.random.default_rng(seed)
    fs = frame_signal(np.zeros(50), None, 8, 4)
    X = rng.standard_normal(fs.frames.shape)
    Y = rng.standard_normal(fs.frames.shape)
    lhs = overlap_add(fs.with_frames(a * X + b * Y))
    rhs = a * overlap_add(fs.with_frames(X)) + b * overlap_add(fs.with_frames(Y))
    np.testing.assert_allclose(lhs, rhs, atol=1e-12)


def test_overlap_add_rejects_complex_frames():
    fs = frame_signal(np.ones(16), None, 4, 2)
    with pytest.raises(SymmetryViolation):
        overlap_add(fs.with_frames(fs.frames + 1e-3j))
    overlap_add(fs.with_frames(fs.frames + 1e-9j))
