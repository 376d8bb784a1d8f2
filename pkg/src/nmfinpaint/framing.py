"""Windowed framing of a signal, per-frame gap masks and overlap-add."""

from dataclasses import dataclass, field, replace

import numpy as np

from .exceptions import SymmetryViolation

__all__ = [
    "GapMask",
    "FrameSet",
    "make_sine_window",
    "frame_signal",
    "overlap_add",
    "window_coverage",
    "n_frames_for",
]

# Relative size of the imaginary part tolerated by overlap_add.
IMAG_TOL = 1e-6


@dataclass(frozen=True)
class GapMask:
    """Missing samples of a signal, stored as sorted global indices.

    Parameters
    ----------
    missing : array-like of int
        0-based positions of missing samples.
    length : int
        Length of the signal the mask applies to.
    """

    missing: np.ndarray
    length: int

    def __post_init__(self):
        missing = np.asarray(self.missing, dtype=np.int64).ravel()
        if self.length < 1:
            raise ValueError("mask length must be positive")
        if missing.size:
            if np.any(np.diff(missing) <= 0):
                raise ValueError("missing indices must be strictly increasing")
            if missing[0] < 0 or missing[-1] >= self.length:
                raise ValueError("missing indices out of range")
        if missing.size >= self.length:
            raise ValueError("mask leaves no observed sample")
        missing.setflags(write=False)
        object.__setattr__(self, "missing", missing)

    @classmethod
    def from_indices(cls, indices, length):
        """Build a mask from unsorted, possibly repeated indices."""
        return cls(np.unique(np.asarray(indices, dtype=np.int64)), length)

    @classmethod
    def from_boolean(cls, is_missing):
        is_missing = np.asarray(is_missing, dtype=bool)
        return cls(np.flatnonzero(is_missing), is_missing.size)

    @classmethod
    def empty(cls, length):
        return cls(np.zeros(0, dtype=np.int64), length)

    @property
    def n_missing(self):
        return int(self.missing.size)

    @property
    def observed(self):
        return np.flatnonzero(~self.as_boolean())

    def as_boolean(self):
        """Boolean vector, True where the sample is missing."""
        out = np.zeros(self.length, dtype=bool)
        out[self.missing] = True
        return out

    def runs(self):
        """List of ``(start, stop)`` half-open runs of consecutive missing samples."""
        if not self.missing.size:
            return []
        breaks = np.flatnonzero(np.diff(self.missing) > 1)
        starts = np.concatenate(([self.missing[0]], self.missing[breaks + 1]))
        stops = np.concatenate((self.missing[breaks] + 1, [self.missing[-1] + 1]))
        return [(int(a), int(b)) for a, b in zip(starts, stops)]


def make_sine_window(length):
    """Sine window ``w[t] = sin(pi (t + 0.5) / length)``.

    With a hop of ``length // 2`` the squared window sums to one, which is
    what makes analysis and synthesis windowing cancel in overlap-add.
    """
    if int(length) != length or length < 2 or length % 2:
        raise ValueError(f"window length must be an even integer >= 2, got {length}")
    t = np.arange(length)
    return np.sin(np.pi * (t + 0.5) / length)


def n_frames_for(signal_length, hop):
    """Number of frames starting at ``0, hop, 2 hop, ...`` so that every
    sample past the first hop is covered by two frames."""
    return max(1, -(-signal_length // hop))


@dataclass(frozen=True)
class FrameSet:
    """Windowed frames ``x_n`` stacked as columns of a ``(W, N)`` array.

    ``observed[n]`` holds the frame-local positions that are known in frame
    ``n``. Positions beyond the signal end count as observed zeros.
    """

    frames: np.ndarray
    window: np.ndarray
    hop: int
    signal_length: int
    observed: tuple = field(repr=False)

    @property
    def frame_length(self):
        return self.frames.shape[0]

    @property
    def n_frames(self):
        return self.frames.shape[1]

    def observed_values(self, n):
        """Observed samples of frame ``n`` (windowed)."""
        return self.frames[self.observed[n], n]

    def missing(self, n):
        keep = np.ones(self.frame_length, dtype=bool)
        keep[self.observed[n]] = False
        return np.flatnonzero(keep)

    def with_frames(self, frames):
        """Copy with the frame matrix replaced (same geometry and masks)."""
        frames = np.asarray(frames)
        if frames.shape != self.frames.shape:
            raise ValueError(f"frame shape {frames.shape} != {self.frames.shape}")
        return replace(self, frames=frames)


def frame_signal(signal, mask, frame_length, hop, window=None):
    """Cut ``signal`` into windowed frames and project ``mask`` onto them.

    Missing samples are zeroed before framing, so whatever the input holds
    at those positions never leaks into the estimators.
    """
    y = np.asarray(signal, dtype=np.float64).ravel()
    L = y.size
    if mask is None:
        mask = GapMask.empty(L)
    if mask.length != L:
        raise ValueError(f"mask length {mask.length} != signal length {L}")
    if not np.all(np.isfinite(y[mask.observed])):
        raise ValueError("observed samples must be finite")
    if frame_length > L:
        raise ValueError(f"frame length {frame_length} exceeds signal length {L}")
    if hop * 2 != frame_length:
        raise ValueError("only hop = frame_length / 2 is supported")
    if window is None:
        window = make_sine_window(frame_length)
    window = np.asarray(window, dtype=np.float64)
    if window.shape != (frame_length,):
        raise ValueError("window length must equal frame length")
    if np.any(window < 0) or np.any(window > 1):
        raise ValueError("window values must lie in [0, 1]")

    N = n_frames_for(L, hop)
    padded_len = (N - 1) * hop + frame_length
    is_missing = np.zeros(padded_len, dtype=bool)
    is_missing[mask.missing] = True
    padded = np.zeros(padded_len)
    padded[:L] = np.where(is_missing[:L], 0.0, y)

    idx = np.arange(frame_length)[:, None] + hop * np.arange(N)[None, :]
    frames = (padded[idx] * window[:, None]).astype(np.complex128)
    observed = tuple(np.flatnonzero(~is_missing[idx[:, n]]) for n in range(N))
    frames.setflags(write=False)
    return FrameSet(frames, window, hop, L, observed)


def window_coverage(frame_set):
    """Per-sample sum of squared windows, i.e. the overlap-add gain."""
    W, N, hop = frame_set.frame_length, frame_set.n_frames, frame_set.hop
    gain = np.zeros((N - 1) * hop + W)
    w2 = frame_set.window**2
    for n in range(N):
        gain[n * hop:n * hop + W] += w2
    return gain[:frame_set.signal_length]


def overlap_add(frame_set, check_real=True):
    """Window each frame again and sum the overlapping parts.

    Returns a real signal truncated to the original length. Raises
    :class:`SymmetryViolation` when the frames are not (numerically) real.
    """
    X = np.asarray(frame_set.frames)
    W, N, hop = frame_set.frame_length, frame_set.n_frames, frame_set.hop
    if np.iscomplexobj(X):
        if check_real:
            re_max = np.max(np.abs(X.real)) if X.size else 0.0
            im_max = np.max(np.abs(X.imag)) if X.size else 0.0
            if im_max > IMAG_TOL * re_max and im_max > 0:
                raise SymmetryViolation(
                    f"frames are not real: max |Im| = {im_max:.3g}, max |Re| = {re_max:.3g}"
                )
        X = X.real
    weighted = X * frame_set.window[:, None]
    out = np.zeros((N - 1) * hop + W)
    for n in range(N):
        out[n * hop:n * hop + W] += weighted[:, n]
    return out[:frame_set.signal_length]
