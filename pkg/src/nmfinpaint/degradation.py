"""Generating gap masks: random sample drops and compact gaps."""

from dataclasses import dataclass

import numpy as np

from .exceptions import InfeasibleSpec
from .framing import GapMask

__all__ = ["RandomDrop", "CompactGaps", "place_gaps", "degrade", "read_mask", "write_mask"]

MAX_REJECTIONS = 10_000


@dataclass(frozen=True)
class RandomDrop:
    fraction: float
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.fraction < 1:
            raise InfeasibleSpec(f"drop fraction must lie in (0, 1), got {self.fraction}")


@dataclass(frozen=True)
class CompactGaps:
    """``count`` gaps of ``gap_ms`` milliseconds, separated from each other
    and from the signal ends by at least ``min_context_ms``."""

    count: int
    gap_ms: float
    seed: int = 0
    min_context_ms: float = 100.0

    def __post_init__(self):
        if self.count < 1 or self.gap_ms <= 0 or self.min_context_ms < 0:
            raise InfeasibleSpec("gap count and length must be positive")

    def lengths(self, sample_rate):
        return (int(round(self.gap_ms * sample_rate / 1000)),
                int(round(self.min_context_ms * sample_rate / 1000)))


def place_gaps(length, count, gap_length, context, rng):
    """Sorted start positions of ``count`` disjoint gaps.

    Starts are drawn uniformly from ``[context, length - context - gap_length]``
    and rejected when closer than ``context`` to an accepted gap.
    """
    lo, hi = context, length - context - gap_length
    if gap_length < 1 or hi < lo:
        raise InfeasibleSpec("signal too short for the requested gap and context")
    starts = []
    rejections = 0
    while len(starts) < count:
        s = int(rng.integers(lo, hi + 1))
        if all(abs(s - t) >= gap_length + context for t in starts):
            starts.append(s)
            continue
        rejections += 1
        if rejections > MAX_REJECTIONS:
            raise InfeasibleSpec(
                f"could not place {count} gaps of {gap_length} samples with "
                f"{context} samples of context in a signal of {length}"
            )
    return sorted(starts)


def degrade(length, spec, sample_rate=None):
    """Gap mask for a signal of ``length`` samples, deterministic in the seed."""
    rng = np.random.default_rng(spec.seed)
    if isinstance(spec, RandomDrop):
        n = int(round(spec.fraction * length))
        if n >= length or n < 1:
            raise InfeasibleSpec(f"drop fraction {spec.fraction} leaves nothing to do or nothing observed")
        return GapMask.from_indices(rng.choice(length, size=n, replace=False), length)
    if isinstance(spec, CompactGaps):
        if sample_rate is None:
            raise ValueError("compact gaps need the sample rate")
        gap_len, context = spec.lengths(sample_rate)
        starts = place_gaps(length, spec.count, gap_len, context, rng)
        idx = np.concatenate([np.arange(s, s + gap_len) for s in starts])
        return GapMask(idx, length)
    raise TypeError(f"unknown degradation {spec!r}")


def read_mask(path, length):
    """Read newline-separated 0-based indices of missing samples."""
    with open(path) as fh:
        idx = [int(line) for line in fh if line.strip()]
    return GapMask.from_indices(idx, length)


def write_mask(path, mask):
    with open(path, "w", newline="\n") as fh:
        fh.writelines(f"{i}\n" for i in mask.missing)
