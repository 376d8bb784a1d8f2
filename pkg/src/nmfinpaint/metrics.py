"""Restoration quality and convergence measures."""

import numpy as np

from .exceptions import UndefinedMetric

__all__ = ["SNR_CAP_DB", "snr", "relative_change"]

# Returned instead of +inf on an exact match.
SNR_CAP_DB = 300.0


def snr(reference, estimate, restrict=None):
    """Signal-to-noise ratio in dB, optionally over a subset of indices.

    Parameters
    ----------
    reference, estimate : array-like
        Signals of equal length.
    restrict : array-like of int or GapMask, optional
        Indices to evaluate on; a :class:`~nmfinpaint.framing.GapMask`
        selects its missing samples. The whole signal when omitted.
    """
    y = np.asarray(reference, dtype=np.float64).ravel()
    y_hat = np.asarray(estimate, dtype=np.float64).ravel()
    if y.shape != y_hat.shape:
        raise ValueError(f"length mismatch {y.size} vs {y_hat.size}")
    if restrict is not None:
        idx = getattr(restrict, "missing", restrict)
        idx = np.asarray(idx, dtype=np.int64)
        if idx.size and (idx.min() < 0 or idx.max() >= y.size):
            raise ValueError("restriction indices out of range")
        y, y_hat = y[idx], y_hat[idx]
    energy = float(np.dot(y, y))
    if energy == 0.0:
        raise UndefinedMetric("reference has zero energy on the evaluated samples")
    err = y - y_hat
    noise = float(np.dot(err, err))
    if noise == 0.0:
        return SNR_CAP_DB
    return min(SNR_CAP_DB, 10.0 * np.log10(energy / noise))


def relative_change(prev, new):
    """``||new - prev|| / ||prev||``."""
    prev = np.asarray(prev).ravel()
    new = np.asarray(new).ravel()
    if prev.shape != new.shape:
        raise ValueError(f"length mismatch {prev.size} vs {new.size}")
    denom = np.linalg.norm(prev)
    if denom == 0.0:
        raise UndefinedMetric("previous iterate has zero norm")
    return float(np.linalg.norm(new - prev) / denom)
