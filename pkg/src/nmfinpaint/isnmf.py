"""Itakura-Saito NMF of a power spectrogram, ``P ~ W H``."""

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "EPS",
    "NmfModel",
    "is_divergence",
    "normalize",
    "multiplicative_update",
    "init_model",
    "mirror_rows",
]

EPS = 1e-10


@dataclass(frozen=True)
class NmfModel:
    """Nonnegative factors of the variance matrix ``V = W H``.

    ``W`` is ``(F, K)`` (spectral templates), ``H`` is ``(K, N)``
    (activations).
    """

    W: np.ndarray
    H: np.ndarray

    def __post_init__(self):
        W = np.asarray(self.W, dtype=np.float64)
        H = np.asarray(self.H, dtype=np.float64)
        if W.ndim != 2 or H.ndim != 2 or W.shape[1] != H.shape[0]:
            raise ValueError(f"incompatible factor shapes {W.shape} and {H.shape}")
        if np.any(W < 0) or np.any(H < 0):
            raise ValueError("NMF factors must be nonnegative")
        object.__setattr__(self, "W", W)
        object.__setattr__(self, "H", H)

    @property
    def rank(self):
        return self.W.shape[1]

    @property
    def V(self):
        return self.W @ self.H


def _as_power(P, name="P"):
    P = np.asarray(P, dtype=np.float64)
    if np.any(P < 0):
        raise ValueError(f"{name} has negative entries")
    if not np.all(np.isfinite(P)):
        raise ValueError(f"{name} has non-finite entries")
    return P


def is_divergence(P, V):
    """Itakura-Saito divergence ``sum(p/v - log(p/v) - 1)``.

    Entries of ``P`` are clamped to :data:`EPS` so that exact zeros stay
    finite.
    """
    P = _as_power(P)
    V = _as_power(V, "V")
    if P.shape != V.shape:
        raise ValueError(f"shape mismatch {P.shape} vs {V.shape}")
    if np.any(V <= 0):
        raise ValueError("V must be strictly positive")
    ratio = np.maximum(P, EPS) / V
    terms = ratio - np.log(ratio) - 1.0
    if terms.size > 10**6:
        return math.fsum(terms.ravel().tolist())
    return float(terms.sum())


def normalize(model):
    """Scale ``W`` columns to unit Euclidean norm, ``H`` rows inversely."""
    scale = np.linalg.norm(model.W, axis=0)
    scale[scale == 0] = 1.0
    return NmfModel(model.W / scale, model.H * scale[:, None])


def multiplicative_update(model, P, n_iter=10, update_W=True):
    """Run ``n_iter`` rounds of the IS-NMF multiplicative rules.

    Each round updates ``W``, then ``H`` using the new ``W``, then
    normalizes. With ``update_W=False`` the templates stay fixed.

    Entries are floored at :data:`EPS`, or at their current value when
    that is already lower: normalization rescales floored entries exactly
    (it must not change ``W H``) and may leave them slightly below the
    floor, and pushing them back up can increase the divergence.
    """
    if n_iter < 1:
        raise ValueError("n_iter must be >= 1")
    P = np.maximum(_as_power(P), EPS)
    W, H = model.W.copy(), model.H.copy()
    if P.shape != (W.shape[0], H.shape[1]):
        raise ValueError(f"P shape {P.shape} does not match model {(W.shape[0], H.shape[1])}")
    for _ in range(n_iter):
        if update_W:
            V = W @ H
            W_new = W * ((P / V**2) @ H.T) / ((1.0 / V) @ H.T)
            W = np.maximum(W_new, np.minimum(W, EPS))
        V = W @ H
        H_new = H * (W.T @ (P / V**2)) / (W.T @ (1.0 / V))
        H = np.maximum(H_new, np.minimum(H, EPS))
        if update_W:
            scale = np.linalg.norm(W, axis=0)
            W /= scale
            H *= scale[:, None]
    return NmfModel(W, H)


def mirror_rows(W):
    """Copy row ``f`` onto row ``F - f`` for ``0 < f < F/2``.

    Variances mirrored this way keep DFT coefficient posteriors
    conjugate-symmetric, so real frames stay real.
    """
    W = np.array(W, copy=True)
    F = W.shape[0]
    f = np.arange(1, (F + 1) // 2)
    W[F - f] = W[f]
    return W


def init_model(n_bins, rank, n_frames, seed=None, symmetric=True):
    """Random model with entries ``|N(0, 1)| + 0.1``, then normalized."""
    if min(n_bins, rank, n_frames) < 1:
        raise ValueError("dimensions must be positive")
    rng = np.random.default_rng(seed)
    W = np.abs(rng.standard_normal((n_bins, rank))) + 0.1
    H = np.abs(rng.standard_normal((rank, n_frames))) + 0.1
    if symmetric:
        W = mirror_rows(W)
    return normalize(NmfModel(W, H))
