"""Synthesis/analysis operator pairs between frames and DFT coefficients.

A pair holds the synthesis matrix ``T`` (``W x F``, coefficients to frame)
and the analysis matrix ``A`` (``F x W``). Five pairings are supported:

========================  ==============================================
``unitary-inverse``       ``F = W``, ``A = T^{-1} = T^*``
``redundant-tight``       ``F > W``, ``A = T^*``, ``T T^* = I``
``analysis-tight``        ``F < W``, ``A = T^*``, ``A T = I``
``pinv-of-synthesis``     ``T`` arbitrary, ``A = pinv(T)``
``pinv-of-analysis``      ``A`` arbitrary, ``T = pinv(A)``
========================  ==============================================

Operators are kept dense; the estimators need row slices of ``T``.
"""

from dataclasses import dataclass, field

import numpy as np

from .exceptions import UnsupportedConfiguration

__all__ = [
    "CASES",
    "TransformPair",
    "make_dft_pair",
    "make_analysis_tight_pair",
    "make_pinv_pair",
    "apply_synthesis",
    "apply_analysis",
    "projection_of_pair",
]

CASES = (
    "unitary-inverse",
    "redundant-tight",
    "analysis-tight",
    "pinv-of-synthesis",
    "pinv-of-analysis",
)

_TOL = 1e-12
# SVD cutoff for the pseudo-inverse pairs, relative to the largest singular value.
PINV_RCOND = 1e-12


def _close(a, b, tol=_TOL):
    scale = max(1.0, float(np.max(np.abs(b))) if b.size else 1.0)
    return float(np.max(np.abs(a - b))) <= tol * scale


@dataclass(frozen=True, eq=False)
class TransformPair:
    synthesis: np.ndarray
    analysis: np.ndarray
    case: str
    kind: str = "generic"
    _projection: list = field(default_factory=list, repr=False)

    def __post_init__(self):
        T = np.asarray(self.synthesis, dtype=np.complex128)
        A = np.asarray(self.analysis, dtype=np.complex128)
        if T.ndim != 2 or A.shape != T.shape[::-1]:
            raise ValueError(f"shape mismatch: T {T.shape}, A {A.shape}")
        if self.case not in CASES:
            raise ValueError(f"unknown case {self.case!r}")
        T.setflags(write=False)
        A.setflags(write=False)
        object.__setattr__(self, "synthesis", T)
        object.__setattr__(self, "analysis", A)
        self._check()

    @property
    def frame_length(self):
        return self.synthesis.shape[0]

    @property
    def n_bins(self):
        return self.synthesis.shape[1]

    @property
    def invertible(self):
        """True when ``A = T^{-1}`` (square, both-sided inverse)."""
        return self.case == "unitary-inverse"

    def _check(self):
        T, A = self.synthesis, self.analysis
        W, F = T.shape
        I_W, I_F = np.eye(W), np.eye(F)
        ok = True
        if self.case == "unitary-inverse":
            # square with T A = I already implies A T = I
            ok = W == F and _close(A, T.conj().T) and _close(T @ A, I_W)
        elif self.case == "redundant-tight":
            ok = F > W and _close(A, T.conj().T) and _close(T @ A, I_W)
        elif self.case == "analysis-tight":
            ok = F < W and _close(A, T.conj().T) and _close(A @ T, I_F)
        else:
            P = A @ T if self.case == "pinv-of-synthesis" else T @ A
            ok = _close(P @ P, P, 1e-10) and _close(P, P.conj().T, 1e-10)
        if not ok:
            raise ValueError(f"operators do not satisfy the {self.case} relations")


def _idft_matrix(W, F):
    # entries exp(+2 pi i f t / F) / sqrt(F), rows t < W
    t = np.arange(W)[:, None]
    f = np.arange(F)[None, :]
    return np.exp(2j * np.pi * ((f * t) % F) / F) / np.sqrt(F)


def make_dft_pair(frame_length, n_bins=None):
    """DFT-based pair with ``n_bins`` equal to ``frame_length`` or twice it.

    ``F = W`` gives the unitary inverse DFT. ``F = 2W`` gives the synthesis
    operator of the zero-padded DFT frame: the inverse DFT of size ``2W``
    cropped to its first ``W`` samples, scaled so that ``T T^* = I``.
    """
    W = int(frame_length)
    F = W if n_bins is None else int(n_bins)
    if W < 1:
        raise ValueError("frame length must be positive")
    if F == W:
        case = "unitary-inverse"
    elif F == 2 * W:
        case = "redundant-tight"
    else:
        raise UnsupportedConfiguration(
            f"n_bins must be frame_length or 2 * frame_length, got {F} for W={W}"
        )
    T = _idft_matrix(W, F)
    return TransformPair(T, T.conj().T, case, kind="dft")


def make_analysis_tight_pair(frame_length, n_bins):
    """Pair with fewer bins than samples: ``T`` keeps ``n_bins`` columns of
    the unitary inverse DFT, so ``A T = I`` while ``T A`` is a projection."""
    W, F = int(frame_length), int(n_bins)
    if not 0 < F < W:
        raise UnsupportedConfiguration("analysis-tight pairs need 0 < n_bins < frame_length")
    T = _idft_matrix(W, W)[:, :F]
    return TransformPair(T, T.conj().T, "analysis-tight")


def make_pinv_pair(matrix, of="synthesis"):
    """Complete an arbitrary operator with its pseudo-inverse.

    ``of="synthesis"`` treats ``matrix`` as ``T`` (``W x F``) and sets
    ``A = pinv(T)``; ``of="analysis"`` treats it as ``A`` and sets
    ``T = pinv(A)``.
    """
    M = np.asarray(matrix, dtype=np.complex128)
    P = np.linalg.pinv(M, rcond=PINV_RCOND)
    if of == "synthesis":
        return TransformPair(M, P, "pinv-of-synthesis")
    if of == "analysis":
        return TransformPair(P, M, "pinv-of-analysis")
    raise ValueError(f"of must be 'synthesis' or 'analysis', got {of!r}")


def apply_synthesis(pair, coefs):
    """Frame(s) ``T s`` from coefficient vector(s) ``s`` (axis 0 = bins)."""
    coefs = np.asarray(coefs)
    if coefs.shape[0] != pair.n_bins:
        raise ValueError(f"expected {pair.n_bins} coefficients, got {coefs.shape[0]}")
    return pair.synthesis @ coefs


def apply_analysis(pair, frames):
    frames = np.asarray(frames)
    if frames.shape[0] != pair.frame_length:
        raise ValueError(f"expected {pair.frame_length} samples, got {frames.shape[0]}")
    return pair.analysis @ frames


def projection_of_pair(pair):
    """``A T``, the coefficient-domain operator used to transport posteriors.

    Computed once per pair and cached.
    """
    if not pair._projection:
        P = pair.analysis @ pair.synthesis
        P.setflags(write=False)
        pair._projection.append(P)
    return pair._projection[0]
