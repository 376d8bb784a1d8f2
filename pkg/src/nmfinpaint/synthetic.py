"""Test signals drawn from the generative model itself."""

import numpy as np
from scipy.ndimage import gaussian_filter1d

from .framing import FrameSet, GapMask, make_sine_window, overlap_add
from .degradation import place_gaps
from .isnmf import NmfModel, mirror_rows
from .transforms import make_dft_pair

__all__ = ["sample_model", "sample_coefficients", "model_signal", "random_mask", "gap_mask"]


def sample_model(n_bins, rank, n_frames, rng, floor=1e-5, width=0.3):
    """Random NMF model whose templates are narrow spectral peaks.

    Template ``k`` is a Gaussian bump of ``width`` bins around a distinct
    random bin in the lower half, on top of a ``floor``, mirrored onto the
    upper half. Activations follow a smoothed log-normal random walk.
    """
    f = np.arange(n_bins)
    peaks = 2 + rng.choice(max(n_bins // 2 - 4, rank), rank, replace=False)
    W = floor + np.exp(-0.5 * ((f[:, None] - peaks[None, :]) / width) ** 2)
    W = mirror_rows(W)
    W /= np.linalg.norm(W, axis=0)
    H = np.exp(gaussian_filter1d(3.0 * rng.standard_normal((rank, n_frames)), 3.0, axis=1))
    return NmfModel(W, H)


def sample_coefficients(V, rng, coherent=True):
    """Conjugate-symmetric coefficients with ``E|s_fn|^2 = v_fn``.

    ``V`` must have mirrored rows; bins ``0`` and ``F/2`` are real. With
    ``coherent`` each bin reuses one complex amplitude across frames and
    advances its phase by ``pi f`` per frame, so frames overlapped at half
    length synthesize the same sinusoids instead of unrelated noise.
    """
    F, N = V.shape
    if coherent:
        amp = (rng.standard_normal(F) + 1j * rng.standard_normal(F)) / np.sqrt(2)
        amp[0] = rng.standard_normal()
        if F % 2 == 0:
            amp[F // 2] = rng.standard_normal()
        # a bin-f sinusoid advances by pi f radians per half-frame hop
        z = amp[:, None] * np.exp(1j * np.pi * np.outer(np.arange(F), np.arange(N)))
        z[0] = z[0].real
        if F % 2 == 0:
            z[F // 2] = z[F // 2].real
    else:
        z = (rng.standard_normal((F, N)) + 1j * rng.standard_normal((F, N))) / np.sqrt(2)
        z[0] = rng.standard_normal(N)
        if F % 2 == 0:
            z[F // 2] = rng.standard_normal(N)
    S = np.sqrt(V) * z
    f = np.arange(1, (F + 1) // 2)
    S[F - f] = S[f].conj()
    return S


def model_signal(frame_length=64, n_frames=40, rank=3, seed=0, coherent=True, **model_kw):
    """Real signal whose frames follow the model (unitary DFT pair).

    Returns ``(signal, model)``. The signal has ``(n_frames + 1) * hop``
    samples and is built by overlap-adding the synthesized frames.
    """
    rng = np.random.default_rng(seed)
    pair = make_dft_pair(frame_length)
    model = sample_model(frame_length, rank, n_frames, rng, **model_kw)
    S = sample_coefficients(model.V, rng, coherent)
    X = pair.synthesis @ S
    hop = frame_length // 2
    length = (n_frames - 1) * hop + frame_length
    fs = FrameSet(X, make_sine_window(frame_length), hop, length, ())
    y = overlap_add(fs)
    return y / np.max(np.abs(y)), model


def random_mask(length, fraction, rng):
    """Mask with ``round(fraction * length)`` uniformly drawn missing samples."""
    n = int(round(fraction * length))
    return GapMask.from_indices(rng.choice(length, size=n, replace=False), length)


def gap_mask(length, n_gaps, gap_length, rng, context):
    """Mask with ``n_gaps`` compact gaps, each at least ``context`` samples
    from the others and from the signal ends."""
    starts = place_gaps(length, n_gaps, gap_length, context, rng)
    idx = np.concatenate([np.arange(s, s + gap_length) for s in starts])
    return GapMask.from_indices(idx, length)
