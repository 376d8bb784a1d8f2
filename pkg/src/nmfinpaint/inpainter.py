"""scikit-learn style wrapper around :func:`run_estimator`."""

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted, column_or_1d

from .estimators import EstimatorConfig, run_estimator
from .framing import GapMask, n_frames_for
from .isnmf import NmfModel, init_model
from .transforms import make_dft_pair

__all__ = ["NMFInpainter"]


class NMFInpainter(TransformerMixin, BaseEstimator):
    """Fill missing audio samples with a low-rank Gaussian spectrogram model.

    ``X`` is a 1-D signal. Missing samples are marked with NaN or passed as
    ``mask`` (boolean array, index array or :class:`GapMask`).

    Parameters
    ----------
    algorithm : {"em-tf", "em-t", "am", "am-to-em-tf"}
    n_components : int
        NMF rank.
    frame_length : int
        Even window length; the hop is half of it.
    n_bins : int, optional
        ``frame_length`` (default) or twice that.
    max_iter, nmf_iter, switch_after : int
        Outer iterations, inner NMF iterations, AM iterations before EM-tf.
    random_state : int
    tol : float, optional
        Early stop on the relative solution change.

    Attributes
    ----------
    components_ : ndarray (n_bins, n_components)
        Spectral templates.
    activations_ : ndarray (n_components, n_frames)
    restored_ : ndarray
        The fitted signal with its gaps filled.
    trace_ : RunTrace
    n_iter_ : int
    """

    def __init__(self, algorithm="em-tf", n_components=20, frame_length=1024, n_bins=None,
                 max_iter=100, nmf_iter=10, switch_after=5, random_state=0, tol=None,
                 track_objective=False, allow_heuristic=False):
        self.algorithm = algorithm
        self.n_components = n_components
        self.frame_length = frame_length
        self.n_bins = n_bins
        self.max_iter = max_iter
        self.nmf_iter = nmf_iter
        self.switch_after = switch_after
        self.random_state = random_state
        self.tol = tol
        self.track_objective = track_objective
        self.allow_heuristic = allow_heuristic

    def _config(self):
        seed = self.random_state
        if seed is not None and not isinstance(seed, (int, np.integer)):
            raise ValueError("random_state must be an int or None")
        return EstimatorConfig(
            algorithm=self.algorithm, rank=self.n_components, outer_iters=self.max_iter,
            nmf_iters=self.nmf_iter, switch_after=self.switch_after, seed=seed,
            track_objective=self.track_objective, allow_heuristic=self.allow_heuristic,
            early_stop_tol=self.tol,
        )

    @staticmethod
    def _validate(X, mask):
        x = column_or_1d(np.asarray(X, dtype=np.float64), warn=True)
        nan = np.isnan(x)
        if np.isinf(x).any():
            raise ValueError("signal contains infinite values")
        if mask is None:
            gaps = nan
        elif isinstance(mask, GapMask):
            gaps = mask.as_boolean() | nan
        else:
            m = np.asarray(mask)
            if m.dtype == bool:
                if m.shape != x.shape:
                    raise ValueError("boolean mask must match the signal length")
                gaps = m | nan
            else:
                gaps = GapMask.from_indices(m, x.size).as_boolean() | nan
        gm = GapMask.from_boolean(gaps)
        return np.where(gaps, 0.0, x), gm

    def _run(self, X, mask, init=None, update_W=True):
        x, gm = self._validate(X, mask)
        pair = make_dft_pair(self.frame_length, self.n_bins)
        return run_estimator(x, gm, pair, self._config(), init=init, update_W=update_W)

    def fit(self, X, y=None, mask=None):
        """Learn the model on ``X`` and fill its gaps."""
        restored, model, trace = self._run(X, mask)
        self.components_ = model.W
        self.activations_ = model.H
        self.restored_ = restored
        self.trace_ = trace
        self.n_iter_ = len(trace)
        return self

    def fit_transform(self, X, y=None, mask=None):
        return self.fit(X, mask=mask).restored_

    def transform(self, X, mask=None):
        """Fill the gaps of ``X`` keeping the learned templates fixed.

        Activations are re-estimated from scratch for the new signal.
        """
        check_is_fitted(self, "components_")
        x, gm = self._validate(X, mask)
        pair = make_dft_pair(self.frame_length, self.n_bins)
        cfg = self._config()
        n_frames = n_frames_for(x.size, self.frame_length // 2)
        fresh = init_model(pair.n_bins, cfg.rank, n_frames, seed=cfg.seed)
        observed = x[~gm.as_boolean()]
        # same level matching as a cold start
        level = float(np.mean(observed ** 2)) if observed.size else 1.0
        H = fresh.H
        V_mean = float(np.mean(self.components_ @ H))
        if level > 0 and V_mean > 0:
            H = H * (level / V_mean)
        init = NmfModel(self.components_, H)
        restored, _, _ = run_estimator(x, gm, pair, cfg, init=init, update_W=False)
        return restored
