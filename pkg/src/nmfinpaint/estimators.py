"""Maximum-likelihood inpainting under the Gaussian low-rank spectrogram model.

Each frame ``x_n = T s_n`` has independent coefficients
``s_fn ~ CN(0, v_fn)`` with ``V = W H``. Three estimators fit ``W, H`` from
the observed samples:

* ``em-tf``: EM with the coefficients as complete data. The M-step fits
  IS-NMF to the posterior power ``|E s|^2 + Var s``.
* ``em-t``: EM with the time frames as complete data. The posterior is
  carried through ``A T`` before forming the power.
* ``am``: the missing samples are parameters. Each iteration fills them
  with their conditional mean and fits IS-NMF to ``|T^{-1} x|^2``.

``am-to-em-tf`` runs ``am`` for a few iterations and then switches to
``em-tf`` on the same model.
"""

import logging
import time
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import linalg

from .exceptions import NumericalBreakdown, UnsupportedConfiguration
from .framing import GapMask, frame_signal, make_sine_window, overlap_add, window_coverage
from .isnmf import EPS, NmfModel, init_model, multiplicative_update
from .metrics import relative_change, snr
from .transforms import projection_of_pair

__all__ = [
    "ALGORITHMS",
    "PosteriorFrame",
    "EstimatorConfig",
    "IterationRecord",
    "IterationState",
    "RunTrace",
    "e_step_frame",
    "posterior_power_tf",
    "transport_posterior",
    "am_signal_update",
    "neg_log_likelihood",
    "run_estimator",
]

logger = logging.getLogger(__name__)

ALGORITHMS = ("em-tf", "em-t", "am", "am-to-em-tf")
METHODS = ("auto", "dense", "precision")

# Condition-number bound (estimated from the Cholesky diagonal) above which a
# factorization is rejected.
MAX_COND = 1e14


@dataclass(frozen=True)
class PosteriorFrame:
    """Posterior of one frame's coefficients: mean and (diagonal) covariance."""

    mean: np.ndarray
    cov_diag: np.ndarray
    cov_full: np.ndarray = None


def _is_fast_dft(pair):
    return pair.case == "unitary-inverse" and getattr(pair, "kind", "") == "dft"


def _mirrored(d):
    return np.array_equal(d, d[-np.arange(d.size) % d.size])


def _cholesky(C, frame=None):
    """Lower Cholesky factor of ``C`` or None when it is unusable."""
    try:
        L = linalg.cholesky(C, lower=True, check_finite=False)
    except linalg.LinAlgError:
        return None
    diag = np.abs(np.diag(L))
    if diag.min() <= 0 or (diag.max() / diag.min()) ** 2 > MAX_COND:
        return None
    return L


def _factor_observed(BD, B, ridge, fallback_ridge, frame):
    """Cholesky factor of ``C11 = B D B^* (+ ridge)``.

    ``ridge`` is always added; ``fallback_ridge`` only when the plain
    factorization fails. Both are relative to ``trace(C11) / |obs|``.
    """
    C = BD @ B.conj().T
    C = 0.5 * (C + C.conj().T)
    o = C.shape[0]
    scale = float(np.trace(C).real) / o
    if ridge:
        C = C + ridge * scale * np.eye(o)
    L = _cholesky(C, frame)
    if L is None and fallback_ridge:
        logger.debug("frame %s: adding fallback ridge %.1e", frame, fallback_ridge)
        L = _cholesky(C + fallback_ridge * scale * np.eye(o), frame)
    if L is None:
        raise NumericalBreakdown("observed-sample covariance is not positive definite", frame=frame)
    return L


def _check_observed(pair, d, observed, values):
    d = np.asarray(d, dtype=np.float64)
    observed = np.asarray(observed, dtype=np.int64)
    values = np.asarray(values, dtype=np.complex128)
    if d.shape != (pair.n_bins,):
        raise ValueError(f"variance vector must have {pair.n_bins} entries, got {d.shape}")
    if np.any(d < EPS) or not np.all(np.isfinite(d)):
        raise ValueError(f"variances must be finite and >= {EPS}")
    if observed.shape != values.shape:
        raise ValueError("observed indices and values differ in length")
    if observed.size and (observed.min() < 0 or observed.max() >= pair.frame_length):
        raise ValueError("observed index outside the frame")
    return d, observed, values


def _e_step_dense(pair, d, observed, values, need_full_cov, mean_only, ridge, fallback_ridge, frame):
    B = pair.synthesis[observed]
    BD = B * d
    L = _factor_observed(BD, B, ridge, fallback_ridge, frame)
    if mean_only:
        # C11^{-1} x first, then one matrix-vector product
        z = linalg.cho_solve((L, True), values, check_finite=False)
        return PosteriorFrame(BD.conj().T @ z, None)
    # Z = C11^{-1} M T D, so that the Wiener gain is G = Z^*
    Z = linalg.cho_solve((L, True), BD, check_finite=False)
    mean = Z.conj().T @ values
    cov_diag = d - np.einsum("of,of->f", Z.conj(), BD).real
    cov_full = None
    if need_full_cov:
        cov_full = np.diag(d).astype(np.complex128) - Z.conj().T @ BD
        cov_full = 0.5 * (cov_full + cov_full.conj().T)
    return PosteriorFrame(mean, np.maximum(cov_diag, 0.0), cov_full)


def _e_step_precision(pair, d, observed, values, need_full_cov, mean_only, frame):
    """Unitary-DFT posterior computed in the missing-sample domain.

    ``T D T^*`` is circulant, so its inverse ``Q`` is the circulant with
    spectrum ``1/d``. Conditioning the frame on its observed samples then
    only needs ``Q_mm`` (missing x missing) and one FFT-based product.
    """
    W = pair.frame_length
    missing = np.setdiff1d(np.arange(W), observed, assume_unique=True)
    x = np.zeros(W, dtype=np.complex128)
    x[observed] = values
    m = missing.size
    if m == 0:
        mean = np.fft.fft(x) / np.sqrt(W)
        zeros = np.zeros(W)
        return PosteriorFrame(mean, None if mean_only else zeros,
                              np.zeros((W, W), complex) if need_full_cov else None)
    q = np.fft.ifft(1.0 / d)
    Qx = np.fft.ifft(np.fft.fft(x) / d)
    if _mirrored(d):
        # Q is real; keep real frames exactly real
        q = q.real
        if not np.any(x.imag):
            Qx = Qx.real
    Qmm = q[(missing[:, None] - missing[None, :]) % W]
    Qmm = 0.5 * (Qmm + Qmm.conj().T)
    L = _cholesky(Qmm, frame)
    if L is None:
        return None
    x[missing] = -linalg.cho_solve((L, True), Qx[missing], check_finite=False)
    mean = np.fft.fft(x) / np.sqrt(W)
    if mean_only:
        return PosteriorFrame(mean, None)
    S = linalg.cho_solve((L, True), np.eye(m), check_finite=False)
    # diag(A_m S A_m^*)[f] = fft(c)[f] / W with c[k] summing S over lags k
    lag = (missing[:, None] - missing[None, :]) % W
    c = np.bincount(lag.ravel(), weights=S.real.ravel(), minlength=W) + 1j * np.bincount(
        lag.ravel(), weights=S.imag.ravel(), minlength=W
    )
    cov_diag = np.maximum(np.fft.fft(c).real / W, 0.0)
    cov_full = None
    if need_full_cov:
        Am = pair.analysis[:, missing]
        cov_full = Am @ S @ Am.conj().T
        cov_full = 0.5 * (cov_full + cov_full.conj().T)
    return PosteriorFrame(mean, cov_diag, cov_full)


def e_step_frame(pair, d, observed, values, need_full_cov=False, ridge=0.0,
                 fallback_ridge=1e-8, method="auto", frame=None, mean_only=False):
    """Posterior of the coefficients of one frame given its observed samples.

    Parameters
    ----------
    pair : TransformPair
    d : ndarray, shape (F,)
        Prior variances of the coefficients (column of ``W H``).
    observed : ndarray of int
        Frame-local positions of the observed samples.
    values : ndarray
        Observed (windowed) sample values.
    need_full_cov : bool
        Also return the full posterior covariance.
    ridge, fallback_ridge : float
        Diagonal loading of the observed covariance, relative to its mean
        diagonal; ``ridge`` is always applied, ``fallback_ridge`` only if
        the unloaded matrix cannot be factorized.
    method : {"auto", "dense", "precision"}
        ``dense`` solves against the observed covariance; ``precision``
        (unitary DFT pairs only) works on the missing samples instead.
        ``auto`` picks ``precision`` when possible.
    mean_only : bool
        Skip the covariance (``cov_diag`` is None).
    """
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}")
    d, observed, values = _check_observed(pair, d, observed, values)
    F = pair.n_bins
    if observed.size == 0:
        return PosteriorFrame(
            np.zeros(F, dtype=np.complex128),
            None if mean_only else d.copy(),
            np.diag(d).astype(np.complex128) if need_full_cov else None,
        )
    use_precision = method == "precision" or (method == "auto" and ridge == 0.0)
    if use_precision:
        if not _is_fast_dft(pair):
            if method == "precision":
                raise UnsupportedConfiguration("precision method needs a unitary DFT pair")
        else:
            post = _e_step_precision(pair, d, observed, values, need_full_cov, mean_only, frame)
            if post is not None:
                return post
            logger.debug("frame %s: precision path failed, using dense solve", frame)
    return _e_step_dense(pair, d, observed, values, need_full_cov, mean_only,
                         ridge, fallback_ridge, frame)


def posterior_power_tf(post):
    """Posterior second moment ``|mean|^2 + diag(cov)`` of each coefficient."""
    return np.abs(post.mean) ** 2 + post.cov_diag


def transport_posterior(pair, post):
    """Posterior of ``A T s``: mean ``P m`` and covariance ``P S P^*``."""
    if post.cov_full is None:
        raise ValueError("transport needs the full posterior covariance")
    P = projection_of_pair(pair)
    mean = P @ post.mean
    cov = P @ post.cov_full @ P.conj().T
    cov = 0.5 * (cov + cov.conj().T)
    return PosteriorFrame(mean, np.maximum(np.diag(cov).real, 0.0), cov)


def am_signal_update(pair, d, observed, values, allow_heuristic=False, **kwargs):
    """Fill the missing samples of a frame with their conditional mean.

    Returns ``(frame, coefs)``: the completed frame, with observed samples
    kept verbatim, and its analysis ``A frame``. For non-invertible pairs
    the analysis is a heuristic and must be requested explicitly.
    """
    if not pair.invertible and not allow_heuristic:
        raise UnsupportedConfiguration(
            "AM needs an invertible synthesis operator; pass allow_heuristic=True to "
            "use the analysis operator instead"
        )
    d, observed, values = _check_observed(pair, d, observed, values)
    post = e_step_frame(pair, d, observed, values, mean_only=True, **kwargs)
    frame = _synthesize(pair, post.mean)
    frame[observed] = values
    return frame, _analyze(pair, frame)


def _analyze(pair, X):
    if _is_fast_dft(pair):
        return np.fft.fft(X, axis=0) / np.sqrt(pair.frame_length)
    return pair.analysis @ X


def _synthesize(pair, S):
    if _is_fast_dft(pair):
        return np.fft.ifft(S, axis=0) * np.sqrt(pair.frame_length)
    return pair.synthesis @ S


def _nll_frame_observed(pair, d, observed, values, method, ridge, fallback_ridge, frame):
    o = observed.size
    if o == 0:
        return 0.0
    if method != "dense" and _is_fast_dft(pair) and ridge == 0.0:
        # log det C11 = sum log d + log det Q_mm, and by the Schur complement
        # x^* C11^{-1} x = x^* Q x - (Q_mo x)^* Q_mm^{-1} (Q_mo x)
        W = pair.frame_length
        missing = np.setdiff1d(np.arange(W), observed, assume_unique=True)
        x = np.zeros(W, dtype=np.complex128)
        x[observed] = values
        fx = np.fft.fft(x)
        quad = float(np.sum(np.abs(fx) ** 2 / d)) / W
        logdet = float(np.sum(np.log(d)))
        if missing.size:
            q = np.fft.ifft(1.0 / d)
            Qmm = q[(missing[:, None] - missing[None, :]) % W]
            L = _cholesky(0.5 * (Qmm + Qmm.conj().T), frame)
            if L is not None:
                u = np.fft.ifft(fx / d)[missing]
                y = linalg.solve_triangular(L, u, lower=True, check_finite=False)
                quad -= float(np.vdot(y, y).real)
                logdet += 2.0 * float(np.sum(np.log(np.diag(L).real)))
                return o * np.log(np.pi) + logdet + quad
        else:
            return o * np.log(np.pi) + logdet + quad
    B = pair.synthesis[observed]
    L = _factor_observed(B * d, B, ridge, fallback_ridge, frame)
    y = linalg.solve_triangular(L, values, lower=True, check_finite=False)
    logdet = 2.0 * float(np.sum(np.log(np.diag(L).real)))
    return o * np.log(np.pi) + logdet + float(np.vdot(y, y).real)


def neg_log_likelihood(objective, frames, pair, model, filled=None, method="auto",
                       ridge=0.0, fallback_ridge=1e-8):
    """Negative log-likelihood of the data under ``model``.

    ``objective="observed"`` is the marginal likelihood of the observed
    samples, the quantity EM decreases. ``objective="joint"`` treats the
    filled-in missing samples as parameters (``filled``: ``(W, N)`` frames)
    and needs an invertible pair; it reduces to
    ``sum(log v + |T^{-1} x|^2 / v)`` plus a constant.
    """
    V = model.V
    if V.shape != (pair.n_bins, frames.n_frames):
        raise ValueError(f"model shape {V.shape} does not match frames/transform")
    if objective == "observed":
        total = 0.0
        for n in range(frames.n_frames):
            total += _nll_frame_observed(pair, V[:, n], frames.observed[n],
                                         frames.observed_values(n), method, ridge,
                                         fallback_ridge, n)
        return total
    if objective == "joint":
        if not pair.invertible:
            raise UnsupportedConfiguration("the joint objective needs an invertible pair")
        X = frames.frames if filled is None else np.asarray(filled)
        S = _analyze(pair, X)
        W, N = X.shape
        # |det T|^2 = 1 for the unitary pair
        _, logabsdet = np.linalg.slogdet(pair.synthesis)
        const = N * (W * np.log(np.pi) + 2.0 * logabsdet)
        return float(np.sum(np.log(V)) + np.sum(np.abs(S) ** 2 / V) + const)
    raise ValueError(f"objective must be 'observed' or 'joint', got {objective!r}")


@dataclass(frozen=True)
class EstimatorConfig:
    """Settings of one restoration run.

    ``ridge`` is the relative diagonal loading added when an observed
    covariance cannot be factorized as is. ``early_stop_tol`` stops the
    run once the relative solution change stays below it for three
    consecutive iterations.
    """

    algorithm: str = "em-tf"
    rank: int = 20
    outer_iters: int = 100
    nmf_iters: int = 10
    switch_after: int = 5
    seed: int = 0
    ridge: float = 1e-8
    track_objective: bool = False
    allow_heuristic: bool = False
    symmetric_init: bool = True
    early_stop_tol: float = None
    method: str = "auto"

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"algorithm must be one of {ALGORITHMS}, got {self.algorithm!r}")
        if self.rank < 1 or self.outer_iters < 1 or self.nmf_iters < 1:
            raise ValueError("rank, outer_iters and nmf_iters must be >= 1")
        if self.algorithm == "am-to-em-tf" and not 0 <= self.switch_after < self.outer_iters:
            raise ValueError("switch_after must satisfy 0 <= switch_after < outer_iters")
        if self.ridge < 0:
            raise ValueError("ridge must be nonnegative")
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}")

    def step(self, iteration):
        """Algorithm used at 1-based ``iteration``."""
        if self.algorithm == "am-to-em-tf":
            return "am" if iteration <= self.switch_after else "em-tf"
        return self.algorithm

    def to_dict(self):
        return asdict(self)


@dataclass
class IterationRecord:
    iteration: int
    step: str
    snr_gap_db: float = None
    nll: float = None
    rel_solution_change: float = None
    rel_objective_change: float = None
    wall_ms: float = None


@dataclass
class RunTrace:
    records: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.records)

    def column(self, name):
        return np.array([getattr(r, name) if getattr(r, name) is not None else np.nan
                         for r in self.records], dtype=float)


@dataclass
class IterationState:
    """Snapshot handed to the per-iteration callback of :func:`run_estimator`.

    ``coefs`` and ``power`` come from this iteration's E-step (or signal
    update) and ``model`` is the one that produced them; ``new_model`` is
    the result of the following NMF update.
    """

    iteration: int
    step: str
    coefs: np.ndarray
    power: np.ndarray
    model: NmfModel
    new_model: NmfModel
    restored: np.ndarray


def _validate_pair(pair, config):
    uses_am = config.algorithm == "am" or (
        config.algorithm == "am-to-em-tf" and config.switch_after > 0)
    if uses_am and not pair.invertible and not config.allow_heuristic:
        raise UnsupportedConfiguration(
            f"{config.algorithm} needs an invertible synthesis operator "
            f"(got {pair.case}); enable allow_heuristic to override"
        )


def _initial_model(frames, pair, config, init):
    if init is not None:
        if init.V.shape != (pair.n_bins, frames.n_frames):
            raise ValueError("initial model does not match frames/transform")
        return init
    model = init_model(pair.n_bins, config.rank, frames.n_frames, seed=config.seed,
                       symmetric=config.symmetric_init)
    # match the overall level of V to the observed sample power
    powers = [np.abs(frames.observed_values(n)) ** 2 for n in range(frames.n_frames)]
    level = float(np.mean(np.concatenate(powers)))
    if level > 0:
        model = NmfModel(model.W, model.H * (level / float(np.mean(model.V))))
    return model


def _frame_pass(step, frames, pair, model, config):
    """E-step (or AM signal update) over all frames.

    Returns coefficient estimates ``S``, the power matrix ``P`` and the
    estimated frames.
    """
    V = np.maximum(model.V, EPS)
    F, N = V.shape
    S = np.empty((F, N), dtype=np.complex128)
    P = np.empty((F, N))
    kw = dict(fallback_ridge=config.ridge, method=config.method)
    X = None
    if step == "am":
        X = np.empty((pair.frame_length, N), dtype=np.complex128)
    for n in range(N):
        obs, vals = frames.observed[n], frames.observed_values(n)
        if step == "em-tf":
            post = e_step_frame(pair, V[:, n], obs, vals, frame=n, **kw)
            S[:, n] = post.mean
            P[:, n] = posterior_power_tf(post)
        elif step == "em-t":
            post = e_step_frame(pair, V[:, n], obs, vals, need_full_cov=True,
                                frame=n, **kw)
            post = transport_posterior(pair, post)
            S[:, n] = post.mean
            P[:, n] = posterior_power_tf(post)
        else:
            X[:, n], S[:, n] = am_signal_update(pair, V[:, n], obs, vals,
                                                allow_heuristic=config.allow_heuristic, **kw)
            P[:, n] = np.abs(S[:, n]) ** 2
    if config.symmetric_init:
        # exact arithmetic keeps P mirrored; round-off does not
        P = 0.5 * (P + P[-np.arange(F) % F])
    if X is None:
        X = _synthesize(pair, S)
    return S, P, X


def run_estimator(signal, mask, pair, config=None, ground_truth=None, window=None,
                  callback=None, init=None, update_W=True):
    """Restore the missing samples of ``signal``.

    Parameters
    ----------
    signal : array-like of float
        Degraded signal; values at missing positions are ignored.
    mask : GapMask
    pair : TransformPair
        Its frame length sets the framing; the hop is half of it.
    config : EstimatorConfig, optional
    ground_truth : array-like, optional
        Clean signal, used for the per-iteration gap SNR.
    window : ndarray, optional
        Analysis/synthesis window, sine by default.
    callback : callable, optional
        Called with an :class:`IterationState` after every iteration.
    init : NmfModel, optional
        Starting model instead of the seeded random one.
    update_W : bool
        Keep the spectral templates fixed when False.

    Returns
    -------
    restored : ndarray
        Restored signal, equal to ``signal`` on every observed sample.
    model : NmfModel
    trace : RunTrace
    """
    config = config or EstimatorConfig()
    y = np.asarray(signal, dtype=np.float64).ravel()
    mask = mask if mask is not None else GapMask.empty(y.size)
    _validate_pair(pair, config)
    W = pair.frame_length
    if W % 2:
        raise ValueError("frame length must be even")
    if window is None:
        window = make_sine_window(W)
    frames = frame_signal(y, mask, W, W // 2, window)
    truth = None if ground_truth is None else np.asarray(ground_truth, dtype=np.float64).ravel()
    if truth is not None and truth.shape != y.shape:
        raise ValueError("ground truth length differs from the signal")

    is_missing = mask.as_boolean()
    observed_signal = np.where(is_missing, 0.0, y)
    # samples near the start are covered by a single window
    gain = window_coverage(frames)
    gain = np.where(gain > 1e-12, gain, 1.0)

    model = _initial_model(frames, pair, config, init)
    trace = RunTrace(meta={
        "algorithm": config.algorithm,
        "case": pair.case,
        "heuristic": bool(config.allow_heuristic and not pair.invertible
                          and config.algorithm in ("am", "am-to-em-tf")),
        "max_imag_ratio": 0.0,
        "n_frames": frames.n_frames,
    })
    prev_restored = observed_signal
    prev_obj = None
    calm = 0
    restored = observed_signal.copy()

    for it in range(1, config.outer_iters + 1):
        t0 = time.perf_counter()
        step = config.step(it)
        try:
            S, P, X = _frame_pass(step, frames, pair, model, config)
            new_model = multiplicative_update(model, P, config.nmf_iters, update_W=update_W)
            nll = None
            if config.track_objective:
                if step == "am":
                    nll = neg_log_likelihood("joint", frames, pair, new_model, filled=X)
                else:
                    nll = neg_log_likelihood("observed", frames, pair, new_model,
                                             method=config.method,
                                             fallback_ridge=config.ridge)
        except NumericalBreakdown as exc:
            raise NumericalBreakdown("factorization failed", frame=exc.frame,
                                     iteration=it) from exc

        re_max = float(np.max(np.abs(X.real))) if X.size else 0.0
        im_ratio = float(np.max(np.abs(X.imag))) / re_max if re_max > 0 else 0.0
        trace.meta["max_imag_ratio"] = max(trace.meta["max_imag_ratio"], im_ratio)
        estimate = overlap_add(frames.with_frames(X)) / gain
        restored = np.where(is_missing, estimate, y)

        rec = IterationRecord(iteration=it, step=step, nll=nll)
        if np.any(prev_restored):
            rec.rel_solution_change = relative_change(prev_restored, restored)
        if nll is not None and prev_obj is not None and prev_obj != 0:
            rec.rel_objective_change = abs(nll - prev_obj) / abs(prev_obj)
        if truth is not None and mask.n_missing and np.any(truth[mask.missing]):
            rec.snr_gap_db = snr(truth, restored, mask.missing)
        rec.wall_ms = 1e3 * (time.perf_counter() - t0)
        trace.records.append(rec)
        logger.debug("iteration %d (%s): %s", it, step, rec)

        if callback is not None:
            callback(IterationState(it, step, S, P, model, new_model, restored))

        model = new_model
        prev_restored = restored
        prev_obj = nll if nll is not None else prev_obj
        if config.early_stop_tol is not None and rec.rel_solution_change is not None:
            calm = calm + 1 if rec.rel_solution_change < config.early_stop_tol else 0
            if calm >= 3:
                trace.meta["early_stop"] = it
                break

    return restored, model, trace
