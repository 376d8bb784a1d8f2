import numpy as np
import pytest

from nmfinpaint.estimators import (
    EstimatorConfig, am_signal_update, e_step_frame, neg_log_likelihood,
    posterior_power_tf, run_estimator, transport_posterior,
)
from nmfinpaint.exceptions import NumericalBreakdown, UnsupportedConfiguration
from nmfinpaint.framing import FrameSet, GapMask, frame_signal, make_sine_window
from nmfinpaint.isnmf import NmfModel, init_model, is_divergence
from nmfinpaint.synthetic import model_signal, random_mask
from nmfinpaint.transforms import make_dft_pair, make_pinv_pair
from oracles import gaussian_conditioning, min_norm_mean, observed_nll, random_instance


def _complex(rng, n):
    return rng.standard_normal(n) + 1j * rng.standard_normal(n)


@pytest.mark.parametrize("method", ["dense", "precision", "auto"])
@pytest.mark.parametrize("mirrored", [False, True])
def test_e_step_matches_conditioning_oracle(method, mirrored):
    rng = np.random.default_rng(11)
    for _ in range(20):
        W = int(rng.choice([4, 6, 8]))
        pair = make_dft_pair(W)
        d, obs = random_instance(rng, W, mirrored=mirrored)
        x = _complex(rng, obs.size)
        post = e_step_frame(pair, d, obs, x, need_full_cov=True, method=method)
        mean, cov = gaussian_conditioning(pair.synthesis, d, obs, x)
        np.testing.assert_allclose(post.mean, mean, atol=1e-10, rtol=0)
        np.testing.assert_allclose(post.cov_full, cov, atol=1e-10, rtol=0)
        np.testing.assert_allclose(post.cov_diag, np.diag(cov).real, atol=1e-10, rtol=0)
        np.testing.assert_allclose(post.mean, min_norm_mean(pair.synthesis, d, obs, x), atol=1e-9)


def test_e_step_redundant_pair_matches_oracle():
    rng = np.random.default_rng(5)
    pair = make_dft_pair(6, 12)
    d = rng.uniform(0.1, 2, 12)
    obs = np.array([0, 2, 3, 5])
    x = _complex(rng, 4)
    post = e_step_frame(pair, d, obs, x, need_full_cov=True)
    mean, cov = gaussian_conditioning(pair.synthesis, d, obs, x)
    np.testing.assert_allclose(post.mean, mean, atol=1e-10)
    np.testing.assert_allclose(post.cov_full, cov, atol=1e-10)


def test_e_step_full_information():
    rng = np.random.default_rng(0)
    pair = make_dft_pair(8)
    x = rng.standard_normal(8)
    post = e_step_frame(pair, rng.uniform(0.1, 1, 8), np.arange(8), x)
    np.testing.assert_allclose(post.mean, pair.analysis @ x, atol=1e-12)
    np.testing.assert_allclose(post.cov_diag, 0, atol=1e-10)


def test_e_step_no_information():
    d = np.linspace(0.5, 1.5, 8)
    post = e_step_frame(make_dft_pair(8), d, np.array([], int), np.array([]), need_full_cov=True)
    assert not np.any(post.mean)
    np.testing.assert_array_equal(post.cov_diag, d)


@pytest.mark.parametrize("method", ["dense", "precision"])
def test_posterior_reproduces_observed_samples(method):
    rng = np.random.default_rng(3)
    pair = make_dft_pair(16)
    d, obs = random_instance(rng, 16, n_obs=9)
    x = rng.standard_normal(9)
    post = e_step_frame(pair, d, obs, x, method=method)
    np.testing.assert_allclose((pair.synthesis @ post.mean)[obs], x, atol=1e-8)
    assert np.all(post.cov_diag <= d + 1e-10)


def test_ridge_is_applied_when_requested():
    rng = np.random.default_rng(2)
    pair = make_dft_pair(8)
    d, obs = random_instance(rng, 8, n_obs=5)
    x = rng.standard_normal(5)
    exact = e_step_frame(pair, d, obs, x, method="dense")
    loaded = e_step_frame(pair, d, obs, x, ridge=1e-3, method="dense")
    assert not np.allclose(exact.mean, loaded.mean, atol=1e-8)


def test_breakdown_carries_frame():
    pair = make_dft_pair(4)
    d = np.array([1e7, 1e-10, 1e-10, 1e-10])
    # three constraints, one coefficient carrying nearly all the variance
    with pytest.raises(NumericalBreakdown) as err:
        e_step_frame(pair, d, np.arange(3), np.array([1.0, -1.0, 2.0]),
                     method="dense", fallback_ridge=0.0, frame=7)
    assert err.value.frame == 7


def test_input_validation():
    pair = make_dft_pair(4)
    with pytest.raises(ValueError):
        e_step_frame(pair, np.ones(3), [0], [1.0])
    with pytest.raises(ValueError):
        e_step_frame(pair, np.ones(4), [4], [1.0])
    with pytest.raises(ValueError):
        e_step_frame(pair, np.zeros(4), [0], [1.0])
    with pytest.raises(UnsupportedConfiguration):
        e_step_frame(make_dft_pair(4, 8), np.ones(8), [0], [1.0], method="precision")


def test_posterior_power_against_second_moment():
    rng = np.random.default_rng(8)
    pair = make_dft_pair(6)
    d, obs = random_instance(rng, 6, n_obs=3)
    x = _complex(rng, 3)
    p = posterior_power_tf(e_step_frame(pair, d, obs, x))
    mean, cov = gaussian_conditioning(pair.synthesis, d, obs, x)
    np.testing.assert_allclose(p, np.abs(mean) ** 2 + np.diag(cov).real, atol=1e-10)


def test_transport_identity_for_unitary():
    rng = np.random.default_rng(1)
    pair = make_dft_pair(6)
    d, obs = random_instance(rng, 6)
    post = e_step_frame(pair, d, obs, _complex(rng, obs.size), need_full_cov=True)
    moved = transport_posterior(pair, post)
    np.testing.assert_allclose(moved.mean, post.mean, atol=1e-12)
    np.testing.assert_allclose(moved.cov_full, post.cov_full, atol=1e-12)


def test_transport_fixes_range_and_zero_covariance():
    from nmfinpaint.estimators import PosteriorFrame
    rng = np.random.default_rng(4)
    pair = make_dft_pair(4, 8)
    m = pair.analysis @ _complex(rng, 4)
    post = PosteriorFrame(m, np.zeros(8), np.zeros((8, 8), complex))
    moved = transport_posterior(pair, post)
    np.testing.assert_allclose(moved.mean, m, atol=1e-10)
    assert not np.any(moved.cov_full)
    with pytest.raises(ValueError):
        transport_posterior(pair, PosteriorFrame(m, np.zeros(8)))


def test_am_update_consistency():
    rng = np.random.default_rng(6)
    pair = make_dft_pair(8)
    d, obs = random_instance(rng, 8, n_obs=5, mirrored=True)
    x = rng.standard_normal(5)
    frame, coefs = am_signal_update(pair, d, obs, x)
    np.testing.assert_array_equal(frame[obs], x)
    mean = e_step_frame(pair, d, obs, x).mean
    np.testing.assert_allclose(coefs, mean, atol=1e-12)
    full = rng.standard_normal(8)
    frame, _ = am_signal_update(pair, d, np.arange(8), full)
    np.testing.assert_array_equal(frame, full)
    frame, _ = am_signal_update(pair, d, np.array([], int), np.array([]))
    assert not np.any(frame)


def test_am_needs_invertible_pair():
    pair = make_dft_pair(4, 8)
    with pytest.raises(UnsupportedConfiguration):
        am_signal_update(pair, np.ones(8), [0, 1], [1.0, 2.0])
    frame, _ = am_signal_update(pair, np.ones(8), [0, 1], [1.0, 2.0], allow_heuristic=True)
    assert frame.shape == (4,)


def test_observed_nll_closed_form():
    pair = make_dft_pair(2)
    x = np.array([0.3, -1.2])
    fs = FrameSet(x[:, None].astype(complex), make_sine_window(2), 1, 2, (np.arange(2),))
    model = NmfModel(np.ones((2, 1)), np.ones((1, 1)))
    for method in ("dense", "auto"):
        nll = neg_log_likelihood("observed", fs, pair, model, method=method)
        assert nll == pytest.approx(2 * np.log(np.pi) + x @ x, rel=1e-12)


@pytest.mark.parametrize("method", ["dense", "auto"])
def test_observed_nll_against_density(method):
    rng = np.random.default_rng(9)
    y = rng.standard_normal(40)
    mask = GapMask.from_indices(rng.choice(40, 15, replace=False), 40)
    fs = frame_signal(y, mask, 8, 4)
    pair = make_dft_pair(8)
    model = init_model(8, 2, fs.n_frames, seed=0)
    expected = sum(
        observed_nll(pair.synthesis, model.V[:, n], fs.observed[n], fs.observed_values(n))
        for n in range(fs.n_frames)
    )
    assert neg_log_likelihood("observed", fs, pair, model, method=method) == pytest.approx(expected, rel=1e-10)


def test_joint_objective_is_is_divergence_up_to_constant():
    rng = np.random.default_rng(10)
    y = rng.standard_normal(64)
    fs = frame_signal(y, None, 8, 4)
    pair = make_dft_pair(8)
    P = np.abs(pair.analysis @ fs.frames) ** 2
    a = init_model(8, 2, fs.n_frames, seed=1)
    b = init_model(8, 2, fs.n_frames, seed=2)
    ja = neg_log_likelihood("joint", fs, pair, a)
    jb = neg_log_likelihood("joint", fs, pair, b)
    assert ja - jb == pytest.approx(is_divergence(P, a.V) - is_divergence(P, b.V), rel=1e-9)
    const = ja - is_divergence(P, a.V)
    W, N = fs.frames.shape
    assert const == pytest.approx(np.sum(np.log(P)) + P.size + N * W * np.log(np.pi), rel=1e-9)
    with pytest.raises(UnsupportedConfiguration):
        neg_log_likelihood("joint", fs, make_dft_pair(8, 16), init_model(16, 2, fs.n_frames))
    with pytest.raises(ValueError):
        neg_log_likelihood("other", fs, pair, a)


def test_config_validation_and_schedule():
    with pytest.raises(ValueError):
        EstimatorConfig(algorithm="gd")
    with pytest.raises(ValueError):
        EstimatorConfig(algorithm="am-to-em-tf", outer_iters=5, switch_after=5)
    cfg = EstimatorConfig(algorithm="am-to-em-tf", outer_iters=8, switch_after=5)
    assert [cfg.step(i) for i in range(1, 9)] == ["am"] * 5 + ["em-tf"] * 3


@pytest.mark.parametrize("algorithm", ["em-tf", "em-t", "am", "am-to-em-tf"])
def test_gap_free_run_returns_input(algorithm):
    y, _ = model_signal(16, 10, 2, seed=0)
    cfg = EstimatorConfig(algorithm=algorithm, rank=2, outer_iters=1 if algorithm != "am-to-em-tf" else 2,
                          switch_after=1)
    restored, _, trace = run_estimator(y, GapMask.empty(y.size), make_dft_pair(16), cfg)
    np.testing.assert_array_equal(restored, y)
    assert len(trace) == cfg.outer_iters


def test_run_restores_and_keeps_observed():
    y, _ = model_signal(32, 20, 2, seed=3)
    mask = random_mask(y.size, 0.3, np.random.default_rng(0))
    degraded = np.where(mask.as_boolean(), 123.0, y)
    cfg = EstimatorConfig(rank=2, outer_iters=10, track_objective=True)
    restored, model, trace = run_estimator(degraded, mask, make_dft_pair(32), cfg, ground_truth=y)
    np.testing.assert_array_equal(restored[mask.observed], y[mask.observed])
    assert trace.column("snr_gap_db")[-1] > 10
    assert model.W.shape == (32, 2)
    assert trace.records[0].rel_objective_change is None
    assert all(r.rel_objective_change is not None for r in trace.records[1:])


def test_am_rejected_for_redundant_pair():
    y, _ = model_signal(16, 10, 2, seed=0)
    mask = GapMask.from_indices([40, 41], y.size)
    with pytest.raises(UnsupportedConfiguration):
        run_estimator(y, mask, make_dft_pair(16, 32), EstimatorConfig(algorithm="am", rank=2))
    _, _, trace = run_estimator(y, mask, make_dft_pair(16, 32),
                                EstimatorConfig(algorithm="am", rank=2, outer_iters=2,
                                                allow_heuristic=True))
    assert trace.meta["heuristic"]


def test_em_t_on_pinv_pair_runs():
    y, _ = model_signal(8, 12, 2, seed=2)
    mask = GapMask.from_indices([20, 21, 22], y.size)
    T = make_dft_pair(8, 16).synthesis
    pair = make_pinv_pair(T, of="synthesis")
    restored, _, _ = run_estimator(y, mask, pair, EstimatorConfig(algorithm="em-t", rank=2, outer_iters=3))
    assert np.all(np.isfinite(restored))


def test_early_stop():
    y, _ = model_signal(16, 12, 2, seed=1)
    mask = GapMask.from_indices([50, 51], y.size)
    cfg = EstimatorConfig(rank=2, outer_iters=200, early_stop_tol=1e-3)
    _, _, trace = run_estimator(y, mask, make_dft_pair(16), cfg)
    assert len(trace) < 200 and trace.meta["early_stop"] == len(trace)


def test_fixed_templates():
    y, _ = model_signal(16, 12, 2, seed=1)
    mask = GapMask.from_indices([50, 51], y.size)
    init = init_model(16, 2, 13, seed=4)
    _, model, _ = run_estimator(y, mask, make_dft_pair(16), EstimatorConfig(rank=2, outer_iters=3),
                                init=init, update_W=False)
    np.testing.assert_array_equal(model.W, init.W)
