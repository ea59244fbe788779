import numpy as np
import pytest

from cnhpp.convolution import CovariatePanel, HistoryError
from cnhpp.model import (
    EventLog,
    IntensityField,
    IntensityOverflowError,
    ModelParams,
    event_probability,
    gradient_bptt,
    log_intensity_recurrence,
    log_intensity_series,
    log_intensity_window,
    log_likelihood,
    nhpp_log_likelihood,
    nhpp_score,
    predict_intensity,
    subnet_count_distribution,
)
from cnhpp.network import WeightMatrix, build_network

from conftest import random_instance


def dense_log_intensity(params, panel, W, K, t):
    A = W.toarray()
    X = sum(params.xi ** k * np.linalg.matrix_power(A, k) @ panel.step(t - k) for k in range(K + 1))
    return X @ params.beta


def loop_loglik(params, panel, events, W, K):
    """Sum over events minus sum over cells, written out directly."""
    eta = np.array([dense_log_intensity(params, panel, W, K, t) for t in range(panel.n_steps)])
    ll = -np.exp(eta).sum()
    for s, u in zip(events.segment_ids, events.times):
        ll += eta[min(int(np.floor(u)), panel.n_steps - 1), s]
    return ll


def fd_gradient(params, panel, events, W, K, h=1e-5):
    theta = np.concatenate([params.beta, [params.xi]])
    out = np.empty_like(theta)
    for j in range(theta.size):
        up, dn = theta.copy(), theta.copy()
        up[j] += h
        dn[j] -= h
        f = lambda th: log_likelihood(ModelParams(th[-1], th[:-1]), panel, events, W, K)
        out[j] = (f(up) - f(dn)) / (2 * h)
    return out


class TestContainers:
    def test_params_validation(self):
        with pytest.raises(ValueError, match="xi"):
            ModelParams(1.0, [0.0])
        with pytest.raises(ValueError, match="finite"):
            ModelParams(0.1, [np.inf])
        p = ModelParams(0.25, [1, 2])
        np.testing.assert_array_equal(p.theta, [0.25, 1, 2])
        assert ModelParams.from_dict(p.to_dict()).xi == 0.25

    def test_event_binning(self):
        ev = EventLog([0, 1, 1], [0.0, 2.5, 3.0], 3, 2)
        np.testing.assert_array_equal(ev.steps, [0, 2, 2])
        np.testing.assert_array_equal(ev.counts, [1, 2])
        assert ev.cell_counts()[2, 1] == 2

    def test_event_validation(self):
        with pytest.raises(ValueError, match="event 1: segment id 5"):
            EventLog([0, 5], [0.0, 1.0], 3, 2)
        with pytest.raises(ValueError, match="outside"):
            EventLog([0], [3.5], 3, 2)

    def test_field_csv_roundtrip(self, tmp_path):
        f = IntensityField(np.log(np.arange(1.0, 7.0)).reshape(3, 2), t0=4)
        f.to_csv(tmp_path / "f.csv")
        g = IntensityField.from_csv(tmp_path / "f.csv")
        assert g.t0 == 4
        np.testing.assert_array_equal(g.log_lambda, f.log_lambda)
        with pytest.raises(IndexError):
            f.at(7)


class TestForms:
    def test_series_matches_dense(self):
        rng = np.random.default_rng(0)
        net, W, panel, events, xi, beta = random_instance(rng, 10, 6, 4, 3)
        p = ModelParams(xi, beta)
        for t in range(6):
            np.testing.assert_allclose(log_intensity_series(p, panel, W, 4, t),
                                       dense_log_intensity(p, panel, W, 4, t), rtol=0, atol=1e-12)

    def test_restarted_recurrence_equals_series(self):
        rng = np.random.default_rng(1)
        for _ in range(10):
            K = int(rng.integers(0, 8))
            net, W, panel, events, xi, beta = random_instance(rng, 15, 12, K, 2)
            p = ModelParams(xi, beta)
            for t in range(12):
                rec = log_intensity_recurrence(p, panel, W, t - K, t).log_lambda[-1]
                np.testing.assert_allclose(rec, log_intensity_series(p, panel, W, K, t), rtol=0, atol=1e-12)

    def test_full_recurrence_from_panel_start(self):
        rng = np.random.default_rng(2)
        net, W, panel, events, xi, beta = random_instance(rng, 8, 5, 3, 2)
        p = ModelParams(xi, beta)
        full = log_intensity_window(p, panel, W, None).log_lambda
        # from the panel start the history at step t has t + burn_in earlier steps
        for t in range(5):
            np.testing.assert_allclose(full[t], log_intensity_series(p, panel, W, t + 3, t, pad_history=True),
                                       rtol=0, atol=1e-12)

    def test_recurrence_h_init(self):
        rng = np.random.default_rng(3)
        net, W, panel, events, xi, beta = random_instance(rng, 6, 8, 0, 2)
        p = ModelParams(xi, beta)
        whole = log_intensity_recurrence(p, panel, W, 0, 7).log_lambda
        tail = log_intensity_recurrence(p, panel, W, 4, 7, h_init=whole[3]).log_lambda
        np.testing.assert_allclose(tail, whole[4:], rtol=0, atol=1e-13)


class TestLikelihood:
    def test_matches_loop(self):
        rng = np.random.default_rng(4)
        for _ in range(5):
            net, W, panel, events, xi, beta = random_instance(rng, 7, 5, 3, 2)
            p = ModelParams(xi, beta)
            assert log_likelihood(p, panel, events, W, 3) == pytest.approx(loop_loglik(p, panel, events, W, 3),
                                                                           rel=1e-12, abs=1e-12)

    def test_single_segment_closed_form(self):
        # log lambda = beta0 * S(xi), S = sum_k xi^k
        T, K, n, b0, xi = 10, 4, 7, -0.3, 0.6
        panel = CovariatePanel(np.ones((T + K, 1, 1)), burn_in=K)
        events = EventLog(np.zeros(n, dtype=int), np.linspace(0.1, 9.9, n), T, 1)
        W = WeightMatrix.identity(1)
        S = sum(xi ** k for k in range(K + 1))
        dS = sum(k * xi ** (k - 1) for k in range(1, K + 1))
        resid = n - T * np.exp(b0 * S)
        p = ModelParams(xi, [b0])
        assert log_likelihood(p, panel, events, W, K) == pytest.approx(n * b0 * S - T * np.exp(b0 * S), rel=1e-14)
        g = gradient_bptt(p, panel, events, W, K)
        np.testing.assert_allclose(g, [S * resid, dS * b0 * resid], rtol=1e-12)

    def test_overflow_guard(self):
        panel = CovariatePanel(np.ones((3, 2, 1)))
        ev = EventLog.empty(3, 2)
        with pytest.raises(IntensityOverflowError, match="segment"):
            log_likelihood(ModelParams(0.0, [60.0]), panel, ev, WeightMatrix.identity(2), 0)

    def test_mismatched_events(self):
        panel = CovariatePanel(np.ones((3, 2, 1)))
        with pytest.raises(ValueError, match="events cover"):
            log_likelihood(ModelParams(0.0, [0.0]), panel, EventLog.empty(4, 2), WeightMatrix.identity(2), 0)

    def test_short_burn_in(self):
        panel = CovariatePanel(np.ones((3, 2, 1)), burn_in=1)
        with pytest.raises(HistoryError):
            log_likelihood(ModelParams(0.5, [0.0]), panel, EventLog.empty(2, 2), WeightMatrix.identity(2), 2)


class TestGradient:
    @pytest.mark.parametrize("K", [0, 1, 3, 7])
    def test_truncated_matches_fd(self, K):
        rng = np.random.default_rng(10 + K)
        net, W, panel, events, xi, beta = random_instance(rng, 12, 8, K, 3)
        p = ModelParams(xi, beta)
        g = gradient_bptt(p, panel, events, W, K)
        fd = fd_gradient(p, panel, events, W, K)
        assert np.max(np.abs(g - fd)) / max(np.max(np.abs(fd)), 1.0) < 1e-6

    def test_full_history_matches_fd(self):
        rng = np.random.default_rng(20)
        net, W, panel, events, xi, beta = random_instance(rng, 10, 9, 4, 2)
        p = ModelParams(xi, beta)
        g = gradient_bptt(p, panel, events, W, None)
        fd = fd_gradient(p, panel, events, W, None)
        assert np.max(np.abs(g - fd)) / max(np.max(np.abs(fd)), 1.0) < 1e-6

    def test_return_loglik(self):
        rng = np.random.default_rng(21)
        net, W, panel, events, xi, beta = random_instance(rng, 5, 4, 2, 1)
        p = ModelParams(xi, beta)
        _, ll = gradient_bptt(p, panel, events, W, 2, return_loglik=True)
        assert ll == pytest.approx(log_likelihood(p, panel, events, W, 2), rel=1e-13)

    def test_nhpp_score(self):
        rng = np.random.default_rng(22)
        net, W, panel, events, xi, beta = random_instance(rng, 6, 5, 0, 2)
        g = nhpp_score(beta, panel, events)
        h = 1e-6
        fd = [(nhpp_log_likelihood(beta + h * e, panel, events) - nhpp_log_likelihood(beta - h * e, panel, events))
              / (2 * h) for e in np.eye(beta.size)]
        np.testing.assert_allclose(g, fd, rtol=1e-6, atol=1e-6)


class TestProbabilities:
    def test_event_probability(self):
        f = IntensityField(np.log([[0.5, 1.0], [0.5, 2.0]]))
        # segment 0 mean 1, segment 1 mean 3
        expect = np.exp(-1) * np.exp(-3) * 3 ** 2 / 2
        assert event_probability(f, [0, 1], 0, 2, [0, 2]) == pytest.approx(expect, rel=1e-13)
        assert subnet_count_distribution(f, [0, 1], 0, 2).mean() == pytest.approx(4.0)

    def test_bad_counts(self):
        f = IntensityField(np.zeros((1, 1)))
        with pytest.raises(ValueError, match="nonnegative"):
            event_probability(f, [0], 0, 1, [1.5])


class _Fit:
    def __init__(self, params, K):
        self.params_hat, self.K = params, K


class TestPredict:
    def test_uses_burn_in_history(self):
        rng = np.random.default_rng(30)
        net, W, panel, events, xi, beta = random_instance(rng, 6, 5, 3, 2)
        p = ModelParams(xi, beta)
        field = predict_intensity(_Fit(p, 3), panel, W)
        np.testing.assert_allclose(field.log_lambda, log_intensity_window(p, panel, W, 3).log_lambda, rtol=0, atol=0)
        last = predict_intensity(_Fit(p, 3), panel, W, steps=2)
        assert last.t0 == 3
        np.testing.assert_array_equal(last.log_lambda, field.log_lambda[3:])

    def test_missing_history_message(self):
        panel = CovariatePanel(np.ones((4, 2, 1)), burn_in=1)
        with pytest.raises(HistoryError, match=r"steps -3..-1"):
            predict_intensity(_Fit(ModelParams(0.2, [0.0]), 3), panel, WeightMatrix.identity(2))
