import math

import numpy as np
from django.test import SimpleTestCase

from memstate.exceptions import DataError, NoUsableMeasurements, RejectedMeasurementSet
from memstate.model_core import REFERENCE_PARAMS, ModelKind, forward_current, invert_state
from memstate.signal_prep import Trace, derive_signals
from memstate.state_estimator import (
    NoiseModel,
    Weighting,
    drift_series_estimate,
    estimate_state,
    exclusion_mask,
    min_variance_weights,
    variance_proxy,
)
from memstate.synth_bench import (
    SynthConfig,
    WaveformKind,
    WaveformSpec,
    exponential_drift_schedule,
    gen_waveform,
    inject_channel_noise,
    model_trace,
    simulate_capture,
    simulate_dataset,
)

PROPOSED = ModelKind.PROPOSED
P = REFERENCE_PARAMS[PROPOSED]


def read_trace(x, amplitude=0.2):
    spec = WaveformSpec(WaveformKind.READ, amplitude, n_cycles=1)
    return model_trace(PROPOSED, P, x, gen_waveform(spec), spec.samples_per_period)


class WeightsTest(SimpleTestCase):
    """
    Test suite for the variance proxy and the minimum-variance weights.
    """
    def test_variance_proxy(self):
        self.assertEqual(variance_proxy(P, 0.15), variance_proxy(P, 0.15))
        self.assertLess(variance_proxy(P, 0.2), variance_proxy(P, 0.1))
        denominator = P.g_m * 0.1 + P.alpha1 * math.expm1(P.beta1 * 0.1) - P.alpha2 * math.expm1(-P.beta2 * 0.1)
        self.assertTrue(math.isclose(variance_proxy(P, 0.1), denominator ** -2, rel_tol=1e-12))

    def test_weight_examples(self):
        np.testing.assert_allclose(min_variance_weights([2.0] * 4), [0.25] * 4, rtol=1e-15)
        np.testing.assert_allclose(min_variance_weights([1.0, 3.0]), [0.75, 0.25], rtol=1e-15)
        proxies = np.array([0.5, 2.0, 7.0])
        np.testing.assert_allclose(min_variance_weights(10 * proxies), min_variance_weights(proxies), rtol=1e-15)

    def test_rejects_bad_proxies(self):
        with self.assertRaises(RejectedMeasurementSet):
            min_variance_weights([1.0, np.nan])
        with self.assertRaises(RejectedMeasurementSet):
            min_variance_weights([1.0, 0.0])
        with self.assertRaises(NoUsableMeasurements):
            min_variance_weights([])

    def test_optimal_over_the_simplex(self):
        """
        The weights score no worse than 10^6 random convex weightings, 1000 per random proxy
        vector.
        """
        rng = np.random.default_rng(23)
        for _ in range(1000):
            k = int(rng.integers(2, 11))
            proxies = 10 ** rng.uniform(-3, 3, size=k)
            weights = min_variance_weights(proxies)
            self.assertTrue(math.isclose(weights.sum(), 1.0, rel_tol=1e-12))
            optimum = float(np.sum(weights ** 2 * proxies))
            candidates = rng.dirichlet(np.ones(k), size=1000)
            scores = candidates ** 2 @ proxies
            self.assertTrue(np.all(scores >= optimum * (1 - 1e-12)))


class EstimateStateTest(SimpleTestCase):
    """
    Test suite for single-trace state estimation.
    """
    def test_noiseless_state(self):
        estimate = estimate_state(read_trace(0.42), P)
        self.assertTrue(math.isclose(estimate.x_hat, 0.42, rel_tol=1e-9))
        self.assertTrue(math.isclose(estimate.weights.sum(), 1.0, rel_tol=1e-12))
        self.assertTrue(np.all(estimate.weights >= 0))
        self.assertEqual(estimate.n_included + estimate.n_excluded, 160)

    def test_single_surviving_measurement(self):
        v = np.array([0.01, 0.02, 0.2])
        tr = Trace(v, forward_current(PROPOSED, P, 0.42, v), 3)
        estimate = estimate_state(tr, P)
        np.testing.assert_array_equal(estimate.included_indices, [2])
        np.testing.assert_array_equal(estimate.weights, [1.0])
        self.assertEqual(estimate.x_hat, invert_state(P, 0.2, tr.i[2]))
        self.assertEqual(estimate.n_excluded, 2)

    def test_equal_proxies_give_arithmetic_mean(self):
        rng = np.random.default_rng(2)
        v = np.full(6, 0.2)
        i = forward_current(PROPOSED, P, 0.3, v) * (1 + rng.normal(scale=0.01, size=6))
        estimate = estimate_state(Trace(v, i, 6), P)
        self.assertTrue(math.isclose(estimate.x_hat, float(np.mean(invert_state(P, v, i))), rel_tol=1e-12))

    def test_exclusion_uses_both_channels(self):
        mask = exclusion_mask([0.1, 0.2, 0.05], [2.0, 1.0, 2.0], 0.5)
        np.testing.assert_array_equal(mask, [True, True, False])
        with self.assertRaises(NoUsableMeasurements):
            estimate_state(Trace([0.1, 0.2], [2.0, 1.0], 2), P, exclusion_fraction=1.0)

    def test_permutation_invariance(self):
        tr = read_trace(0.42)
        perm = np.random.default_rng(8).permutation(len(tr))
        shuffled = Trace(tr.v[perm], tr.i[perm] * 1.01, tr.n_period)
        reference = Trace(tr.v, tr.i * 1.01, tr.n_period)
        self.assertTrue(math.isclose(estimate_state(shuffled, P).x_hat,
                                     estimate_state(reference, P).x_hat, rel_tol=1e-12))

    def test_uniform_weighting(self):
        estimate = estimate_state(read_trace(0.42), P, weighting=Weighting.UNIFORM)
        np.testing.assert_allclose(estimate.weights, 1.0 / estimate.n_included)
        self.assertTrue(math.isclose(estimate.x_hat, 0.42, rel_tol=1e-9))

    def test_document(self):
        estimate = estimate_state(read_trace(0.42), P)
        self.assertNotIn('std_estimate', estimate.to_dict(NoiseModel(0.0)))
        payload = estimate.to_dict(NoiseModel(1e-3, 1e5))
        self.assertTrue(math.isclose(payload['std_estimate'], 1e-8 * math.sqrt(estimate.variance_proxy)))
        self.assertEqual(set(payload['weights']), {'min', 'max', 'entropy'})

        zero = estimate_state(Trace([0.2, 0.3], [0.0, 0.0], 2), P)
        self.assertEqual(zero.x_hat, 0.0)
        self.assertIsNone(zero.inv_x_hat)


class MonteCarloTest(SimpleTestCase):
    """
    Monte Carlo checks of the estimator under correlated channel noise.

    One noiseless capture is generated; each draw adds a fresh shared noise sequence to
    both channels before the signals are derived.

    Attributes:
        clean: Noiseless capture at x = 5e-6 behind a 100 kOhm resistor.
        noise: NoiseModel with sigma_n = 1 mV.
    """
    DRAWS = 10000

    def setUp(self):
        self.noise = NoiseModel(sigma_n=1e-3, r_series=1e5)
        cfg = SynthConfig(params=P, state_schedule=[(0, 5e-6)], noise=NoiseModel(0.0, 1e5),
                          read_amplitudes=(0.2,), n_cycles=2)
        self.clean = simulate_capture(cfg, cfg.read_spec(0), 0)

    def test_variance(self):
        """
        Minimum-variance weighting beats uniform weighting, and its spread matches the
        first-order prediction (sigma_n / r_series)^2 sum m_k^2 g_k^2 within 10%.
        """
        reference = estimate_state(derive_signals(self.clean), P)
        proxies = variance_proxy(P, derive_signals(self.clean).v[reference.included_indices])
        self.assertGreaterEqual(proxies.max() / proxies.min(), 4.0)

        optimal, uniform = np.empty(self.DRAWS), np.empty(self.DRAWS)
        for draw in range(self.DRAWS):
            rng = np.random.default_rng([99, draw])
            trace = derive_signals(inject_channel_noise(self.clean, self.noise.sigma_n, rng))
            optimal[draw] = estimate_state(trace, P, self.noise).x_hat
            uniform[draw] = estimate_state(trace, P, self.noise, weighting=Weighting.UNIFORM).x_hat

        self.assertLess(np.var(optimal), np.var(uniform))
        predicted = self.noise.current_sigma ** 2 * reference.variance_proxy
        self.assertLess(abs(np.var(optimal) / predicted - 1.0), 0.1)


class DriftSeriesTest(SimpleTestCase):
    """
    Test suite for time-series state estimation.
    """
    def dataset(self, schedule, sigma_n=0.0, seed=0):
        cfg = SynthConfig(params=P, state_schedule=schedule, noise=NoiseModel(sigma_n, 1e5),
                          seed=seed, read_amplitudes=(0.2,), n_cycles=2)
        return [derive_signals(c) for c in simulate_dataset(cfg)]

    def test_empty_series(self):
        self.assertEqual(drift_series_estimate([], P), [])

    def test_constant_state_stays_in_noise_band(self):
        noise = NoiseModel(1e-3, 1e5)
        traces = self.dataset([(n, 5e-6) for n in range(5)], sigma_n=1e-3, seed=12)
        series = drift_series_estimate(traces, P, noise)
        self.assertEqual([point.t for point in series], [0.0, 1.0, 2.0, 3.0, 4.0])
        for point in series:
            self.assertLessEqual(abs(point.x_hat - 5e-6), 5 * point.estimate.std_estimate(noise))

    def test_exponential_decay_is_monotone(self):
        times = np.arange(7) * 600.0
        schedule = exponential_drift_schedule(1e-5, 2e-6, 600.0, times)
        series = drift_series_estimate(self.dataset(schedule), P, times=times)
        estimates = [point.x_hat for point in series]
        self.assertTrue(all(b < a for a, b in zip(estimates, estimates[1:])))
        for (_, x), x_hat in zip(schedule, estimates):
            self.assertTrue(math.isclose(x_hat, x, rel_tol=1e-9))

    def test_failing_trace_does_not_stop_the_series(self):
        good = read_trace(0.42)
        bad = Trace(np.zeros(10), np.zeros(10), 5)
        with self.assertLogs('memstate.state_estimator', 'WARNING'):
            series = drift_series_estimate([good, bad, good], P, times=[0.0, 60.0, 120.0])
        self.assertIsNone(series[1].x_hat)
        self.assertEqual(series[1].error['error'], 'degenerate_operating_point')
        self.assertTrue(math.isclose(series[2].x_hat, 0.42, rel_tol=1e-9))

    def test_times_from_trace_meta(self):
        tr = Trace(read_trace(0.42).v, read_trace(0.42).i, 160, {'t': 42.0})
        self.assertEqual(drift_series_estimate([tr], P)[0].t, 42.0)
        with self.assertRaises(DataError):
            drift_series_estimate([tr], P, times=[0.0, 1.0])
