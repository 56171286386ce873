"""
Minimum-variance state estimation from a set of noisy VI measurements.

Both oscilloscope channels see the same additive noise N, so the memristor voltage is
noise free and the current carries N / r_series. Every retained measurement is inverted
to a state, and the inversions are combined with weights inversely proportional to the
squared sensitivity of the inversion to the current, g_i(v)^2.
"""
import logging
import math
from dataclasses import dataclass

import numpy as np
from django.db import models

from .conf import resolve
from .exceptions import DataError, MemstateError, NoUsableMeasurements, RejectedMeasurementSet
from .model_core import ModelKind, invert_state, partial_current_sensitivity

logger = logging.getLogger(__name__)


class Weighting(models.TextChoices):
    MIN_VARIANCE = 'min_variance', 'Minimum variance'
    UNIFORM = 'uniform', 'Uniform'


@dataclass(frozen=True)
class NoiseModel:
    """
    Correlated channel noise.

    Attributes:
        sigma_n: float - Standard deviation of the noise shared by both channels (volts).
        r_series: float - Series resistor value (ohms).
    """
    sigma_n: float = 0.0
    r_series: float = 1e5

    def __post_init__(self):
        if not (math.isfinite(self.sigma_n) and self.sigma_n >= 0):
            raise DataError(f'sigma_n must be finite and non-negative, got {self.sigma_n!r}')
        if not (math.isfinite(self.r_series) and self.r_series > 0):
            raise DataError(f'r_series must be finite and positive, got {self.r_series!r}')

    @property
    def current_sigma(self):
        return self.sigma_n / self.r_series


@dataclass(frozen=True, eq=False)
class StateEstimate:
    """
    Weighted state estimate of one trace.

    Attributes:
        x_hat: float - Estimated state.
        weights: ndarray - Convex weights over the included measurements.
        variance_proxy: float - sum m_k^2 g_i(v_k)^2, the variance up to (sigma_n / r_series)^2.
        included_indices: ndarray - Indices of the measurements that passed exclusion.
        n_excluded: int - Number of excluded measurements.
    """
    x_hat: float
    weights: np.ndarray
    variance_proxy: float
    included_indices: np.ndarray
    n_excluded: int

    @property
    def n_included(self):
        return len(self.included_indices)

    @property
    def inv_x_hat(self):
        """Ohm-like readout 1 / x_hat, None for a zero state."""
        return 1.0 / self.x_hat if self.x_hat != 0 else None

    def std_estimate(self, noise):
        """Standard deviation implied by the noise model; proportional, not calibrated."""
        return noise.current_sigma * math.sqrt(self.variance_proxy)

    def weight_summary(self):
        positive = self.weights[self.weights > 0]
        return {
            'min': float(np.min(self.weights)),
            'max': float(np.max(self.weights)),
            'entropy': float(-np.sum(positive * np.log(positive))),
        }

    def to_dict(self, noise=None):
        payload = {
            'x_hat': float(self.x_hat),
            'inv_x_hat': self.inv_x_hat,
            'variance_proxy': float(self.variance_proxy),
            'weights': self.weight_summary(),
            'n_included': self.n_included,
            'n_excluded': int(self.n_excluded),
        }
        if noise is not None and noise.sigma_n > 0:
            payload['std_estimate'] = self.std_estimate(noise)
        return payload


def variance_proxy(p, v, kind=ModelKind.PROPOSED):
    """Squared sensitivity g_i(v)^2 of the state inversion to the current."""
    sensitivity = np.asarray(partial_current_sensitivity(p, v, kind), dtype=float)
    proxy = sensitivity ** 2
    return float(proxy) if proxy.ndim == 0 else proxy


def min_variance_weights(proxies):
    """
    Convex weights minimising sum m_k^2 proxy_k.

    m_k = (1 / proxy_k) / sum_l (1 / proxy_l); invariant under a common rescaling of the
    proxies.
    """
    proxies = np.atleast_1d(np.asarray(proxies, dtype=float))
    if proxies.size == 0:
        raise NoUsableMeasurements()
    if not np.all(np.isfinite(proxies)) or np.any(proxies <= 0):
        raise RejectedMeasurementSet()
    inverse = 1.0 / proxies
    return inverse / np.sum(inverse)


def exclusion_mask(v, i, fraction=None):
    """True for measurements with |v| and |i| both at least ``fraction`` of their maxima."""
    fraction = resolve(fraction, 'EXCLUSION_FRACTION')
    v = np.abs(np.asarray(v, dtype=float))
    i = np.abs(np.asarray(i, dtype=float))
    if v.size == 0:
        return np.zeros(0, dtype=bool)
    return (v >= fraction * np.max(v)) & (i >= fraction * np.max(i))


def estimate_state(tr, p, nm=None, exclusion_fraction=None, kind=ModelKind.PROPOSED,
                   weighting=Weighting.MIN_VARIANCE):
    """
    Estimate the state of a trace.

    Measurements with |v| or |i| below ``exclusion_fraction`` of the whole-trace maximum are
    dropped, the rest are inverted point by point and combined with minimum-variance
    weights (or uniform weights, the baseline estimator). Proxies are evaluated at the
    measured voltages.
    """
    kind = ModelKind(kind)
    weighting = Weighting(weighting)
    mask = exclusion_mask(tr.v, tr.i, exclusion_fraction)
    included = np.flatnonzero(mask)
    if included.size == 0:
        raise NoUsableMeasurements()

    v, i = tr.v[included], tr.i[included]
    states = np.atleast_1d(invert_state(p, v, i, kind))
    proxies = np.atleast_1d(variance_proxy(p, v, kind))
    if weighting == Weighting.UNIFORM:
        if not np.all(np.isfinite(proxies)) or np.any(proxies <= 0):
            raise RejectedMeasurementSet()
        weights = np.full(included.size, 1.0 / included.size)
    else:
        weights = min_variance_weights(proxies)

    return StateEstimate(
        x_hat=float(np.dot(weights, states)),
        weights=weights,
        variance_proxy=float(np.sum(weights ** 2 * proxies)),
        included_indices=included,
        n_excluded=int(len(tr) - included.size),
    )


@dataclass(frozen=True, eq=False)
class DriftPoint:
    """
    One entry of a drift series.

    Attributes:
        t: float - Measurement time (seconds).
        estimate: StateEstimate or None - None when the trace failed.
        error: dict or None - Machine-readable failure of the trace.
    """
    t: float
    estimate: StateEstimate = None
    error: dict = None

    @property
    def x_hat(self):
        return self.estimate.x_hat if self.estimate else None

    @property
    def inv_x_hat(self):
        return self.estimate.inv_x_hat if self.estimate else None

    @property
    def variance_proxy(self):
        return self.estimate.variance_proxy if self.estimate else None


def drift_series_estimate(traces, p, nm=None, times=None, exclusion_fraction=None,
                          kind=ModelKind.PROPOSED):
    """
    Estimate the state of each trace of a time-ordered series.

    Times default to ``meta['t']`` of each trace, else its position. A failing trace is
    reported in its entry and the series continues.
    """
    traces = list(traces)
    if times is None:
        times = [tr.meta.get('t', float(index)) for index, tr in enumerate(traces)]
    if len(times) != len(traces):
        raise DataError('times and traces must have the same length')

    series = []
    for t, tr in zip(times, traces):
        try:
            estimate = estimate_state(tr, p, nm, exclusion_fraction, kind)
        except MemstateError as exc:
            logger.warning('Drift estimate at t=%s failed: %s', t, exc.message)
            series.append(DriftPoint(float(t), error=exc.as_dict()))
        else:
            series.append(DriftPoint(float(t), estimate))
    return series
