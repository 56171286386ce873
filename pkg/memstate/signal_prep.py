"""
Preprocessing of two-channel series-circuit captures.

A capture holds the voltage across the whole circuit (v_total) and across the series
resistor (v_series). The memristor voltage and current follow from the series equations

    i_mem = v_series / r_series
    v_mem = v_total - v_series

after which the trace is aligned to whole waveform periods and cleared of systematic
voltage and current offsets.
"""
import logging
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import minimize

from .conf import resolve
from .exceptions import AlignmentFailed, InvalidCapture, InvalidTrace

logger = logging.getLogger(__name__)

UNIFORM_SPACING_TOLERANCE = 1e-6


@dataclass(frozen=True, eq=False)
class RawCapture:
    """
    Time-sampled capture of the series circuit.

    Attributes:
        t: ndarray - Sample times (seconds), strictly increasing and uniformly spaced.
        v_total: ndarray - Voltage across the whole circuit (volts).
        v_series: ndarray - Voltage across the series resistor (volts).
        r_series: float - Series resistor value (ohms).
        n_period: int - Samples per waveform period.
        sample_rate: float - Samples per second.
        meta: dict - Free-form capture annotations.
    """
    t: np.ndarray
    v_total: np.ndarray
    v_series: np.ndarray
    r_series: float
    n_period: int
    sample_rate: float
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in ('t', 'v_total', 'v_series'):
            values = np.asarray(getattr(self, name), dtype=float)
            if values.ndim != 1:
                raise InvalidCapture(f'{name} must be one-dimensional')
            if not np.all(np.isfinite(values)):
                raise InvalidCapture(f'{name} contains non-finite samples')
            object.__setattr__(self, name, values)
        if not (len(self.t) == len(self.v_total) == len(self.v_series)):
            raise InvalidCapture('t, v_total and v_series must have the same length')
        if not self.r_series > 0:
            raise InvalidCapture(f'r_series must be positive, got {self.r_series!r}')
        if int(self.n_period) != self.n_period or self.n_period < 8:
            raise InvalidCapture(f'n_period must be an integer of at least 8, got {self.n_period!r}')
        object.__setattr__(self, 'n_period', int(self.n_period))
        if not self.sample_rate > 0:
            raise InvalidCapture(f'sample_rate must be positive, got {self.sample_rate!r}')
        if len(self.t) < self.n_period:
            raise InvalidCapture(
                f'capture holds {len(self.t)} samples, fewer than one period ({self.n_period})')
        steps = np.diff(self.t)
        if steps.size:
            if np.any(steps <= 0):
                raise InvalidCapture('timestamps must be strictly increasing')
            mean_step = (self.t[-1] - self.t[0]) / steps.size
            if np.max(np.abs(steps - mean_step)) > UNIFORM_SPACING_TOLERANCE * mean_step:
                raise InvalidCapture('timestamps are not uniformly spaced')

    def __len__(self):
        return len(self.t)


@dataclass(frozen=True, eq=False)
class Trace:
    """
    Memristor voltage/current pairs for one device state.

    Attributes:
        v: ndarray - Memristor voltage (volts).
        i: ndarray - Memristor current (amperes).
        n_period: int - Samples per waveform period.
        meta: dict - Capture annotations plus preprocessing bookkeeping
            (r_series, n_discard, v_offset, i_offset).
    """
    v: np.ndarray
    i: np.ndarray
    n_period: int
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        v = np.asarray(self.v, dtype=float)
        i = np.asarray(self.i, dtype=float)
        if v.ndim != 1 or v.shape != i.shape:
            raise InvalidTrace('v and i must be one-dimensional and of equal length')
        if not (np.all(np.isfinite(v)) and np.all(np.isfinite(i))):
            raise InvalidTrace('trace contains non-finite values')
        if int(self.n_period) != self.n_period or self.n_period < 1:
            raise InvalidTrace(f'n_period must be a positive integer, got {self.n_period!r}')
        object.__setattr__(self, 'v', v)
        object.__setattr__(self, 'i', i)
        object.__setattr__(self, 'n_period', int(self.n_period))
        object.__setattr__(self, 'meta', dict(self.meta))

    def __len__(self):
        return len(self.v)

    @property
    def pairs(self):
        return np.column_stack((self.v, self.i))

    @property
    def r_series(self):
        return self.meta.get('r_series')

    def with_values(self, v, i, **meta):
        return replace(self, v=v, i=i, meta={**self.meta, **meta})


@dataclass(frozen=True)
class OffsetCorrection:
    """
    Systematic offsets removed from a trace.

    Attributes:
        v_offset: float - Voltage offset subtracted from v (volts).
        i_offset: float - Current offset subtracted from i (amperes).
        residual: float - Quadrant objective after correction.
        initial: float - Quadrant objective before correction.
        warning: str or None - Reason the identity correction was returned, if any.
    """
    v_offset: float
    i_offset: float
    residual: float
    initial: float = 0.0
    warning: str = None

    @property
    def is_identity(self):
        return self.v_offset == 0.0 and self.i_offset == 0.0


def derive_signals(c):
    """
    Apply the series circuit equations to every sample of a capture.

    Args:
        c (RawCapture): validated capture.

    Returns:
        Trace: v = v_total - v_series, i = v_series / r_series, same length as the capture.
    """
    v_mem = c.v_total - c.v_series
    i_mem = c.v_series / c.r_series
    meta = {**c.meta, 'r_series': float(c.r_series), 'sample_rate': float(c.sample_rate)}
    return Trace(v=v_mem, i=i_mem, n_period=c.n_period, meta=meta)


def implied_resistance(c):
    """Small-signal readout r_mem = r_series (v_total / v_series - 1); NaN where v_series is 0."""
    with np.errstate(divide='ignore', invalid='ignore'):
        ratio = np.where(c.v_series != 0, c.v_total / c.v_series, np.nan)
    return c.r_series * (ratio - 1.0)


def align_periods(tr, min_abs_fraction=None):
    """
    Trim a trace so it starts on the rising zero crossing and holds whole periods only.

    The cycle start is the sample of smallest |v| within the first period that is followed
    by a rising voltage and lies below ``min_abs_fraction`` of the trace amplitude.
    When the best candidate falls in the last quarter of the window and another candidate
    lies in the first quarter, the early one wins: both belong to the same crossing.
    N_discard leading samples are dropped, then the tail is cut to a whole number of
    periods. N_discard accumulates in ``meta['n_discard']``.
    """
    min_abs_fraction = resolve(min_abs_fraction, 'ALIGN_MIN_ABS_FRACTION')
    n = tr.n_period
    if len(tr) < 2 * n:
        raise InvalidTrace(f'alignment needs at least two periods ({2 * n} samples), got {len(tr)}')

    window = tr.v[:n]
    rising = tr.v[1:n + 1] > window
    amplitude = np.max(np.abs(tr.v))
    candidates = np.flatnonzero(rising & (np.abs(window) <= min_abs_fraction * amplitude))
    if candidates.size == 0:
        raise AlignmentFailed(
            'alignment failed: no rising zero-crossing candidate within '
            f'{min_abs_fraction:g} of the amplitude in the first period')

    n_discard = int(candidates[np.argmin(np.abs(window[candidates]))])
    # Samples at the end of the window precede the crossing the window starts on.
    guard = n // 4
    head = candidates[candidates < guard]
    if n_discard >= n - guard and head.size:
        n_discard = int(head[np.argmin(np.abs(window[head]))])
    cycles = (len(tr) - n_discard) // n
    stop = n_discard + cycles * n
    logger.debug('Aligned trace: discarding %d leading and %d trailing samples',
                 n_discard, len(tr) - stop)
    return tr.with_values(
        tr.v[n_discard:stop], tr.i[n_discard:stop],
        n_discard=tr.meta.get('n_discard', 0) + n_discard,
    )


def quadrant_objective(v, i, v_offset=0.0, i_offset=0.0):
    """Sum of |v i| over corrected points in the upper-left and lower-right quadrants."""
    dv = np.asarray(v) - v_offset
    di = np.asarray(i) - i_offset
    product = dv * di
    return float(np.sum(np.abs(product[product < 0])))


def remove_offsets(tr, max_v_offset=None, tol=None, resolution=None, min_gain=None):
    """
    Estimate and remove systematic voltage and current offsets.

    The READ waveform applied to the circuit has zero mean over whole periods, so the mean
    of the reconstructed applied voltage v + r_series i fixes v_offset + r_series i_offset.
    The remaining coordinate is chosen by Nelder-Mead, minimising the quadrant objective
    (|v i| summed over points left in quadrants II and IV after correction), starting from
    (mean voltage, 0).

    Returns:
        tuple: (corrected Trace, OffsetCorrection). An identity correction is returned
        when the objective drops by less than ``min_gain`` of its initial value, when the
        voltage offset exceeds ``max_v_offset``, or when both offsets are below
        ``resolution`` of the amplitudes.
    """
    max_v_offset = resolve(max_v_offset, 'MAX_VOLTAGE_OFFSET')
    tol = resolve(tol, 'OFFSET_TOLERANCE')
    resolution = resolve(resolution, 'OFFSET_RESOLUTION')
    min_gain = resolve(min_gain, 'OFFSET_MIN_GAIN')
    r_series = tr.r_series
    if r_series is None or not r_series > 0:
        raise InvalidTrace('offset removal needs the series resistance in trace meta')

    v, i = tr.v, tr.i
    v_scale = float(np.max(np.abs(v))) if len(tr) else 0.0
    i_scale = float(np.max(np.abs(i))) if len(tr) else 0.0
    initial = quadrant_objective(v, i)

    def identity(warning=None):
        if warning:
            logger.warning('Offset removal fell back to identity: %s', warning)
        return tr, OffsetCorrection(0.0, 0.0, initial, initial, warning)

    if v_scale == 0.0 or i_scale == 0.0:
        return identity()

    mean_voltage = float(np.mean(v + r_series * i))
    norm = v_scale * i_scale

    def offsets(step):
        i_offset = step * i_scale
        return mean_voltage - r_series * i_offset, i_offset

    def objective(point):
        return quadrant_objective(v, i, *offsets(point[0])) / norm

    result = minimize(
        objective, x0=[0.0], method='Nelder-Mead',
        options={
            'initial_simplex': [[0.0], [0.01]],
            'xatol': tol,
            'fatol': tol,
            'maxiter': 2000,
        },
    )
    v_offset, i_offset = offsets(float(result.x[0]))
    residual = quadrant_objective(v, i, v_offset, i_offset)

    if abs(v_offset) <= resolution * v_scale and abs(i_offset) <= resolution * i_scale:
        return identity()
    if abs(v_offset) > max_v_offset:
        return identity(f'voltage offset {v_offset:g} V exceeds {max_v_offset:g} V')
    if initial > 0.0 and residual >= initial:
        return identity('optimizer did not reduce the quadrant objective')
    if residual > (1.0 - min_gain) * initial:
        return identity()

    correction = OffsetCorrection(v_offset, i_offset, residual, initial)
    return apply_offsets(tr, correction), correction


def apply_offsets(tr, correction):
    """Subtract a correction from a trace, accumulating it in meta."""
    if correction.is_identity:
        return tr
    return tr.with_values(
        tr.v - correction.v_offset, tr.i - correction.i_offset,
        v_offset=tr.meta.get('v_offset', 0.0) + correction.v_offset,
        i_offset=tr.meta.get('i_offset', 0.0) + correction.i_offset,
    )


def clean_trace(tr):
    """
    Align and offset-correct a trace.

    Offsets are estimated on the aligned trace. When they are not zero the correction is
    applied to ``tr`` itself and the result aligned again, so the corrected voltage starts on
    its own rising zero crossing.
    """
    trace, correction = remove_offsets(align_periods(tr))
    if not correction.is_identity:
        trace = align_periods(apply_offsets(tr, correction))
    return trace, correction


def preprocess(c):
    """Run derive_signals, align_periods and remove_offsets on a capture."""
    trace, _ = clean_trace(derive_signals(c))
    return trace
