"""
Model fitting: current-region clustering, region-weighted losses, per-trace state fits and
the iterative logarithmic grid search over the model parameters.
"""
import itertools
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from django.db import models
from scipy.optimize import least_squares

from .conf import resolve
from .exceptions import (
    DataError,
    DegenerateOperatingPoint,
    DegenerateRegion,
    InvalidTrace,
    SearchCollapsed,
    StateFitDiverged,
)
from .model_core import (
    PARAM_NAMES,
    ModelKind,
    ModelParams,
    conduction_denominator,
    diode_current,
    forward_current,
    guarded_exp,
)

logger = logging.getLogger(__name__)

METRIC_NAMES = ('mse', 'mae', 'mre', 'mrse')


class Shaping(models.TextChoices):
    MSE = 'mse', 'Squared error'
    MAE = 'mae', 'Absolute error'
    MRE = 'mre', 'Relative error with pedestal'
    MRSE = 'mrse', 'Relative squared error with pedestal'
    SQUARE = 'square', 'Squared error'


@dataclass(frozen=True)
class LossConfig:
    """
    Region-weighted loss settings.

    Attributes:
        k_regions: int - Number of current-magnitude regions per trace.
        shaping: Shaping - Function applied to each region-scaled error.
        epsilon1: float - Pedestal of the relative error.
        epsilon2: float - Pedestal of the relative squared error.
    """
    k_regions: int = 8
    shaping: str = Shaping.MSE
    epsilon1: float = 1e-3
    epsilon2: float = 1e-6

    def __post_init__(self):
        if int(self.k_regions) != self.k_regions or self.k_regions < 1:
            raise DataError(f'k_regions must be a positive integer, got {self.k_regions!r}')
        try:
            object.__setattr__(self, 'shaping', Shaping(self.shaping))
        except ValueError:
            raise DataError(f'unknown shaping function {self.shaping!r}') from None
        if not (self.epsilon1 > 0 and self.epsilon2 > 0):
            raise DataError('pedestals must be positive')


@dataclass(frozen=True)
class GridSearchConfig:
    """
    Iterative logarithmic grid search settings.

    Attributes:
        n_points: int - Candidate values per axis (1 evaluates the geometric midpoint).
        n_iters: int - Refinement iterations.
        lower: tuple - Lower bound per parameter, in PARAM_NAMES order.
        upper: tuple - Upper bound per parameter, in PARAM_NAMES order.
        shrink_factor: float - Log-width multiplier applied after each iteration.
    """
    n_points: int = 7
    n_iters: int = 10
    lower: tuple = (1e-6,) * 5
    upper: tuple = (1e2,) * 5
    shrink_factor: float = 0.5

    def __post_init__(self):
        for name in ('lower', 'upper'):
            bounds = np.broadcast_to(np.asarray(getattr(self, name), dtype=float), (5,))
            object.__setattr__(self, name, tuple(float(b) for b in bounds))
        lower, upper = np.array(self.lower), np.array(self.upper)
        if not (np.all(np.isfinite(lower)) and np.all(np.isfinite(upper)) and np.all(lower > 0)):
            raise DataError('grid bounds must be finite and positive')
        if np.any(lower >= upper):
            raise DataError('every lower bound must be below its upper bound')
        if int(self.n_points) != self.n_points or self.n_points < 1:
            raise DataError(f'n_points must be a positive integer, got {self.n_points!r}')
        if int(self.n_iters) != self.n_iters or self.n_iters < 1:
            raise DataError(f'n_iters must be a positive integer, got {self.n_iters!r}')
        if not 0 < self.shrink_factor <= 1:
            raise DataError(f'shrink_factor must lie in (0, 1], got {self.shrink_factor!r}')


@dataclass(frozen=True, eq=False)
class Region:
    centroid: float
    members: np.ndarray


@dataclass(frozen=True, eq=False)
class RegionPartition:
    """
    Current-magnitude regions of one trace.

    Attributes:
        regions: tuple of Region - Disjoint, exhaustive, centroids strictly increasing.
        size: int - Number of samples partitioned.
        requested_k: int - Region count asked for.
        reduced: bool - True when fewer distinct values than requested_k forced a smaller k.
    """
    regions: tuple
    size: int
    requested_k: int
    reduced: bool = False

    @property
    def k(self):
        return len(self.regions)

    @property
    def centroids(self):
        return np.array([region.centroid for region in self.regions])

    def labels(self):
        labels = np.empty(self.size, dtype=int)
        for index, region in enumerate(self.regions):
            labels[region.members] = index
        return labels

    def sample_centroids(self):
        return np.abs(self.centroids)[self.labels()]

    def sample_weights(self):
        """Per-sample weight 1 / (k |D_j|), so weighted sums average over regions."""
        counts = np.array([len(region.members) for region in self.regions], dtype=float)
        return (1.0 / (self.k * counts))[self.labels()]

    def within_ss(self, values):
        values = np.asarray(values, dtype=float)
        return float(sum(np.sum((values[r.members] - r.centroid) ** 2) for r in self.regions))


@dataclass
class FitResult:
    """
    Outcome of a grid search.

    Attributes:
        kind: ModelKind - Fitted model.
        params: ModelParams - Best parameter vector.
        states: list - Fitted state per trace, in dataset order.
        loss_history: list - Best loss found after each iteration.
        metrics: dict - Dataset-averaged mse, mae, mre and mrse.
        loss: float - Final dataset loss.
    """
    kind: str
    params: ModelParams
    states: list
    loss_history: list
    metrics: dict = field(default_factory=dict)
    loss: float = float('nan')

    def to_dict(self):
        return {
            'kind': ModelKind(self.kind).value,
            'params': self.params.as_dict(),
            'states': [float(x) for x in self.states],
            'loss_history': [float(v) for v in self.loss_history],
            'metrics': {name: float(value) for name, value in self.metrics.items()},
            'loss': float(self.loss),
        }


def _optimal_starts(values, weights, k):
    """
    Exact 1-D k-means over sorted distinct ``values`` with multiplicities ``weights``.

    Dynamic programming over prefix sums, each row filled by divide and conquer on the
    monotone optimal split. Returns the start index of every cluster.
    """
    n = len(values)
    shift = np.average(values, weights=weights)
    scale = np.max(np.abs(values - shift)) or 1.0
    y = (values - shift) / scale
    cw = np.concatenate(([0.0], np.cumsum(weights)))
    cs = np.concatenate(([0.0], np.cumsum(weights * y)))
    cq = np.concatenate(([0.0], np.cumsum(weights * y * y)))

    def cost(start, stop):
        w = cw[stop + 1] - cw[start]
        s = cs[stop + 1] - cs[start]
        q = cq[stop + 1] - cq[start]
        return np.maximum(q - s * s / w, 0.0)

    previous = cost(np.zeros(n, dtype=int), np.arange(n))
    splits = np.zeros((k, n), dtype=int)
    for m in range(1, k):
        row = np.full(n, np.inf)
        split = np.zeros(n, dtype=int)

        def fill(lo, hi, opt_lo, opt_hi):
            if lo > hi:
                return
            mid = (lo + hi) // 2
            starts = np.arange(max(opt_lo, m), min(mid, opt_hi) + 1)
            candidates = previous[starts - 1] + cost(starts, mid)
            best = int(np.argmin(candidates))
            row[mid] = candidates[best]
            split[mid] = starts[best]
            fill(lo, mid - 1, opt_lo, starts[best])
            fill(mid + 1, hi, starts[best], opt_hi)

        fill(m, n - 1, m, n - 1)
        splits[m] = split
        previous = row

    starts = [0] * k
    stop = n - 1
    for m in range(k - 1, 0, -1):
        starts[m] = int(splits[m][stop])
        stop = starts[m] - 1
    return starts


def cluster_currents(currents, k):
    """
    Partition currents into k regions by exact one-dimensional k-means.

    Equal values always share a region, regions are contiguous in sorted order and
    centroids strictly increase. With fewer distinct values than k, k is reduced to the
    distinct count and the partition is flagged ``reduced``.
    """
    values = np.asarray(currents, dtype=float)
    if values.ndim != 1 or values.size == 0:
        raise InvalidTrace('clustering needs a non-empty one-dimensional set of currents')
    if not np.all(np.isfinite(values)):
        raise InvalidTrace('clustering needs finite currents')
    if int(k) != k or k < 1:
        raise DataError(f'k must be a positive integer, got {k!r}')

    distinct, inverse, counts = np.unique(values, return_inverse=True, return_counts=True)
    reduced = distinct.size < k
    if reduced:
        logger.info('Only %d distinct currents; reducing k from %d', distinct.size, k)
    n_regions = min(int(k), distinct.size)

    starts = _optimal_starts(distinct, counts.astype(float), n_regions)
    distinct_labels = np.searchsorted(starts, np.arange(distinct.size), side='right') - 1
    labels = distinct_labels[inverse.reshape(-1)]
    regions = []
    for index in range(n_regions):
        members = np.flatnonzero(labels == index)
        regions.append(Region(centroid=float(np.mean(values[members])), members=members))
    return RegionPartition(tuple(regions), values.size, int(k), reduced)


def trace_partition(tr, k):
    """Regions over the current magnitudes of a trace."""
    return cluster_currents(np.abs(tr.i), k)


def shape_errors(shaping, error, reference, cfg):
    """Apply a shaping function to region-scaled errors and references."""
    shaping = Shaping(shaping)
    if shaping in (Shaping.MSE, Shaping.SQUARE):
        return error ** 2
    if shaping == Shaping.MAE:
        return np.abs(error)
    if shaping == Shaping.MRE:
        return np.abs(error) / (np.abs(reference) + cfg.epsilon1)
    return error ** 2 / (reference ** 2 + cfg.epsilon2)


def _check_region_inputs(predicted, observed, part, floor):
    predicted = np.asarray(predicted, dtype=float)
    observed = np.asarray(observed, dtype=float)
    if predicted.shape != observed.shape or predicted.ndim != 1:
        raise DataError('predicted and observed must be one-dimensional and of equal length')
    if part.size != observed.size:
        raise DataError('the region partition does not cover the samples')
    floor = resolve(floor, 'REGION_FLOOR')
    if np.any(np.abs(part.centroids) < floor):
        raise DegenerateRegion(f'degenerate region: centroid magnitude below {floor:g} A')
    return predicted, observed


def region_loss(predicted, observed, part, cfg=None, shaping=None, floor=None):
    """
    Region-weighted fitting error of one trace.

    For every region the shaped error |predicted - observed| / |C_j| is averaged over its
    members; the result is the unweighted mean over regions.
    """
    cfg = cfg or LossConfig()
    shaping = cfg.shaping if shaping is None else shaping
    predicted, observed = _check_region_inputs(predicted, observed, part, floor)
    region_means = []
    for region in part.regions:
        scale = abs(region.centroid)
        error = np.abs(predicted[region.members] - observed[region.members]) / scale
        reference = observed[region.members] / scale
        region_means.append(np.mean(shape_errors(shaping, error, reference, cfg)))
    return float(np.mean(region_means))


def dataset_loss(per_trace_losses):
    """Arithmetic mean of the per-trace losses."""
    losses = np.asarray(list(per_trace_losses), dtype=float)
    if losses.size == 0:
        raise DataError('dataset loss needs at least one trace')
    return float(np.mean(losses))


def eval_metrics(predicted, observed, part, cfg=None):
    """Region-scaled mse, mae, mre and mrse of one trace."""
    cfg = cfg or LossConfig()
    return {name: region_loss(predicted, observed, part, cfg, shaping=name) for name in METRIC_NAMES}


def _state_basis(kind, p, v, saturate=False):
    """Split the model as i = x * basis + offset."""
    kind = ModelKind(kind)
    basis = np.asarray(conduction_denominator(kind, p, v, saturate), dtype=float)
    if kind == ModelKind.PROPOSED:
        return basis, np.zeros_like(basis)
    return basis, np.asarray(diode_current(kind, p, v, saturate), dtype=float)


def solve_state(kind, p, tr):
    """Closed-form least-squares state of one trace, clamped at zero."""
    kind = ModelKind(kind)
    p.check_kind(kind)
    basis, offset = _state_basis(kind, p, tr.v)
    denominator = float(np.dot(basis, basis))
    if denominator == 0.0:
        raise DegenerateOperatingPoint('degenerate operating point: the trace carries no voltage')
    return max(float(np.dot(basis, tr.i - offset)) / denominator, 0.0)


def solve_states(kind, p, traces):
    return [solve_state(kind, p, tr) for tr in traces]


def fit_state(kind, p, tr, max_iterations=None):
    """
    Fit the state of one trace by Levenberg-Marquardt damped least squares.

    Minimises sum (forward_current(kind, p, x, v) - i)^2 over x and clamps the result at
    zero. The model is linear in x, so the result matches solve_state.
    """
    kind = ModelKind(kind)
    p.check_kind(kind)
    max_iterations = resolve(max_iterations, 'STATE_FIT_MAX_ITERATIONS')
    if len(tr) == 0:
        raise InvalidTrace('cannot fit the state of an empty trace')
    basis, offset = _state_basis(kind, p, tr.v)
    if not np.any(basis):
        raise DegenerateOperatingPoint('degenerate operating point: the trace carries no voltage')
    target = tr.i - offset
    jacobian = basis[:, None]

    result = least_squares(
        lambda x: x[0] * basis - target,
        x0=[0.0],
        jac=lambda x: jacobian,
        method='lm',
        ftol=1e-15,
        xtol=1e-15,
        gtol=1e-15,
        max_nfev=max_iterations,
    )
    if result.status <= 0 or not np.isfinite(result.x[0]):
        raise StateFitDiverged(float(result.x[0]), f'state fit diverged: {result.message}')
    return max(float(result.x[0]), 0.0)


def predict(kind, p, x, v):
    return forward_current(kind, p, x, v)


def _axes(kind):
    """Parameter indices driven by each search axis; gmss ties alpha1 and alpha2."""
    if ModelKind(kind) == ModelKind.GMSS:
        return ((0,), (1, 2), (3,), (4,))
    return tuple((index,) for index in range(len(PARAM_NAMES)))


def _log_grid(lo, hi, n_points):
    if n_points == 1:
        return np.array([10.0 ** ((lo + hi) / 2.0)])
    return np.logspace(lo, hi, n_points)


@dataclass(frozen=True, eq=False)
class _Batch:
    """Dataset flattened for vectorised scoring."""
    v: np.ndarray
    i: np.ndarray
    starts: np.ndarray
    trace_index: np.ndarray
    inv_scale: np.ndarray
    weight: np.ndarray

    @classmethod
    def build(cls, dataset, partitions, floor=None):
        floor = resolve(floor, 'REGION_FLOOR')
        inv_scale, weight = [], []
        for part in partitions:
            if np.any(np.abs(part.centroids) < floor):
                raise DegenerateRegion(f'degenerate region: centroid magnitude below {floor:g} A')
            inv_scale.append(1.0 / part.sample_centroids())
            weight.append(part.sample_weights() / len(dataset))
        lengths = [len(tr) for tr in dataset]
        return cls(
            v=np.concatenate([tr.v for tr in dataset]),
            i=np.concatenate([tr.i for tr in dataset]),
            starts=np.concatenate(([0], np.cumsum(lengths)[:-1])),
            trace_index=np.repeat(np.arange(len(dataset)), lengths),
            inv_scale=np.concatenate(inv_scale),
            weight=np.concatenate(weight),
        )


def _score_chunk(kind, candidates, batch, loss):
    """Dataset loss of every candidate row, states solved in closed form per trace."""
    g_m, alpha1, alpha2, beta1, beta2 = (candidates[:, [k]] for k in range(5))
    v = batch.v[None, :]
    with np.errstate(over='ignore', invalid='ignore', divide='ignore'):
        schottky = kind != ModelKind.GMSS
        diode = (alpha1 * guarded_exp(beta1 * v, 'beta1*v', True, minus_one=schottky)
                 - alpha2 * guarded_exp(-beta2 * v, '-beta2*v', True, minus_one=schottky))
        if kind == ModelKind.PROPOSED:
            basis, offset = g_m * v + diode, 0.0
        else:
            basis, offset = g_m * v, diode
        target = batch.i[None, :] - offset
        numerator = np.add.reduceat(basis * target, batch.starts, axis=1)
        denominator = np.add.reduceat(basis * basis, batch.starts, axis=1)
        states = np.maximum(numerator / denominator, 0.0)
        predicted = states[:, batch.trace_index] * basis + offset
        error = np.abs(predicted - batch.i[None, :]) * batch.inv_scale
        reference = batch.i * batch.inv_scale
        return shape_errors(loss.shaping, error, reference, loss) @ batch.weight


def _score(kind, candidates, batch, loss, threads, chunk_size):
    chunks = [candidates[start:start + chunk_size]
              for start in range(0, len(candidates), chunk_size)]
    if threads == 1 or len(chunks) == 1:
        scores = [_score_chunk(kind, chunk, batch, loss) for chunk in chunks]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            scores = list(pool.map(lambda chunk: _score_chunk(kind, chunk, batch, loss), chunks))
    return np.concatenate(scores)


def grid_search(dataset, kind, cfg=None, loss=None, threads=None, chunk_size=None):
    """
    Fit model parameters to a dataset of traces by iterative logarithmic grid search.

    Every iteration scores all combinations of n_points log-spaced values per axis with the
    dataset loss (states solved per trace and candidate), recentres each axis on the best
    point found so far, shrinks its log-width by shrink_factor and clamps it to the
    original bounds. Ties go to the first candidate in lexicographic parameter order.
    """
    kind = ModelKind(kind)
    cfg = cfg or GridSearchConfig()
    loss = loss or LossConfig()
    dataset = list(dataset)
    if not dataset:
        raise DataError('grid search needs at least one trace')
    threads = resolve(threads, 'THREADS') or os.cpu_count() or 1
    chunk_size = resolve(chunk_size, 'GRID_CHUNK_SIZE')

    partitions = [trace_partition(tr, loss.k_regions) for tr in dataset]
    batch = _Batch.build(dataset, partitions)

    axes = _axes(kind)
    leading = [axis[0] for axis in axes]
    global_lo = np.log10(np.array(cfg.lower))[leading]
    global_hi = np.log10(np.array(cfg.upper))[leading]
    lo, hi = global_lo.copy(), global_hi.copy()

    best_loss, best_point, history = np.inf, None, []
    for iteration in range(cfg.n_iters):
        grids = [_log_grid(lo[a], hi[a], cfg.n_points) for a in range(len(axes))]
        combos = np.array(list(itertools.product(*grids)))
        candidates = np.empty((len(combos), 5))
        for column, axis in enumerate(axes):
            for index in axis:
                candidates[:, index] = combos[:, column]

        losses = _score(kind, candidates, batch, loss, threads, chunk_size)
        finite = np.isfinite(losses)
        if not finite.any():
            raise SearchCollapsed()
        index = int(np.argmin(np.where(finite, losses, np.inf)))
        if losses[index] < best_loss:
            best_loss, best_point = float(losses[index]), candidates[index].copy()
        history.append(best_loss)
        logger.info('Grid search %s iteration %d/%d: best loss %.6g',
                    kind.value, iteration + 1, cfg.n_iters, best_loss)

        centre = np.log10(best_point[leading])
        width = (hi - lo) * cfg.shrink_factor
        lo = np.maximum(centre - width / 2.0, global_lo)
        hi = np.minimum(centre + width / 2.0, global_hi)

    params = ModelParams.from_sequence(best_point)
    states = [fit_state(kind, params, tr) for tr in dataset]
    per_trace = [
        eval_metrics(predict(kind, params, x, tr.v), tr.i, part, loss)
        for tr, x, part in zip(dataset, states, partitions)
    ]
    metrics = {name: dataset_loss(m[name] for m in per_trace) for name in METRIC_NAMES}
    final_loss = dataset_loss(
        region_loss(predict(kind, params, x, tr.v), tr.i, part, loss)
        for tr, x, part in zip(dataset, states, partitions)
    )
    return FitResult(kind, params, states, history, metrics, final_loss)
