"""
Command line front end.

Subcommands wire the pipeline stages to the file formats of :mod:`memstate.formats`:

- ``synth``: synth config -> capture CSV + sidecar per scheduled trace, plus a manifest.
- ``preprocess``: capture (or trace) CSV -> trace CSV ``v_mem,i_mem``.
- ``fit``: manifest -> fit result JSON.
- ``estimate``: fit result + trace files -> estimate JSON.
- ``eval``: fit result + trace file -> metrics JSON.
- ``drift``: fit result + time-ordered trace files -> drift CSV ``t,x_hat,inv_x_hat``.

Exit statuses: 0 success, 1 usage error, 2 data error, 3 numerical failure. Failures print
one line of JSON on the diagnostic stream.
"""
import json
import logging
import sys
from pathlib import Path

from django.core.management.base import CommandError, CommandParser
from rest_framework.exceptions import ValidationError

from . import formats
from .exceptions import DataError, FormatError, MemstateError, UsageError
from .fit_engine import LossConfig, eval_metrics, fit_state, grid_search, predict, trace_partition
from .models import Device, FitRun, StateReading
from .signal_prep import clean_trace, derive_signals
from .state_estimator import NoiseModel, drift_series_estimate, estimate_state
from .synth_bench import simulate_capture

logger = logging.getLogger(__name__)

DRIFT_INTERVAL = 60.0
DEFAULT_R_SERIES = 1e5


def _emit(text, output, stdout):
    if output:
        Path(output).write_text(text)
    else:
        stdout.write(text)


def _record_device(label, r_series=None):
    device, _ = Device.objects.get_or_create(label=label, defaults={'r_series': r_series})
    return device


def _fit_run_for(fit, label):
    """FitRun stored for a fit result document, reusing an identical earlier one."""
    device = _record_device(label)
    params = fit['params'].as_dict()
    run = FitRun.objects.filter(device=device, kind=fit['kind'].value, **params).first()
    if run is None:
        run = FitRun.objects.create(
            device=device, kind=fit['kind'].value, states=fit['states'],
            loss_history=fit['loss_history'], metrics=fit['metrics'], loss=fit['loss'], **params)
    return device, run


def _noise(options, fit, trace=None):
    """Noise model from the command line, then the trace meta, then the fit manifest."""
    declared = fit.get('noise') or {}
    sigma_n = options.sigma_n if options.sigma_n is not None else declared.get('sigma_n', 0.0)
    r_series = (options.r_series or (trace.r_series if trace is not None else None)
                or declared.get('r_series') or DEFAULT_R_SERIES)
    return NoiseModel(sigma_n=sigma_n, r_series=r_series)


def _exclusion_fraction(options, fit):
    if options.exclusion_fraction is not None:
        return options.exclusion_fraction
    return fit.get('exclusion_fraction')


def handle_synth(options, stdout):
    cfg = formats.read_synth_config(options.config)
    out_dir = Path(options.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    names = []
    for index, _ in cfg.state_schedule:
        capture = simulate_capture(cfg, cfg.read_spec(index), index)
        name = f'{options.prefix}_{index:03d}.csv'
        formats.write_capture(capture, out_dir / name)
        names.append(name)
    formats.write_json({'traces': names, 'kind': cfg.kind.value}, out_dir / 'manifest.json')
    logger.info('Wrote %d captures to %s', len(names), out_dir)


def handle_preprocess(options, stdout):
    if formats.csv_kind(options.input) == 'capture':
        trace, correction = clean_trace(derive_signals(formats.read_capture(options.input)))
    else:
        trace, correction = clean_trace(formats.read_trace(options.input))
    if correction.warning:
        logger.warning('%s: %s', options.input, correction.warning)
    formats.write_trace(trace, options.output)


def handle_fit(options, stdout):
    manifest = formats.read_manifest(options.manifest)
    traces = [formats.load_trace(path) for path in manifest['traces']]
    result = grid_search(traces, manifest['kind'], manifest['grid'], manifest['loss'],
                         threads=options.threads)
    payload = result.to_dict()
    payload['traces'] = [str(path) for path in manifest['traces']]
    if manifest['noise'] is not None:
        payload['noise'] = {'sigma_n': manifest['noise'].sigma_n, 'r_series': manifest['noise'].r_series}
    if 'exclusion_fraction' in manifest:
        payload['exclusion_fraction'] = manifest['exclusion_fraction']
    _emit(formats.dumps(payload), options.output or manifest.get('output'), stdout)
    if options.record:
        FitRun.from_result(result, _record_device(options.record, traces[0].r_series))


def handle_estimate(options, stdout):
    fit = formats.read_fit_result(options.fit)
    estimates = []
    for path in options.traces:
        trace = formats.load_trace(path)
        noise = _noise(options, fit, trace)
        estimate = estimate_state(
            trace, fit['params'], noise, _exclusion_fraction(options, fit), fit['kind'])
        estimates.append({'trace': str(path), **estimate.to_dict(noise)})
        if options.record:
            device, run = _fit_run_for(fit, options.record)
            StateReading.from_estimate(device, estimate, t=trace.meta.get('t', 0.0), fit_run=run)
    _emit(formats.dumps({'estimates': estimates}), options.output, stdout)


def handle_eval(options, stdout):
    fit = formats.read_fit_result(options.fit)
    trace = formats.load_trace(options.trace)
    loss = LossConfig(k_regions=options.k_regions)
    state = options.state if options.state is not None else fit_state(fit['kind'], fit['params'], trace)
    predicted = predict(fit['kind'], fit['params'], state, trace.v)
    metrics = eval_metrics(predicted, trace.i, trace_partition(trace, loss.k_regions), loss)
    payload = {'kind': fit['kind'].value, 'trace': str(options.trace), 'state': state, 'metrics': metrics}
    _emit(formats.dumps(payload), options.output, stdout)


def handle_drift(options, stdout):
    fit = formats.read_fit_result(options.fit)
    traces = [formats.load_trace(path) for path in options.traces]
    times = [tr.meta.get('t', index * options.interval) for index, tr in enumerate(traces)]
    noise = _noise(options, fit, traces[0] if traces else None)
    series = drift_series_estimate(traces, fit['params'], noise, times,
                                   _exclusion_fraction(options, fit), fit['kind'])
    formats.write_drift_csv(series, options.output)
    if options.record:
        device, run = _fit_run_for(fit, options.record)
        for point in series:
            if point.estimate is not None:
                StateReading.from_estimate(device, point.estimate, t=point.t, fit_run=run)


HANDLERS = {
    'synth': handle_synth,
    'preprocess': handle_preprocess,
    'fit': handle_fit,
    'estimate': handle_estimate,
    'eval': handle_eval,
    'drift': handle_drift,
}


def create_parser():
    parser = CommandParser(prog='memstate', description='Memristor state characterization.')
    commands = parser.add_subparsers(dest='command', required=True)

    synth = commands.add_parser('synth', help='Generate synthetic captures.')
    synth.add_argument('config')
    synth.add_argument('--out-dir', required=True)
    synth.add_argument('--prefix', default='capture')

    preprocess = commands.add_parser('preprocess', help='Derive, align and offset-correct a capture.')
    preprocess.add_argument('input')
    preprocess.add_argument('output')

    fit = commands.add_parser('fit', help='Fit model parameters by grid search.')
    fit.add_argument('manifest')
    fit.add_argument('--output')
    fit.add_argument('--threads', type=int)
    fit.add_argument('--record', metavar='LABEL')

    def add_estimation_arguments(sub):
        sub.add_argument('fit')
        sub.add_argument('traces', nargs='*')
        sub.add_argument('--sigma-n', type=float)
        sub.add_argument('--r-series', type=float)
        sub.add_argument('--exclusion-fraction', type=float)
        sub.add_argument('--record', metavar='LABEL')

    estimate = commands.add_parser('estimate', help='Estimate trace states.')
    add_estimation_arguments(estimate)
    estimate.add_argument('--output')

    evaluate = commands.add_parser('eval', help='Evaluate a fit on one trace.')
    evaluate.add_argument('fit')
    evaluate.add_argument('trace')
    evaluate.add_argument('--state', type=float)
    evaluate.add_argument('--k-regions', type=int, default=8)
    evaluate.add_argument('--output')

    drift = commands.add_parser('drift', help='Estimate a time series of states.')
    add_estimation_arguments(drift)
    drift.add_argument('--interval', type=float, default=DRIFT_INTERVAL)
    drift.add_argument('--output', required=True)
    return parser


def run(argv, stdout=None, stderr=None):
    """Run one subcommand and return its exit status."""
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    try:
        try:
            options = create_parser().parse_args(list(argv))
        except CommandError as exc:
            raise UsageError(str(exc)) from None
        except SystemExit as exc:
            if not exc.code:
                return 0
            raise UsageError('invalid command line') from None
        if options.command == 'estimate' and not options.traces:
            raise UsageError('estimate needs at least one trace file')
        HANDLERS[options.command](options, stdout)
    except MemstateError as exc:
        error = exc
    except ValidationError as exc:
        error = FormatError('invalid input', errors=exc.detail)
    except OSError as exc:
        error = DataError(f'{exc.filename}: {exc.strerror}')
    else:
        return 0
    logger.debug('memstate %s failed: %s', argv[0] if argv else '', error.message)
    stderr.write(json.dumps(error.as_dict(), default=str) + '\n')
    return error.exit_status
