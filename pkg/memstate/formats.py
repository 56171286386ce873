"""
File formats of the pipeline.

- Capture: CSV ``t,v_total,v_series`` with a JSON sidecar of the same stem.
- Trace: CSV ``v_mem,i_mem`` with a JSON sidecar of the same stem.
- Manifest, synth config, fit result and estimate documents: JSON.
- Drift series: CSV ``t,x_hat,inv_x_hat``.

CSV files are read by pandas with round-trip float parsing and written with the shortest
representation that parses back to the same float. JSON documents are validated by the
serializers in :mod:`memstate.serializers`.
"""
import json
from pathlib import Path

import numpy as np
import pandas as pd

from .conf import memstate_settings
from .exceptions import FormatError
from .fit_engine import GridSearchConfig, LossConfig
from .model_core import REFERENCE_PARAMS, ModelKind, ModelParams
from .serializers import (
    CaptureSidecarSerializer,
    FitResultSerializer,
    ManifestSerializer,
    SynthConfigSerializer,
    TraceSidecarSerializer,
)
from .signal_prep import RawCapture, Trace, clean_trace, derive_signals
from .state_estimator import NoiseModel
from .synth_bench import SynthConfig

CAPTURE_COLUMNS = ['t', 'v_total', 'v_series']
TRACE_COLUMNS = ['v_mem', 'i_mem']
DRIFT_COLUMNS = ['t', 'x_hat', 'inv_x_hat']


def sidecar_path(path):
    return Path(path).with_suffix('.json')


def _plain(value):
    """Convert numpy scalars and containers to JSON-native values."""
    if isinstance(value, dict):
        return {str(key): _plain(item) for key, item in value.items()}
    if isinstance(value, (list, tuple, np.ndarray)):
        return [_plain(item) for item in value]
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    return value


def dumps(payload):
    """Serialise a document with its schema version first."""
    document = {'schema_version': memstate_settings.SCHEMA_VERSION}
    document.update(_plain(payload))
    return json.dumps(document, indent=2, sort_keys=False) + '\n'


def write_json(payload, path):
    Path(path).write_text(dumps(payload))


def read_json(path):
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f'{path}: invalid JSON ({exc.msg} at line {exc.lineno})') from None


def validate(serializer_class, data, source, **kwargs):
    """Validate a document, raising FormatError with the serializer errors."""
    serializer = serializer_class(data=data, **kwargs)
    if not serializer.is_valid():
        raise FormatError(f'{source}: invalid document', errors=_plain(serializer.errors))
    return serializer.validated_data


def _read_csv(path, columns):
    try:
        frame = pd.read_csv(path, float_precision='round_trip')
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as exc:
        raise FormatError(f'{path}: unreadable CSV ({exc})') from None
    if list(frame.columns) != columns:
        raise FormatError(f'{path}: expected columns {",".join(columns)}, got {",".join(map(str, frame.columns))}')
    try:
        frame = frame.astype(float)
    except (TypeError, ValueError):
        raise FormatError(f'{path}: non-numeric values') from None
    missing = frame.isna().any(axis=1).to_numpy()
    if missing.any():
        # Header is line 1.
        raise FormatError(f'{path}: missing value in row {int(np.argmax(missing)) + 2}')
    return frame


def _write_csv(columns, path):
    pd.DataFrame(columns).to_csv(path, index=False, lineterminator='\n')


def csv_kind(path):
    """'capture' or 'trace', from the CSV header."""
    try:
        header = pd.read_csv(path, nrows=0).columns.tolist()
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as exc:
        raise FormatError(f'{path}: unreadable CSV ({exc})') from None
    if header == CAPTURE_COLUMNS:
        return 'capture'
    if header == TRACE_COLUMNS:
        return 'trace'
    raise FormatError(f'{path}: header is neither a capture nor a trace')


def read_capture(path):
    frame = _read_csv(path, CAPTURE_COLUMNS)
    sidecar = validate(CaptureSidecarSerializer, read_json(sidecar_path(path)), sidecar_path(path))
    return RawCapture(
        t=frame['t'].to_numpy(),
        v_total=frame['v_total'].to_numpy(),
        v_series=frame['v_series'].to_numpy(),
        r_series=sidecar['r_series_ohms'],
        n_period=sidecar['n_period'],
        sample_rate=sidecar['sample_rate_hz'],
        meta=sidecar['meta'],
    )


def write_capture(c, path):
    _write_csv({'t': c.t, 'v_total': c.v_total, 'v_series': c.v_series}, path)
    write_json({
        'r_series_ohms': float(c.r_series),
        'n_period': int(c.n_period),
        'sample_rate_hz': float(c.sample_rate),
        'meta': c.meta,
    }, sidecar_path(path))


def read_trace(path):
    frame = _read_csv(path, TRACE_COLUMNS)
    sidecar = validate(TraceSidecarSerializer, read_json(sidecar_path(path)), sidecar_path(path))
    meta = dict(sidecar['meta'])
    if sidecar['r_series_ohms'] is not None:
        meta['r_series'] = sidecar['r_series_ohms']
    return Trace(
        v=frame['v_mem'].to_numpy(),
        i=frame['i_mem'].to_numpy(),
        n_period=sidecar['n_period'],
        meta=meta,
    )


def write_trace(tr, path):
    _write_csv({'v_mem': tr.v, 'i_mem': tr.i}, path)
    meta = {key: value for key, value in tr.meta.items() if key != 'r_series'}
    write_json({
        'n_period': int(tr.n_period),
        'r_series_ohms': tr.r_series,
        'meta': dict(sorted(meta.items())),
    }, sidecar_path(path))


def load_trace(path, preprocess=True):
    """
    Trace from a trace file, or from a capture file run through preprocessing (or only
    derive_signals with ``preprocess`` false).
    """
    if csv_kind(path) == 'trace':
        return read_trace(path)
    trace = derive_signals(read_capture(path))
    return clean_trace(trace)[0] if preprocess else trace


def read_manifest(path):
    """Validated manifest with trace and output paths resolved against its directory."""
    path = Path(path)
    manifest = dict(validate(ManifestSerializer, read_json(path), path))
    base = path.parent
    manifest['traces'] = [base / trace for trace in manifest['traces']]
    missing = [str(trace) for trace in manifest['traces'] if not trace.is_file()]
    if missing:
        raise FormatError(f'{path}: missing trace files', missing=missing)
    if 'output' in manifest:
        manifest['output'] = base / manifest['output']
    manifest['kind'] = ModelKind(manifest['kind'])
    manifest['grid'] = GridSearchConfig(**manifest.get('grid', {}))
    manifest['loss'] = LossConfig(**manifest.get('loss', {}))
    manifest['noise'] = NoiseModel(**manifest['noise']) if 'noise' in manifest else None
    return manifest


def synth_config_from_data(data, source='synth config'):
    document = validate(SynthConfigSerializer, data, source)
    kind = ModelKind(document['kind'])
    if 'preset' in document:
        params = REFERENCE_PARAMS[ModelKind(document['preset'])]
    else:
        params = ModelParams(**document['params'])
    read = document.get('read', {})
    options = {
        key: read[name] for key, name in (
            ('read_amplitudes', 'amplitudes'),
            ('read_period', 'period'),
            ('n_cycles', 'n_cycles'),
            ('samples_per_period', 'samples_per_period'),
        ) if name in read
    }
    return SynthConfig(
        params=params,
        kind=kind,
        state_schedule=document['state_schedule'],
        noise=NoiseModel(**document.get('noise', {})),
        seed=document['seed'],
        v_offset_inject=document['v_offset_inject'],
        i_offset_inject=document['i_offset_inject'],
        **options,
    )


def read_synth_config(path):
    return synth_config_from_data(read_json(path), path)


def read_fit_result(path):
    """Validated fit result document with ``kind`` and ``params`` as model objects."""
    document = dict(validate(FitResultSerializer, read_json(path), path))
    document['kind'] = ModelKind(document['kind'])
    document['params'] = ModelParams(**document['params']).check_kind(document['kind'])
    return document


def write_drift_csv(series, path):
    _write_csv({
        't': [point.t for point in series],
        'x_hat': [point.x_hat for point in series],
        'inv_x_hat': [point.inv_x_hat for point in series],
    }, path)
