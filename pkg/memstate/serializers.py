"""
This module provides serializers for the memstate documents and registry models.

Document serializers validate the JSON files and request bodies the pipeline consumes:
sidecars, manifests, synth configs, fit results and estimate requests. They reject unknown
keys and any schema version other than the current one. Model serializers define the API
representation of the registry.
"""
from rest_framework import serializers

from .conf import memstate_settings
from .fit_engine import Shaping
from .model_core import PARAM_NAMES, ModelKind
from .models import Device, FitRun, StateReading


class StrictSerializer(serializers.Serializer):
    """
    Serializer that rejects keys it does not declare.
    """
    def to_internal_value(self, data):
        if isinstance(data, dict):
            unknown = sorted(set(data) - set(self.fields))
            if unknown:
                raise serializers.ValidationError({key: ['Unknown key.'] for key in unknown})
        return super().to_internal_value(data)


class VersionedSerializer(StrictSerializer):
    """
    Strict serializer carrying a ``schema_version``; a missing version means the current one.
    """
    schema_version = serializers.IntegerField(required=False)

    def validate_schema_version(self, value):
        if value != memstate_settings.SCHEMA_VERSION:
            raise serializers.ValidationError(
                f'Unsupported schema version {value}, expected {memstate_settings.SCHEMA_VERSION}.')
        return value


class BoundsField(serializers.Field):
    """A single positive bound for every parameter, or one per parameter."""
    default_error_messages = {
        'invalid': 'Expected a number or a list of five numbers.',
    }

    def to_internal_value(self, data):
        values = data if isinstance(data, list) else [data]
        if len(values) not in (1, len(PARAM_NAMES)):
            self.fail('invalid')
        try:
            values = [float(v) for v in values]
        except (TypeError, ValueError):
            self.fail('invalid')
        return tuple(values * len(PARAM_NAMES)) if len(values) == 1 else tuple(values)

    def to_representation(self, value):
        return list(value)


class ParamsSerializer(StrictSerializer):
    """
    Fields:
    - g_m, alpha1, alpha2, beta1, beta2: model parameters.
    """
    g_m = serializers.FloatField()
    alpha1 = serializers.FloatField()
    alpha2 = serializers.FloatField()
    beta1 = serializers.FloatField()
    beta2 = serializers.FloatField()


class CaptureSidecarSerializer(VersionedSerializer):
    """
    Fields:
    - r_series_ohms: series resistor value.
    - n_period: samples per waveform period.
    - sample_rate_hz: samples per second.
    - meta: free-form capture annotations.
    """
    r_series_ohms = serializers.FloatField()
    n_period = serializers.IntegerField()
    sample_rate_hz = serializers.FloatField()
    meta = serializers.DictField(required=False, default=dict)


class TraceSidecarSerializer(VersionedSerializer):
    """
    Fields:
    - n_period: samples per waveform period.
    - r_series_ohms: series resistor value (nullable for traces not derived from a capture).
    - meta: annotations plus preprocessing bookkeeping.
    """
    n_period = serializers.IntegerField()
    r_series_ohms = serializers.FloatField(required=False, allow_null=True, default=None)
    meta = serializers.DictField(required=False, default=dict)


class GridConfigSerializer(StrictSerializer):
    n_points = serializers.IntegerField(required=False)
    n_iters = serializers.IntegerField(required=False)
    lower = BoundsField(required=False)
    upper = BoundsField(required=False)
    shrink_factor = serializers.FloatField(required=False)


class LossConfigSerializer(StrictSerializer):
    k_regions = serializers.IntegerField(required=False)
    shaping = serializers.ChoiceField(choices=Shaping.choices, required=False)
    epsilon1 = serializers.FloatField(required=False)
    epsilon2 = serializers.FloatField(required=False)


class NoiseSerializer(StrictSerializer):
    sigma_n = serializers.FloatField(required=False, min_value=0)
    r_series = serializers.FloatField(required=False)


class ManifestSerializer(VersionedSerializer):
    """
    Fields:
    - traces: trace or capture files, relative to the manifest.
    - kind: model kind to fit.
    - grid, loss, noise: configuration overrides.
    - exclusion_fraction: estimator exclusion threshold.
    - output: output path, relative to the manifest.
    """
    traces = serializers.ListField(child=serializers.CharField(), allow_empty=False)
    kind = serializers.ChoiceField(choices=ModelKind.choices)
    grid = GridConfigSerializer(required=False)
    loss = LossConfigSerializer(required=False)
    noise = NoiseSerializer(required=False)
    exclusion_fraction = serializers.FloatField(required=False, min_value=0, max_value=1)
    output = serializers.CharField(required=False)


class ReadSerializer(StrictSerializer):
    amplitudes = serializers.ListField(child=serializers.FloatField(), allow_empty=False, required=False)
    period = serializers.FloatField(required=False)
    n_cycles = serializers.IntegerField(required=False)
    samples_per_period = serializers.IntegerField(required=False)


class SynthConfigSerializer(VersionedSerializer):
    """
    Fields:
    - kind: generating model.
    - params or preset: generating parameters, explicit or by reference set name.
    - state_schedule: list of [trace index, state] pairs.
    - noise: channel noise and series resistor.
    - seed: generator seed.
    - v_offset_inject, i_offset_inject: injected systematic offsets.
    - read: READ waveform settings.
    """
    kind = serializers.ChoiceField(choices=ModelKind.choices)
    params = ParamsSerializer(required=False)
    preset = serializers.ChoiceField(choices=ModelKind.choices, required=False)
    state_schedule = serializers.ListField(
        child=serializers.ListField(child=serializers.FloatField(), min_length=2, max_length=2),
        allow_empty=False,
    )
    noise = NoiseSerializer(required=False)
    seed = serializers.IntegerField(required=False, default=0, min_value=0)
    v_offset_inject = serializers.FloatField(required=False, default=0.0)
    i_offset_inject = serializers.FloatField(required=False, default=0.0)
    read = ReadSerializer(required=False)

    def validate_state_schedule(self, value):
        for index, _ in value:
            if index != int(index):
                raise serializers.ValidationError('Trace indices must be integers.')
        return [(int(index), x) for index, x in value]

    def validate(self, attrs):
        if ('params' in attrs) == ('preset' in attrs):
            raise serializers.ValidationError('Give exactly one of params and preset.')
        return attrs


class FitResultSerializer(VersionedSerializer):
    """
    Fields:
    - kind, params: fitted model.
    - states: fitted state per trace.
    - loss_history: best loss per iteration.
    - metrics: mse, mae, mre and mrse.
    - loss: final dataset loss.
    - traces: trace files the fit used.
    - noise, exclusion_fraction: estimator settings carried over from the manifest.
    """
    kind = serializers.ChoiceField(choices=ModelKind.choices)
    params = ParamsSerializer()
    states = serializers.ListField(child=serializers.FloatField())
    loss_history = serializers.ListField(child=serializers.FloatField())
    metrics = serializers.DictField(child=serializers.FloatField())
    loss = serializers.FloatField()
    traces = serializers.ListField(child=serializers.CharField(), required=False)
    noise = NoiseSerializer(required=False)
    exclusion_fraction = serializers.FloatField(required=False, min_value=0, max_value=1)


class EstimateRequestSerializer(StrictSerializer):
    """
    Fields:
    - v, i: memristor voltage and current samples.
    - n_period: samples per waveform period.
    - r_series: series resistor value.
    - sigma_n: channel noise standard deviation.
    - exclusion_fraction: estimator exclusion threshold.
    - t: measurement time recorded with the reading.
    - device: device to record the reading against.
    """
    v = serializers.ListField(child=serializers.FloatField(), allow_empty=False)
    i = serializers.ListField(child=serializers.FloatField(), allow_empty=False)
    n_period = serializers.IntegerField(min_value=1)
    r_series = serializers.FloatField()
    sigma_n = serializers.FloatField(required=False, default=0.0, min_value=0)
    exclusion_fraction = serializers.FloatField(required=False, min_value=0, max_value=1)
    t = serializers.FloatField(required=False, default=0.0)
    device = serializers.PrimaryKeyRelatedField(queryset=Device.objects.all(), required=False)

    def validate(self, attrs):
        if len(attrs['v']) != len(attrs['i']):
            raise serializers.ValidationError('v and i must have the same length.')
        return attrs


class DeviceSerializer(serializers.ModelSerializer):
    """
    Serializer for converting Device model instances into JSON representations.

    Fields:
    - id: Unique identifier for the device.
    - label: Unique device label.
    - description: Notes on the device.
    - r_series: Series resistor used to measure the device.
    - latest_state, mean_state, drift_rate, reading_count: derived metrics (read-only).
    """
    class Meta:
        model = Device
        fields = [
            'id',
            'label',
            'description',
            'r_series',
            'latest_state',
            'mean_state',
            'drift_rate',
            'reading_count'
        ]
        read_only_fields = ['latest_state', 'mean_state', 'drift_rate', 'reading_count']


class FitRunSerializer(serializers.ModelSerializer):
    class Meta:
        model = FitRun
        fields = [
            'id',
            'device',
            'kind',
            'g_m',
            'alpha1',
            'alpha2',
            'beta1',
            'beta2',
            'states',
            'loss_history',
            'metrics',
            'loss',
            'created_at'
        ]


class StateReadingSerializer(serializers.ModelSerializer):
    class Meta:
        model = StateReading
        fields = [
            'id',
            'device',
            'fit_run',
            't',
            'x_hat',
            'inv_x_hat',
            'variance_proxy',
            'n_included',
            'n_excluded',
            'recorded_at'
        ]


class DeviceDriftSerializer(serializers.ModelSerializer):
    """
    Serializer for the derived drift metrics of a device together with its reading series.
    """
    readings = StateReadingSerializer(many=True, read_only=True)

    class Meta:
        model = Device
        fields = [
            'latest_state',
            'mean_state',
            'drift_rate',
            'reading_count',
            'readings'
        ]
