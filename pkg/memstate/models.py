"""
Results registry.

Devices under characterization, the grid search runs fitted for them and the state
readings estimated over time. Saving a reading refreshes the derived metrics of its device.
"""
import numpy as np
from django.db import models
from django.db.models.signals import post_save
from django.dispatch import receiver

from .model_core import ModelKind, ModelParams


class Device(models.Model):
    """
    Class represents a memristor device database model.

    Attributes:
        label: CharField - Unique device label.
        description: TextField - Free-form notes on the device.
        r_series: FloatField - Series resistor used to measure the device (ohms).
        latest_state: FloatField - Most recent estimated state (nullable).
        mean_state: FloatField - Mean of all estimated states (nullable).
        drift_rate: FloatField - Least-squares slope of the state against time, per second
            (nullable, needs two readings at distinct times).
        reading_count: IntegerField - Number of recorded state readings.
    """
    label = models.CharField(unique=True, max_length=100)
    description = models.TextField(blank=True, default='')
    r_series = models.FloatField(blank=True, null=True)
    latest_state = models.FloatField(blank=True, null=True)
    mean_state = models.FloatField(blank=True, null=True)
    drift_rate = models.FloatField(blank=True, null=True)
    reading_count = models.IntegerField(default=0)

    def __str__(self):
        return f"Device : {self.label}"

    @staticmethod
    def calculate_metrics(device):
        """
        Method to refresh the derived state metrics of a device.
        """
        if device:
            readings = StateReading.objects.filter(device=device).order_by('t', 'id')
            device.reading_count = readings.count()
            if device.reading_count > 0:
                t = np.array([reading.t for reading in readings])
                x = np.array([reading.x_hat for reading in readings])
                device.latest_state = float(x[-1])
                device.mean_state = float(np.mean(x))
                if np.ptp(t) > 0:
                    device.drift_rate = float(np.polyfit(t, x, 1)[0])
                else:
                    device.drift_rate = None
            else:
                device.latest_state = device.mean_state = device.drift_rate = None
            device.save()


class FitRun(models.Model):
    """
    Class represents a grid search result database model.

    Attributes:
        device: ForeignKey - Link to the Device model (nullable).
        kind: CharField - Fitted model kind.
        g_m, alpha1, alpha2, beta1, beta2: FloatField - Fitted parameters.
        states: JSONField - Fitted state per trace.
        loss_history: JSONField - Best loss after each iteration.
        metrics: JSONField - Dataset-averaged mse, mae, mre and mrse.
        loss: FloatField - Final dataset loss.
        created_at: DateTimeField - Timestamp of the run.
    """
    device = models.ForeignKey(
        Device, on_delete=models.CASCADE, blank=True, null=True, related_name='fit_runs')
    kind = models.CharField(max_length=20, choices=ModelKind.choices)
    g_m = models.FloatField()
    alpha1 = models.FloatField()
    alpha2 = models.FloatField()
    beta1 = models.FloatField()
    beta2 = models.FloatField()
    states = models.JSONField(default=list)
    loss_history = models.JSONField(default=list)
    metrics = models.JSONField(default=dict)
    loss = models.FloatField(blank=True, null=True)
    created_at = models.DateTimeField(auto_now_add=True)

    def __str__(self):
        return f"Fit run : {self.kind}, Created : {self.created_at}"

    @property
    def params(self):
        return ModelParams(self.g_m, self.alpha1, self.alpha2, self.beta1, self.beta2)

    @classmethod
    def from_result(cls, result, device=None):
        """Store a FitResult."""
        payload = result.to_dict()
        return cls.objects.create(
            device=device,
            kind=payload['kind'],
            states=payload['states'],
            loss_history=payload['loss_history'],
            metrics=payload['metrics'],
            loss=payload['loss'],
            **payload['params'],
        )


class StateReading(models.Model):
    """
    Class represents a state estimate database model.

    Attributes:
        device: ForeignKey - Link to the Device model.
        fit_run: ForeignKey - Link to the FitRun whose parameters were used (nullable).
        t: FloatField - Measurement time (seconds).
        x_hat: FloatField - Estimated state.
        inv_x_hat: FloatField - Ohm-like readout 1 / x_hat (nullable).
        variance_proxy: FloatField - Relative variance of the estimate.
        n_included: IntegerField - Measurements used.
        n_excluded: IntegerField - Measurements excluded.
        recorded_at: DateTimeField - Timestamp of the record.
    """
    device = models.ForeignKey(Device, on_delete=models.CASCADE, related_name='readings')
    fit_run = models.ForeignKey(
        FitRun, on_delete=models.SET_NULL, blank=True, null=True, related_name='readings')
    t = models.FloatField(default=0)
    x_hat = models.FloatField()
    inv_x_hat = models.FloatField(blank=True, null=True)
    variance_proxy = models.FloatField()
    n_included = models.IntegerField(default=0)
    n_excluded = models.IntegerField(default=0)
    recorded_at = models.DateTimeField(auto_now_add=True)

    class Meta:
        ordering = ['t', 'id']

    def __str__(self):
        return f"Device : {self.device.label}, t : {self.t}, x : {self.x_hat}"

    @classmethod
    def from_estimate(cls, device, estimate, t=0.0, fit_run=None):
        return cls.objects.create(
            device=device,
            fit_run=fit_run,
            t=t,
            x_hat=estimate.x_hat,
            inv_x_hat=estimate.inv_x_hat,
            variance_proxy=estimate.variance_proxy,
            n_included=estimate.n_included,
            n_excluded=estimate.n_excluded,
        )


@receiver(post_save, sender=StateReading)
def update_metrics(sender, instance, **kwargs):
    Device.calculate_metrics(instance.device)
