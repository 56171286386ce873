"""
This module registers the results registry with the Django admin site.

Derived device metrics are maintained from the recorded readings and shown read-only.
"""
from django.contrib import admin

from . import models


@admin.register(models.Device)
class DeviceAdmin(admin.ModelAdmin):
    list_display = ['label', 'r_series', 'latest_state', 'drift_rate', 'reading_count']
    search_fields = ['label', 'description']
    readonly_fields = ['latest_state', 'mean_state', 'drift_rate', 'reading_count']


@admin.register(models.FitRun)
class FitRunAdmin(admin.ModelAdmin):
    list_display = ['id', 'device', 'kind', 'loss', 'created_at']
    list_filter = ['kind']


@admin.register(models.StateReading)
class StateReadingAdmin(admin.ModelAdmin):
    list_display = ['device', 't', 'x_hat', 'inv_x_hat', 'n_included', 'n_excluded']
    list_filter = ['device']
