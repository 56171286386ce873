"""
This module contains URL patterns for the memstate app.
"""
from django.urls import path, include
from rest_framework import routers

from .views import (
    DeviceViewSet,
    FitRunViewSet,
    StateReadingViewSet,
    DeviceDriftAPIView,
    EstimateStateView,
    UserAuthentication,
)

router = routers.DefaultRouter()
router.register(r'devices', DeviceViewSet)
router.register(r'fit_runs', FitRunViewSet)
router.register(r'readings', StateReadingViewSet)

urlpatterns = [
    path('', include(router.urls)),
    path('generate-token', UserAuthentication.as_view(), name='generate-token'),
    path('devices/<int:device_id>/drift', DeviceDriftAPIView.as_view(), name='device-drift'),
    path('fit_runs/<int:fit_run_id>/estimate', EstimateStateView.as_view(), name='fit-run-estimate'),
]
