"""
This module contains the API views of the results registry.

Devices are managed through a ModelViewSet; fit runs and state readings are read-only and
filterable. Two views expose the pipeline: the drift summary of a device and state
estimation of a posted trace against a stored fit run.
"""
import django_filters
from django.contrib.auth import authenticate
from django_filters.rest_framework import DjangoFilterBackend
from rest_framework import permissions, response, status, views, viewsets
from rest_framework.authentication import TokenAuthentication
from rest_framework.authtoken.models import Token

from .exceptions import MemstateError
from .models import Device, FitRun, StateReading
from .serializers import (
    DeviceDriftSerializer,
    DeviceSerializer,
    EstimateRequestSerializer,
    FitRunSerializer,
    StateReadingSerializer)
from .signal_prep import Trace
from .state_estimator import NoiseModel, estimate_state


def error_response(exc):
    """Report a MemstateError: 400 for data errors, 422 for numerical failures."""
    code = status.HTTP_400_BAD_REQUEST if exc.exit_status == 2 else status.HTTP_422_UNPROCESSABLE_ENTITY
    return response.Response(exc.as_dict(), status=code)


class UserAuthentication(views.APIView):
    """
    API endpoint to authenticate users and obtain a token.
    """
    permission_classes = [permissions.AllowAny]

    def post(self, request):
        username = request.data.get('username')
        password = request.data.get('password')

        user = authenticate(username=username, password=password)

        if user is not None:
            token, _ = Token.objects.get_or_create(user=user)
            return response.Response({'token': token.key})
        return response.Response({'error': 'Invalid credentials'}, status=status.HTTP_400_BAD_REQUEST)


class DeviceViewSet(viewsets.ModelViewSet):
    """
    Viewset for handling CRUD operations on Device objects.

    Derived state metrics are read-only; they are refreshed whenever a reading is recorded.
    """
    authentication_classes = [TokenAuthentication]
    permission_classes = [permissions.IsAuthenticated]
    queryset = Device.objects.all().order_by('id')
    serializer_class = DeviceSerializer


class FitRunViewSet(viewsets.ReadOnlyModelViewSet):
    """
    Viewset listing stored grid search results, filterable by device and kind.
    """
    authentication_classes = [TokenAuthentication]
    permission_classes = [permissions.IsAuthenticated]
    queryset = FitRun.objects.all().order_by('id')
    serializer_class = FitRunSerializer
    filter_backends = [DjangoFilterBackend]
    filterset_fields = ['device', 'kind']


class StateReadingFilter(django_filters.FilterSet):
    t_min = django_filters.NumberFilter(field_name='t', lookup_expr='gte')
    t_max = django_filters.NumberFilter(field_name='t', lookup_expr='lte')

    class Meta:
        model = StateReading
        fields = ['device', 't_min', 't_max']


class StateReadingViewSet(viewsets.ReadOnlyModelViewSet):
    """
    Viewset listing recorded state readings, filterable by device and time range.
    """
    authentication_classes = [TokenAuthentication]
    permission_classes = [permissions.IsAuthenticated]
    queryset = StateReading.objects.all()
    serializer_class = StateReadingSerializer
    filter_backends = [DjangoFilterBackend]
    filterset_class = StateReadingFilter


class DeviceDriftAPIView(views.APIView):
    """
    API view for retrieving the drift metrics and reading series of a device.

    Methods:
    - get: Recalculates the derived metrics of the device and returns them with its readings.
    """
    authentication_classes = [TokenAuthentication]
    permission_classes = [permissions.IsAuthenticated]

    def get(self, _, device_id):
        try:
            device = Device.objects.get(pk=device_id)
        except Device.DoesNotExist:
            return response.Response(
                {'error': 'Device not found'},
                status=status.HTTP_404_NOT_FOUND
            )
        Device.calculate_metrics(device)
        return response.Response(DeviceDriftSerializer(device).data, status=status.HTTP_200_OK)


class EstimateStateView(views.APIView):
    """
    API view for estimating the state of a posted trace with the parameters of a fit run.

    The request carries the trace samples (v, i), n_period, r_series and optionally sigma_n,
    exclusion_fraction, t and device. A reading is recorded when a device is given.

    Methods:
    - post: Validates the trace, runs the estimator and returns the estimate document.
    """
    authentication_classes = [TokenAuthentication]
    permission_classes = [permissions.IsAuthenticated]

    def post(self, request, fit_run_id):
        try:
            fit_run = FitRun.objects.get(pk=fit_run_id)
        except FitRun.DoesNotExist:
            return response.Response(
                {'error': 'Fit run not found!'},
                status=status.HTTP_404_NOT_FOUND
            )
        serializer = EstimateRequestSerializer(data=request.data)
        serializer.is_valid(raise_exception=True)
        data = serializer.validated_data

        try:
            noise = NoiseModel(sigma_n=data['sigma_n'], r_series=data['r_series'])
            trace = Trace(data['v'], data['i'], data['n_period'], meta={'r_series': data['r_series']})
            estimate = estimate_state(
                trace, fit_run.params, noise, data.get('exclusion_fraction'), fit_run.kind)
        except MemstateError as exc:
            return error_response(exc)

        payload = estimate.to_dict(noise)
        device = data.get('device')
        if device is not None:
            reading = StateReading.from_estimate(device, estimate, t=data['t'], fit_run=fit_run)
            payload['reading'] = reading.id
        return response.Response(payload, status=status.HTTP_200_OK)
