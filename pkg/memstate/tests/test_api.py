import math

import numpy as np
from django.contrib.auth.models import User
from django.test import TestCase
from rest_framework import status
from rest_framework.authtoken.models import Token
from rest_framework.test import APIClient

from memstate.model_core import REFERENCE_PARAMS, ModelKind
from memstate.models import Device, FitRun, StateReading
from memstate.synth_bench import model_trace


def create_fit_run(device=None, kind=ModelKind.PROPOSED):
    return FitRun.objects.create(
        device=device, kind=kind.value, states=[1e-6], loss_history=[0.0],
        metrics={'mse': 0.0}, loss=0.0, **REFERENCE_PARAMS[kind].as_dict())


class AuthenticatedAPITest(TestCase):
    """
    Base test case with an APIClient authenticated by token.

    Attributes:
        client: APIClient instance for making HTTP requests to the API endpoints.
        device: Device instance created for testing purposes.
    """
    def setUp(self):
        """
        Set up preconditions for the test cases.

        This method creates a device and a user, and sets the user's token on the client.
        """
        self.client = APIClient()
        self.device = Device.objects.create(label='dev-a', r_series=1e5)
        self.user = User.objects.create_user(username='test_user', password='test_password')
        self.token = Token.objects.create(user=self.user)
        self.client.credentials(HTTP_AUTHORIZATION=f'Token {self.token.key}')


class DeviceAPITest(AuthenticatedAPITest):
    """
    Test suite for the Device API endpoints.
    """
    def test_list_devices(self):
        response = self.client.get('/api/devices/')
        self.assertEqual(response.status_code, status.HTTP_200_OK)
        self.assertEqual([device['label'] for device in response.data], ['dev-a'])

    def test_create_device(self):
        """
        Test the create device endpoint.

        Derived metrics are read-only and ignored on input.
        """
        data = {'label': 'dev-b', 'r_series': 1e4, 'reading_count': 7}
        response = self.client.post('/api/devices/', data, format='json')
        self.assertEqual(response.status_code, status.HTTP_201_CREATED)
        self.assertEqual(Device.objects.get(label='dev-b').reading_count, 0)

    def test_update_device(self):
        data = {'label': 'dev-a', 'description': 'TiO2 crossbar, cell 3'}
        response = self.client.put(f'/api/devices/{self.device.id}/', data, format='json')
        self.assertEqual(response.status_code, status.HTTP_200_OK)
        self.device.refresh_from_db()
        self.assertEqual(self.device.description, 'TiO2 crossbar, cell 3')

    def test_delete_device(self):
        response = self.client.delete(f'/api/devices/{self.device.id}/')
        self.assertEqual(response.status_code, status.HTTP_204_NO_CONTENT)
        self.assertFalse(Device.objects.exists())

    def test_unauthenticated(self):
        self.client.credentials()
        response = self.client.get('/api/devices/')
        self.assertEqual(response.status_code, status.HTTP_401_UNAUTHORIZED)


class UserAuthenticationTest(AuthenticatedAPITest):
    def test_generate_token(self):
        data = {'username': 'test_user', 'password': 'test_password'}
        response = self.client.post('/api/generate-token', data, format='json')
        self.assertEqual(response.status_code, status.HTTP_200_OK)
        self.assertEqual(response.data['token'], self.token.key)

    def test_invalid_credentials(self):
        data = {'username': 'test_user', 'password': 'wrong'}
        response = self.client.post('/api/generate-token', data, format='json')
        self.assertEqual(response.status_code, status.HTTP_400_BAD_REQUEST)


class RegistryFilterTest(AuthenticatedAPITest):
    """
    Test suite for the filters of the fit run and reading endpoints.
    """
    def test_fit_runs_by_kind(self):
        create_fit_run(self.device)
        create_fit_run(self.device, ModelKind.GMSS)
        response = self.client.get('/api/fit_runs/', {'kind': 'gmss'})
        self.assertEqual(response.status_code, status.HTTP_200_OK)
        self.assertEqual([run['kind'] for run in response.data], ['gmss'])

    def test_readings_by_time_range(self):
        for t in (0.0, 60.0, 120.0, 180.0):
            StateReading.objects.create(device=self.device, t=t, x_hat=1e-6, variance_proxy=1.0)
        response = self.client.get('/api/readings/', {'t_min': 60, 't_max': 120})
        self.assertEqual(response.status_code, status.HTTP_200_OK)
        self.assertEqual([reading['t'] for reading in response.data], [60.0, 120.0])


class DeviceDriftAPITest(AuthenticatedAPITest):
    def test_drift(self):
        """
        Test the device drift endpoint.

        Two readings 10 s apart give the slope of the straight line through them.
        """
        StateReading.objects.create(device=self.device, t=0.0, x_hat=1e-6, variance_proxy=1.0)
        StateReading.objects.create(device=self.device, t=10.0, x_hat=2e-6, variance_proxy=1.0)
        response = self.client.get(f'/api/devices/{self.device.id}/drift')
        self.assertEqual(response.status_code, status.HTTP_200_OK)
        self.assertTrue(math.isclose(response.data['drift_rate'], 1e-7, rel_tol=1e-9))
        self.assertEqual(response.data['reading_count'], 2)
        self.assertEqual(response.data['latest_state'], 2e-6)
        self.assertEqual(len(response.data['readings']), 2)

    def test_single_reading_has_no_drift_rate(self):
        StateReading.objects.create(device=self.device, t=5.0, x_hat=1e-6, variance_proxy=1.0)
        response = self.client.get(f'/api/devices/{self.device.id}/drift')
        self.assertIsNone(response.data['drift_rate'])

    def test_device_not_found(self):
        response = self.client.get('/api/devices/999/drift')
        self.assertEqual(response.status_code, status.HTTP_404_NOT_FOUND)


class EstimateStateAPITest(AuthenticatedAPITest):
    """
    Test suite for the state estimation endpoint.

    Attributes:
        fit_run: FitRun holding the reference proposed-model parameters.
        trace: noiseless trace of state 3e-6 over two periods.
    """
    def setUp(self):
        super().setUp()
        self.fit_run = create_fit_run(self.device)
        v = 0.3 * np.sin(2 * np.pi * np.arange(80) / 40)
        self.trace = model_trace(ModelKind.PROPOSED, REFERENCE_PARAMS[ModelKind.PROPOSED], 3e-6, v, 40)

    def post(self, data, fit_run_id=None):
        fit_run_id = self.fit_run.id if fit_run_id is None else fit_run_id
        return self.client.post(f'/api/fit_runs/{fit_run_id}/estimate', data, format='json')

    def payload(self, **overrides):
        data = {'v': self.trace.v.tolist(), 'i': self.trace.i.tolist(), 'n_period': 40, 'r_series': 1e5}
        data.update(overrides)
        return data

    def test_estimate(self):
        response = self.post(self.payload(sigma_n=1e-3))
        self.assertEqual(response.status_code, status.HTTP_200_OK)
        self.assertTrue(math.isclose(response.data['x_hat'], 3e-6, rel_tol=1e-9))
        self.assertGreater(response.data['std_estimate'], 0)
        self.assertNotIn('reading', response.data)
        self.assertFalse(StateReading.objects.exists())

    def test_estimate_records_reading(self):
        response = self.post(self.payload(device=self.device.id, t=30.0))
        self.assertEqual(response.status_code, status.HTTP_200_OK)
        reading = StateReading.objects.get(pk=response.data['reading'])
        self.assertEqual(reading.fit_run, self.fit_run)
        self.assertEqual(reading.t, 30.0)
        self.device.refresh_from_db()
        self.assertEqual(self.device.reading_count, 1)
        self.assertTrue(math.isclose(self.device.latest_state, 3e-6, rel_tol=1e-9))

    def test_degenerate_trace(self):
        response = self.post(self.payload(v=[0.0] * 10, i=[0.0] * 10, n_period=5))
        self.assertEqual(response.status_code, status.HTTP_422_UNPROCESSABLE_ENTITY)
        self.assertEqual(response.data['error'], 'degenerate_operating_point')

    def test_empty_exclusion_set(self):
        response = self.post(self.payload(v=[0.1, 0.2], i=[2e-6, 1e-6], n_period=2, exclusion_fraction=1.0))
        self.assertEqual(response.status_code, status.HTTP_400_BAD_REQUEST)
        self.assertEqual(response.data['error'], 'no_usable_measurements')

    def test_invalid_request(self):
        response = self.post(self.payload(i=[1e-6]))
        self.assertEqual(response.status_code, status.HTTP_400_BAD_REQUEST)
        response = self.post(self.payload(colour='red'))
        self.assertEqual(response.status_code, status.HTTP_400_BAD_REQUEST)

    def test_fit_run_not_found(self):
        response = self.post(self.payload(), fit_run_id=999)
        self.assertEqual(response.status_code, status.HTTP_404_NOT_FOUND)
