"""
Error hierarchy for the memstate app.

Every error carries a machine-readable ``code`` and the ``exit_status`` the command line
front end reports for it:

- 1: usage errors (bad command line).
- 2: data and validation errors (bad files, bad parameters, unusable measurements).
- 3: numerical failures (overflow, degenerate operating points, solver divergence).

Data errors also derive from ``ValueError`` and numerical errors from ``ArithmeticError`` so
library callers can catch the builtin categories.
"""


class MemstateError(Exception):
    """
    Base class for all memstate errors.

    Attributes:
        code: str - Stable machine-readable identifier of the error kind.
        exit_status: int - Exit status reported by the command line front end.
    """
    code = 'memstate_error'
    exit_status = 3
    default_message = 'memstate error'

    def __init__(self, message=None, **details):
        self.message = message or self.default_message
        self.details = details
        super().__init__(self.message)

    def as_dict(self):
        payload = {'error': self.code, 'message': self.message}
        if self.details:
            payload['details'] = self.details
        return payload


class UsageError(MemstateError):
    code = 'usage_error'
    exit_status = 1
    default_message = 'usage error'


class DataError(MemstateError, ValueError):
    code = 'data_error'
    exit_status = 2
    default_message = 'invalid data'


class InvalidParameters(DataError):
    code = 'invalid_parameters'
    default_message = 'invalid model parameters'


class InvalidCapture(DataError):
    code = 'invalid_capture'
    default_message = 'invalid capture'


class InvalidTrace(DataError):
    code = 'invalid_trace'
    default_message = 'invalid trace'


class FormatError(DataError):
    code = 'format_error'
    default_message = 'malformed file'


class AlignmentFailed(DataError):
    code = 'alignment_failed'
    default_message = 'alignment failed'


class NoUsableMeasurements(DataError):
    code = 'no_usable_measurements'
    default_message = 'no usable measurements'


class RejectedMeasurementSet(DataError):
    code = 'rejected_measurement_set'
    default_message = 'measurement set rejected: non-finite or non-positive variance proxy'


class NumericalError(MemstateError, ArithmeticError):
    code = 'numerical_error'
    exit_status = 3
    default_message = 'numerical failure'


class ExponentOverflow(NumericalError):
    code = 'exponent_overflow'
    default_message = 'exponent overflow'

    def __init__(self, term, limit):
        super().__init__(f'exponent overflow in {term} (argument above {limit:g})', term=term)


class DegenerateOperatingPoint(NumericalError):
    code = 'degenerate_operating_point'
    default_message = 'degenerate operating point'


class DegenerateRegion(NumericalError):
    code = 'degenerate_region'
    default_message = 'degenerate region'


class StateFitDiverged(NumericalError):
    code = 'state_fit_diverged'
    default_message = 'state fit diverged'

    def __init__(self, last_iterate, message=None):
        self.last_iterate = last_iterate
        super().__init__(message or self.default_message, last_iterate=last_iterate)


class SearchCollapsed(NumericalError):
    code = 'search_collapsed'
    default_message = 'search collapsed: every candidate produced a non-finite loss'


class CircuitSolveFailed(NumericalError):
    code = 'circuit_solve_failed'
    default_message = 'circuit solve failed'
