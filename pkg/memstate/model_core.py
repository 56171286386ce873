"""
Conduction models of self-directed-channel memristors.

Three models share the parameter vector [G_m, alpha1, alpha2, beta1, beta2]:

- ``gmss``: state-scaled ohmic term plus a state-independent diode,
  i = x G_m v + alpha1 exp(beta1 v) - alpha2 exp(-beta2 v), with alpha1 = alpha2 enforced.
- ``modified_gmss``: the same split, with the zero-crossing Schottky diode
  I_d = alpha1 (exp(beta1 v) - 1) + alpha2 (1 - exp(-beta2 v)).
- ``proposed``: the state scales both terms, i = x (G_m v + I_d(v)) with the Schottky diode.

Every function here is a pure function of its inputs and accepts scalars or numpy arrays
for the voltage, current and state arguments.
"""
import logging
import math
from dataclasses import asdict, astuple, dataclass

import numpy as np
from django.db import models

from .conf import resolve
from .exceptions import DegenerateOperatingPoint, ExponentOverflow, InvalidParameters

logger = logging.getLogger(__name__)

PARAM_NAMES = ('g_m', 'alpha1', 'alpha2', 'beta1', 'beta2')


class ModelKind(models.TextChoices):
    GMSS = 'gmss', 'Generalised MSS'
    MODIFIED_GMSS = 'modified_gmss', 'Modified generalised MSS'
    PROPOSED = 'proposed', 'Proposed state-dependent model'


@dataclass(frozen=True)
class ModelParams:
    """
    Parameter vector shared by the three conduction models.

    Attributes:
        g_m: float - Conductance coefficient of the ohmic term (siemens).
        alpha1: float - Forward diode saturation current (amperes).
        alpha2: float - Reverse diode saturation current (amperes).
        beta1: float - Forward diode exponent (per volt).
        beta2: float - Reverse diode exponent (per volt).
    """
    g_m: float
    alpha1: float
    alpha2: float
    beta1: float
    beta2: float

    def __post_init__(self):
        for name in PARAM_NAMES:
            value = getattr(self, name)
            try:
                value = float(value)
            except (TypeError, ValueError):
                raise InvalidParameters(f'{name} must be a number, got {value!r}') from None
            if not math.isfinite(value) or value <= 0:
                raise InvalidParameters(f'{name} must be finite and strictly positive, got {value!r}')
            object.__setattr__(self, name, value)

    @classmethod
    def from_sequence(cls, values):
        return cls(*(float(v) for v in values))

    def as_array(self):
        return np.array(astuple(self), dtype=float)

    def as_dict(self):
        return asdict(self)

    def check_kind(self, kind):
        """Raise InvalidParameters when the vector violates a constraint of ``kind``."""
        if ModelKind(kind) == ModelKind.GMSS and self.alpha1 != self.alpha2:
            raise InvalidParameters(
                'gmss ties alpha1 = alpha2 to keep the zero crossing; '
                f'got alpha1={self.alpha1!r}, alpha2={self.alpha2!r}'
            )
        return self


# Parameter sets reported for the measured device dataset. The gmss set was reported with
# untied diode saturation currents, so the tied gmss model rejects it.
REFERENCE_PARAMS = {
    ModelKind.GMSS: ModelParams(
        g_m=4.207, alpha1=2.730e-3, alpha2=1.313e-7, beta1=1.392e1, beta2=2.327e-6),
    ModelKind.MODIFIED_GMSS: ModelParams(
        g_m=3.160, alpha1=1.063e-2, alpha2=3.869e-7, beta1=9.397, beta2=6.666e-9),
    ModelKind.PROPOSED: ModelParams(
        g_m=8.679, alpha1=2.622e-1, alpha2=6.597e-2, beta1=1.370e1, beta2=1.005e1),
}


def _scalar_or_array(value):
    value = np.asarray(value, dtype=float)
    return float(value) if value.ndim == 0 else value


def guarded_exp(argument, term, saturate=False, minus_one=False, limit=None):
    """
    Exponentiate ``argument`` after checking it against the exponent limit.

    With ``saturate`` false an argument above the limit raises ExponentOverflow naming
    ``term``; otherwise arguments are clamped to [-limit, limit] before exponentiation.
    ``minus_one`` returns exp(argument) - 1 computed with expm1.
    """
    limit = resolve(limit, 'EXPONENT_LIMIT')
    argument = np.asarray(argument, dtype=float)
    if np.any(argument > limit):
        if not saturate:
            raise ExponentOverflow(term, limit)
        logger.debug('Saturating %s at +/-%g', term, limit)
    argument = np.clip(argument, -limit, limit)
    return np.expm1(argument) if minus_one else np.exp(argument)


def diode_current(kind, p, v, saturate=False):
    """
    Evaluate the diode component I_d(v).

    The gmss model uses the two free exponentials; the modified gmss and proposed models use
    the zero-crossing Schottky form.
    """
    kind = ModelKind(kind)
    v = np.asarray(v, dtype=float)
    if kind == ModelKind.GMSS:
        current = (p.alpha1 * guarded_exp(p.beta1 * v, 'beta1*v', saturate)
                   - p.alpha2 * guarded_exp(-p.beta2 * v, '-beta2*v', saturate))
    else:
        current = (p.alpha1 * guarded_exp(p.beta1 * v, 'beta1*v', saturate, minus_one=True)
                   - p.alpha2 * guarded_exp(-p.beta2 * v, '-beta2*v', saturate, minus_one=True))
    return _scalar_or_array(current)


def forward_current(kind, p, x, v, saturate=False):
    """
    Memristor current for state ``x`` at voltage ``v``.

    The proposed model multiplies the whole bracket by the state; the gmss variants only
    scale the ohmic term and add the state-independent diode current.
    """
    kind = ModelKind(kind)
    p.check_kind(kind)
    v = np.asarray(v, dtype=float)
    x = np.asarray(x, dtype=float)
    diode = diode_current(kind, p, v, saturate)
    if kind == ModelKind.PROPOSED:
        current = x * (p.g_m * v + diode)
    else:
        current = x * p.g_m * v + diode
    return _scalar_or_array(current)


def conduction_denominator(kind, p, v, saturate=False):
    """
    Quantity the measured current is divided by to recover the state.

    For the proposed model this is G_m v + I_d(v); for the gmss variants only the ohmic
    coefficient G_m v multiplies the state.
    """
    kind = ModelKind(kind)
    v = np.asarray(v, dtype=float)
    if kind == ModelKind.PROPOSED:
        return _scalar_or_array(p.g_m * v + diode_current(kind, p, v, saturate))
    return _scalar_or_array(p.g_m * v)


def _checked_denominator(kind, p, v, floor):
    floor = resolve(floor, 'DENOMINATOR_FLOOR')
    denominator = np.asarray(conduction_denominator(kind, p, v), dtype=float)
    if np.any(np.abs(denominator) < floor):
        raise DegenerateOperatingPoint(
            f'degenerate operating point: |denominator| below {floor:g} A')
    return denominator


def invert_state(p, v, i, kind=ModelKind.PROPOSED, floor=None):
    """
    Recover the state from one or more (v, i) measurements.

    Proposed: x = i / (G_m v + I_d(v)). Gmss variants: x = (i - I_d(v)) / (G_m v).
    """
    kind = ModelKind(kind)
    p.check_kind(kind)
    denominator = _checked_denominator(kind, p, v, floor)
    i = np.asarray(i, dtype=float)
    if kind == ModelKind.PROPOSED:
        return _scalar_or_array(i / denominator)
    return _scalar_or_array((i - diode_current(kind, p, v)) / denominator)


def partial_current_sensitivity(p, v, kind=ModelKind.PROPOSED, floor=None):
    """
    Partial derivative of the state inversion with respect to the current.

    It depends only on the voltage: 1 / (G_m v + I_d(v)) for the proposed model and
    1 / (G_m v) for the gmss variants.
    """
    kind = ModelKind(kind)
    denominator = _checked_denominator(kind, p, v, floor)
    return _scalar_or_array(1.0 / denominator)


def differential_conductance(kind, p, x, v):
    """Analytic di/dv of the forward model."""
    kind = ModelKind(kind)
    v = np.asarray(v, dtype=float)
    diode_slope = (p.alpha1 * p.beta1 * guarded_exp(p.beta1 * v, 'beta1*v')
                   + p.alpha2 * p.beta2 * guarded_exp(-p.beta2 * v, '-beta2*v'))
    if kind == ModelKind.PROPOSED:
        return _scalar_or_array(np.asarray(x) * (p.g_m + diode_slope))
    return _scalar_or_array(np.asarray(x) * p.g_m + diode_slope)
