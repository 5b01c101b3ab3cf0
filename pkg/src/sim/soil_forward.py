"""Synthetic forward model: soil composition -> permittivity and VNIR voltages.

Permittivity uses the inverted dual-antenna moisture law
``M = 0.1138*sqrt(eps) - 0.1758`` as backbone, with additive carbon and
aluminosilicate terms. Each VNIR band is an affine response with one
dominant slope plus small cross terms, clamped to the photodiode range.
"""
import logging
import math

import numpy as np

from src.models.soil import VNIR_BANDS, SensingVector
from src.sim.errors import DomainError

logger = logging.getLogger(__name__)

MOISTURE_SLOPE = 0.1138
MOISTURE_OFFSET = 0.1758
EPS_PER_C_PCT = 0.16
EPS_PER_AL_PCT = 0.8

V_MIN = 0.0
V_MAX = 0.5

_MIXED = {'m_pct': -0.0015, 'c_pct': -0.0012, 'al_pct': 0.004,
          'n_pml': -0.004, 'p_pml': -0.004, 'k_pml': -0.004}

# band (nm) -> (baseline volts, {component: volts per unit})
BAND_MODEL = {
    460: (0.30, {'k_pml': -0.020}),
    620: (0.30, {'p_pml': -0.020}),
    1200: (0.22, {'n_pml': -0.021, 'al_pct': 0.014, 'm_pct': -0.001}),
    1300: (0.28, _MIXED),
    1450: (0.30, {'m_pct': -0.0056, 'c_pct': -0.0004, 'al_pct': -0.0005}),
    1550: (0.28, _MIXED),
    1650: (0.30, {'c_pct': -0.004, 'm_pct': -0.0008, 'al_pct': -0.0006}),
}


def permittivity_of_moisture(m_pct):
    """Moisture-only backbone: the moisture law solved for permittivity."""
    return ((m_pct / 100.0 + MOISTURE_OFFSET) / MOISTURE_SLOPE) ** 2


def permittivity_of(sample):
    return (permittivity_of_moisture(sample.m_pct)
            + EPS_PER_C_PCT * sample.c_pct
            + EPS_PER_AL_PCT * sample.al_pct)


def vnir_response(sample):
    """Seven clamped voltages ordered as ``VNIR_BANDS``."""
    volts = []
    for band in VNIR_BANDS:
        baseline, slopes = BAND_MODEL[band]
        value = baseline + sum(s * getattr(sample, name) for name, s in slopes.items())
        volts.append(min(max(value, V_MIN), V_MAX))
    return tuple(volts)


def sense(sample, noise, rng=None):
    """Observe ``sample`` through the forward model with Gaussian noise.

    ``rng`` lets dataset generators share one stream across samples; when it
    is omitted a fresh generator is seeded from ``noise.seed``. Noisy
    permittivity readings are floored at 1.
    """
    if rng is None:
        rng = np.random.default_rng(noise.seed)
    epsilon = permittivity_of(sample)
    volts = np.array(vnir_response(sample))

    eta_eps = rng.normal(0.0, noise.sigma_epsilon_rel)
    eta_vnir = rng.normal(0.0, noise.sigma_vnir, size=len(VNIR_BANDS))
    if noise.sigma_epsilon_rel > 0:
        epsilon = max(epsilon * (1.0 + eta_eps), 1.0)
    if noise.sigma_vnir > 0:
        volts = np.clip(volts + eta_vnir, V_MIN, V_MAX)
    return SensingVector(epsilon=float(epsilon), vnir=tuple(float(v) for v in volts))


def moisture_from_permittivity(epsilon):
    """Volumetric moisture fraction (not percent). Not clamped at zero."""
    if not math.isfinite(epsilon) or epsilon < 1.0:
        raise DomainError(f'permittivity must be finite and >= 1, got {epsilon!r}')
    return MOISTURE_SLOPE * math.sqrt(epsilon) - MOISTURE_OFFSET
