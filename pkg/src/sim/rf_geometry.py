"""Tetrahedral antenna-array geometry and phase-shift inversion.

Phase shifts from the origin antenna to the other three vertices are
``phi_k = (2*pi*f_c*sqrt(eps)/c0) * (d_k . r_tx)``. With ``u = sqrt(eps)*r_tx``
they are linear in ``u``, so inversion is a single 3x3 solve. ``r_tx`` points
from the node to the gateway (+z up in the world frame).
"""
import itertools
import logging
import math

import numpy as np

from src.models.rf import InversionResult, PhaseTriple, RfConfig, TxDirection, WrappedInversion
from src.sim import soil_forward
from src.sim.errors import ConfigurationError, DomainError, EpsilonOutOfRange, NoCandidate

logger = logging.getLogger(__name__)

TWO_PI = 2.0 * math.pi
DEFAULT_EPS_RANGE = (3.0, 40.0)
CONSISTENCY_TOL = 1e-9
AMBIGUITY_GAP = 0.5


def tetra_vertices(cfg=None):
    """Vertices d1, d2, d3 (rows, metres) of a regular tetrahedron whose
    fourth vertex is the origin antenna."""
    cfg = cfg or RfConfig()
    d0 = cfg.d0
    s3 = math.sqrt(3.0)
    z = -math.sqrt(6.0) / 3.0 * d0
    return np.array([
        [s3 / 3.0 * d0, 0.0, z],
        [-s3 / 6.0 * d0, -d0 / 2.0, z],
        [-s3 / 6.0 * d0, d0 / 2.0, z],
    ])


def forward_phases(epsilon, r_tx_world, orient, cfg=None):
    cfg = cfg or RfConfig()
    if not math.isfinite(epsilon) or epsilon < 1.0:
        raise DomainError(f'permittivity must be >= 1, got {epsilon!r}')
    r = np.asarray(r_tx_world, dtype=float)
    world_vertices = tetra_vertices(cfg) @ orient.matrix.T
    phi = cfg.wavenumber * math.sqrt(epsilon) * (world_vertices @ r)
    return PhaseTriple(phi=tuple(phi), wrapped=False)


def wrap_angles(values):
    """Map angles into (-pi, pi]; also returns the integer turns removed."""
    values = np.asarray(values, dtype=float)
    k = np.ceil((values - math.pi) / TWO_PI)
    wrapped = values - TWO_PI * k
    # rounding can land exactly on the open end
    low = wrapped <= -math.pi
    wrapped[low] += TWO_PI
    k[low] -= 1
    high = wrapped > math.pi
    wrapped[high] -= TWO_PI
    k[high] += 1
    return wrapped, k.astype(int)


def wrap_phases(p):
    wrapped, _ = wrap_angles(p.as_array())
    return PhaseTriple(phi=tuple(wrapped), wrapped=True)


def _solve_u(phi, cfg):
    return np.linalg.solve(tetra_vertices(cfg), np.asarray(phi, dtype=float) / cfg.wavenumber)


def invert_phases(p, cfg=None):
    """Closed-form (eps, r_tx) from unwrapped phase shifts, array frame."""
    cfg = cfg or RfConfig()
    if p.wrapped:
        raise DomainError('invert_phases needs unwrapped phases; use invert_wrapped')
    phi = p.as_array()
    if not np.all(np.isfinite(phi)):
        raise DomainError(f'non-finite phase shifts {p.phi!r}')
    u = _solve_u(phi, cfg)
    magnitude = float(np.linalg.norm(u))
    epsilon = magnitude ** 2
    if magnitude < 1.0:
        raise EpsilonOutOfRange(epsilon)
    return InversionResult(epsilon=epsilon, r_tx=TxDirection.normalized(u), residual=0.0)


def max_unwrap_integer(cfg, eps_max):
    return math.ceil(cfg.f_c * math.sqrt(eps_max) * cfg.d0 / cfg.c0) + 1


def invert_wrapped(p, cfg=None, eps_range=DEFAULT_EPS_RANGE):
    """Resolve the 2*pi ambiguity of wrapped phases by integer search.

    Every integer triple within the bound implied by ``eps_range`` is tried;
    candidates whose permittivity falls in range are returned sorted by
    distance to the middle of the range. Nothing is silently discarded: when
    distinct permittivities survive the result is flagged ``ambiguous``.
    """
    cfg = cfg or RfConfig()
    eps_min, eps_max = eps_range
    if eps_min < 1.0 or eps_max > 45.0 or eps_min >= eps_max:
        raise ConfigurationError(f'invalid permittivity search range {eps_range!r}')
    phi = p.as_array()
    if not np.all(np.isfinite(phi)):
        raise DomainError(f'non-finite phase shifts {p.phi!r}')

    k_max = max_unwrap_integer(cfg, eps_max)
    ints = np.array(list(itertools.product(range(-k_max, k_max + 1), repeat=3)), dtype=float)
    shifted = phi[None, :] + TWO_PI * ints
    vertices = tetra_vertices(cfg)
    u = np.linalg.solve(vertices, (shifted / cfg.wavenumber).T).T
    eps = np.einsum('ij,ij->i', u, u)

    mid = 0.5 * (eps_min + eps_max)
    found = []
    for i in np.flatnonzero((eps >= eps_min) & (eps <= eps_max)):
        predicted = cfg.wavenumber * (vertices @ u[i])
        mismatch, _ = wrap_angles(predicted - phi)
        residual = float(np.linalg.norm(mismatch))
        if residual > CONSISTENCY_TOL:
            continue
        found.append(InversionResult(
            epsilon=float(eps[i]),
            r_tx=TxDirection.normalized(u[i]),
            residual=residual,
            unwrap_ints=tuple(int(k) for k in ints[i]),
        ))
    if not found:
        raise NoCandidate(f'no permittivity in {eps_range} is consistent with phases {p.phi!r}')

    found.sort(key=lambda c: (abs(c.epsilon - mid), c.unwrap_ints))
    spread = max(c.epsilon for c in found) - min(c.epsilon for c in found)
    ambiguous = spread > AMBIGUITY_GAP
    if ambiguous:
        logger.warning('wrapped inversion is ambiguous: %d candidates spanning %.3f in permittivity',
                       len(found), spread)
    return WrappedInversion(candidates=tuple(found), ambiguous=ambiguous)


def dual_phase(epsilon, beta, gamma, cfg=None):
    """Phase shift of a two-antenna array whose baseline is rotated by gamma."""
    cfg = cfg or RfConfig()
    if not math.isfinite(epsilon) or epsilon < 1.0:
        raise DomainError(f'permittivity must be >= 1, got {epsilon!r}')
    return cfg.wavenumber * math.sqrt(epsilon) * cfg.d0 * math.cos(beta - gamma)


def dual_estimate_epsilon(phase, cfg=None):
    """Permittivity read from a dual-antenna phase assuming beta = gamma = 0."""
    cfg = cfg or RfConfig()
    return (phase / (cfg.wavenumber * cfg.d0)) ** 2


def dual_epsilon_error_ratio(gamma):
    return math.cos(gamma) ** 2


def dual_moisture_error(m_pct, gamma, cfg=None):
    """Relative moisture error of a dual-antenna reading rotated by gamma.

    The estimated permittivity is floored at 1 before the moisture law is
    applied, so a fully grazing baseline reads as the driest soil.
    """
    if m_pct <= 0:
        raise DomainError('relative moisture error needs a positive true moisture')
    epsilon = soil_forward.permittivity_of_moisture(m_pct)
    measured = dual_estimate_epsilon(dual_phase(epsilon, 0.0, gamma, cfg), cfg)
    m_hat = soil_forward.moisture_from_permittivity(max(measured, 1.0)) * 100.0
    return abs(m_hat - m_pct) / m_pct
