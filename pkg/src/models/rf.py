import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial.transform import Rotation

from src.sim.errors import ConfigurationError, DomainError

SPEED_OF_LIGHT = 299792458.0


@dataclass(frozen=True)
class RfConfig:
    f_c: float = 915e6
    d0: float = 0.132
    c0: float = SPEED_OF_LIGHT

    def __post_init__(self):
        if not self.f_c > 0:
            raise ConfigurationError(f'carrier frequency must be positive, got {self.f_c!r}')
        if not self.d0 > 0:
            raise ConfigurationError(f'antenna spacing must be positive, got {self.d0!r}')

    @property
    def wavenumber(self):
        """Free-space phase per metre, 2*pi*f_c/c0."""
        return 2.0 * math.pi * self.f_c / self.c0

    def to_dict(self):
        return {'f_c': self.f_c, 'd0': self.d0, 'c0': self.c0}


@dataclass(frozen=True)
class Orientation:
    """Proper rotation of the array frame into the world frame.

    Stored as a unit quaternion in scalar-last order (x, y, z, w).
    """
    quat: tuple = (0.0, 0.0, 0.0, 1.0)

    def __post_init__(self):
        q = np.asarray(self.quat, dtype=float)
        norm = np.linalg.norm(q)
        if q.shape != (4,) or not np.isfinite(norm) or norm == 0:
            raise DomainError(f'invalid orientation quaternion {self.quat!r}')
        object.__setattr__(self, 'quat', tuple(float(v) for v in q / norm))

    @classmethod
    def identity(cls):
        return cls()

    @classmethod
    def from_rotation(cls, rotation):
        return cls(tuple(rotation.as_quat()))

    @classmethod
    def from_euler(cls, seq, angles, degrees=True):
        return cls.from_rotation(Rotation.from_euler(seq, angles, degrees=degrees))

    @classmethod
    def yaw(cls, degrees):
        return cls.from_euler('z', degrees)

    @classmethod
    def pitch(cls, degrees):
        return cls.from_euler('y', degrees)

    @classmethod
    def roll(cls, degrees):
        return cls.from_euler('x', degrees)

    @classmethod
    def random(cls, seed=None):
        return cls.from_rotation(Rotation.random(random_state=seed))

    @property
    def rotation(self):
        return Rotation.from_quat(self.quat)

    @property
    def matrix(self):
        return self.rotation.as_matrix()

    def to_dict(self):
        return {'quat': list(self.quat)}


@dataclass(frozen=True)
class TxDirection:
    """Unit node-to-gateway direction in the array-local frame."""
    vector: tuple

    def __post_init__(self):
        v = np.asarray(self.vector, dtype=float)
        if v.shape != (3,) or not np.all(np.isfinite(v)):
            raise DomainError(f'direction must be a finite 3-vector, got {self.vector!r}')
        if abs(np.linalg.norm(v) - 1.0) > 1e-12:
            raise DomainError('direction must have unit norm')
        object.__setattr__(self, 'vector', tuple(float(x) for x in v))

    @classmethod
    def normalized(cls, vector):
        v = np.asarray(vector, dtype=float)
        n = np.linalg.norm(v)
        if not n > 0:
            raise DomainError('cannot normalize a zero direction')
        v = v / n
        # one more pass keeps |norm - 1| at the rounding floor
        return cls(tuple(v / np.linalg.norm(v)))

    def as_array(self):
        return np.array(self.vector)

    def to_dict(self):
        return {'vector': list(self.vector)}


@dataclass(frozen=True)
class PhaseTriple:
    phi: tuple
    wrapped: bool = False

    def __post_init__(self):
        object.__setattr__(self, 'phi', tuple(float(p) for p in self.phi))
        if len(self.phi) != 3:
            raise DomainError(f'expected three phase shifts, got {len(self.phi)}')
        if self.wrapped:
            for p in self.phi:
                if not (-math.pi < p <= math.pi):
                    raise DomainError(f'wrapped phase {p!r} outside (-pi, pi]')

    def as_array(self):
        return np.array(self.phi)

    def to_dict(self):
        return {'phi': list(self.phi), 'wrapped': self.wrapped}


@dataclass(frozen=True)
class InversionResult:
    epsilon: float
    r_tx: TxDirection
    residual: float = 0.0
    unwrap_ints: tuple = (0, 0, 0)

    def to_dict(self):
        return {
            'epsilon': self.epsilon,
            'r_tx': list(self.r_tx.vector),
            'residual': self.residual,
            'unwrap_ints': list(self.unwrap_ints),
        }


@dataclass(frozen=True)
class WrappedInversion:
    """Candidates of a wrapped-phase inversion, best first."""
    candidates: tuple
    ambiguous: bool = False

    @property
    def best(self):
        return self.candidates[0]

    def __len__(self):
        return len(self.candidates)

    def __iter__(self):
        return iter(self.candidates)

    def to_dict(self):
        return {
            'ambiguous': self.ambiguous,
            'candidates': [c.to_dict() for c in self.candidates],
        }
