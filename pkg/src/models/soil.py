import enum
import math
from dataclasses import dataclass, field

import numpy as np

from src.sim.errors import DomainError, RangeError

# Learning order of the six components: [M, N, P, K, C, Al]
COMPONENTS = ('m_pct', 'n_pml', 'p_pml', 'k_pml', 'c_pct', 'al_pct')
COMPONENT_LABELS = ('M', 'N', 'P', 'K', 'C', 'Al')
COMPONENT_UNITS = ('%', '‰', '‰', '‰', '%', '%')

RANGES = {
    'm_pct': (0.0, 50.0),
    'c_pct': (0.0, 50.0),
    'al_pct': (0.0, 10.0),
    'n_pml': (0.0, 10.0),
    'p_pml': (0.0, 10.0),
    'k_pml': (0.0, 10.0),
}

VNIR_BANDS = (460, 620, 1200, 1300, 1450, 1550, 1650)


class GroupTag(enum.Enum):
    REF = 'REF'
    M = 'M'
    N = 'N'
    P = 'P'
    K = 'K'
    C = 'C'
    AL = 'AL'

    @property
    def component(self):
        """Field name varied by this group, None for the reference."""
        if self is GroupTag.REF:
            return None
        return COMPONENTS[GROUP_ORDER.index(self)]


# Same order as COMPONENTS
GROUP_ORDER = (GroupTag.M, GroupTag.N, GroupTag.P, GroupTag.K, GroupTag.C, GroupTag.AL)


@dataclass(frozen=True)
class SoilSample:
    m_pct: float = 0.0
    c_pct: float = 0.0
    al_pct: float = 0.0
    n_pml: float = 0.0
    p_pml: float = 0.0
    k_pml: float = 0.0

    def __post_init__(self):
        for name, (low, high) in RANGES.items():
            value = getattr(self, name)
            if not math.isfinite(value):
                raise RangeError(f'{name} must be finite, got {value!r}')
            if value < low or value > high:
                raise RangeError(f'{name}={value!r} outside [{low}, {high}]')

    @classmethod
    def reference(cls):
        return cls(m_pct=30.0, al_pct=4.0)

    @classmethod
    def from_array(cls, values):
        """Build from a 6-vector in learning order [M, N, P, K, C, Al]."""
        return cls(**{name: float(v) for name, v in zip(COMPONENTS, values)})

    def as_array(self):
        return np.array([getattr(self, name) for name in COMPONENTS], dtype=float)

    def replace(self, **changes):
        values = self.to_dict()
        values.update(changes)
        return SoilSample(**values)

    def to_dict(self):
        return {
            'm_pct': self.m_pct,
            'c_pct': self.c_pct,
            'al_pct': self.al_pct,
            'n_pml': self.n_pml,
            'p_pml': self.p_pml,
            'k_pml': self.k_pml,
        }


@dataclass(frozen=True)
class SensingVector:
    epsilon: float
    vnir: tuple  # volts, ordered as VNIR_BANDS

    def __post_init__(self):
        object.__setattr__(self, 'vnir', tuple(float(v) for v in self.vnir))
        if not math.isfinite(self.epsilon) or self.epsilon < 1.0:
            raise DomainError(f'epsilon must be finite and >= 1, got {self.epsilon!r}')
        if len(self.vnir) != len(VNIR_BANDS):
            raise DomainError(f'expected {len(VNIR_BANDS)} VNIR voltages, got {len(self.vnir)}')
        for band, volts in zip(VNIR_BANDS, self.vnir):
            if not (0.0 <= volts <= 0.5):
                raise DomainError(f'voltage at {band} nm outside [0, 0.5]: {volts!r}')

    def as_array(self):
        """Observable 8-vector [epsilon, v460 .. v1650]."""
        return np.array((self.epsilon,) + self.vnir, dtype=float)

    def to_dict(self):
        data = {'epsilon': self.epsilon}
        data.update({f'v{band}': v for band, v in zip(VNIR_BANDS, self.vnir)})
        return data

    @classmethod
    def from_dict(cls, data):
        try:
            return cls(epsilon=float(data['epsilon']),
                       vnir=tuple(float(data[f'v{band}']) for band in VNIR_BANDS))
        except KeyError as exc:
            raise DomainError(f'sensing vector lacks {exc.args[0]!r}') from exc


@dataclass(frozen=True)
class NoiseConfig:
    sigma_epsilon_rel: float = 0.01
    sigma_vnir: float = 0.005
    seed: int = 0

    def __post_init__(self):
        if self.sigma_epsilon_rel < 0 or self.sigma_vnir < 0:
            raise DomainError('noise sigmas must be >= 0')

    @classmethod
    def noiseless(cls, seed=0):
        return cls(sigma_epsilon_rel=0.0, sigma_vnir=0.0, seed=seed)

    def to_dict(self):
        return {
            'sigma_epsilon_rel': self.sigma_epsilon_rel,
            'sigma_vnir': self.sigma_vnir,
            'seed': self.seed,
        }


@dataclass(frozen=True)
class LabeledSample:
    composition: SoilSample
    sensing: SensingVector
    tag: GroupTag = None  # None for randomized test samples

    def to_dict(self):
        data = {'tag': self.tag.value if self.tag else None}
        data.update(self.composition.to_dict())
        data.update(self.sensing.to_dict())
        return data


@dataclass(frozen=True)
class NormSpec:
    ranges: dict = field(default_factory=lambda: dict(RANGES))

    def __post_init__(self):
        for name in COMPONENTS:
            low, high = self.ranges[name]
            if not high > low:
                raise DomainError(f'normalization range for {name} is empty: ({low}, {high})')

    @property
    def minimum(self):
        return np.array([self.ranges[name][0] for name in COMPONENTS], dtype=float)

    @property
    def span(self):
        return np.array([self.ranges[name][1] - self.ranges[name][0] for name in COMPONENTS], dtype=float)

    def to_dict(self):
        return {name: list(self.ranges[name]) for name in COMPONENTS}

    @classmethod
    def from_dict(cls, data):
        return cls(ranges={name: tuple(float(v) for v in data[name]) for name in COMPONENTS})


@dataclass
class Dataset:
    samples: list
    norm: NormSpec = field(default_factory=NormSpec)
    seed: int = 0

    def __len__(self):
        return len(self.samples)

    def __iter__(self):
        return iter(self.samples)

    def group_counts(self):
        counts = {}
        for sample in self.samples:
            if sample.tag is None:
                continue
            counts[sample.tag.value] = counts.get(sample.tag.value, 0) + 1
        return counts

    def reference(self):
        for sample in self.samples:
            if sample.tag is GroupTag.REF:
                return sample
        return None

    def group(self, tag):
        return [s for s in self.samples if s.tag is tag]

    def sensing_matrix(self):
        return np.array([s.sensing.as_array() for s in self.samples])

    def compositions(self):
        return [s.composition for s in self.samples]

    def subset(self, indices):
        return Dataset(samples=[self.samples[i] for i in indices], norm=self.norm, seed=self.seed)

    def to_dict(self):
        return {
            'seed': self.seed,
            'norm': self.norm.to_dict(),
            'group_counts': self.group_counts(),
            'samples': [s.to_dict() for s in self.samples],
        }
