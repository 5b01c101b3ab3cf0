from dataclasses import dataclass

import numpy as np

from src.sim.errors import ConfigurationError, DomainError, ScheduleError

N_ANTENNAS = 4


@dataclass(frozen=True)
class ChirpConfig:
    sf: int = 9
    bw: float = 125000.0
    fs: float = None  # defaults to bw, one sample per chip
    n_chirps: int = 8

    def __post_init__(self):
        if self.fs is None:
            object.__setattr__(self, 'fs', float(self.bw))
        if not 7 <= self.sf <= 12:
            raise ConfigurationError(f'spreading factor must be in [7, 12], got {self.sf!r}')
        if not self.bw > 0:
            raise ConfigurationError(f'bandwidth must be positive, got {self.bw!r}')
        if self.fs < self.bw:
            raise ConfigurationError(f'sample rate {self.fs!r} below bandwidth {self.bw!r}')
        if self.n_chirps < 2:
            raise ConfigurationError('a preamble needs at least two chirps')
        exact = self.chirp_duration * self.fs
        if abs(exact - round(exact)) > 1e-9:
            raise ConfigurationError('sample rate must give an integer number of samples per chirp')

    @property
    def chirp_duration(self):
        """T = 2**sf / bw, seconds."""
        return 2 ** self.sf / self.bw

    @property
    def samples_per_chirp(self):
        return int(round(self.chirp_duration * self.fs))

    @property
    def frame_length(self):
        return int(round(self.n_chirps * self.chirp_duration * self.fs))

    @property
    def frame_duration(self):
        return self.n_chirps * self.chirp_duration

    def to_dict(self):
        return {'sf': self.sf, 'bw': self.bw, 'fs': self.fs, 'n_chirps': self.n_chirps}


@dataclass(frozen=True)
class SwitchSchedule:
    """SP4T dwell schedule. Port p drives antenna p-1 (port 1 is the origin).

    The first dwell starts at the frame start; after the last dwell the
    switch stays on the final port.
    """
    dwell: float
    port_order: tuple = (1, 2, 3, 4)

    def __post_init__(self):
        object.__setattr__(self, 'port_order', tuple(int(p) for p in self.port_order))
        if sorted(self.port_order) != [1, 2, 3, 4]:
            raise ScheduleError(f'port order must be a permutation of 1..4, got {self.port_order!r}')
        if not self.dwell > 0:
            raise ScheduleError('dwell must be positive')

    @classmethod
    def for_config(cls, cfg, periods=1.5, port_order=(1, 2, 3, 4)):
        return cls(dwell=periods * cfg.chirp_duration, port_order=port_order)

    @property
    def total(self):
        return N_ANTENNAS * self.dwell

    def validate(self, cfg):
        period = cfg.chirp_duration
        if not (period < self.dwell <= 2 * period + 1e-15):
            raise ScheduleError(f'dwell {self.dwell!r}s outside (T, 2T] for T={period!r}s')
        if self.total > cfg.frame_duration + 1e-15:
            raise ScheduleError(f'switching needs {self.total!r}s but the preamble lasts '
                                f'{cfg.frame_duration!r}s')

    def antenna_indices(self, n_samples, fs):
        """Antenna index (0 = origin) driving each sample."""
        boundaries = np.array([round(j * self.dwell * fs) for j in range(1, N_ANTENNAS)])
        slot = np.searchsorted(boundaries, np.arange(n_samples), side='right')
        antennas = np.array(self.port_order) - 1
        return antennas[slot]

    def to_dict(self):
        return {'dwell': self.dwell, 'port_order': list(self.port_order)}


@dataclass(frozen=True)
class Impairments:
    cfo: float = 0.0
    phase0: float = 0.0
    antenna_phases: tuple = (0.0, 0.0, 0.0, 0.0)

    def __post_init__(self):
        object.__setattr__(self, 'antenna_phases', tuple(float(p) for p in self.antenna_phases))
        if len(self.antenna_phases) != N_ANTENNAS:
            raise DomainError(f'expected {N_ANTENNAS} antenna phases')
        if self.antenna_phases[0] != 0.0:
            raise DomainError('the origin antenna phase must be 0')

    @classmethod
    def from_phase_triple(cls, triple, cfo=0.0, phase0=0.0):
        return cls(cfo=cfo, phase0=phase0, antenna_phases=(0.0,) + tuple(triple.phi))

    def to_dict(self):
        return {'cfo': self.cfo, 'phase0': self.phase0, 'antenna_phases': list(self.antenna_phases)}


@dataclass(frozen=True)
class IqFrame:
    samples: np.ndarray
    sample_rate: float

    def __len__(self):
        return len(self.samples)

    @property
    def duration(self):
        return len(self.samples) / self.sample_rate

    def times(self):
        return np.arange(len(self.samples)) / self.sample_rate

    def to_dict(self):
        return {'n_samples': len(self.samples), 'sample_rate': self.sample_rate,
                'duration': self.duration}
