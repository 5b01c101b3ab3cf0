from dataclasses import dataclass, field

import numpy as np

from src.models.soil import NormSpec
from src.sim.errors import ConfigurationError, DomainError

EMBEDDING_DIM = 512
N_FEATURES = 8
N_COMPONENTS = 6
TRAINABLE = ('W1', 'b1', 'W2', 'b2')


@dataclass
class EncoderParams:
    W1: np.ndarray  # hidden x 8
    b1: np.ndarray
    W2: np.ndarray  # hidden x hidden
    b2: np.ndarray
    x_mean: np.ndarray
    x_std: np.ndarray

    def __post_init__(self):
        for name in TRAINABLE + ('x_mean', 'x_std'):
            value = np.asarray(getattr(self, name), dtype=float)
            if not np.all(np.isfinite(value)):
                raise DomainError(f'encoder parameter {name} is not finite')
            setattr(self, name, value)
        if np.any(self.x_std <= 0):
            raise DomainError('input standardization needs std > 0 per feature')

    def trainable(self):
        return {name: getattr(self, name) for name in TRAINABLE}

    def with_trainable(self, arrays):
        return EncoderParams(x_mean=self.x_mean, x_std=self.x_std,
                             **{name: arrays[name] for name in TRAINABLE})

    def copy(self):
        return EncoderParams(**{name: getattr(self, name).copy()
                                for name in TRAINABLE + ('x_mean', 'x_std')})

    def to_dict(self):
        return {name: getattr(self, name).tolist() for name in TRAINABLE + ('x_mean', 'x_std')}

    @classmethod
    def from_dict(cls, data):
        return cls(**{name: np.array(data[name], dtype=float) for name in TRAINABLE + ('x_mean', 'x_std')})


@dataclass
class DirectionSet:
    z_avg: np.ndarray  # 6 x D, rows ordered M, N, P, K, C, Al
    z0: np.ndarray
    group_counts: dict = field(default_factory=dict)

    def gram(self):
        return self.z_avg @ self.z_avg.T

    def offdiag_max(self):
        g = self.gram()
        return float(np.max(np.abs(g - np.diag(np.diag(g)))))

    def to_dict(self):
        return {'z_avg': self.z_avg.tolist(), 'z0': self.z0.tolist(),
                'group_counts': dict(self.group_counts)}

    @classmethod
    def from_dict(cls, data):
        return cls(z_avg=np.array(data['z_avg'], dtype=float), z0=np.array(data['z0'], dtype=float),
                   group_counts=dict(data['group_counts']))


@dataclass(frozen=True)
class TrainConfig:
    lambda_sep: float = 0.82
    lambda_ort: float = 0.18
    learning_rate: float = 1e-3
    max_epochs: int = 5000
    patience: int = 200
    seed: int = 0
    hidden: int = EMBEDDING_DIM

    def __post_init__(self):
        if self.lambda_sep < 0 or self.lambda_ort < 0:
            raise ConfigurationError('loss weights must be >= 0')
        if self.lambda_sep + self.lambda_ort <= 0:
            raise ConfigurationError('at least one loss weight must be positive')
        if self.learning_rate <= 0 or self.max_epochs < 0 or self.patience < 1 or self.hidden < 1:
            raise ConfigurationError('invalid optimizer settings')

    def to_dict(self):
        return {
            'lambda_sep': self.lambda_sep,
            'lambda_ort': self.lambda_ort,
            'learning_rate': self.learning_rate,
            'max_epochs': self.max_epochs,
            'patience': self.patience,
            'seed': self.seed,
            'hidden': self.hidden,
        }


@dataclass
class ModelBundle:
    params: EncoderParams
    directions: DirectionSet
    norm: NormSpec
    calibration: np.ndarray  # 6 x 2, (slope, intercept) per component
    ref_norm_labels: np.ndarray
    seed: int = 0
    history: dict = field(default_factory=dict)

    def __post_init__(self):
        self.calibration = np.asarray(self.calibration, dtype=float)
        slopes = self.calibration[:, 0]
        if not np.all(np.isfinite(self.calibration)) or np.any(slopes == 0):
            raise DomainError('calibration slopes must be finite and nonzero')
