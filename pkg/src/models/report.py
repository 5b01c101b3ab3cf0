import enum
from dataclasses import dataclass, field

from src.models.soil import COMPONENT_LABELS, COMPONENT_UNITS


class AblationMode(enum.Enum):
    FULL = 'FULL'
    NO_SEP = 'NO_SEP'
    NO_ORT = 'NO_ORT'
    DUAL_ANTENNA = 'DUAL_ANTENNA'


@dataclass
class MaeReport:
    """Per-component mean absolute error; % for M, C, Al and ‰ for N, P, K."""
    values: dict  # component label -> MAE
    count: int
    fingerprint: dict = field(default_factory=dict)

    @property
    def units(self):
        return dict(zip(COMPONENT_LABELS, COMPONENT_UNITS))

    @property
    def average(self):
        return sum(self.values.values()) / len(self.values)

    def rows(self):
        return [(label, self.values[label], unit) for label, unit in zip(COMPONENT_LABELS, COMPONENT_UNITS)]

    def to_dict(self):
        return {
            'mae': dict(self.values),
            'units': self.units,
            'count': self.count,
            'average': self.average,
            'fingerprint': dict(self.fingerprint),
        }
