"""Structured training set, randomized test sets, label normalization and CSV."""
import csv
import logging
from pathlib import Path

import numpy as np

from src.models.soil import (COMPONENTS, GROUP_ORDER, RANGES, VNIR_BANDS, Dataset, GroupTag,
                             LabeledSample, NoiseConfig, NormSpec, SensingVector, SoilSample)
from src.sim import soil_forward
from src.sim.errors import FormatError, ParseError, RangeError, StructuralError

logger = logging.getLogger(__name__)

CSV_HEADER = ['tag', 'm_pct', 'c_pct', 'al_pct', 'n_pml', 'p_pml', 'k_pml', 'epsilon'] + [
    f'v{band}' for band in VNIR_BANDS]

TRAINING_SIZE = 43
DEFAULT_TEST_SIZE = 55

# per-group values that differ from the reference composition
_NPK_STEPS = (0.2, 0.4, 0.6, 0.8, 2.0, 4.0, 6.0, 8.0, 10.0)
GROUP_VALUES = {
    GroupTag.M: (0.0, 10.0, 20.0, 40.0, 50.0),
    GroupTag.AL: (0.0, 2.0, 6.0, 8.0, 10.0),
    GroupTag.C: (10.0, 20.0, 30.0, 40.0, 50.0),
    GroupTag.N: _NPK_STEPS,
    GroupTag.P: _NPK_STEPS,
    GroupTag.K: _NPK_STEPS,
}
CANONICAL_COUNTS = {'REF': 1, 'M': 5, 'AL': 5, 'C': 5, 'N': 9, 'P': 9, 'K': 9}


def pair_count(n):
    return n * (n - 1) // 2


def training_compositions():
    """(tag, composition) pairs of the canonical grid, reference first."""
    reference = SoilSample.reference()
    rows = [(GroupTag.REF, reference)]
    for tag in (GroupTag.M, GroupTag.AL, GroupTag.C, GroupTag.N, GroupTag.P, GroupTag.K):
        for value in GROUP_VALUES[tag]:
            rows.append((tag, reference.replace(**{tag.component: value})))
    return rows


def gen_training_set(noise=None):
    noise = noise or NoiseConfig.noiseless()
    rng = np.random.default_rng(noise.seed)
    samples = [LabeledSample(composition=comp, sensing=soil_forward.sense(comp, noise, rng), tag=tag)
               for tag, comp in training_compositions()]
    return Dataset(samples=samples, norm=NormSpec(), seed=noise.seed)


def random_compositions(count, rng):
    draws = np.column_stack([rng.uniform(*RANGES[name], size=count) for name in COMPONENTS])
    return [SoilSample.from_array(row) for row in draws]


def gen_test_set(count=DEFAULT_TEST_SIZE, seed=0, noise=None):
    if count < 1:
        raise RangeError(f'test set needs at least one sample, got {count}')
    noise = noise or NoiseConfig.noiseless(seed=seed)
    compositions = random_compositions(count, np.random.default_rng(seed))
    sense_rng = np.random.default_rng(noise.seed)
    samples = [LabeledSample(composition=c, sensing=soil_forward.sense(c, noise, sense_rng))
               for c in compositions]
    return Dataset(samples=samples, norm=NormSpec(), seed=seed)


def resize_training_set(ds, size, seed=0, noise=None):
    """Shrink by dropping group members, or grow with random in-range samples.

    Shrinking always removes from the currently largest group and never
    leaves a group with fewer than two members, so the reference and all
    six groups survive.
    """
    minimum = 1 + 2 * len(GROUP_ORDER)
    if size < minimum:
        raise StructuralError(f'training set cannot shrink below {minimum} samples')
    rng = np.random.default_rng(seed)
    samples = list(ds.samples)
    if size > len(samples):
        noise = noise or NoiseConfig.noiseless(seed=seed)
        extra = random_compositions(size - len(samples), rng)
        samples += [LabeledSample(composition=c, sensing=soil_forward.sense(c, noise, rng))
                    for c in extra]
    while len(samples) > size:
        counts = {tag: sum(1 for s in samples if s.tag is tag) for tag in GROUP_ORDER}
        tag = max(GROUP_ORDER, key=lambda t: counts[t])
        if counts[tag] <= 2:
            raise StructuralError(f'cannot shrink to {size} samples without emptying a group')
        members = [i for i, s in enumerate(samples) if s.tag is tag]
        del samples[members[int(rng.integers(len(members)))]]
    return Dataset(samples=samples, norm=ds.norm, seed=ds.seed)


def validate_training_structure(ds):
    """Group counts of a training set; raises if the structure is broken."""
    reference = [s for s in ds.samples if s.tag is GroupTag.REF]
    if len(reference) != 1:
        raise StructuralError(f'training set needs exactly one REF sample, found {len(reference)}')
    ref = reference[0].composition.as_array()
    for sample in ds.samples:
        if sample.tag in (None, GroupTag.REF):
            continue
        changed = [COMPONENTS[i] for i in np.flatnonzero(sample.composition.as_array() != ref)]
        if changed != [sample.tag.component]:
            raise StructuralError(f'{sample.tag.value} sample differs from the reference in {changed}')
    counts = ds.group_counts()
    missing = [t.value for t in GROUP_ORDER if counts.get(t.value, 0) == 0]
    if missing:
        raise StructuralError(f'training set lacks groups {missing}')
    return counts


def normalize(y, norm=None):
    norm = norm or NormSpec()
    values = y.as_array()
    for name, value in zip(COMPONENTS, values):
        low, high = norm.ranges[name]
        if value < low or value > high:
            raise RangeError(f'{name}={value!r} outside normalization range [{low}, {high}]')
    return (values - norm.minimum) / norm.span


def denormalize(y_norm, norm=None):
    norm = norm or NormSpec()
    return SoilSample.from_array(norm.minimum + np.asarray(y_norm, dtype=float) * norm.span)


def normalized_labels(ds):
    return np.array([normalize(s.composition, ds.norm) for s in ds.samples])


def _fmt(value):
    return format(value, '.17g')


def save_csv(ds, path):
    path = Path(path)
    with path.open('w', encoding='utf-8', newline='') as handle:
        writer = csv.writer(handle, lineterminator='\n')
        writer.writerow(CSV_HEADER)
        for sample in ds.samples:
            comp, sensing = sample.composition, sample.sensing
            writer.writerow(
                [sample.tag.value if sample.tag else '']
                + [_fmt(getattr(comp, name)) for name in CSV_HEADER[1:7]]
                + [_fmt(sensing.epsilon)]
                + [_fmt(v) for v in sensing.vnir])
    return path


def load_csv(path, seed=0, norm=None):
    path = Path(path)
    samples = []
    with path.open('r', encoding='utf-8', newline='') as handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if header != CSV_HEADER:
            raise FormatError(f'{path}: missing or unexpected header {header!r}')
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(CSV_HEADER):
                raise ParseError(line_no, f'expected {len(CSV_HEADER)} fields, got {len(row)}')
            try:
                tag = GroupTag(row[0]) if row[0] else None
                values = [float(v) for v in row[1:]]
            except ValueError as exc:
                raise ParseError(line_no, str(exc)) from exc
            try:
                composition = SoilSample(**dict(zip(CSV_HEADER[1:7], values[:6])))
            except RangeError as exc:
                raise RangeError(f'line {line_no}: {exc}') from exc
            try:
                sensing = SensingVector(epsilon=values[6], vnir=values[7:])
            except ValueError as exc:
                raise ParseError(line_no, str(exc)) from exc
            samples.append(LabeledSample(composition=composition, sensing=sensing, tag=tag))
    logger.debug('loaded %d samples from %s', len(samples), path)
    return Dataset(samples=samples, norm=norm or NormSpec(), seed=seed)
