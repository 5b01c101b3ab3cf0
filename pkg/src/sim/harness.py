"""Experiment harness: evaluation, ablations, sweeps and run artifacts."""
import csv
import hashlib
import json
import logging
import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
import scipy

import src
from src.models.chirp import ChirpConfig, Impairments, SwitchSchedule
from src.models.learning import TrainConfig
from src.models.report import AblationMode, MaeReport
from src.models.rf import Orientation, PhaseTriple
from src.models.soil import COMPONENT_LABELS, Dataset, LabeledSample, NoiseConfig, SensingVector, SoilSample
from src.sim import chirp_sim, cl3, rf_geometry
from src.sim.dataset import gen_test_set, gen_training_set, resize_training_set
from src.sim.errors import DivergenceError, DomainError

logger = logging.getLogger(__name__)

DEFAULT_GAMMA_DEG = 30.0
BASELINE_FRACTION = 0.5


def mae(preds, truth, fingerprint=None):
    if len(preds) != len(truth):
        raise DomainError(f'{len(preds)} predictions for {len(truth)} ground-truth samples')
    if not preds:
        raise DomainError('MAE needs at least one sample')
    errors = np.abs(np.array([p.as_array() for p in preds]) - np.array([t.as_array() for t in truth]))
    values = {label: float(v) for label, v in zip(COMPONENT_LABELS, errors.mean(axis=0))}
    return MaeReport(values=values, count=len(preds), fingerprint=dict(fingerprint or {}))


def mean_predictor(training):
    """Composition equal to the mean training label."""
    return SoilSample.from_array(np.mean([s.composition.as_array() for s in training], axis=0))


def dual_antenna_view(ds, gamma, rf_cfg=None):
    """Replace each permittivity by a dual-antenna reading rotated by gamma.

    Readings below 1 are floored at 1 to stay physical.
    """
    samples = []
    for s in ds.samples:
        phase = rf_geometry.dual_phase(s.sensing.epsilon, 0.0, gamma, rf_cfg)
        eps_hat = max(rf_geometry.dual_estimate_epsilon(phase, rf_cfg), 1.0)
        samples.append(LabeledSample(composition=s.composition,
                                     sensing=SensingVector(epsilon=eps_hat, vnir=s.sensing.vnir),
                                     tag=s.tag))
    return Dataset(samples=samples, norm=ds.norm, seed=ds.seed)


def train_config_for(mode, base=None):
    base = base or TrainConfig()
    if mode is AblationMode.NO_SEP:
        return replace(base, lambda_sep=0.0)
    if mode is AblationMode.NO_ORT:
        return replace(base, lambda_ort=0.0)
    return base


@dataclass
class EvalResult:
    mode: AblationMode
    report: MaeReport
    baseline: MaeReport
    gram_offdiag: float
    bundle: object = None

    @property
    def passes_baseline(self):
        """Every component at or below half the mean-predictor MAE."""
        return all(self.report.values[k] <= BASELINE_FRACTION * self.baseline.values[k]
                   for k in COMPONENT_LABELS)

    def to_dict(self):
        return {
            'mode': self.mode.value,
            'report': self.report.to_dict(),
            'baseline': self.baseline.to_dict(),
            'gram_offdiag_max': self.gram_offdiag,
            'passes_baseline': self.passes_baseline,
        }


def run_eval(train_seed=0, test_seed=1, noise=None, mode=AblationMode.FULL, gamma_deg=DEFAULT_GAMMA_DEG,
             train_cfg=None, paper_literal=False, train_size=None, test_count=55):
    noise = noise or NoiseConfig.noiseless(seed=test_seed)
    cfg = train_config_for(mode, replace(train_cfg or TrainConfig(), seed=train_seed))
    training = gen_training_set(NoiseConfig.noiseless(seed=train_seed))
    if train_size is not None and train_size != len(training):
        training = resize_training_set(training, train_size, seed=train_seed)
    test = gen_test_set(count=test_count, seed=test_seed, noise=noise)
    if mode is AblationMode.DUAL_ANTENNA:
        test = dual_antenna_view(test, math.radians(gamma_deg))

    fingerprint = {
        'train_seed': train_seed,
        'test_seed': test_seed,
        'noise': noise.to_dict(),
        'mode': mode.value,
        'gamma_deg': gamma_deg if mode is AblationMode.DUAL_ANTENNA else None,
        'paper_literal': paper_literal,
        'train_size': len(training),
        'train_config': cfg.to_dict(),
    }
    try:
        bundle = cl3.train(training, cfg)
    except DivergenceError as exc:
        raise DivergenceError(exc.epoch, mode=mode.value) from exc

    truth = test.compositions()
    preds = cl3.infer_batch(bundle, test.sensing_matrix(), paper_literal=paper_literal)
    report = mae(preds, truth, fingerprint)
    baseline = mae([mean_predictor(training)] * len(truth), truth, fingerprint)
    logger.info('%s: average MAE %.4f (mean-predictor %.4f)', mode.value, report.average, baseline.average)
    return EvalResult(mode=mode, report=report, baseline=baseline,
                      gram_offdiag=bundle.directions.offdiag_max(), bundle=bundle)


def run_ablation(modes=tuple(AblationMode), **kwargs):
    return {mode: run_eval(mode=mode, **kwargs) for mode in modes}


def data_sweep(sizes, **kwargs):
    results = []
    for size in sizes:
        if size < 28:
            raise DomainError(f'training size {size} is below the supported minimum of 28')
        results.append((size, run_eval(train_size=size, **kwargs)))
    return results


def standard_orientations(seed=0, throws=3):
    """Upright, 90 degree yaw/pitch/roll, and seeded random throws."""
    rng = np.random.default_rng(seed)
    named = [
        ('identity', Orientation.identity()),
        ('yaw90', Orientation.yaw(90)),
        ('pitch90', Orientation.pitch(90)),
        ('roll90', Orientation.roll(90)),
    ]
    named += [(f'throw{i + 1}', Orientation.random(seed=int(rng.integers(2 ** 32))))
              for i in range(throws)]
    return named


def phase_sim(epsilon, r_tx_world=(0.0, 0.0, 1.0), orient=None, rf_cfg=None, chirp_cfg=None,
              cfo=0.0, phase0=0.0, snr_db=None, seed=0, eps_range=rf_geometry.DEFAULT_EPS_RANGE):
    """Geometry -> IQ preamble -> chirp ratios -> wrapped inversion."""
    orient = orient or Orientation.identity()
    chirp_cfg = chirp_cfg or ChirpConfig()
    truth = rf_geometry.forward_phases(epsilon, r_tx_world, orient, rf_cfg)
    sched = SwitchSchedule.for_config(chirp_cfg)
    sched.validate(chirp_cfg)
    frame = chirp_sim.apply_channel(chirp_sim.gen_preamble(chirp_cfg),
                                    Impairments.from_phase_triple(truth, cfo=cfo, phase0=phase0), sched)
    if snr_db is not None:
        frame = chirp_sim.add_awgn(frame, snr_db, seed)
    recovered = chirp_sim.extract_phase_triple(frame, chirp_cfg, sched)
    expected = rf_geometry.wrap_phases(truth)
    error, _ = rf_geometry.wrap_angles(recovered.as_array() - expected.as_array())
    return {
        'true_phases': truth,
        'expected_wrapped': expected,
        'recovered': recovered,
        'max_phase_error': float(np.max(np.abs(error))),
        'frame_duration': frame.duration,
        'inversion': rf_geometry.invert_wrapped(recovered, rf_cfg, eps_range),
        'frame': frame,
    }


def estimate_epsilon(epsilon, orient, r_tx_world=(0.0, 0.0, 1.0), rf_cfg=None, wrapped=False, chirp=False,
                     phase_noise=0.0, rng=None, chirp_cfg=None):
    """One permittivity reading through the selected pipeline."""
    if chirp:
        cfo, phase0 = 0.0, 0.0
        if rng is not None:
            cfo, phase0 = rng.uniform(-1000.0, 1000.0), rng.uniform(0.0, 2 * math.pi)
        result = phase_sim(epsilon, r_tx_world, orient, rf_cfg, chirp_cfg, cfo=cfo, phase0=phase0)
        return result['inversion'].best.epsilon, result['inversion'].ambiguous
    phases = rf_geometry.forward_phases(epsilon, r_tx_world, orient, rf_cfg)
    if phase_noise > 0:
        phases = PhaseTriple(phi=tuple(phases.as_array() + rng.normal(0.0, phase_noise, size=3)))
    if wrapped:
        found = rf_geometry.invert_wrapped(rf_geometry.wrap_phases(phases), rf_cfg)
        return found.best.epsilon, found.ambiguous
    return rf_geometry.invert_phases(phases, rf_cfg).epsilon, False


def orient_sweep(epsilon_true, orientations=None, r_tx_world=(0.0, 0.0, 1.0), rf_cfg=None, wrapped=False,
                 chirp=False, phase_noise=0.0, draws=1, seed=0):
    """Rows of (name, mean estimate, std, ambiguous) per orientation."""
    if not 3.0 <= epsilon_true <= 40.0:
        raise DomainError(f'sweep permittivity must lie in [3, 40], got {epsilon_true!r}')
    orientations = orientations or standard_orientations(seed)
    rng = np.random.default_rng(seed)
    rows = []
    for name, orient in orientations:
        readings = [estimate_epsilon(epsilon_true, orient, r_tx_world, rf_cfg, wrapped, chirp,
                                     phase_noise, rng) for _ in range(max(draws, 1))]
        estimates = np.array([r[0] for r in readings])
        rows.append({
            'orientation': name,
            'epsilon_mean': float(estimates.mean()),
            'epsilon_std': float(estimates.std(ddof=1)) if len(estimates) > 1 else 0.0,
            'ambiguous': any(r[1] for r in readings),
        })
    return rows


def dual_sweep(gammas_deg=(0.0, 15.0, 30.0, 45.0, 90.0), m_pct=30.0, rf_cfg=None):
    rows = []
    for gamma_deg in gammas_deg:
        gamma = math.radians(gamma_deg)
        rows.append({
            'gamma_deg': gamma_deg,
            'epsilon_ratio': rf_geometry.dual_epsilon_error_ratio(gamma),
            'moisture_error': rf_geometry.dual_moisture_error(m_pct, gamma, rf_cfg),
        })
    return rows


def config_digest(arguments):
    canonical = json.dumps(arguments, sort_keys=True, separators=(',', ':'), default=str)
    return hashlib.sha256(canonical.encode('utf-8')).hexdigest()


def write_manifest(out_dir, command, arguments):
    """Everything needed to repeat a run: command, arguments, versions."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = {
        'command': command,
        'arguments': arguments,
        'versions': {'soilx': src.__version__, 'numpy': np.__version__, 'scipy': scipy.__version__},
        'config_sha256': config_digest(arguments),
    }
    (out_dir / 'manifest.json').write_text(json.dumps(manifest, indent=2, sort_keys=True, default=str) + '\n',
                                           encoding='utf-8')
    return manifest


def read_manifest(path):
    return json.loads(Path(path).read_text(encoding='utf-8'))


def _cell(value):
    if isinstance(value, float):
        return format(value, '.6g')
    return str(value)


def write_table(out_dir, name, header, rows):
    """Aligned plain-text table plus a CSV twin with full precision."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    cells = [[_cell(v) for v in row] for row in rows]
    widths = [max(len(str(h)), *(len(r[i]) for r in cells)) if cells else len(str(h))
              for i, h in enumerate(header)]
    lines = ['  '.join(str(h).ljust(w) for h, w in zip(header, widths)).rstrip()]
    lines += ['  '.join(c.ljust(w) for c, w in zip(row, widths)).rstrip() for row in cells]
    text = '\n'.join(lines) + '\n'
    txt_path = out_dir / f'{name}.txt'
    txt_path.write_text(text, encoding='utf-8')
    csv_path = out_dir / f'{name}.csv'
    with csv_path.open('w', encoding='utf-8', newline='') as handle:
        writer = csv.writer(handle, lineterminator='\n')
        writer.writerow(header)
        writer.writerows([[repr(v) if isinstance(v, float) else v for v in row] for row in rows])
    return text, txt_path, csv_path


def mae_rows(result):
    return [(label, value, unit, result.baseline.values[label])
            for label, value, unit in result.report.rows()]
