"""Command-line harness: datasets, training, inference, evaluation and sweeps.

Every command writes its tables and a ``manifest.json`` under ``--out`` and
records a ``Run`` row through the application factory.
"""
import functools
import logging
import os
import sys
from pathlib import Path

# DON'T CHANGE THIS !!!
sys.path.insert(0, os.path.dirname(os.path.dirname(__file__)))

import click
import numpy as np

import src
from src.models.chirp import ChirpConfig
from src.models.learning import TrainConfig
from src.models.report import AblationMode
from src.models.rf import RfConfig
from src.models.soil import COMPONENT_LABELS, COMPONENT_UNITS, NoiseConfig
from src.sim import chirp_sim, cl3, harness
from src.sim.dataset import gen_test_set, gen_training_set, load_csv, save_csv, validate_training_structure
from src.sim.errors import DivergenceError, SoilXError

logger = logging.getLogger(__name__)

EXIT_CONFIG = 2
EXIT_DIVERGENCE = 3

MODES = [mode.value for mode in AblationMode]


def _jsonable(value):
    if isinstance(value, (tuple, list)):
        return [_jsonable(v) for v in value]
    if isinstance(value, Path):
        return str(value)
    return value


def _record(command, manifest, report, out_dir, error=None):
    from src.main import create_app
    from src.models.models import Run

    try:
        app = create_app()
        with app.app_context():
            Run.record(command, manifest, report=report, out_dir=out_dir, error=error)
    except Exception as exc:
        logger.warning('could not record %s run: %s', command, exc)


def harness_command(name):
    """Register ``fn`` as a subcommand that writes a manifest, records the run
    and maps library errors to exit codes."""
    def decorator(fn):
        @functools.wraps(fn)
        def wrapper(**kwargs):
            ctx = click.get_current_context()
            arguments = {k: _jsonable(v) for k, v in kwargs.items()}
            out_dir = Path(kwargs['out'])
            manifest = harness.write_manifest(out_dir, name, arguments)
            try:
                report = fn(**kwargs)
            except DivergenceError as exc:
                click.echo(f'error: {exc}', err=True)
                _record(name, manifest, None, out_dir, error=str(exc))
                ctx.exit(EXIT_DIVERGENCE)
            except (SoilXError, FileNotFoundError) as exc:
                click.echo(f'error: {exc}', err=True)
                _record(name, manifest, None, out_dir, error=str(exc))
                ctx.exit(EXIT_CONFIG)
            _record(name, manifest, report, out_dir)
            return report
        return cli.command(name)(wrapper)
    return decorator


def out_option(fn):
    return click.option('--out', type=click.Path(file_okay=False), default=lambda: os.environ.get('SOILX_OUT_DIR', 'runs'),
                        show_default='runs', help='Output directory.')(fn)


def noise_options(fn):
    fn = click.option('--noise-vnir', type=float, default=0.0, show_default=True,
                      help='Absolute VNIR noise sigma in volts.')(fn)
    return click.option('--noise-eps', type=float, default=0.0, show_default=True,
                        help='Relative permittivity noise sigma.')(fn)


def train_options(fn):
    fn = click.option('--hidden', type=int, default=TrainConfig.hidden, show_default=True)(fn)
    fn = click.option('--patience', type=int, default=TrainConfig.patience, show_default=True)(fn)
    fn = click.option('--epochs', type=int, default=TrainConfig.max_epochs, show_default=True)(fn)
    return click.option('--lr', type=float, default=TrainConfig.learning_rate, show_default=True)(fn)


def _train_config(seed, lr, epochs, patience, hidden):
    return TrainConfig(learning_rate=lr, max_epochs=epochs, patience=patience, seed=seed, hidden=hidden)


def _noise(noise_eps, noise_vnir, seed):
    return NoiseConfig(sigma_epsilon_rel=noise_eps, sigma_vnir=noise_vnir, seed=seed)


def _echo_table(out, name, header, rows):
    text, _, _ = harness.write_table(out, name, header, rows)
    click.echo(text, nl=False)


@click.group()
@click.version_option(version=src.__version__, prog_name='soilx')
def cli():
    """SoilX desk-scale simulator."""
    logging.basicConfig(level=os.environ.get('LOG_LEVEL', 'INFO'),
                        format='%(asctime)s %(levelname)s %(name)s: %(message)s')


@harness_command('gen-data')
@click.option('--kind', type=click.Choice(['training', 'test']), default='training', show_default=True)
@click.option('--count', type=int, default=55, show_default=True, help='Test-set size.')
@click.option('--seed', type=int, default=0, show_default=True)
@noise_options
@out_option
def gen_data(kind, count, seed, noise_eps, noise_vnir, out):
    """Write the canonical training set or a random test set as CSV."""
    noise = _noise(noise_eps, noise_vnir, seed)
    if kind == 'training':
        ds = gen_training_set(noise)
        counts = validate_training_structure(ds)
    else:
        ds = gen_test_set(count=count, seed=seed, noise=noise)
        counts = {'test': len(ds)}
    path = save_csv(ds, Path(out) / f'{kind}.csv')
    _echo_table(out, f'{kind}_groups', ['group', 'count'], list(counts.items()))
    logger.info('wrote %d samples to %s', len(ds), path)
    return {'kind': kind, 'size': len(ds), 'group_counts': counts}


@harness_command('train')
@click.option('--data', type=click.Path(exists=True, dir_okay=False), default=None,
              help='Training CSV; the canonical set is generated when omitted.')
@click.option('--seed', type=int, default=0, show_default=True)
@click.option('--mode', type=click.Choice(MODES[:3]), default='FULL', show_default=True)
@click.option('--dump-embeddings', is_flag=True, help='Write embeddings.csv for the training samples.')
@train_options
@out_option
def train(data, seed, mode, dump_embeddings, lr, epochs, patience, hidden, out):
    """Train the encoder and save model.json."""
    training = load_csv(data, seed=seed) if data else gen_training_set(NoiseConfig.noiseless(seed=seed))
    validate_training_structure(training)
    cfg = harness.train_config_for(AblationMode(mode), _train_config(seed, lr, epochs, patience, hidden))
    bundle = cl3.train(training, cfg)
    cl3.save_checkpoint(bundle, Path(out) / 'model.json')

    report = harness.mae(cl3.infer_batch(bundle, training.sensing_matrix()), training.compositions(),
                         {'seed': seed, 'mode': mode, 'train_config': cfg.to_dict()})
    _echo_table(out, 'training_mae', ['component', 'mae', 'unit'], report.rows())
    if dump_embeddings:
        z = cl3.encode_batch(bundle.params, training.sensing_matrix())
        tags = [s.tag.value if s.tag else '' for s in training]
        harness.write_table(out, 'embeddings', ['tag'] + [f'z{i}' for i in range(z.shape[1])],
                            [[tag] + [float(v) for v in row] for tag, row in zip(tags, z)])
    return {'training_mae': report.to_dict(), 'history': bundle.history,
            'gram_offdiag_max': bundle.directions.offdiag_max()}


@harness_command('infer')
@click.option('--model', 'model_path', type=click.Path(exists=True, dir_okay=False), required=True)
@click.option('--data', type=click.Path(exists=True, dir_okay=False), required=True)
@click.option('--paper-literal', is_flag=True, help='Uncalibrated projection scores.')
@out_option
def infer(model_path, data, paper_literal, out):
    """Predict compositions for every row of a dataset CSV."""
    bundle = cl3.load_checkpoint(model_path)
    ds = load_csv(data)
    preds = cl3.infer_batch(bundle, ds.sensing_matrix(), paper_literal=paper_literal)
    harness.write_table(out, 'predictions', list(COMPONENT_LABELS), [list(p.as_array()) for p in preds])
    report = harness.mae(preds, ds.compositions(), {'model': model_path, 'paper_literal': paper_literal})
    _echo_table(out, 'infer_mae', ['component', 'mae', 'unit'], report.rows())
    return report.to_dict()


def _eval_rows(results):
    rows = []
    for seed, result in results:
        for label, value, unit, baseline in harness.mae_rows(result):
            rows.append((seed, label, value, baseline, unit))
    return rows


@harness_command('eval')
@click.option('--seed', type=int, default=0, show_default=True, help='Training seed.')
@click.option('--test-seed', type=int, default=None, help='Test-set seed [default: seed + 1].')
@click.option('--seeds', type=int, multiple=True, help='Evaluate several training seeds.')
@click.option('--mode', type=click.Choice(MODES), default='FULL', show_default=True)
@click.option('--gamma-deg', type=float, default=harness.DEFAULT_GAMMA_DEG, show_default=True)
@click.option('--paper-literal', is_flag=True)
@noise_options
@train_options
@out_option
def eval_cmd(seed, test_seed, seeds, mode, gamma_deg, paper_literal, noise_eps, noise_vnir,
             lr, epochs, patience, hidden, out):
    """Train on the canonical set and report MAE on a random test set."""
    results = []
    for train_seed in seeds or (seed,):
        t_seed = train_seed + 1 if test_seed is None else test_seed
        results.append((train_seed, harness.run_eval(
            train_seed=train_seed, test_seed=t_seed, noise=_noise(noise_eps, noise_vnir, t_seed),
            mode=AblationMode(mode), gamma_deg=gamma_deg, paper_literal=paper_literal,
            train_cfg=_train_config(train_seed, lr, epochs, patience, hidden))))
    _echo_table(out, 'mae', ['seed', 'component', 'mae', 'baseline', 'unit'], _eval_rows(results))
    _echo_table(out, 'summary', ['seed', 'average', 'baseline_average', 'gram_offdiag_max', 'passes'],
                [(s, r.report.average, r.baseline.average, r.gram_offdiag, r.passes_baseline)
                 for s, r in results])
    return {str(s): r.to_dict() for s, r in results}


@harness_command('ablate')
@click.option('--seed', type=int, default=0, show_default=True)
@click.option('--test-seed', type=int, default=None)
@click.option('--gamma-deg', type=float, default=harness.DEFAULT_GAMMA_DEG, show_default=True)
@noise_options
@train_options
@out_option
def ablate(seed, test_seed, gamma_deg, noise_eps, noise_vnir, lr, epochs, patience, hidden, out):
    """FULL, NO_SEP, NO_ORT and DUAL_ANTENNA under one seed."""
    test_seed = seed + 1 if test_seed is None else test_seed
    results = harness.run_ablation(train_seed=seed, test_seed=test_seed, gamma_deg=gamma_deg,
                                   noise=_noise(noise_eps, noise_vnir, test_seed),
                                   train_cfg=_train_config(seed, lr, epochs, patience, hidden))
    full = results[AblationMode.FULL].report.average
    rows = []
    for mode, result in results.items():
        rows.append([mode.value] + [result.report.values[k] for k in COMPONENT_LABELS]
                    + [result.report.average, (result.report.average - full) / full if full else 0.0])
    _echo_table(out, 'ablation', ['mode'] + [f'{k}[{u}]' for k, u in zip(COMPONENT_LABELS, COMPONENT_UNITS)]
                + ['average', 'rise_vs_full'], rows)
    return {mode.value: result.to_dict() for mode, result in results.items()}


@harness_command('orient-sweep')
@click.option('--epsilon', type=float, default=16.69, show_default=True)
@click.option('--seed', type=int, default=0, show_default=True)
@click.option('--throws', type=int, default=3, show_default=True, help='Random orientations.')
@click.option('--wrapped', is_flag=True, help='Invert from wrapped phases.')
@click.option('--chirp', is_flag=True, help='Route phases through the chirp pipeline.')
@click.option('--phase-noise', type=float, default=0.0, show_default=True, help='Phase sigma in rad.')
@click.option('--draws', type=int, default=1, show_default=True)
@click.option('--f-c', type=float, default=RfConfig.f_c, show_default=True)
@out_option
def orient_sweep(epsilon, seed, throws, wrapped, chirp, phase_noise, draws, f_c, out):
    """Permittivity estimate per device orientation."""
    rows = harness.orient_sweep(epsilon, harness.standard_orientations(seed, throws), rf_cfg=RfConfig(f_c=f_c),
                                wrapped=wrapped, chirp=chirp, phase_noise=phase_noise, draws=draws, seed=seed)
    _echo_table(out, 'orient_sweep', ['orientation', 'epsilon_mean', 'epsilon_std', 'ambiguous'],
                [(r['orientation'], r['epsilon_mean'], r['epsilon_std'], r['ambiguous']) for r in rows])
    return {'epsilon_true': epsilon, 'rows': rows}


@harness_command('data-sweep')
@click.option('--sizes', type=int, multiple=True, default=(28, 43, 53), show_default=True)
@click.option('--seed', type=int, default=0, show_default=True)
@click.option('--test-seed', type=int, default=None)
@train_options
@out_option
def data_sweep(sizes, seed, test_seed, lr, epochs, patience, hidden, out):
    """MAE against training-set size."""
    test_seed = seed + 1 if test_seed is None else test_seed
    results = harness.data_sweep(sizes, train_seed=seed, test_seed=test_seed,
                                 train_cfg=_train_config(seed, lr, epochs, patience, hidden))
    _echo_table(out, 'data_sweep', ['size'] + list(COMPONENT_LABELS) + ['average'],
                [[size] + [r.report.values[k] for k in COMPONENT_LABELS] + [r.report.average]
                 for size, r in results])
    return {str(size): r.to_dict() for size, r in results}


@harness_command('phase-sim')
@click.option('--epsilon', type=float, default=16.69, show_default=True)
@click.option('--cfo', type=float, default=0.0, show_default=True, help='Carrier offset in Hz.')
@click.option('--phase0', type=float, default=0.0, show_default=True)
@click.option('--snr-db', type=float, default=None)
@click.option('--sf', type=int, default=ChirpConfig.sf, show_default=True)
@click.option('--bw', type=float, default=ChirpConfig.bw, show_default=True)
@click.option('--f-c', type=float, default=RfConfig.f_c, show_default=True)
@click.option('--seed', type=int, default=0, show_default=True)
@click.option('--dump-iq', is_flag=True, help='Write preamble.iq and preamble.hdr.')
@out_option
def phase_sim(epsilon, cfo, phase0, snr_db, sf, bw, f_c, seed, dump_iq, out):
    """Simulate the switched preamble and recover the phase triple."""
    chirp_cfg = ChirpConfig(sf=sf, bw=bw)
    result = harness.phase_sim(epsilon, rf_cfg=RfConfig(f_c=f_c), chirp_cfg=chirp_cfg, cfo=cfo,
                               phase0=phase0, snr_db=snr_db, seed=seed)
    if dump_iq:
        chirp_sim.save_iq(result['frame'], chirp_cfg, Path(out) / 'preamble.iq')
    rows = [(f'phi{k + 1}', t, e, r) for k, (t, e, r) in enumerate(zip(
        result['true_phases'].phi, result['expected_wrapped'].phi, result['recovered'].phi))]
    _echo_table(out, 'phases', ['phase', 'true', 'expected_wrapped', 'recovered'], rows)
    inversion = result['inversion']
    _echo_table(out, 'candidates', ['epsilon', 'k1', 'k2', 'k3'],
                [[c.epsilon] + list(c.unwrap_ints) for c in inversion])
    if inversion.ambiguous:
        click.echo(f'ambiguous: {len(inversion)} candidates')
    return {
        'max_phase_error': result['max_phase_error'],
        'frame_duration': result['frame_duration'],
        'inversion': inversion.to_dict(),
    }


@harness_command('dual-sweep')
@click.option('--gamma-deg', 'gammas', type=float, multiple=True, default=(0.0, 15.0, 30.0, 45.0, 90.0),
              show_default=True)
@click.option('--m-pct', type=float, default=30.0, show_default=True)
@out_option
def dual_sweep(gammas, m_pct, out):
    """Dual-antenna permittivity and moisture error against rotation."""
    rows = harness.dual_sweep(gammas, m_pct=m_pct)
    _echo_table(out, 'dual_sweep', ['gamma_deg', 'epsilon_ratio', 'moisture_error'],
                [(r['gamma_deg'], r['epsilon_ratio'], r['moisture_error']) for r in rows])
    return {'m_pct': m_pct, 'rows': rows}


@cli.command('rerun')
@click.argument('manifest', type=click.Path(exists=True, dir_okay=False))
@click.option('--out', type=click.Path(file_okay=False), default=None,
              help='Output directory [default: the one in the manifest].')
@click.pass_context
def rerun(ctx, manifest, out):
    """Repeat the command recorded in a manifest.json."""
    document = harness.read_manifest(manifest)
    command = cli.commands.get(document.get('command'))
    if command is None or command is rerun:
        click.echo(f'error: manifest names unknown command {document.get("command")!r}', err=True)
        ctx.exit(EXIT_CONFIG)
    arguments = dict(document['arguments'])
    if out:
        arguments['out'] = out
    digest = harness.config_digest(document['arguments'])
    if digest != document.get('config_sha256'):
        logger.warning('manifest digest mismatch; arguments were edited')
    if document.get('versions', {}).get('numpy') != np.__version__:
        logger.warning('numpy %s differs from the recorded %s', np.__version__, document['versions'].get('numpy'))
    ctx.invoke(command, **arguments)


def main():
    cli(prog_name='soilx')


if __name__ == '__main__':
    main()
