"""LoRa preamble simulation with SP4T antenna switching.

The gateway divides each received sample by the sample one chirp earlier.
Constant phase offsets cancel in every ratio; ratios taken within one
antenna dwell carry only the CFO rotation ``2*pi*cfo*T``, and ratios that
straddle a switch carry that rotation plus the phase step between the two
antennas.
"""
import logging
import math
from pathlib import Path

import numpy as np

from src.models.chirp import N_ANTENNAS, ChirpConfig, IqFrame
from src.models.rf import PhaseTriple
from src.sim.errors import DomainError, FormatError, ScheduleError
from src.sim.rf_geometry import wrap_phases

logger = logging.getLogger(__name__)


def gen_preamble(cfg=None):
    cfg = cfg or ChirpConfig()
    period = cfg.chirp_duration
    t = np.arange(cfg.samples_per_chirp) / cfg.fs
    chirp = np.exp(2j * np.pi * (-cfg.bw / 2.0 * t + cfg.bw / (2.0 * period) * t ** 2))
    return IqFrame(samples=np.tile(chirp, cfg.n_chirps), sample_rate=cfg.fs)


def apply_channel(frame, imp, sched):
    if sched.total > frame.duration + 1e-15:
        raise ScheduleError(f'switching needs {sched.total!r}s but the frame lasts {frame.duration!r}s')
    antennas = sched.antenna_indices(len(frame), frame.sample_rate)
    phase = (2.0 * np.pi * imp.cfo * frame.times()
             + imp.phase0
             + np.asarray(imp.antenna_phases)[antennas])
    return IqFrame(samples=frame.samples * np.exp(1j * phase), sample_rate=frame.sample_rate)


def add_awgn(frame, snr_db, seed=None):
    """Complex white noise at ``snr_db`` relative to unit signal power."""
    rng = np.random.default_rng(seed)
    power = 10.0 ** (-snr_db / 10.0)
    noise = math.sqrt(power / 2.0) * (rng.standard_normal(len(frame)) + 1j * rng.standard_normal(len(frame)))
    return IqFrame(samples=frame.samples + noise, sample_rate=frame.sample_rate)


def _mean_angle(phasors):
    return float(np.angle(np.mean(phasors / np.abs(phasors))))


def extract_phase_triple(frame, cfg, sched):
    """Wrapped phase shifts of antennas 1..3 relative to the origin antenna."""
    x = np.asarray(frame.samples)
    n = cfg.samples_per_chirp
    if len(x) == 0 or np.any(x == 0) or not np.all(np.isfinite(x)):
        raise DomainError('frame has zero or non-finite samples; chirp ratios are undefined')
    if len(x) <= n:
        raise ScheduleError('frame is shorter than two chirps')

    antennas = sched.antenna_indices(len(x), frame.sample_rate)
    earlier, later = antennas[:-n], antennas[n:]
    ratio = x[n:] / x[:-n]

    same = earlier == later
    if not np.any(same):
        raise ScheduleError('no consecutive-chirp pair falls within a single antenna dwell')
    cfo_rotation = np.exp(-1j * _mean_angle(ratio[same]))
    logger.debug('same-antenna chirp ratio phase %.6f rad', -np.angle(cfo_rotation))

    # walk the switching order, accumulating the step between neighbouring dwells
    order = [p - 1 for p in sched.port_order]
    relative = {order[0]: 0.0}
    for a, b in zip(order, order[1:]):
        straddle = (earlier == a) & (later == b)
        if not np.any(straddle):
            raise ScheduleError(f'no chirp pair straddles the switch from antenna {a} to {b}')
        relative[b] = relative[a] + _mean_angle(ratio[straddle] * cfo_rotation)

    phi = [relative[k] - relative[0] for k in range(1, N_ANTENNAS)]
    return wrap_phases(PhaseTriple(phi=tuple(phi), wrapped=False))


def save_iq(frame, cfg, path):
    """Interleaved little-endian float64 I/Q plus a ``.hdr`` sidecar."""
    path = Path(path)
    interleaved = np.empty(2 * len(frame), dtype='<f8')
    interleaved[0::2] = frame.samples.real
    interleaved[1::2] = frame.samples.imag
    interleaved.tofile(path)
    header = {'fs': repr(float(cfg.fs)), 'sf': str(cfg.sf), 'bw': repr(float(cfg.bw)),
              'n_chirps': str(cfg.n_chirps)}
    path.with_suffix('.hdr').write_text(''.join(f'{k}={v}\n' for k, v in header.items()),
                                        encoding='utf-8')
    return path


def load_iq(path):
    path = Path(path)
    header_path = path.with_suffix('.hdr')
    if not header_path.exists():
        raise FormatError(f'missing IQ header {header_path}')
    header = {}
    for line in header_path.read_text(encoding='utf-8').splitlines():
        if not line.strip():
            continue
        key, sep, value = line.partition('=')
        if not sep:
            raise FormatError(f'malformed header line {line!r}')
        header[key.strip()] = value.strip()
    try:
        cfg = ChirpConfig(sf=int(header['sf']), bw=float(header['bw']), fs=float(header['fs']),
                          n_chirps=int(header['n_chirps']))
    except KeyError as exc:
        raise FormatError(f'IQ header lacks {exc.args[0]!r}') from exc
    raw = np.fromfile(path, dtype='<f8')
    if len(raw) % 2:
        raise FormatError('IQ payload has an odd number of float64 values')
    return IqFrame(samples=raw[0::2] + 1j * raw[1::2], sample_rate=cfg.fs), cfg
