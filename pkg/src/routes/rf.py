import math
from flask import Blueprint, current_app, jsonify, request
from src.models.chirp import ChirpConfig
from src.models.models import Run
from src.models.rf import Orientation, RfConfig
from src.sim import rf_geometry
from src.sim.errors import SoilXError
from src.sim.harness import phase_sim

rf_bp = Blueprint('rf', __name__)

def _rf_config(data):
    return RfConfig(**{key: float(data[key]) for key in ('f_c', 'd0') if key in data})

def _orientation(data):
    orient = data.get('orientation')
    if not orient:
        return Orientation.identity()
    if 'quat' in orient:
        return Orientation(tuple(orient['quat']))
    return Orientation.from_euler(orient.get('seq', 'zyx'), orient['angles'])

@rf_bp.route('/rf/invert', methods=['POST'])
def invert():
    try:
        data = request.get_json(silent=True) or {}

        if data.get('epsilon') is None:
            return jsonify({'error': 'epsilon is required'}), 400

        cfg = _rf_config(data)
        phases = rf_geometry.forward_phases(float(data['epsilon']), data.get('r_tx', (0.0, 0.0, 1.0)),
                                            _orientation(data), cfg)
        if data.get('wrapped'):
            wrapped = rf_geometry.wrap_phases(phases)
            result = rf_geometry.invert_wrapped(wrapped, cfg)
            if result.ambiguous:
                current_app.logger.warning('wrapped inversion returned %d candidates', len(result))
            return jsonify({'phases': wrapped.to_dict(), 'inversion': result.to_dict()}), 200

        result = rf_geometry.invert_phases(phases, cfg)
        return jsonify({'phases': phases.to_dict(), 'inversion': result.to_dict()}), 200

    except (SoilXError, TypeError, ValueError, KeyError) as e:
        return jsonify({'error': str(e)}), 400
    except Exception as e:
        return jsonify({'error': str(e)}), 500

@rf_bp.route('/rf/dual', methods=['POST'])
def dual():
    try:
        data = request.get_json(silent=True) or {}
        cfg = _rf_config(data)
        gamma = math.radians(float(data.get('gamma_deg', 30.0)))
        m_pct = float(data.get('m_pct', 30.0))

        return jsonify({
            'gamma_deg': math.degrees(gamma),
            'epsilon_ratio': rf_geometry.dual_epsilon_error_ratio(gamma),
            'moisture_error': rf_geometry.dual_moisture_error(m_pct, gamma, cfg)
        }), 200

    except (SoilXError, TypeError, ValueError) as e:
        return jsonify({'error': str(e)}), 400
    except Exception as e:
        return jsonify({'error': str(e)}), 500

@rf_bp.route('/chirp/phase-sim', methods=['POST'])
def chirp_phase_sim():
    try:
        data = request.get_json(silent=True) or {}

        if data.get('epsilon') is None:
            return jsonify({'error': 'epsilon is required'}), 400

        chirp_cfg = ChirpConfig(**{key: data[key] for key in ('sf', 'bw', 'n_chirps') if key in data})
        result = phase_sim(float(data['epsilon']), data.get('r_tx', (0.0, 0.0, 1.0)), _orientation(data),
                           _rf_config(data), chirp_cfg, cfo=float(data.get('cfo', 0.0)),
                           phase0=float(data.get('phase0', 0.0)), snr_db=data.get('snr_db'),
                           seed=int(data.get('seed', 0)))

        report = {
            'true_phases': result['true_phases'].to_dict(),
            'expected_wrapped': result['expected_wrapped'].to_dict(),
            'recovered': result['recovered'].to_dict(),
            'max_phase_error': result['max_phase_error'],
            'frame_duration': result['frame_duration'],
            'inversion': result['inversion'].to_dict()
        }
        run = Run.record('phase-sim', {'command': 'phase-sim', 'arguments': data}, report=report)
        report['run_id'] = run.id

        return jsonify(report), 200

    except (SoilXError, TypeError, ValueError, KeyError) as e:
        return jsonify({'error': str(e)}), 400
    except Exception as e:
        return jsonify({'error': str(e)}), 500
