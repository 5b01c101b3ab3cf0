from flask import Blueprint, jsonify, request
from src.models.soil import NoiseConfig, SoilSample
from src.sim import soil_forward
from src.sim.errors import SoilXError

soil_bp = Blueprint('soil', __name__)

@soil_bp.route('/sense', methods=['POST'])
def sense():
    try:
        data = request.get_json(silent=True) or {}

        if not data.get('composition'):
            return jsonify({'error': 'composition is required'}), 400

        sample = SoilSample(**data['composition'])
        noise = NoiseConfig(**data['noise']) if data.get('noise') else NoiseConfig.noiseless()
        sensing = soil_forward.sense(sample, noise)

        return jsonify({
            'composition': sample.to_dict(),
            'noise': noise.to_dict(),
            'sensing': sensing.to_dict()
        }), 200

    except (SoilXError, TypeError) as e:
        return jsonify({'error': str(e)}), 400
    except Exception as e:
        return jsonify({'error': str(e)}), 500

@soil_bp.route('/moisture', methods=['POST'])
def moisture():
    try:
        data = request.get_json(silent=True) or {}

        if data.get('epsilon') is None:
            return jsonify({'error': 'epsilon is required'}), 400

        fraction = soil_forward.moisture_from_permittivity(float(data['epsilon']))
        return jsonify({'epsilon': float(data['epsilon']), 'moisture_fraction': fraction}), 200

    except (SoilXError, TypeError, ValueError) as e:
        return jsonify({'error': str(e)}), 400
    except Exception as e:
        return jsonify({'error': str(e)}), 500
