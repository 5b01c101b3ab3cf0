from flask import Blueprint, jsonify, request
from src.models.soil import NoiseConfig
from src.sim.dataset import DEFAULT_TEST_SIZE, gen_test_set, gen_training_set
from src.sim.errors import SoilXError

dataset_bp = Blueprint('dataset', __name__)

def _noise_from(data, seed=0):
    if data.get('noise'):
        return NoiseConfig(**data['noise'])
    return NoiseConfig.noiseless(seed=seed)

@dataset_bp.route('/training', methods=['POST'])
def training_set():
    try:
        data = request.get_json(silent=True) or {}
        ds = gen_training_set(_noise_from(data))
        return jsonify(ds.to_dict()), 200

    except (SoilXError, TypeError) as e:
        return jsonify({'error': str(e)}), 400
    except Exception as e:
        return jsonify({'error': str(e)}), 500

@dataset_bp.route('/test', methods=['POST'])
def test_set():
    try:
        data = request.get_json(silent=True) or {}
        count = int(data.get('count', DEFAULT_TEST_SIZE))
        seed = int(data.get('seed', 0))

        if count < 1:
            return jsonify({'error': 'count must be at least 1'}), 400

        ds = gen_test_set(count=count, seed=seed, noise=_noise_from(data, seed))
        return jsonify(ds.to_dict()), 200

    except (SoilXError, TypeError, ValueError) as e:
        return jsonify({'error': str(e)}), 400
    except Exception as e:
        return jsonify({'error': str(e)}), 500
