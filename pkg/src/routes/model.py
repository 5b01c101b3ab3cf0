from flask import Blueprint, current_app, jsonify, request
from src.models.soil import SensingVector
from src.sim import cl3
from src.sim.errors import SoilXError

model_bp = Blueprint('model', __name__)

@model_bp.route('/infer', methods=['POST'])
def infer():
    try:
        data = request.get_json(silent=True) or {}

        if not data.get('sensing'):
            return jsonify({'error': 'sensing is required'}), 400

        model_path = data.get('model_path') or current_app.config.get('SOILX_MODEL_PATH')
        if not model_path:
            return jsonify({'error': 'no model checkpoint configured'}), 400

        sensing = SensingVector.from_dict(data['sensing'])
        bundle = cl3.load_checkpoint(model_path)
        composition = cl3.infer(bundle, sensing.as_array(), paper_literal=bool(data.get('paper_literal')))
        current_app.logger.info('inferred composition from %s', model_path)

        return jsonify({
            'composition': composition.to_dict(),
            'model_path': str(model_path)
        }), 200

    except FileNotFoundError:
        return jsonify({'error': 'model checkpoint not found'}), 404
    except (SoilXError, TypeError, ValueError) as e:
        return jsonify({'error': str(e)}), 400
    except Exception as e:
        return jsonify({'error': str(e)}), 500
