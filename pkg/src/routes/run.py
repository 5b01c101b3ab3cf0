from flask import Blueprint, jsonify, request
from src.models.models import Run

run_bp = Blueprint('run', __name__)

@run_bp.route('/', methods=['GET'])
def get_runs():
    try:
        command = request.args.get('command')

        query = Run.query
        if command:
            query = query.filter_by(command=command)

        runs = query.order_by(Run.created_at.desc()).all()
        return jsonify([run.to_dict() for run in runs]), 200

    except Exception as e:
        return jsonify({'error': str(e)}), 500

@run_bp.route('/<int:run_id>', methods=['GET'])
def get_run(run_id):
    try:
        run = Run.query.get(run_id)
        if not run:
            return jsonify({'error': 'Run not found'}), 404

        return jsonify(run.to_dict()), 200

    except Exception as e:
        return jsonify({'error': str(e)}), 500
