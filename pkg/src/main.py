import os
import sys
import logging
# DON'T CHANGE THIS !!!
sys.path.insert(0, os.path.dirname(os.path.dirname(__file__)))

from flask import Flask
from flask_cors import CORS
from src.models.models import db
from src.routes.soil import soil_bp
from src.routes.dataset import dataset_bp
from src.routes.rf import rf_bp
from src.routes.model import model_bp
from src.routes.run import run_bp

def create_app(config=None):
    app = Flask(__name__)

    # Configuration
    app.config['SECRET_KEY'] = os.environ.get('SECRET_KEY', 'soilx-secret-key-2024')
    app.config['SOILX_OUT_DIR'] = os.environ.get('SOILX_OUT_DIR', 'runs')
    app.config['SOILX_MODEL_PATH'] = os.environ.get('SOILX_MODEL_PATH')
    app.config['LOG_LEVEL'] = os.environ.get('LOG_LEVEL', 'INFO')

    # Database configuration - use PostgreSQL in production, SQLite in development
    database_url = os.environ.get('DATABASE_URL')
    if database_url:
        # Production database (PostgreSQL)
        if database_url.startswith('postgres://'):
            database_url = database_url.replace('postgres://', 'postgresql://', 1)
        app.config['SQLALCHEMY_DATABASE_URI'] = database_url
    else:
        # Development database (SQLite)
        database_dir = os.path.join(os.path.dirname(__file__), 'database')
        app.config['SQLALCHEMY_DATABASE_URI'] = f"sqlite:///{os.path.join(database_dir, 'app.db')}"

    app.config['SQLALCHEMY_TRACK_MODIFICATIONS'] = False

    if config:
        app.config.update(config)

    if not database_url and 'SQLALCHEMY_DATABASE_URI' not in (config or {}):
        os.makedirs(database_dir, exist_ok=True)

    logging.basicConfig(level=app.config['LOG_LEVEL'],
                        format='%(asctime)s %(levelname)s %(name)s: %(message)s')

    # Initialize extensions
    CORS(app, origins="*")
    db.init_app(app)

    # Register blueprints
    app.register_blueprint(soil_bp, url_prefix='/api/soil')
    app.register_blueprint(dataset_bp, url_prefix='/api/datasets')
    app.register_blueprint(rf_bp, url_prefix='/api')
    app.register_blueprint(model_bp, url_prefix='/api/model')
    app.register_blueprint(run_bp, url_prefix='/api/runs')

    # Create tables
    with app.app_context():
        db.create_all()

    @app.route('/health')
    def health_check():
        return {'status': 'healthy', 'message': 'SoilX simulator is running!'}, 200

    return app

if __name__ == '__main__':
    app = create_app()
    port = int(os.environ.get('PORT', 5000))
    app.run(host='0.0.0.0', port=port, debug=False)
