from flask_sqlalchemy import SQLAlchemy
from datetime import datetime
import json

db = SQLAlchemy()

class Run(db.Model):
    id = db.Column(db.Integer, primary_key=True)
    command = db.Column(db.String(50), nullable=False)  # eval, ablate, orient-sweep, ...
    status = db.Column(db.String(20), default='completed')  # completed, failed
    out_dir = db.Column(db.String(255))
    manifest = db.Column(db.Text)  # JSON reproducibility manifest
    report = db.Column(db.Text)  # JSON report
    error = db.Column(db.Text)
    created_at = db.Column(db.DateTime, default=datetime.utcnow)

    @classmethod
    def record(cls, command, manifest, report=None, out_dir=None, error=None):
        run = cls(
            command=command,
            status='failed' if error else 'completed',
            out_dir=str(out_dir) if out_dir else None,
            manifest=json.dumps(manifest, sort_keys=True, default=str),
            report=json.dumps(report, sort_keys=True, default=str) if report is not None else None,
            error=error
        )
        db.session.add(run)
        db.session.commit()
        return run

    def to_dict(self):
        return {
            'id': self.id,
            'command': self.command,
            'status': self.status,
            'out_dir': self.out_dir,
            'manifest': json.loads(self.manifest) if self.manifest else None,
            'report': json.loads(self.report) if self.report else None,
            'error': self.error,
            'created_at': self.created_at.isoformat() if self.created_at else None
        }
