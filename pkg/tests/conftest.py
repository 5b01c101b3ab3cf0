import numpy as np
import pytest

from src.main import create_app
from src.models.models import db
from src.models.soil import GroupTag
from src.sim.dataset import gen_training_set


@pytest.fixture
def app():
    app = create_app({
        'TESTING': True,
        'SQLALCHEMY_DATABASE_URI': 'sqlite:///:memory:',
        'SOILX_MODEL_PATH': None,
    })
    with app.app_context():
        db.create_all()
        yield app
        db.session.remove()
        db.drop_all()


@pytest.fixture
def client(app):
    return app.test_client()


@pytest.fixture(scope='session')
def training():
    return gen_training_set()


@pytest.fixture(scope='session')
def small_training(training):
    """REF, one sample per group and three extras: ten samples in all."""
    picked = [0]
    for tag in (GroupTag.M, GroupTag.N, GroupTag.P, GroupTag.K, GroupTag.C, GroupTag.AL):
        picked.append(next(i for i, s in enumerate(training.samples) if s.tag is tag))
    extras = [i for i in range(len(training)) if i not in picked]
    picked += extras[::len(extras) // 3][:3]
    return training.subset(sorted(picked))


@pytest.fixture
def rng():
    return np.random.default_rng(20240917)
