"""Contrastive cross-component learning.

An MLP encoder maps each 8-d sensing vector to a D-d embedding. The
reference sample's embedding ``z0`` and the per-group average displacements
``z_avg[g]`` span the latent axes. A group member whose varied component
lies below the reference value enters the average with its displacement
negated, so groups on both sides of the reference do not cancel. Training
minimises

    lambda_sep * sum_{i<j} (|z_i - z_j| - |y_i - y_j|)^2 + lambda_ort * |Z Z^T - I|_F^2

with ``Z`` the 6 x D matrix of directions, using exact analytic gradients
and full-batch Adam. Inference projects ``z - z0`` onto each direction.
"""
import json
import logging
from pathlib import Path

import numpy as np
from scipy.spatial.distance import pdist, squareform

from src.models.learning import (EMBEDDING_DIM, N_COMPONENTS, N_FEATURES, TRAINABLE, DirectionSet,
                                 EncoderParams, ModelBundle, TrainConfig)
from src.models.soil import GROUP_ORDER, GroupTag, NormSpec, SensingVector
from src.sim.dataset import denormalize, normalize, normalized_labels
from src.sim.errors import DegenerateModelError, DivergenceError, DomainError, FormatError, StructuralError

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
LOG_EVERY = 500
ADAM_BETAS = (0.9, 0.999)
ADAM_EPS = 1e-8


def encoder_flops(n_in=N_FEATURES, hidden=EMBEDDING_DIM, n_out=N_COMPONENTS):
    """Multiply-adds of one forward pass, counted as two FLOPs each,
    including the projection head onto the component directions."""
    return 2 * (n_in * hidden + hidden * hidden + hidden * n_out)


def _as_matrix(x):
    if isinstance(x, SensingVector):
        x = x.as_array()
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if x.shape[1] != N_FEATURES:
        raise DomainError(f'expected {N_FEATURES} features, got {x.shape[1]}')
    if not np.all(np.isfinite(x)):
        raise DomainError('sensing input is not finite')
    return x


def _forward(params, x):
    xh = (x - params.x_mean) / params.x_std
    h = xh @ params.W1.T + params.b1
    a = np.maximum(h, 0.0)
    z = a @ params.W2.T + params.b2
    return xh, h, a, z


def encode(params, x):
    """Embedding of one sensing vector."""
    return _forward(params, _as_matrix(x))[3][0]


def encode_batch(params, x):
    return _forward(params, _as_matrix(x))[3]


def init_params(training, cfg=None):
    cfg = cfg or TrainConfig()
    rng = np.random.default_rng(cfg.seed)
    x = training.sensing_matrix()
    std = x.std(axis=0)
    std[std == 0] = 1.0
    hidden = cfg.hidden
    return EncoderParams(
        W1=rng.normal(0.0, 1.0 / np.sqrt(N_FEATURES), size=(hidden, N_FEATURES)),
        b1=np.zeros(hidden),
        W2=rng.normal(0.0, 0.1 / np.sqrt(hidden), size=(hidden, hidden)),
        b2=np.zeros(hidden),
        x_mean=x.mean(axis=0),
        x_std=std,
    )


def _group_indices(ds):
    """Reference index, member indices per group and the +/-1 side of each
    member's varied component relative to the reference."""
    tags = [s.tag for s in ds.samples]
    refs = [i for i, t in enumerate(tags) if t is GroupTag.REF]
    if len(refs) != 1:
        raise StructuralError(f'expected exactly one REF sample, found {len(refs)}')
    y = normalized_labels(ds)
    groups, sides = [], []
    for g, tag in enumerate(GROUP_ORDER):
        idx = np.array([i for i, t in enumerate(tags) if t is tag], dtype=int)
        if len(idx) == 0:
            raise StructuralError(f'training data has no {tag.value} group')
        groups.append(idx)
        sides.append(np.where(y[idx, g] < y[refs[0], g], -1.0, 1.0))
    return refs[0], groups, sides


def _directions_from_embeddings(z, ref, groups, sides):
    z0 = z[ref]
    return np.stack([(s[:, None] * (z[idx] - z0)).mean(axis=0) for idx, s in zip(groups, sides)]), z0


def compute_directions(params, training):
    ref, groups, sides = _group_indices(training)
    z = encode_batch(params, training.sensing_matrix())
    z_avg, z0 = _directions_from_embeddings(z, ref, groups, sides)
    counts = {tag.value: len(idx) for tag, idx in zip(GROUP_ORDER, groups)}
    return DirectionSet(z_avg=z_avg, z0=z0, group_counts=counts)


def loss_ort(directions):
    z_avg = directions.z_avg if isinstance(directions, DirectionSet) else np.asarray(directions)
    gram = z_avg @ z_avg.T
    return float(np.sum((gram - np.eye(len(gram))) ** 2))


def loss_sep(embeddings, norm_labels):
    z = np.asarray(embeddings, dtype=float)
    y = np.asarray(norm_labels, dtype=float)
    if len(z) != len(y):
        raise DomainError(f'{len(z)} embeddings but {len(y)} label vectors')
    if len(z) < 2:
        raise DomainError('separation loss needs at least two samples')
    return float(np.sum((pdist(z) - pdist(y)) ** 2))


def _objective(params, training, cfg, with_grad):
    ref, groups, sides = _group_indices(training)
    xh, h, a, z = _forward(params, training.sensing_matrix())
    y = normalized_labels(training)
    z_avg, _ = _directions_from_embeddings(z, ref, groups, sides)

    dz = pdist(z)
    gap = dz - pdist(y)
    l_sep = float(np.sum(gap ** 2))
    excess = z_avg @ z_avg.T - np.eye(len(groups))
    l_ort = float(np.sum(excess ** 2))
    loss = cfg.lambda_sep * l_sep + cfg.lambda_ort * l_ort
    if not with_grad:
        return loss, None

    # coincident embeddings take the zero subgradient
    coef = np.zeros_like(dz)
    apart = dz > 0
    coef[apart] = 2.0 * gap[apart] / dz[apart]
    c = squareform(coef)
    grad_z = cfg.lambda_sep * (c.sum(axis=1)[:, None] * z - c @ z)

    grad_dirs = cfg.lambda_ort * 4.0 * excess @ z_avg
    for g, (idx, s) in enumerate(zip(groups, sides)):
        grad_z[idx] += s[:, None] * grad_dirs[g] / len(idx)
        grad_z[ref] -= s.mean() * grad_dirs[g]

    grad_h = (grad_z @ params.W2) * (h > 0)
    grads = {
        'W1': grad_h.T @ xh,
        'b1': grad_h.sum(axis=0),
        'W2': grad_z.T @ a,
        'b2': grad_z.sum(axis=0),
    }
    return loss, grads


def compound_loss(params, training, cfg=None):
    return _objective(params, training, cfg or TrainConfig(), with_grad=False)[0]


def grad_compound(params, training, cfg=None):
    """Analytic gradient of ``compound_loss`` keyed like the trainable parameters."""
    return _objective(params, training, cfg or TrainConfig(), with_grad=True)[1]


def validation_split(training, seed):
    """Indices (train, held_out): one seeded sample per group is held out
    unless that would empty the group."""
    rng = np.random.default_rng(seed)
    _, groups, _ = _group_indices(training)
    held = []
    for tag, idx in zip(GROUP_ORDER, groups):
        if len(idx) < 2:
            logger.warning('group %s has a single sample; nothing held out', tag.value)
            continue
        held.append(int(idx[rng.integers(len(idx))]))
    held_set = set(held)
    keep = [i for i in range(len(training)) if i not in held_set]
    return keep, sorted(held)


def validation_loss(params, training, held, cfg=None):
    """Compound loss scored on the held-out samples.

    The separation term covers only pairs with at least one held-out
    member; the orthogonality term uses directions built from the other
    samples. With nothing held out this is the plain compound loss.
    """
    cfg = cfg or TrainConfig()
    if not len(held):
        return compound_loss(params, training, cfg)
    z = encode_batch(params, training.sensing_matrix())
    gap = squareform(pdist(z) - pdist(normalized_labels(training)))
    is_held = np.zeros(len(training), dtype=bool)
    is_held[list(held)] = True
    pairs = np.triu(is_held[:, None] | is_held[None, :], k=1)
    l_sep = float(np.sum(gap[pairs] ** 2))

    fit = np.flatnonzero(~is_held)
    ref, groups, sides = _group_indices(training.subset(fit))
    z_avg, _ = _directions_from_embeddings(z[fit], ref, groups, sides)
    l_ort = loss_ort(z_avg)
    return cfg.lambda_sep * l_sep + cfg.lambda_ort * l_ort


class _Adam:
    def __init__(self, shapes, lr):
        self.lr = lr
        self.t = 0
        self.m = {k: np.zeros(s) for k, s in shapes.items()}
        self.v = {k: np.zeros(s) for k, s in shapes.items()}

    def step(self, params, grads):
        b1, b2 = ADAM_BETAS
        self.t += 1
        updated = {}
        for name in TRAINABLE:
            g = grads[name]
            self.m[name] = b1 * self.m[name] + (1 - b1) * g
            self.v[name] = b2 * self.v[name] + (1 - b2) * g * g
            m_hat = self.m[name] / (1 - b1 ** self.t)
            v_hat = self.v[name] / (1 - b2 ** self.t)
            updated[name] = params[name] - self.lr * m_hat / (np.sqrt(v_hat) + ADAM_EPS)
        return updated


def fit_calibration(params, directions, ds, ref_norm):
    """Least-squares (slope, intercept) per component from normalized
    projection scores to label deviations from the reference."""
    raw = raw_scores(directions, encode_batch(params, ds.sensing_matrix()))
    deviation = normalized_labels(ds) - ref_norm
    calibration = np.empty((N_COMPONENTS, 2))
    for g in range(N_COMPONENTS):
        design = np.column_stack([raw[:, g], np.ones(len(raw))])
        (slope, intercept), *_ = np.linalg.lstsq(design, deviation[:, g], rcond=None)
        if not np.isfinite(slope) or slope == 0:
            raise DegenerateModelError(f'calibration for {GROUP_ORDER[g].value} is degenerate')
        calibration[g] = slope, intercept
    return calibration


def train(training, cfg=None):
    cfg = cfg or TrainConfig()
    keep, held = validation_split(training, cfg.seed)
    fit_set = training.subset(keep)
    params = init_params(training, cfg)
    adam = _Adam({k: v.shape for k, v in params.trainable().items()}, cfg.learning_rate)

    best_val = validation_loss(params, training, held, cfg)
    best = params.copy()
    initial_loss = best_val
    since_best = 0
    epoch = 0
    history = {'initial_loss': initial_loss}
    for epoch in range(1, cfg.max_epochs + 1):
        loss, grads = _objective(params, fit_set, cfg, with_grad=True)
        if not np.isfinite(loss):
            logger.error('training diverged at epoch %d', epoch)
            raise DivergenceError(epoch)
        params = params.with_trainable(adam.step(params.trainable(), grads))
        val = validation_loss(params, training, held, cfg)
        if not np.isfinite(val):
            logger.error('validation loss diverged at epoch %d', epoch)
            raise DivergenceError(epoch)
        if val < best_val:
            best_val, best, since_best = val, params.copy(), 0
        else:
            since_best += 1
        if epoch % LOG_EVERY == 0:
            logger.info('epoch %d: train loss %.6g, validation loss %.6g', epoch, loss, val)
        if since_best >= cfg.patience:
            logger.warning('early stop at epoch %d (best validation loss %.6g)', epoch, best_val)
            break

    directions = compute_directions(best, training)
    ref_norm = normalize(training.reference().composition, training.norm)
    calibration = fit_calibration(best, directions, training, ref_norm)
    history.update({'epochs': epoch, 'best_validation_loss': best_val, 'held_out': held})
    return ModelBundle(params=best, directions=directions, norm=training.norm, calibration=calibration,
                       ref_norm_labels=ref_norm, seed=cfg.seed, history=history)


def raw_scores(directions, z, normalized=True):
    """Projection scores of embeddings ``z`` (L x D) onto each direction."""
    norms = np.einsum('ij,ij->i', directions.z_avg, directions.z_avg)
    if np.any(norms == 0):
        raise DegenerateModelError('a component direction has zero length')
    scores = (np.atleast_2d(z) - directions.z0) @ directions.z_avg.T
    return scores / norms if normalized else scores


def infer_normalized(bundle, x, paper_literal=False):
    z = encode_batch(bundle.params, _as_matrix(x))
    raw = raw_scores(bundle.directions, z, normalized=not paper_literal)
    if paper_literal:
        estimate = bundle.ref_norm_labels + raw
    else:
        estimate = bundle.ref_norm_labels + bundle.calibration[:, 0] * raw + bundle.calibration[:, 1]
    return np.clip(estimate, 0.0, 1.0)


def infer(bundle, x, paper_literal=False):
    return denormalize(infer_normalized(bundle, x, paper_literal)[0], bundle.norm)


def infer_batch(bundle, x, paper_literal=False):
    return [denormalize(row, bundle.norm) for row in infer_normalized(bundle, x, paper_literal)]


def save_checkpoint(bundle, path):
    document = {
        'schema_version': SCHEMA_VERSION,
        'seed': bundle.seed,
        'params': bundle.params.to_dict(),
        'directions': bundle.directions.to_dict(),
        'norm': bundle.norm.to_dict(),
        'ref_norm_labels': bundle.ref_norm_labels.tolist(),
        'calibration': bundle.calibration.tolist(),
        'history': bundle.history,
    }
    path = Path(path)
    path.write_text(json.dumps(document, indent=1), encoding='utf-8')
    return path


def load_checkpoint(path):
    try:
        document = json.loads(Path(path).read_text(encoding='utf-8'))
    except json.JSONDecodeError as exc:
        raise FormatError(f'{path}: not a checkpoint document ({exc})') from exc
    if document.get('schema_version') != SCHEMA_VERSION:
        raise FormatError(f'{path}: unsupported schema version {document.get("schema_version")!r}')
    return ModelBundle(
        params=EncoderParams.from_dict(document['params']),
        directions=DirectionSet.from_dict(document['directions']),
        norm=NormSpec.from_dict(document['norm']),
        calibration=np.array(document['calibration'], dtype=float),
        ref_norm_labels=np.array(document['ref_norm_labels'], dtype=float),
        seed=document['seed'],
        history=document.get('history', {}),
    )
