from dataclasses import replace

import numpy as np
import pytest

from src.models.learning import TRAINABLE, DirectionSet, EncoderParams, TrainConfig
from src.models.soil import GROUP_ORDER, RANGES, Dataset, GroupTag, LabeledSample, NoiseConfig, SoilSample
from src.sim import cl3
from src.sim.dataset import gen_training_set, normalized_labels
from src.sim.soil_forward import sense
from src.sim.errors import DegenerateModelError, DomainError, FormatError, StructuralError

SMALL = TrainConfig(hidden=16, max_epochs=40, patience=40)


def _perturbed_params(training, seed, hidden=16):
    params = cl3.init_params(training, replace(SMALL, seed=seed, hidden=hidden))
    rng = np.random.default_rng(seed + 100)
    return EncoderParams(
        W1=params.W1,
        b1=rng.normal(0.0, 0.3, size=hidden),
        W2=rng.normal(0.0, 0.5, size=(hidden, hidden)),
        b2=rng.normal(0.0, 0.1, size=hidden),
        x_mean=params.x_mean,
        x_std=params.x_std,
    )


def _zero_params(training, hidden=16):
    params = cl3.init_params(training, replace(SMALL, hidden=hidden))
    return EncoderParams(W1=np.zeros_like(params.W1), b1=np.zeros(hidden), W2=np.zeros_like(params.W2),
                         b2=np.zeros(hidden), x_mean=params.x_mean, x_std=params.x_std)


class TestEncoder:
    def test_flops(self):
        assert cl3.encoder_flops() == 538624

    def test_zero_weights(self, training):
        z = cl3.encode(_zero_params(training), training.reference().sensing)
        np.testing.assert_array_equal(z, 0.0)

    def test_deterministic(self, training):
        params = _perturbed_params(training, 1)
        x = training.samples[5].sensing
        np.testing.assert_array_equal(cl3.encode(params, x), cl3.encode(params, x))

    def test_default_embedding_dimension(self, training):
        params = cl3.init_params(training)
        assert params.W1.shape == (512, 8)
        assert params.W2.shape == (512, 512)
        assert cl3.encode(params, training.reference().sensing).shape == (512,)

    def test_non_finite_input(self, training):
        with pytest.raises(DomainError):
            cl3.encode(_perturbed_params(training, 1), [np.nan] + [0.1] * 7)

    def test_standardization_is_stored(self, training):
        params = cl3.init_params(training)
        np.testing.assert_allclose(params.x_mean, training.sensing_matrix().mean(axis=0))
        assert np.all(params.x_std > 0)


class TestDirections:
    def test_zero_params(self, training):
        directions = cl3.compute_directions(_zero_params(training), training)
        np.testing.assert_array_equal(directions.z_avg, 0.0)

    def test_canonical_counts(self, training):
        directions = cl3.compute_directions(_perturbed_params(training, 2), training)
        assert directions.group_counts == {'M': 5, 'N': 9, 'P': 9, 'K': 9, 'C': 5, 'AL': 5}
        assert directions.z_avg.shape == (6, 16)

    def test_group_displacements(self, training):
        params = _perturbed_params(training, 2)
        directions = cl3.compute_directions(params, training)
        z = cl3.encode_batch(params, training.sensing_matrix())
        m_rows = [i for i, s in enumerate(training.samples) if s.tag is GroupTag.M]
        n_rows = [i for i, s in enumerate(training.samples) if s.tag is GroupTag.N]
        # members below the reference moisture count with their displacement negated
        sides = [1.0 if training.samples[i].composition.m_pct > 30.0 else -1.0 for i in m_rows]
        expected_m = np.mean([s * (z[i] - z[0]) for s, i in zip(sides, m_rows)], axis=0)
        np.testing.assert_allclose(directions.z_avg[0], expected_m, atol=1e-12)
        np.testing.assert_allclose(directions.z_avg[1], z[n_rows].mean(axis=0) - z[0], atol=1e-12)

    def test_straddling_group_does_not_cancel(self, training):
        # an embedding equal to the normalized labels puts every direction on its own axis
        y = normalized_labels(training)
        ref, groups, sides = cl3._group_indices(training)
        z_avg, _ = cl3._directions_from_embeddings(y, ref, groups, sides)
        assert z_avg[0, 0] == pytest.approx(np.mean([0.6, 0.4, 0.2, 0.2, 0.4]))
        assert z_avg[5, 5] == pytest.approx(np.mean([0.4, 0.2, 0.2, 0.4, 0.6]))
        assert np.count_nonzero(np.abs(z_avg) > 1e-12) == 6

    def test_missing_group(self, training):
        ds = training.subset([i for i, s in enumerate(training.samples) if s.tag is None or s.tag.value != 'C'])
        with pytest.raises(StructuralError):
            cl3.compute_directions(_perturbed_params(training, 2), ds)


class TestLosses:
    def test_orthonormal_directions(self):
        assert cl3.loss_ort(np.eye(6, 512)) == 0.0

    def test_identical_unit_directions(self):
        z_avg = np.tile(np.eye(1, 512), (6, 1))
        assert cl3.loss_ort(z_avg) == pytest.approx(30.0)

    def test_zero_directions(self):
        assert cl3.loss_ort(DirectionSet(z_avg=np.zeros((6, 512)), z0=np.zeros(512))) == pytest.approx(6.0)

    def test_distance_matched(self, training):
        y = normalized_labels(training)
        embeddings = np.hstack([y, np.zeros((len(y), 10))])
        assert cl3.loss_sep(embeddings, y) == pytest.approx(0.0, abs=1e-20)

    def test_two_samples(self):
        assert cl3.loss_sep([[0.0, 0.0], [2.0, 0.0]], [[0.0] * 6, [1.0] + [0.0] * 5]) == pytest.approx(1.0)

    def test_permutation_invariant(self, rng):
        z = rng.normal(size=(12, 5))
        y = rng.uniform(size=(12, 6))
        order = rng.permutation(12)
        assert cl3.loss_sep(z[order], y[order]) == pytest.approx(cl3.loss_sep(z, y), rel=1e-12)

    def test_length_mismatch(self):
        with pytest.raises(DomainError):
            cl3.loss_sep(np.zeros((3, 4)), np.zeros((2, 6)))

    def test_compound_is_weighted_sum(self, training):
        params = _perturbed_params(training, 3)
        l_sep = cl3.loss_sep(cl3.encode_batch(params, training.sensing_matrix()), normalized_labels(training))
        l_ort = cl3.loss_ort(cl3.compute_directions(params, training))
        total = cl3.compound_loss(params, training, TrainConfig())
        assert total == pytest.approx(0.82 * l_sep + 0.18 * l_ort, rel=1e-12)

    @pytest.mark.parametrize('lambda_sep,lambda_ort', [(0.0, 0.18), (0.82, 0.0)])
    def test_ablation_weights(self, training, lambda_sep, lambda_ort):
        params = _perturbed_params(training, 3)
        l_sep = cl3.loss_sep(cl3.encode_batch(params, training.sensing_matrix()), normalized_labels(training))
        l_ort = cl3.loss_ort(cl3.compute_directions(params, training))
        cfg = TrainConfig(lambda_sep=lambda_sep, lambda_ort=lambda_ort)
        assert cl3.compound_loss(params, training, cfg) == pytest.approx(
            lambda_sep * l_sep + lambda_ort * l_ort, rel=1e-12)


class TestGradient:
    @pytest.mark.parametrize('seed', [0, 1, 2])
    def test_matches_finite_differences(self, small_training, seed):
        params = _perturbed_params(small_training, seed)
        cfg = TrainConfig()
        grads = cl3.grad_compound(params, small_training, cfg)
        rng = np.random.default_rng(seed)
        step = 1e-5
        _, h, _, _ = cl3._forward(params, small_training.sensing_matrix())
        # first-layer steps that could push a unit across the rectifier kink are skipped
        near_kink = np.min(np.abs(h), axis=0) < 1e-3
        for name in TRAINABLE:
            array = getattr(params, name)
            flat = rng.choice(array.size, size=min(array.size, 24), replace=False)
            for position in flat:
                index = np.unravel_index(position, array.shape)
                if name in ('W1', 'b1') and near_kink[index[0]]:
                    continue
                plus, minus = array.copy(), array.copy()
                plus[index] += step
                minus[index] -= step
                f_plus = cl3.compound_loss(params.with_trainable({**params.trainable(), name: plus}),
                                           small_training, cfg)
                f_minus = cl3.compound_loss(params.with_trainable({**params.trainable(), name: minus}),
                                            small_training, cfg)
                numeric = (f_plus - f_minus) / (2 * step)
                analytic = grads[name][index]
                if max(abs(analytic), abs(numeric)) > 1e-5:
                    assert abs(analytic - numeric) / max(abs(analytic), abs(numeric)) < 1e-4, (name, index)

    def test_shapes(self, small_training):
        params = _perturbed_params(small_training, 0)
        grads = cl3.grad_compound(params, small_training)
        for name in TRAINABLE:
            assert grads[name].shape == getattr(params, name).shape

    def test_linear_in_weights(self, small_training):
        params = _perturbed_params(small_training, 4)
        single = cl3.grad_compound(params, small_training, TrainConfig(lambda_sep=0.0, lambda_ort=0.18))
        double = cl3.grad_compound(params, small_training, TrainConfig(lambda_sep=0.0, lambda_ort=0.36))
        for name in TRAINABLE:
            np.testing.assert_allclose(double[name], 2 * single[name], rtol=1e-12, atol=1e-15)

    def test_zero_at_zero_loss(self):
        # bare reference plus one full-range sample per group: labels are 0 and e_g,
        # so an encoder mapping them onto 0 and e_g zeroes both losses
        samples = [LabeledSample(composition=SoilSample(), sensing=sense(SoilSample(), NoiseConfig.noiseless()),
                                 tag=GroupTag.REF)]
        for tag in GROUP_ORDER:
            composition = SoilSample(**{tag.component: RANGES[tag.component][1]})
            samples.append(LabeledSample(composition=composition,
                                         sensing=sense(composition, NoiseConfig.noiseless()), tag=tag))
        ds = Dataset(samples=samples)
        hidden = 16
        base = cl3.init_params(ds, replace(SMALL, hidden=hidden))
        w1 = np.zeros((hidden, 8))
        w1[:8] = np.eye(8)
        b1 = np.full(hidden, 10.0)
        xh = (ds.sensing_matrix() - base.x_mean) / base.x_std
        a = np.maximum(xh @ w1.T + b1, 0.0)
        targets = np.zeros((7, hidden))
        targets[1:, :6] = np.eye(6)
        solution, *_ = np.linalg.lstsq(np.column_stack([a, np.ones(7)]), targets, rcond=None)
        params = EncoderParams(W1=w1, b1=b1, W2=solution[:hidden].T, b2=solution[hidden],
                               x_mean=base.x_mean, x_std=base.x_std)

        assert cl3.compound_loss(params, ds) == pytest.approx(0.0, abs=1e-18)
        grads = cl3.grad_compound(params, ds)
        for name in TRAINABLE:
            np.testing.assert_allclose(grads[name], 0.0, atol=1e-8)


class TestTraining:
    def test_same_seed_same_bundle(self, small_training):
        first = cl3.train(small_training, SMALL)
        second = cl3.train(small_training, SMALL)
        for name in TRAINABLE:
            np.testing.assert_array_equal(getattr(first.params, name), getattr(second.params, name))
        np.testing.assert_array_equal(first.calibration, second.calibration)
        np.testing.assert_array_equal(first.directions.z_avg, second.directions.z_avg)

    def test_loss_decreases(self, training):
        bundle = cl3.train(training, replace(SMALL, max_epochs=60, patience=60))
        assert bundle.history['best_validation_loss'] < bundle.history['initial_loss']
        initial = cl3.init_params(training, replace(SMALL, max_epochs=60, patience=60))
        assert cl3.compound_loss(bundle.params, training, SMALL) < cl3.compound_loss(initial, training, SMALL)

    def test_validation_split(self, training):
        keep, held = cl3.validation_split(training, seed=0)
        assert len(held) == 6
        assert sorted(keep + held) == list(range(43))
        assert 0 in keep
        assert cl3.validation_split(training, seed=0) == (keep, held)

    def test_validation_scores_held_out_pairs(self, training):
        params = _perturbed_params(training, 3)
        keep, held = cl3.validation_split(training, seed=0)
        z = cl3.encode_batch(params, training.sensing_matrix())
        y = normalized_labels(training)
        expected_sep = 0.0
        for i in range(len(training)):
            for j in range(i + 1, len(training)):
                if i in held or j in held:
                    gap = np.linalg.norm(z[i] - z[j]) - np.linalg.norm(y[i] - y[j])
                    expected_sep += gap ** 2
        expected_ort = cl3.loss_ort(cl3.compute_directions(params, training.subset(keep)))
        expected = 0.82 * expected_sep + 0.18 * expected_ort
        assert cl3.validation_loss(params, training, held) == pytest.approx(expected, rel=1e-9)

    def test_validation_without_held_out(self, small_training):
        params = _perturbed_params(small_training, 3)
        assert cl3.validation_loss(params, small_training, []) == cl3.compound_loss(params, small_training)

    def test_stops_when_held_out_score_stalls(self, small_training, monkeypatch):
        scores = iter(range(1000))
        monkeypatch.setattr(cl3, 'validation_loss', lambda *args, **kwargs: float(next(scores)))
        cfg = replace(SMALL, max_epochs=50, patience=5)
        bundle = cl3.train(small_training, cfg)
        assert bundle.history['epochs'] == 5
        np.testing.assert_array_equal(bundle.params.W2, cl3.init_params(small_training, cfg).W2)

    def test_runs_on_while_held_out_score_improves(self, small_training, monkeypatch):
        scores = iter(range(1000))
        monkeypatch.setattr(cl3, 'validation_loss', lambda *args, **kwargs: -float(next(scores)))
        bundle = cl3.train(small_training, replace(SMALL, max_epochs=12, patience=5))
        assert bundle.history['epochs'] == 12
        assert bundle.history['best_validation_loss'] == -12.0

    def test_bundle_contents(self, training):
        bundle = cl3.train(training, SMALL)
        np.testing.assert_allclose(bundle.ref_norm_labels, [0.6, 0, 0, 0, 0, 0.4])
        assert bundle.calibration.shape == (6, 2)
        assert np.all(bundle.calibration[:, 0] != 0)


class TestInference:
    @pytest.fixture(scope='class')
    def bundle(self, training):
        return cl3.train(training, SMALL)

    def test_reference_projects_to_zero(self, bundle, training):
        z = cl3.encode(bundle.params, training.reference().sensing)
        np.testing.assert_allclose(cl3.raw_scores(bundle.directions, z), 0.0, atol=1e-9)

    def test_reference_estimate(self, bundle, training):
        estimate = cl3.infer_normalized(bundle, training.reference().sensing)[0]
        expected = np.clip(bundle.ref_norm_labels + bundle.calibration[:, 1], 0.0, 1.0)
        np.testing.assert_allclose(estimate, expected, atol=1e-9)

    def test_paper_literal_reference(self, bundle, training):
        estimate = cl3.infer(bundle, training.reference().sensing, paper_literal=True)
        np.testing.assert_allclose(estimate.as_array(), SoilSample.reference().as_array(), atol=1e-6)

    def test_outputs_in_range(self, bundle):
        rng = np.random.default_rng(8)
        x = np.column_stack([rng.uniform(1, 60, 30), rng.uniform(0, 0.5, (30, 7))])
        for sample in cl3.infer_batch(bundle, x):
            assert isinstance(sample, SoilSample)

    def test_projection_recovers_coefficients(self):
        directions = DirectionSet(z_avg=np.eye(6, 32), z0=np.full(32, 0.5))
        c = np.array([0.3, -1.2, 0.0, 2.5, 0.7, -0.4])
        z = directions.z0 + c @ directions.z_avg
        np.testing.assert_allclose(cl3.raw_scores(directions, z)[0], c, atol=1e-12)

    def test_scaled_directions_are_normalized(self):
        z_avg = np.diag([2.0, 3.0, 0.5, 1.0, 4.0, 1.5])
        directions = DirectionSet(z_avg=z_avg, z0=np.zeros(6))
        z = np.array([1.0, 1.0, 1.0, 1.0, 1.0, 1.0]) @ z_avg
        np.testing.assert_allclose(cl3.raw_scores(directions, z)[0], 1.0, atol=1e-12)
        np.testing.assert_allclose(cl3.raw_scores(directions, z, normalized=False)[0], np.diag(z_avg) ** 2)

    def test_degenerate_direction(self):
        z_avg = np.eye(6, 8)
        z_avg[2] = 0.0
        with pytest.raises(DegenerateModelError):
            cl3.raw_scores(DirectionSet(z_avg=z_avg, z0=np.zeros(8)), np.ones(8))


class TestCheckpoint:
    def test_round_trip_is_bit_identical(self, training, tmp_path):
        bundle = cl3.train(training, SMALL)
        path = cl3.save_checkpoint(bundle, tmp_path / 'model.json')
        loaded = cl3.load_checkpoint(path)
        test = gen_training_set(NoiseConfig(seed=4)).sensing_matrix()
        np.testing.assert_array_equal(cl3.infer_normalized(loaded, test), cl3.infer_normalized(bundle, test))
        assert loaded.seed == bundle.seed

    def test_schema_version_checked(self, training, tmp_path):
        path = cl3.save_checkpoint(cl3.train(training, SMALL), tmp_path / 'model.json')
        path.write_text(path.read_text(encoding='utf-8').replace('"schema_version": 1', '"schema_version": 99'),
                        encoding='utf-8')
        with pytest.raises(FormatError):
            cl3.load_checkpoint(path)

    def test_not_json(self, tmp_path):
        path = tmp_path / 'model.json'
        path.write_text('weights', encoding='utf-8')
        with pytest.raises(FormatError):
            cl3.load_checkpoint(path)
