import numpy as np
import pytest

from src.models.soil import COMPONENTS, RANGES, GroupTag, NoiseConfig, NormSpec, SoilSample
from src.sim import dataset
from src.sim.errors import FormatError, ParseError, RangeError, StructuralError


class TestTrainingSet:
    def test_size_and_reference(self, training):
        assert len(training) == 43
        ref = training.reference()
        assert ref.composition == SoilSample(m_pct=30.0, al_pct=4.0)
        assert sum(1 for s in training if s.tag is GroupTag.REF) == 1

    def test_group_counts(self, training):
        assert training.group_counts() == dataset.CANONICAL_COUNTS
        assert dataset.validate_training_structure(training) == dataset.CANONICAL_COUNTS

    def test_first_moisture_row(self, training):
        m_group = training.group(GroupTag.M)
        assert len(m_group) == 5
        assert m_group[1].composition == SoilSample(m_pct=10.0, al_pct=4.0)

    def test_npk_grid_in_per_mille(self, training):
        for tag in (GroupTag.N, GroupTag.P, GroupTag.K):
            values = [getattr(s.composition, tag.component) for s in training.group(tag)]
            assert values == [0.2, 0.4, 0.6, 0.8, 2.0, 4.0, 6.0, 8.0, 10.0]

    def test_single_component_varied(self, training):
        ref = training.reference().composition.as_array()
        for sample in training:
            if sample.tag is GroupTag.REF:
                continue
            changed = np.flatnonzero(sample.composition.as_array() != ref)
            assert [COMPONENTS[i] for i in changed] == [sample.tag.component]

    def test_noiseless_by_default(self, training):
        assert training.reference().sensing.epsilon == pytest.approx(20.68092, abs=1e-5)

    def test_pair_count(self):
        assert dataset.pair_count(43) == 903

    def test_structure_violations(self, training):
        without_m = training.subset([i for i, s in enumerate(training.samples) if s.tag is not GroupTag.M])
        with pytest.raises(StructuralError):
            dataset.validate_training_structure(without_m)
        without_ref = training.subset(range(1, len(training)))
        with pytest.raises(StructuralError):
            dataset.validate_training_structure(without_ref)


class TestResize:
    def test_shrink_keeps_every_group(self, training):
        small = dataset.resize_training_set(training, 28, seed=3)
        assert len(small) == 28
        counts = dataset.validate_training_structure(small)
        assert all(counts[t] >= 2 for t in ('M', 'N', 'P', 'K', 'C', 'AL'))

    def test_grow_with_random_samples(self, training):
        big = dataset.resize_training_set(training, 53, seed=3)
        assert len(big) == 53
        assert sum(1 for s in big if s.tag is None) == 10
        assert big.samples[:43] == training.samples

    def test_below_structural_minimum(self, training):
        with pytest.raises(StructuralError):
            dataset.resize_training_set(training, 12)


class TestTestSet:
    def test_default_size(self):
        ds = dataset.gen_test_set(seed=4)
        assert len(ds) == 55
        assert all(s.tag is None for s in ds)

    def test_reproducible(self):
        assert dataset.gen_test_set(seed=9).samples == dataset.gen_test_set(seed=9).samples
        assert dataset.gen_test_set(seed=9).samples != dataset.gen_test_set(seed=10).samples

    def test_within_ranges(self):
        for sample in dataset.gen_test_set(count=200, seed=1):
            for name, (low, high) in RANGES.items():
                assert low <= getattr(sample.composition, name) <= high

    def test_noisy_sensing(self):
        clean = dataset.gen_test_set(count=5, seed=2)
        noisy = dataset.gen_test_set(count=5, seed=2, noise=NoiseConfig(seed=2))
        assert clean.compositions() == noisy.compositions()
        assert clean.sensing_matrix().tolist() != noisy.sensing_matrix().tolist()

    def test_empty_rejected(self):
        with pytest.raises(RangeError):
            dataset.gen_test_set(count=0)


class TestNormalize:
    def test_reference(self):
        np.testing.assert_allclose(dataset.normalize(SoilSample.reference()), [0.6, 0, 0, 0, 0, 0.4], atol=1e-15)

    def test_extremes(self):
        np.testing.assert_array_equal(dataset.normalize(SoilSample()), np.zeros(6))
        top = SoilSample(**{name: high for name, (_, high) in RANGES.items()})
        np.testing.assert_array_equal(dataset.normalize(top), np.ones(6))

    def test_inverse(self):
        rng = np.random.default_rng(5)
        for sample in dataset.random_compositions(50, rng):
            back = dataset.denormalize(dataset.normalize(sample))
            np.testing.assert_allclose(back.as_array(), sample.as_array(), atol=1e-12)

    def test_out_of_range(self):
        ranges = dict(RANGES)
        ranges['m_pct'] = (0.0, 20.0)
        with pytest.raises(RangeError):
            dataset.normalize(SoilSample.reference(), NormSpec(ranges=ranges))


class TestCsv:
    def test_round_trip(self, training, tmp_path):
        noisy = dataset.gen_training_set(NoiseConfig(seed=5))
        path = dataset.save_csv(noisy, tmp_path / 'training.csv')
        loaded = dataset.load_csv(path, seed=5)
        assert loaded.samples == noisy.samples
        assert dataset.validate_training_structure(loaded) == dataset.CANONICAL_COUNTS

    def test_header_and_line_endings(self, training, tmp_path):
        path = dataset.save_csv(training, tmp_path / 'training.csv')
        raw = path.read_bytes()
        assert b'\r\n' not in raw
        assert raw.decode('utf-8').splitlines()[0] == (
            'tag,m_pct,c_pct,al_pct,n_pml,p_pml,k_pml,epsilon,v460,v620,v1200,v1300,v1450,v1550,v1650')
        assert len(raw.decode('utf-8').splitlines()) == 44

    def test_untagged_rows(self, tmp_path):
        ds = dataset.gen_test_set(count=3, seed=1)
        loaded = dataset.load_csv(dataset.save_csv(ds, tmp_path / 'test.csv'))
        assert loaded.samples == ds.samples

    def test_out_of_range_row(self, training, tmp_path):
        path = dataset.save_csv(training, tmp_path / 'training.csv')
        lines = path.read_text(encoding='utf-8').splitlines()
        fields = lines[3].split(',')
        fields[1] = '60'
        lines[3] = ','.join(fields)
        path.write_text('\n'.join(lines) + '\n', encoding='utf-8')
        with pytest.raises(RangeError, match='line 4'):
            dataset.load_csv(path)

    def test_malformed_row(self, training, tmp_path):
        path = dataset.save_csv(training, tmp_path / 'training.csv')
        with path.open('a', encoding='utf-8') as handle:
            handle.write('M,not-a-number\n')
        with pytest.raises(ParseError) as info:
            dataset.load_csv(path)
        assert info.value.line == 45

    def test_missing_header(self, tmp_path):
        path = tmp_path / 'bare.csv'
        path.write_text('REF,30,0,4,0,0,0,20.68,0.3,0.3,0.2,0.3,0.1,0.3,0.3\n', encoding='utf-8')
        with pytest.raises(FormatError):
            dataset.load_csv(path)
