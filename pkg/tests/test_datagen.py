import numpy as np
import pytest

from dualthresh.datagen import (
    GeneratorConfig,
    derive_seed,
    exchangeable_split,
    generate_dataset,
    signal_strength,
)
from dualthresh.metrics import confidence, normalized_entropy


def config(**overrides):
    base = dict(
        k_classes=10, n_samples=1000, base_accuracy=0.9, severity=0, seed=42
    )
    base.update(overrides)
    return GeneratorConfig(**base)


def top1_accuracy(samples):
    return float(np.mean([int(np.argmax(s.probs)) == s.label for s in samples]))


class TestSignalStrength:
    def test_increasing_in_accuracy(self):
        mus = [signal_strength(10, a) for a in (0.5, 0.7, 0.9, 0.99)]
        assert all(a < b for a, b in zip(mus, mus[1:]))

    def test_binary_case_closed_form(self):
        # for k=2, P(mu + Z1 > Z2) = Phi(mu / sqrt(2))
        from scipy.stats import norm

        mu = signal_strength(2, 0.8)
        assert norm.cdf(mu / np.sqrt(2)) == pytest.approx(0.8, abs=1e-8)


class TestGenerateDataset:
    def test_deterministic_for_same_seed(self):
        a = generate_dataset(config())
        b = generate_dataset(config())
        assert [s.sample_id for s in a] == [s.sample_id for s in b]
        assert [s.label for s in a] == [s.label for s in b]
        assert all(np.array_equal(x.probs, y.probs) for x, y in zip(a, b))

    def test_different_seeds_differ(self):
        a = generate_dataset(config(seed=1))
        b = generate_dataset(config(seed=2))
        assert not np.array_equal(a[0].probs, b[0].probs)

    def test_severity_zero_accuracy_matches_target(self):
        samples = generate_dataset(config(n_samples=10_000, seed=77))
        assert 0.88 <= top1_accuracy(samples) <= 0.92

    def test_accuracy_anchor_holds_for_other_targets(self):
        samples = generate_dataset(
            config(n_samples=10_000, base_accuracy=0.7, k_classes=5, seed=78)
        )
        assert 0.68 <= top1_accuracy(samples) <= 0.72

    def test_entropy_strictly_higher_at_max_severity(self):
        clean = generate_dataset(config(n_samples=5000, seed=5))
        heavy = generate_dataset(config(n_samples=5000, seed=5, severity=5))
        h0 = np.mean([normalized_entropy(s.probs) for s in clean])
        h5 = np.mean([normalized_entropy(s.probs) for s in heavy])
        assert h5 > h0

    def test_severity_monotone_in_expectation(self):
        ents, confs = [], []
        for severity in range(6):
            samples = generate_dataset(
                config(n_samples=5000, seed=13, severity=severity)
            )
            ents.append(np.mean([normalized_entropy(s.probs) for s in samples]))
            confs.append(np.mean([confidence(s.probs) for s in samples]))
        assert all(a <= b for a, b in zip(ents, ents[1:]))
        assert all(a >= b for a, b in zip(confs, confs[1:]))

    def test_tags_carried_through(self):
        samples = generate_dataset(config(condition="fog", severity=2, n_samples=3))
        assert all(s.condition == "fog" and s.severity == 2 for s in samples)
        assert samples[0].sample_id.startswith("fog-s2-")

    @pytest.mark.parametrize(
        "bad",
        [
            dict(k_classes=1),
            dict(n_samples=0),
            dict(base_accuracy=1.0),
            dict(base_accuracy=0.0),
            dict(severity=6),
            dict(temperature_per_level=0.0),
            dict(noise_sigma_per_level=-0.1),
            dict(seed=-1),
        ],
    )
    def test_config_validation(self, bad):
        with pytest.raises(ValueError):
            config(**bad)


class TestExchangeableSplit:
    def test_partition_contract(self):
        samples = generate_dataset(config(n_samples=10))
        cal, test = exchangeable_split(samples, 4, seed=3)
        assert len(cal) == 4 and len(test) == 6
        ids = {s.sample_id for s in cal} | {s.sample_id for s in test}
        assert ids == {s.sample_id for s in samples}
        assert not ({s.sample_id for s in cal} & {s.sample_id for s in test})

    def test_same_seed_same_split(self):
        samples = generate_dataset(config(n_samples=50))
        a = exchangeable_split(samples, 20, seed=9)
        b = exchangeable_split(samples, 20, seed=9)
        assert [s.sample_id for s in a[0]] == [s.sample_id for s in b[0]]

    def test_invalid_sizes(self):
        samples = generate_dataset(config(n_samples=10))
        for n_cal in (0, 10, 11):
            with pytest.raises(ValueError):
                exchangeable_split(samples, n_cal, seed=1)

    def test_calibration_class_proportions_unbiased(self):
        # binary labels; over many seeded splits the calibration part's
        # class-1 count is Hypergeometric(n=200, K=80, draws=100):
        # mean 40, sd = sqrt(100 * 0.4 * 0.6 * (100/199)) ~= 3.47
        samples = generate_dataset(config(n_samples=200, k_classes=2, seed=55))
        n_one = sum(s.label for s in samples)
        counts = []
        for trial in range(1000):
            cal, _ = exchangeable_split(samples, 100, seed=derive_seed(100, trial))
            counts.append(sum(s.label for s in cal))
        counts = np.asarray(counts, dtype=float)
        expected = n_one * 100 / 200
        sd = np.sqrt(100 * (n_one / 200) * (1 - n_one / 200) * (100 / 199))
        assert abs(counts.mean() - expected) < 3 * sd / np.sqrt(1000)


class TestDeriveSeed:
    def test_deterministic_and_distinct(self):
        assert derive_seed(1, "rain", 3) == derive_seed(1, "rain", 3)
        assert derive_seed(1, "rain", 3) != derive_seed(1, "rain", 4)
        assert derive_seed(1, "rain") != derive_seed(2, "rain")
        assert 0 <= derive_seed(123, "x") < 2**64
