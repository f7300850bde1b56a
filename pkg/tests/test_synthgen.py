import numpy as np
import pytest

from memtrace.data_model import default_bands
from memtrace.spectral import features
from memtrace.synthgen import (
    LOCATION_REMEMBERED_RATIO,
    PICTURE_REMEMBERED_RATIO,
    SynthSpec,
    generate_cohort,
    generate_subject,
)


def small_spec(**overrides):
    kwargs = dict(
        n_subjects=2,
        trials_per_subject=10,
        remembered_ratio=0.5,
        fs=250.0,
        epoch_seconds=1.0,
        n_channels=4,
        noise_sigma=0.5,
        seed=7,
    )
    kwargs.update(overrides)
    return SynthSpec(**kwargs)


class TestDeterminism:
    def test_same_seed_bit_identical(self):
        spec = small_spec()
        a = generate_subject(spec, 0)
        b = generate_subject(spec, 0)
        assert a == b
        assert a.data.tobytes() == b.data.tobytes()

    def test_cohorts_identical_under_same_seed(self):
        spec = small_spec()
        for a, b in zip(generate_cohort(spec), generate_cohort(spec)):
            assert a == b

    def test_subjects_differ_from_each_other(self):
        spec = small_spec()
        a, b = generate_cohort(spec)
        assert a.data.tobytes() != b.data.tobytes()


class TestLabels:
    def test_picture_ratio_87_of_100(self):
        spec = small_spec(trials_per_subject=100, remembered_ratio=PICTURE_REMEMBERED_RATIO)
        e = generate_subject(spec, 0)
        assert int(e.labels.sum()) == 87

    def test_location_ratio_21_of_100(self):
        spec = small_spec(trials_per_subject=100, remembered_ratio=LOCATION_REMEMBERED_RATIO)
        assert int(generate_subject(spec, 0).labels.sum()) == 21

    @pytest.mark.parametrize("trials,ratio", [(10, 0.5), (60, 0.87), (7, 0.3), (5, 0.5)])
    def test_realized_count_is_round_half_up(self, trials, ratio):
        spec = small_spec(trials_per_subject=trials, remembered_ratio=ratio)
        expected = int(np.floor(trials * ratio + 0.5))
        assert int(generate_subject(spec, 1).labels.sum()) == expected

    def test_degenerate_ratio_rejected(self):
        # 2 trials at ratio 0.87 would leave class 0 empty
        with pytest.raises(ValueError, match="empty"):
            small_spec(trials_per_subject=2, remembered_ratio=0.87)


class TestCohort:
    def test_17_subjects_distinct_ids(self):
        spec = small_spec(n_subjects=17, trials_per_subject=4, n_channels=2, epoch_seconds=0.2)
        cohort = generate_cohort(spec)
        assert len(cohort) == 17
        assert len({e.subject_id for e in cohort}) == 17

    def test_single_subject_rejected(self):
        with pytest.raises(ValueError, match="2 subjects"):
            generate_cohort(small_spec(n_subjects=1))

    def test_subject_matches_cohort_entry(self):
        spec = small_spec(n_subjects=3)
        cohort = generate_cohort(spec)
        assert cohort[2] == generate_subject(spec, 2)


class TestSignalContent:
    def test_alpha_gain_separates_classes_by_5db(self):
        # gains alpha: class1=2.0, class0=1.0 at low noise -> >= 5 dB gap in
        # the class-mean alpha band power, measured with the spectral oracle
        gains = np.ones((2, 6))
        gains[1, 2] = 2.0
        spec = small_spec(
            trials_per_subject=40, n_channels=8, noise_sigma=0.1, class_band_gains=gains
        )
        e = generate_subject(spec, 0)
        t = features(e, default_bands())
        alpha = t.values[:, 2, :].mean(axis=1)
        remembered = e.labels.astype(bool)
        gap = alpha[remembered].mean() - alpha[~remembered].mean()
        assert gap >= 5.0

    def test_zero_noise_equal_gains_classes_match(self):
        # with no noise and identical gains the per-class mean band powers
        # agree to 1e-6 dB (tones are snapped to the DFT grid, so power is
        # independent of the random phases)
        spec = small_spec(trials_per_subject=12, noise_sigma=0.0)
        e = generate_subject(spec, 3)
        t = features(e, default_bands())
        remembered = e.labels.astype(bool)
        per_band_1 = t.values[remembered].mean(axis=(0, 2))
        per_band_0 = t.values[~remembered].mean(axis=(0, 2))
        assert np.abs(per_band_1 - per_band_0).max() < 1e-6

    def test_channel_names_come_from_default_layout(self):
        e = generate_subject(small_spec(n_channels=60, epoch_seconds=0.5), 0)
        assert e.channel_names[:3] == ("Fp1", "Fpz", "Fp2")

    def test_validates_clean(self):
        from memtrace.data_model import validate

        assert validate(generate_subject(small_spec(), 0)).ok


class TestSpecValidation:
    def test_bad_ratio(self):
        with pytest.raises(ValueError, match="ratio"):
            small_spec(remembered_ratio=1.0)

    def test_bad_gain_shape(self):
        with pytest.raises(ValueError, match="shape"):
            small_spec(class_band_gains=np.ones((2, 3)))

    def test_negative_noise(self):
        with pytest.raises(ValueError, match="noise"):
            small_spec(noise_sigma=-1.0)

    def test_one_trial(self):
        with pytest.raises(ValueError, match="trials"):
            small_spec(trials_per_subject=1)
