import numpy as np
import pytest
from scipy import signal as sp_signal

from memtrace.data_model import EpochSet, default_bands
from memtrace.preprocess import (
    FilterSpec,
    decimate,
    filtfilt,
    fir_design,
    preprocess_pipeline,
    rereference_average,
)
from memtrace.spectral import band_power_db, periodogram

from conftest import make_epochs


def fitted_amplitude(x, freq, fs):
    """Least-squares amplitude of a known-frequency tone (the sine-fit oracle)."""
    t = np.arange(len(x)) / fs
    basis = np.column_stack([np.sin(2 * np.pi * freq * t), np.cos(2 * np.pi * freq * t)])
    coef, *_ = np.linalg.lstsq(basis, x, rcond=None)
    return float(np.hypot(*coef))


def tap_response_db(taps, freq, fs, n_fft=65536):
    """Magnitude response of a tap vector at one frequency, via the DFT."""
    h = np.fft.rfft(taps, n_fft)
    freqs = np.fft.rfftfreq(n_fft, 1.0 / fs)
    mag = np.abs(h[np.argmin(np.abs(freqs - freq))])
    return 20.0 * np.log10(max(mag, 1e-300))


class TestFirDesign:
    def test_near_nyquist_lowpass_sums_to_one(self):
        fs = 250.0
        taps = fir_design(FilterSpec("lowpass", 0.0, fs / 2 - 0.01, 2001), fs)
        assert taps.sum() == pytest.approx(1.0, abs=1e-12)

    def test_bandpass_unity_at_25hz(self):
        # 0.5-50 Hz at fs=250 with 501 taps: |H(25 Hz)| within +/-0.5 dB of unity
        taps = fir_design(FilterSpec("bandpass", 0.5, 50.0, 501), 250.0)
        assert abs(tap_response_db(taps, 25.0, 250.0)) <= 0.5

    def test_bandpass_dc_gain_is_zero(self):
        taps = fir_design(FilterSpec("bandpass", 0.5, 50.0, 501), 250.0)
        assert abs(taps.sum()) < 1e-15

    def test_matches_scipy_freqz(self):
        taps = fir_design(FilterSpec("bandpass", 0.5, 50.0, 501), 250.0)
        w, h = sp_signal.freqz(taps, worN=4096, fs=250.0)
        ours = np.abs(np.fft.rfft(taps, 8192))[:4096]
        assert np.allclose(np.abs(h), ours, atol=1e-9)

    def test_cutoff_above_nyquist_rejected(self):
        with pytest.raises(ValueError, match="130"):
            fir_design(FilterSpec("bandpass", 0.5, 130.0, 501), 250.0)
        with pytest.raises(ValueError):
            fir_design(FilterSpec("lowpass", 0.0, 125.0, 501), 250.0)

    def test_even_or_tiny_taps_rejected(self):
        with pytest.raises(ValueError, match="odd"):
            FilterSpec("lowpass", 0.0, 10.0, 500)
        with pytest.raises(ValueError, match="odd"):
            FilterSpec("lowpass", 0.0, 10.0, 1)

    def test_unknown_kind_rejected(self):
        with pytest.raises(ValueError, match="kind"):
            FilterSpec("highpass", 0.0, 10.0, 501)


class TestFiltfilt:
    def test_constant_through_bandpass_vanishes(self):
        taps = fir_design(FilterSpec("bandpass", 0.5, 50.0, 249), 250.0)
        x = np.full(1000, 3.7)
        y = filtfilt(x, taps)
        assert np.abs(y).max() < 1e-3 * 3.7

    def test_10hz_tone_amplitude_preserved_within_1pct(self):
        fs = 250.0
        t = np.arange(2000) / fs
        x = np.sin(2 * np.pi * 10.0 * t)
        taps = fir_design(FilterSpec("bandpass", 0.5, 50.0, 249), fs)
        y = filtfilt(x, taps)
        interior = slice(400, 1600)
        amp = fitted_amplitude(y[interior], 10.0, fs)
        assert amp == pytest.approx(1.0, rel=0.01)

    def test_identity_filter_returns_input(self):
        x = np.zeros(32)
        x[5] = 1.0
        assert np.array_equal(filtfilt(x, np.array([1.0])), x)

    def test_zero_phase_on_narrowband_tone(self):
        fs = 250.0
        t = np.arange(2000) / fs
        x = np.sin(2 * np.pi * 10.0 * t)
        taps = fir_design(FilterSpec("bandpass", 0.5, 50.0, 249), fs)
        y = filtfilt(x, taps)
        interior = slice(300, 1700)
        lags = np.arange(-10, 11)
        corr = [np.dot(x[interior], np.roll(y, lag)[interior]) for lag in lags]
        assert lags[int(np.argmax(corr))] == 0

    def test_too_short_signal_rejected(self):
        taps = fir_design(FilterSpec("lowpass", 0.0, 10.0, 101), 250.0)
        with pytest.raises(ValueError, match="too short"):
            filtfilt(np.zeros(101), taps)

    def test_batched_rows_match_single(self):
        rng = np.random.default_rng(3)
        x = rng.normal(size=(4, 600))
        taps = fir_design(FilterSpec("lowpass", 0.0, 30.0, 101), 250.0)
        batched = filtfilt(x, taps)
        for i in range(4):
            assert np.allclose(batched[i], filtfilt(x[i], taps), atol=1e-12)


class TestDecimate:
    def test_1000_to_250(self):
        e = make_epochs(n_samples=2000, fs=1000.0)
        out = decimate(e, 4)
        assert out.fs == 250.0
        assert out.n_samples == 500

    def test_factor_one_is_identity(self):
        e = make_epochs()
        assert decimate(e, 1) == e

    def test_10hz_tone_survives_within_2pct(self):
        fs = 1000.0
        t = np.arange(4000) / fs
        x = np.sin(2 * np.pi * 10.0 * t)
        e = EpochSet("s", fs, x[None, None, :], [1], ("a",))
        out = decimate(e, 4)
        amp = fitted_amplitude(out.data[0, 0, 200:800].astype(np.float64), 10.0, 250.0)
        assert amp == pytest.approx(1.0, rel=0.02)

    def test_non_divisible_factor_rejected(self):
        with pytest.raises(ValueError, match="divisible"):
            decimate(make_epochs(fs=250.0), 3)

    def test_odd_length_truncates_to_floor(self):
        e = make_epochs(n_samples=2001, fs=1000.0)
        assert decimate(e, 4).n_samples == 500

    @pytest.mark.parametrize("tone", [90.0, 215.0])
    def test_out_of_band_tones_below_minus_40db(self, tone):
        # after anti-aliased decimation, a high tone must contribute < -40 dB
        # to every analysis band, relative to an in-band reference tone
        fs = 1000.0
        t = np.arange(2000) / fs
        ref = EpochSet("r", fs, np.sin(2 * np.pi * 10.0 * t)[None, None, :], [1], ("a",))
        tst = EpochSet("t", fs, np.sin(2 * np.pi * tone * t)[None, None, :], [1], ("a",))
        ref_d, tst_d = decimate(ref, 4), decimate(tst, 4)
        freqs, ref_pxx = periodogram(ref_d.data[0, 0].astype(np.float64), 250.0)
        _, tst_pxx = periodogram(tst_d.data[0, 0].astype(np.float64), 250.0)
        ref_alpha = band_power_db(freqs, ref_pxx, (7.0, 12.0))
        for _, lo, hi in default_bands().bands:
            assert band_power_db(freqs, tst_pxx, (lo, hi)) < ref_alpha - 40.0


class TestRereference:
    def test_simple_arithmetic(self):
        data = np.array([[[1.0], [2.0], [3.0]]])
        e = EpochSet("s", 100.0, data, [1], ("a", "b", "c"))
        out = rereference_average(e)
        assert np.allclose(out.data[:, :, 0], [[-1.0, 0.0, 1.0]])

    def test_zero_mean_input_unchanged(self):
        e = make_epochs(n_channels=4)
        centered = rereference_average(e)
        again = rereference_average(centered)
        assert np.abs(again.data - centered.data).max() < 1e-6

    def test_random_set_mean_below_1e5(self):
        e = make_epochs(n_trials=6, n_channels=16, n_samples=64, seed=9)
        out = rereference_average(e)
        assert np.abs(out.data.astype(np.float64).mean(axis=1)).max() < 1e-5

    def test_single_channel_rejected(self):
        with pytest.raises(ValueError, match="2 channels"):
            rereference_average(make_epochs(n_channels=1))


class TestPipeline:
    def test_1000hz_input_lands_at_250(self):
        e = make_epochs(n_trials=2, n_channels=4, n_samples=2000, fs=1000.0)
        out = preprocess_pipeline(e)
        assert out.fs == 250.0
        assert np.abs(out.data.astype(np.float64).mean(axis=1)).max() < 1e-5

    def test_250hz_input_skips_decimation(self):
        e = make_epochs(n_trials=2, n_channels=4, n_samples=500, fs=250.0)
        out = preprocess_pipeline(e)
        assert out.fs == 250.0
        assert out.n_samples == 500

    def test_dc_only_input_goes_to_zero(self):
        data = np.full((1, 3, 500), 7.0)
        e = EpochSet("s", 250.0, data, [1], ("a", "b", "c"))
        out = preprocess_pipeline(e)
        assert np.abs(out.data).max() < 1e-3 * 7.0

    def test_incompatible_rate_rejected(self):
        with pytest.raises(ValueError, match="multiple"):
            preprocess_pipeline(make_epochs(fs=300.0))
