"""Tests for the log-mel frontend, interference synthesis, mixing and WAV export."""

import numpy as np
import pytest
from scipy import signal as sps

from sdavs.audio import (HOP_LENGTH, N_FRAMES, N_MELS, SAMPLE_RATE, WIN_LENGTH, Waveform, brownian_noise,
                         chirp_train, clip_spectrograms, log_mel, mel_center_frequencies, mel_filterbank,
                         mix_noise, read_wav, rms, stft, synth_interference, write_wav)
from sdavs.errors import AudioError


def tone(freq, seconds=1.0, amplitude=1.0):
    t = np.arange(int(seconds * SAMPLE_RATE)) / SAMPLE_RATE
    return Waveform(amplitude * np.sin(2 * np.pi * freq * t))


def nearest_mel_bin(freq):
    return int(np.argmin(np.abs(mel_center_frequencies() - freq)))


def test_log_mel_shape_and_dtype():
    spec = log_mel(tone(440.0))
    assert spec.values.shape == (N_FRAMES, N_MELS)
    assert spec.values.dtype == np.float32
    assert spec.frame_hop == pytest.approx(0.01)


def test_filterbank_geometry():
    """Test 64 triangular filters with peak 1 and increasing centres inside 125-7500 Hz"""
    bank = mel_filterbank()
    assert bank.shape == (N_MELS, WIN_LENGTH // 2 + 1)
    assert bank.max() <= 1.0 + 1e-6
    centres = mel_center_frequencies()
    assert centres.shape == (N_MELS,)
    assert (np.diff(centres) > 0).all()
    assert 125.0 < centres[0] and centres[-1] < 7500.0


@pytest.mark.parametrize('freq', [440.0, 880.0, 2000.0])
def test_sine_lands_in_nearest_mel_bin(freq):
    """Test that a pure tone's strongest mel band is the one whose centre is closest"""
    spec = log_mel(tone(freq)).values
    assert int(np.argmax(spec.mean(axis=0))) == nearest_mel_bin(freq)


def test_tone_bins_used_by_the_dataset():
    assert nearest_mel_bin(440.0) == 8
    assert nearest_mel_bin(880.0) == 17


def test_stft_peak_and_main_lobe():
    """Test that a bin-centred sine peaks in its bin and the Hann main lobe holds ≥ 90% of the energy"""
    k = 11                                           # 11 × 40 Hz = 440 Hz
    mags = stft(tone(k * SAMPLE_RATE / WIN_LENGTH))
    assert mags.shape == (1 + (SAMPLE_RATE - WIN_LENGTH) // HOP_LENGTH, WIN_LENGTH // 2 + 1)
    power = (mags ** 2).mean(axis=0)
    assert int(np.argmax(power)) == k
    assert power[k - 1:k + 2].sum() / power.sum() >= 0.9


def test_stft_parseval(rng):
    """Test one-sided Parseval: |X0|² + 2Σ|Xk|² + |X_N/2|² = N·Σ(w·x)²"""
    x = rng.normal(size=WIN_LENGTH)
    mags = stft(Waveform(x))[0]
    weights = np.full(mags.shape, 2.0)
    weights[0] = weights[-1] = 1.0
    window = sps.get_window('hann', WIN_LENGTH, fftbins=True)
    assert (weights * mags ** 2).sum() == pytest.approx(WIN_LENGTH * ((window * x) ** 2).sum(), rel=1e-4)


def test_doubling_amplitude_shifts_log_mel_by_ln2():
    w = Waveform(tone(440.0).samples + 0.5 * tone(2500.0).samples)
    loud = Waveform(2.0 * w.samples)
    mel = (stft(w) @ mel_filterbank().T)[:N_FRAMES]
    strong = mel > 1.0
    diff = (log_mel(loud).values - log_mel(w).values)[strong]
    assert strong.sum() > 50
    assert diff.mean() == pytest.approx(np.log(2.0), abs=0.01)
    assert diff.std() < 0.05


def test_clip_spectrograms_split_per_second():
    w = Waveform(np.concatenate([tone(440.0).samples, tone(880.0).samples]))
    stack = clip_spectrograms(w, 2)
    assert stack.shape == (2, N_FRAMES, N_MELS)
    np.testing.assert_allclose(stack[1], log_mel(tone(880.0)).values, rtol=1e-6, atol=1e-6)
    with pytest.raises(AudioError):
        clip_spectrograms(w, 3)


def test_waveform_contract():
    with pytest.raises(AudioError):
        Waveform(np.zeros((2, 100)))
    with pytest.raises(AudioError):
        Waveform(np.array([0.0, np.nan]))
    with pytest.raises(AudioError):
        stft(Waveform(np.zeros(WIN_LENGTH - 1)))
    with pytest.raises(AudioError):
        log_mel(Waveform(np.zeros(SAMPLE_RATE - 1)))


def test_brownian_noise_unit_rms_and_determinism():
    noise = brownian_noise(10 * SAMPLE_RATE, seed=3)
    assert noise.rms() == pytest.approx(1.0, abs=1e-6)
    assert abs(noise.samples.mean()) < 1e-9
    np.testing.assert_array_equal(noise.samples, brownian_noise(10 * SAMPLE_RATE, seed=3).samples)


def test_brownian_noise_spectral_slope():
    """Test a -20 dB/decade spectrum over 20 Hz-2 kHz, fitted per seed and averaged over 32 seeds"""
    slopes = []
    for seed in range(32):
        freqs, power = sps.welch(brownian_noise(10 * SAMPLE_RATE, seed=seed).samples, fs=SAMPLE_RATE, nperseg=8192)
        band = (freqs >= 20) & (freqs <= 2000)
        slopes.append(np.polyfit(np.log10(freqs[band]), 10 * np.log10(power[band]), 1)[0])
    assert -24.0 <= np.mean(slopes) <= -16.0


def test_chirp_train_is_deterministic_with_unit_rms():
    a, b = chirp_train(2 * SAMPLE_RATE, seed=5), chirp_train(2 * SAMPLE_RATE, seed=5)
    np.testing.assert_array_equal(a.samples, b.samples)
    assert not np.array_equal(a.samples, chirp_train(2 * SAMPLE_RATE, seed=6).samples)
    assert a.rms() == pytest.approx(1.0)


def test_chirp_train_frame_energy_varies_more_than_white_noise(rng):
    """Test that the pass-by envelope makes per-frame STFT energy far less steady than stationary noise"""
    white = rng.normal(size=2 * SAMPLE_RATE)
    white = Waveform(white / rms(white))

    def energy_spread(w):
        energy = (stft(w) ** 2).sum(axis=1)
        return energy.var() / energy.mean() ** 2

    for seed in range(3):
        assert energy_spread(chirp_train(2 * SAMPLE_RATE, seed=seed)) > 10.0 * energy_spread(white)


def test_synth_interference_dispatch():
    assert np.array_equal(synth_interference('brownian', 1000, 1).samples, brownian_noise(1000, 1).samples)
    with pytest.raises(AudioError):
        synth_interference('pink', 1000, 1)


def test_mix_noise_level_and_no_clipping():
    """Test that the added noise has RMS = scale × signal RMS and nothing is clipped"""
    signal = tone(440.0, amplitude=1.5)
    noise = brownian_noise(SAMPLE_RATE, seed=1)
    mixed = mix_noise(signal, noise, scale=0.1)
    assert rms(mixed.samples - signal.samples) == pytest.approx(0.1 * signal.rms(), rel=1e-9)
    assert np.abs(mixed.samples).max() > 1.0

    clean = mix_noise(signal, noise, scale=0.0)
    np.testing.assert_array_equal(clean.samples, signal.samples)
    assert clean.samples is not signal.samples
    with pytest.raises(AudioError):
        mix_noise(signal, brownian_noise(100, seed=1))


def test_wav_round_trip_and_saturation(tmp_path):
    w = Waveform(np.array([0.0, 0.5, -0.5, 1.7, -2.0]))
    back = read_wav(write_wav(tmp_path / 'x.wav', w))
    assert back.sample_rate == SAMPLE_RATE
    np.testing.assert_allclose(back.samples[:3], w.samples[:3], atol=1.0 / 32767)
    assert back.samples[3] == pytest.approx(1.0)
    assert back.samples[4] == pytest.approx(-32768 / 32767)


def test_silence_edge_cases():
    silence = Waveform(np.zeros(SAMPLE_RATE))
    np.testing.assert_array_equal(stft(silence), 0.0)
    np.testing.assert_allclose(log_mel(silence).values, np.log(0.01), rtol=1e-6)
    mixed = mix_noise(silence, brownian_noise(SAMPLE_RATE, seed=2), scale=0.1)
    np.testing.assert_array_equal(mixed.samples, 0.0)
