"""
Audio frontend
==============

1-second 16 kHz segments become 96×64 log-mel grids (25 ms Hann window,
10 ms hop, 64 HTK-mel filters over 125-7500 Hz, ``log(mel + 0.01)``), the
input convention of VGGish-style audio encoders.

Interference for the robustness protocol is synthesized here too: Brownian
noise and a deterministic "moving train" surrogate (a stack of amplitude
modulated chirps under a pass-by envelope). Noise is mixed relative to the
signal RMS and never clipped.
"""

import logging
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Union

import librosa
import numpy as np
from scipy import signal as sps
from scipy.io import wavfile

from .errors import AudioError

logger = logging.getLogger(__name__)

SAMPLE_RATE = 16000
WIN_LENGTH = 400
HOP_LENGTH = 160
N_MELS = 64
N_FRAMES = 96
MEL_LO = 125.0
MEL_HI = 7500.0
LOG_OFFSET = 0.01
NOISE_KINDS = ('brownian', 'chirp_train')


@dataclass
class Waveform:
    samples: np.ndarray
    sample_rate: int = SAMPLE_RATE

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1:
            raise AudioError(f"mono waveform expected, got shape {self.samples.shape}")
        if not np.isfinite(self.samples).all():
            raise AudioError("waveform contains NaN/Inf samples")

    def __len__(self):
        return self.samples.shape[0]

    @property
    def duration(self) -> float:
        return len(self) / self.sample_rate

    def rms(self) -> float:
        return rms(self.samples)


@dataclass
class LogMelSpectrogram:
    values: np.ndarray
    frame_hop: float = HOP_LENGTH / SAMPLE_RATE
    mel_lo: float = MEL_LO
    mel_hi: float = MEL_HI


def rms(x: np.ndarray) -> float:
    return float(np.sqrt(np.mean(np.square(x, dtype=np.float64)))) if len(x) else 0.0


def stft(w: Waveform, win_len: int = WIN_LENGTH, hop: int = HOP_LENGTH) -> np.ndarray:
    """Hann-windowed STFT magnitudes, frames × (win_len/2 + 1), no centre padding"""
    if len(w) < win_len:
        raise AudioError(f"waveform of {len(w)} samples is shorter than one {win_len}-sample window")
    spectrum = librosa.stft(w.samples, n_fft=win_len, hop_length=hop, win_length=win_len,
                            window='hann', center=False)
    return np.abs(spectrum).T


@lru_cache(maxsize=4)
def _mel_weights(sample_rate: int, n_fft: int) -> np.ndarray:
    weights = librosa.filters.mel(sr=sample_rate, n_fft=n_fft, n_mels=N_MELS, fmin=MEL_LO,
                                  fmax=MEL_HI, htk=True, norm=None)
    weights.setflags(write=False)
    return weights


def mel_filterbank(sample_rate: int = SAMPLE_RATE, n_fft: int = WIN_LENGTH) -> np.ndarray:
    """Triangular HTK-mel weights, 64 × (n_fft/2 + 1), unnormalized (peak 1)"""
    return _mel_weights(sample_rate, n_fft).copy()


def mel_center_frequencies() -> np.ndarray:
    """Centre frequency (Hz) of every mel filter, strictly increasing"""
    return librosa.mel_frequencies(n_mels=N_MELS + 2, fmin=MEL_LO, fmax=MEL_HI, htk=True)[1:-1]


def log_mel(w: Waveform) -> LogMelSpectrogram:
    if w.sample_rate != SAMPLE_RATE or len(w) != SAMPLE_RATE:
        raise AudioError(f"log_mel needs one second at {SAMPLE_RATE} Hz, "
                         f"got {len(w)} samples at {w.sample_rate} Hz")
    mel = stft(w) @ _mel_weights(SAMPLE_RATE, WIN_LENGTH).T
    values = np.log(mel[:N_FRAMES] + LOG_OFFSET).astype(np.float32)
    return LogMelSpectrogram(values=values)


def clip_spectrograms(w: Waveform, seconds: int) -> np.ndarray:
    """Split a T-second waveform into T one-second log-mel grids (T × 96 × 64)"""
    if len(w) != seconds * SAMPLE_RATE:
        raise AudioError(f"expected {seconds} s ({seconds * SAMPLE_RATE} samples), got {len(w)}")
    segments = w.samples.reshape(seconds, SAMPLE_RATE)
    return np.stack([log_mel(Waveform(segment)).values for segment in segments])


# ------------------------------------------------------------- interference
def brownian_noise(n: int, seed: int, sample_rate: int = SAMPLE_RATE) -> Waveform:
    """Integrated white noise (1/f² power), zero mean, unit RMS"""
    if n < 2:
        raise AudioError(f"brownian noise needs at least 2 samples, got {n}")
    walk = np.cumsum(np.random.default_rng(seed).standard_normal(n))
    walk -= walk.mean()
    return Waveform(walk / rms(walk), sample_rate)


def chirp_train(n: int, seed: int, sample_rate: int = SAMPLE_RATE) -> Waveform:
    """Synthetic pass-by train: wheel-clack modulated chirp stack over a rumble floor"""
    if n < 2:
        raise AudioError(f"chirp train needs at least 2 samples, got {n}")
    rng = np.random.default_rng(seed)
    t = np.arange(n) / sample_rate
    duration = n / sample_rate

    tones = np.zeros(n)
    for _ in range(6):
        f0 = rng.uniform(150.0, 1500.0)
        f1 = f0 * rng.uniform(0.6, 1.6)
        tones += rng.uniform(0.5, 1.0) * sps.chirp(t, f0=f0, t1=duration, f1=f1, phi=rng.uniform(0, 360))

    clack = 0.35 + 0.65 * (0.5 * (1 + np.cos(2 * np.pi * rng.uniform(2.0, 6.0) * t))) ** 4
    centre, width = rng.uniform(0.3, 0.7) * duration, 0.25 * duration
    passby = np.exp(-((t - centre) / width) ** 2) + 0.1
    rumble = brownian_noise(n, int(rng.integers(2 ** 31))).samples

    train = (tones * clack + 0.3 * rumble) * passby
    train -= train.mean()
    return Waveform(train / rms(train), sample_rate)


def synth_interference(kind: str, n: int, seed: int) -> Waveform:
    if kind == 'brownian':
        return brownian_noise(n, seed)
    if kind == 'chirp_train':
        return chirp_train(n, seed)
    raise AudioError(f"unknown interference kind '{kind}', expected one of {NOISE_KINDS}")


def mix_noise(signal: Waveform, noise: Waveform, scale: float = 0.1) -> Waveform:
    """signal + scale · (noise / RMS(noise)) · RMS(signal) over the full span"""
    if len(signal) != len(noise):
        raise AudioError(f"signal has {len(signal)} samples, noise has {len(noise)}")
    if signal.sample_rate != noise.sample_rate:
        raise AudioError(f"sample rates differ: {signal.sample_rate} vs {noise.sample_rate}")
    level, noise_level = signal.rms(), noise.rms()
    if scale == 0 or level == 0 or noise_level == 0:
        return Waveform(signal.samples.copy(), signal.sample_rate)
    mixed = signal.samples + scale * (noise.samples / noise_level) * level
    return Waveform(mixed, signal.sample_rate)


# ---------------------------------------------------------------------- WAV
def write_wav(path: Union[str, Path], w: Waveform) -> Path:
    """16-bit PCM mono; export saturates at the int16 range"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    pcm = np.clip(np.round(w.samples * 32767.0), -32768, 32767).astype('<i2')
    wavfile.write(path, w.sample_rate, pcm)
    return path


def read_wav(path: Union[str, Path]) -> Waveform:
    rate, data = wavfile.read(path)
    if data.ndim != 1:
        raise AudioError(f"{path}: stereo/multichannel audio is not supported")
    if data.dtype == np.int16:
        data = data.astype(np.float64) / 32767.0
    return Waveform(data, int(rate))
