"""Waveform <-> mel-spectrogram feature extraction and vocoder loss terms.

The mel pipeline uses centered frames with reflection padding, a periodic
Hann window zero-padded to the FFT size, triangular filters on the HTK mel
scale with area normalization, and symmetric dB normalization into
[-max_abs, max_abs]. All loss functions are pure and reduce by mean over
elements so their values are independent of signal length.
"""

from __future__ import annotations

import csv
import wave as _wave
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, ContractError, DomainError

__all__ = [
    "Waveform", "MelConfig", "MelSpectrogram", "VocoderLossWeights",
    "stft_mel", "mel_center_frequencies",
    "energy_loss", "time_loss", "phase_loss", "mel_loss",
    "feature_matching_loss", "f0_loss", "vocoder_total_loss",
    "read_wav", "write_wav", "mel_to_csv",
]


@dataclass
class Waveform:
    samples: np.ndarray
    sample_rate: int = 24000

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)

    def duration(self) -> float:
        return len(self.samples) / self.sample_rate


@dataclass
class MelConfig:
    sample_rate: int = 24000
    fmin: float = 0.0
    fmax: float = 12000.0
    mel_bins: int = 80
    fft_size: int = 2048
    hop: int = 240
    window: int = 1200
    normalize: bool = True
    symmetric: bool = True
    max_abs: float = 4.0
    min_db: float = -115.0

    def __post_init__(self):
        if self.window > self.fft_size:
            raise ConfigError("window must not exceed fft_size")
        if self.hop > self.window:
            raise ConfigError("hop must not exceed window")
        if self.fmax > self.sample_rate / 2:
            raise ConfigError("fmax must not exceed Nyquist")


@dataclass
class MelSpectrogram:
    values: np.ndarray  # (mel_bins, frames)
    config: MelConfig = field(default_factory=MelConfig)

    @property
    def frames(self) -> int:
        return self.values.shape[1]


@dataclass
class VocoderLossWeights:
    mel: float = 1.0
    feature_matching: float = 1.0
    energy: float = 100.0
    time: float = 200.0
    phase: float = 100.0
    f0: float = 1.0

    def __post_init__(self):
        if min(self.mel, self.feature_matching, self.energy, self.time,
               self.phase, self.f0) < 0:
            raise ConfigError("loss weights must be nonnegative")


def _hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def _mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def _mel_filterbank(cfg: MelConfig) -> np.ndarray:
    n_bins = cfg.fft_size // 2 + 1
    fft_freqs = np.arange(n_bins) * cfg.sample_rate / cfg.fft_size
    mel_pts = np.linspace(_hz_to_mel(cfg.fmin), _hz_to_mel(cfg.fmax),
                          cfg.mel_bins + 2)
    hz_pts = _mel_to_hz(mel_pts)
    fb = np.zeros((cfg.mel_bins, n_bins))
    for m in range(cfg.mel_bins):
        lo, ctr, hi = hz_pts[m], hz_pts[m + 1], hz_pts[m + 2]
        up = (fft_freqs - lo) / max(ctr - lo, 1e-12)
        down = (hi - fft_freqs) / max(hi - ctr, 1e-12)
        fb[m] = np.maximum(0.0, np.minimum(up, down))
        fb[m] *= 2.0 / (hi - lo)  # area normalization
    return fb


def mel_center_frequencies(cfg: MelConfig) -> np.ndarray:
    """Center frequency in Hz of each triangular mel filter."""
    mel_pts = np.linspace(_hz_to_mel(cfg.fmin), _hz_to_mel(cfg.fmax),
                          cfg.mel_bins + 2)
    return _mel_to_hz(mel_pts)[1:-1]


def _pad_centered(samples: np.ndarray, pad: int) -> np.ndarray:
    n = len(samples)
    if n > pad:
        return np.pad(samples, pad, mode="reflect")
    # degenerate short signals: reflection is undefined, fall back to zeros
    return np.pad(samples, pad)


def stft_mel(wave: Waveform, cfg: MelConfig | None = None) -> MelSpectrogram:
    """Normalized log-mel spectrogram with ceil(len/hop) centered frames."""
    cfg = cfg or MelConfig()
    if len(wave.samples) == 0:
        raise ContractError("cannot compute features of an empty waveform")
    if wave.sample_rate != cfg.sample_rate:
        raise ConfigError(
            f"waveform rate {wave.sample_rate} != config rate {cfg.sample_rate}")

    n = len(wave.samples)
    frames = int(np.ceil(n / cfg.hop))
    half = cfg.window // 2
    padded = _pad_centered(wave.samples, half)
    needed = (frames - 1) * cfg.hop + cfg.window
    if len(padded) < needed:
        padded = np.pad(padded, (0, needed - len(padded)))

    idx = np.arange(cfg.window)[None, :] + cfg.hop * np.arange(frames)[:, None]
    win = 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(cfg.window) / cfg.window)
    segs = padded[idx] * win[None, :]
    spec = np.abs(np.fft.rfft(segs, n=cfg.fft_size, axis=1))  # (frames, bins)
    spec *= 2.0 / win.sum()  # full-scale sine peaks near 0 dB
    mel = _mel_filterbank(cfg) @ spec.T  # (mel_bins, frames)

    amin = 10.0 ** (cfg.min_db / 20.0)
    db = 20.0 * np.log10(np.maximum(mel, amin))
    db = np.clip(db, cfg.min_db, 0.0)
    if not cfg.normalize:
        return MelSpectrogram(db, cfg)
    unit = (db - cfg.min_db) / (-cfg.min_db)  # [0, 1]
    if cfg.symmetric:
        values = 2.0 * cfg.max_abs * unit - cfg.max_abs
    else:
        values = cfg.max_abs * unit
    return MelSpectrogram(values, cfg)


# -- vocoder loss terms ---------------------------------------------------------


def _paired(x, y) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise ContractError(f"paired inputs differ in shape: {x.shape} vs {y.shape}")
    return x, y


def _as_samples(w) -> np.ndarray:
    return w.samples if isinstance(w, Waveform) else np.asarray(w, dtype=np.float64)


def energy_loss(x, x_hat) -> float:
    x, y = _paired(_as_samples(x), _as_samples(x_hat))
    return float(abs(np.mean(x ** 2) - np.mean(y ** 2)))


def time_loss(x, x_hat) -> float:
    x, y = _paired(_as_samples(x), _as_samples(x_hat))
    return float(abs(np.mean(x) - np.mean(y)))


def phase_loss(x, x_hat) -> float:
    x, y = _paired(_as_samples(x), _as_samples(x_hat))
    if len(x) < 2:
        raise ContractError("phase loss needs at least two samples")
    return float(np.mean(np.abs(np.diff(x) - np.diff(y))))


def mel_loss(x, x_hat, cfg: MelConfig | None = None) -> float:
    cfg = cfg or MelConfig()
    x = x if isinstance(x, Waveform) else Waveform(x, cfg.sample_rate)
    y = x_hat if isinstance(x_hat, Waveform) else Waveform(x_hat, cfg.sample_rate)
    a = stft_mel(x, cfg).values
    b = stft_mel(y, cfg).values
    a, b = _paired(a, b)
    return float(np.mean(np.abs(a - b)))


def feature_matching_loss(layer_maps_x, layer_maps_y) -> float:
    if len(layer_maps_x) != len(layer_maps_y):
        raise ContractError("feature maps differ in layer count")
    if not layer_maps_x:
        raise ContractError("feature matching needs at least one layer")
    per_layer = []
    for a, b in zip(layer_maps_x, layer_maps_y):
        a, b = _paired(getattr(a, "data", a), getattr(b, "data", b))
        per_layer.append(np.mean(np.abs(a - b)))
    return float(np.mean(per_layer))


def f0_loss(s, s_hat) -> float:
    s, t = _paired(s, s_hat)
    if np.any(s <= 0) or np.any(t <= 0):
        raise DomainError("fundamental-frequency contours must be positive")
    return float(np.mean(np.abs(np.log(s) - np.log(t))))


def vocoder_total_loss(mel: float, feature_matching: float, energy: float,
                       time: float, phase: float, f0: float,
                       weights: VocoderLossWeights | None = None) -> float:
    w = weights or VocoderLossWeights()
    components = (mel, feature_matching, energy, time, phase, f0)
    if not all(np.isfinite(components)):
        raise ContractError("all loss components must be finite")
    return float(w.mel * mel + w.feature_matching * feature_matching
                 + w.energy * energy + w.time * time + w.phase * phase
                 + w.f0 * f0)


# -- I/O ---------------------------------------------------------------------------


def read_wav(path) -> Waveform:
    """Read a 16-bit PCM mono WAV file."""
    with _wave.open(str(path), "rb") as fh:
        if fh.getnchannels() != 1:
            raise ConfigError("only mono WAV files are supported")
        if fh.getsampwidth() != 2:
            raise ConfigError("only 16-bit PCM WAV files are supported")
        rate = fh.getframerate()
        raw = fh.readframes(fh.getnframes())
    samples = np.frombuffer(raw, dtype="<i2").astype(np.float64) / 32768.0
    return Waveform(samples, rate)


def write_wav(path, wave_out: Waveform) -> None:
    """Write a waveform as 16-bit PCM mono; samples are clipped to [-1, 1]."""
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    clipped = np.clip(wave_out.samples, -1.0, 1.0)
    pcm = np.round(clipped * 32767.0).astype("<i2")
    with _wave.open(str(path), "wb") as fh:
        fh.setnchannels(1)
        fh.setsampwidth(2)
        fh.setframerate(wave_out.sample_rate)
        fh.writeframes(pcm.tobytes())


def mel_to_csv(mel: MelSpectrogram, path) -> None:
    """Export mel values as CSV with one row per frame."""
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        for frame in mel.values.T:
            writer.writerow([repr(v) for v in frame])
