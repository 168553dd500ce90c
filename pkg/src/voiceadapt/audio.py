"""Signal-processing front end: WAV I/O, resampling, log-mel features and T30.

All functions are pure: they never modify their inputs and keep no module
state, so they can be called from several threads at once.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy import signal
from scipy.io import wavfile

from .errors import ClipTooShortError, UnreliableDecayError, ValidationError

__all__ = [
    "AudioClip",
    "FeatureConfig",
    "LogMelSpectrogram",
    "ReverbEstimate",
    "read_wav",
    "write_wav",
    "resample",
    "frame_signal",
    "power_spectrogram",
    "hz_to_mel",
    "mel_to_hz",
    "mel_filterbank",
    "mel_band_centers",
    "extract_log_mel",
    "schroeder_decay_db",
    "estimate_t30",
    "synthetic_impulse_response",
    "OCTAVE_BANDS_HZ",
]

OCTAVE_BANDS_HZ = (250.0, 500.0, 1000.0, 2000.0)


@dataclass(frozen=True)
class AudioClip:
    """Sampled audio.  ``samples`` is (n,) for mono or (n, 2) for stereo."""

    samples: np.ndarray
    sample_rate_hz: int

    def __post_init__(self):
        x = np.asarray(self.samples, dtype=np.float64)
        if x.ndim == 2 and x.shape[1] == 1:
            x = x[:, 0]
        if x.ndim not in (1, 2) or (x.ndim == 2 and x.shape[1] != 2):
            raise ValidationError(f"samples must be (n,) or (n, 2), got shape {x.shape}")
        if x.shape[0] == 0:
            raise ValidationError("clip has no samples")
        if not np.all(np.isfinite(x)):
            raise ValidationError("clip contains non-finite samples")
        if int(self.sample_rate_hz) <= 0:
            raise ValidationError(f"sample rate must be positive, got {self.sample_rate_hz}")
        x.setflags(write=False)
        object.__setattr__(self, "samples", x)
        object.__setattr__(self, "sample_rate_hz", int(self.sample_rate_hz))

    @property
    def channels(self) -> int:
        return 1 if self.samples.ndim == 1 else 2

    @property
    def n_samples(self) -> int:
        return self.samples.shape[0]

    @property
    def duration_s(self) -> float:
        return self.n_samples / self.sample_rate_hz

    def mono(self) -> "AudioClip":
        if self.channels == 1:
            return self
        return AudioClip(self.samples.mean(axis=1), self.sample_rate_hz)


@dataclass(frozen=True)
class FeatureConfig:
    """Log-mel front-end settings.

    Defaults give a 1024-sample (46.4 ms) Hamming window with a 683-sample hop
    (one third overlap rounded to whole samples, 31.0 ms per frame) at 22.05 kHz.
    """

    sample_rate_hz: int = 22050
    window_samples: int = 1024
    hop_samples: int = 683
    n_fft: int = 1024
    n_mels: int = 64
    mel_fmin_hz: float = 50.0
    mel_fmax_hz: float = 11025.0
    log_floor: float = 1e-10

    def __post_init__(self):
        if not 0 < self.hop_samples < self.window_samples <= self.n_fft:
            raise ValidationError(
                "need 0 < hop_samples < window_samples <= n_fft, got "
                f"{self.hop_samples}, {self.window_samples}, {self.n_fft}"
            )
        if self.n_mels < 1:
            raise ValidationError("n_mels must be >= 1")
        if not 0 < self.mel_fmin_hz < self.mel_fmax_hz <= self.sample_rate_hz / 2:
            raise ValidationError("need 0 < mel_fmin < mel_fmax <= sample_rate / 2")
        if self.log_floor <= 0:
            raise ValidationError("log_floor must be positive")

    @property
    def frame_duration_s(self) -> float:
        return self.hop_samples / self.sample_rate_hz

    def n_frames(self, n_samples: int) -> int:
        if n_samples < self.window_samples:
            return 0
        return 1 + (n_samples - self.window_samples) // self.hop_samples

    def min_samples_for_frames(self, n_frames: int) -> int:
        return self.window_samples + (n_frames - 1) * self.hop_samples

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureConfig":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValidationError(f"unknown feature config keys: {sorted(unknown)}")
        return cls(**d)


@dataclass(frozen=True)
class LogMelSpectrogram:
    values: np.ndarray  # (frames, n_mels), natural log
    config: FeatureConfig = field(default_factory=FeatureConfig)

    @property
    def frame_duration_s(self) -> float:
        return self.config.frame_duration_s

    @property
    def n_frames(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class ReverbEstimate:
    t30_s: float
    per_band_t30: dict
    decay_fit_r2: float


# --------------------------------------------------------------------------
# I/O and resampling
# --------------------------------------------------------------------------


def read_wav(path) -> AudioClip:
    """Read a PCM WAV file (16/32-bit integer or 32/64-bit float)."""
    try:
        rate, data = wavfile.read(str(path))
    except (ValueError, OSError) as exc:
        raise ValidationError(f"cannot read WAV file {path}: {exc}") from exc
    if data.dtype == np.int16:
        x = data.astype(np.float64) / 32768.0
    elif data.dtype == np.int32:
        x = data.astype(np.float64) / 2147483648.0
    elif data.dtype == np.uint8:
        x = (data.astype(np.float64) - 128.0) / 128.0
    elif np.issubdtype(data.dtype, np.floating):
        x = data.astype(np.float64)
    else:
        raise ValidationError(f"unsupported WAV sample type {data.dtype}")
    if x.ndim == 2 and x.shape[1] > 2:
        raise ValidationError(f"{path}: only mono or stereo WAV is supported")
    return AudioClip(x, int(rate))


def write_wav(path, clip: AudioClip, subtype: str = "float32") -> None:
    """Write ``clip`` as 32-bit float (default) or 16-bit PCM."""
    x = clip.samples
    if subtype == "float32":
        data = x.astype(np.float32)
    elif subtype == "pcm16":
        data = np.clip(np.round(x * 32767.0), -32768, 32767).astype(np.int16)
    else:
        raise ValidationError(f"unknown WAV subtype {subtype!r}")
    wavfile.write(str(path), clip.sample_rate_hz, data)


def resample(clip: AudioClip, target_rate_hz: int) -> AudioClip:
    """Band-limited polyphase resampling (Kaiser-windowed sinc FIR)."""
    target = int(target_rate_hz)
    if not 8000 <= target <= 48000:
        raise ValidationError(f"target rate {target} Hz outside supported range [8000, 48000]")
    if target == clip.sample_rate_hz:
        return clip
    g = math.gcd(target, clip.sample_rate_hz)
    up, down = target // g, clip.sample_rate_hz // g
    y = signal.resample_poly(clip.samples, up, down, axis=0)
    return AudioClip(y, target)


# --------------------------------------------------------------------------
# STFT and mel features
# --------------------------------------------------------------------------


def frame_signal(x: np.ndarray, window: int, hop: int) -> np.ndarray:
    """Strided (n_frames, window) view of a 1-D signal; no padding."""
    n_frames = 1 + (len(x) - window) // hop
    return np.lib.stride_tricks.sliding_window_view(x, window)[::hop][:n_frames]


def power_spectrogram(x: np.ndarray, config: FeatureConfig) -> np.ndarray:
    """|rfft(hamming * frame)|^2 for every frame, shape (frames, n_fft // 2 + 1)."""
    frames = frame_signal(x, config.window_samples, config.hop_samples)
    win = signal.get_window("hamming", config.window_samples)
    spec = np.fft.rfft(frames * win, n=config.n_fft, axis=1)
    return spec.real**2 + spec.imag**2


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_band_centers(config: FeatureConfig) -> np.ndarray:
    pts = np.linspace(hz_to_mel(config.mel_fmin_hz), hz_to_mel(config.mel_fmax_hz), config.n_mels + 2)
    return mel_to_hz(pts[1:-1])


def mel_filterbank(config: FeatureConfig) -> np.ndarray:
    """HTK-scale triangular filters with unit peak, shape (n_mels, n_fft // 2 + 1)."""
    pts = mel_to_hz(
        np.linspace(hz_to_mel(config.mel_fmin_hz), hz_to_mel(config.mel_fmax_hz), config.n_mels + 2)
    )
    freqs = np.arange(config.n_fft // 2 + 1) * config.sample_rate_hz / config.n_fft
    lo, mid, hi = pts[:-2, None], pts[1:-1, None], pts[2:, None]
    rising = (freqs[None, :] - lo) / (mid - lo)
    falling = (hi - freqs[None, :]) / (hi - mid)
    return np.maximum(0.0, np.minimum(rising, falling))


def extract_log_mel(clip: AudioClip, config: FeatureConfig | None = None) -> LogMelSpectrogram:
    """Natural-log mel energies of a clip, shape (frames, n_mels).

    Stereo input is averaged to mono.  The clip must already be at
    ``config.sample_rate_hz`` (see :func:`resample`).
    """
    config = config or FeatureConfig()
    if clip.sample_rate_hz != config.sample_rate_hz:
        raise ValidationError(
            f"clip is {clip.sample_rate_hz} Hz but features expect {config.sample_rate_hz} Hz; resample first"
        )
    x = clip.mono().samples
    if len(x) < config.window_samples:
        raise ClipTooShortError(
            f"clip too short: {len(x)} samples < one window of {config.window_samples}"
        )
    mel = power_spectrogram(x, config) @ mel_filterbank(config).T
    return LogMelSpectrogram(np.log(np.maximum(mel, config.log_floor)), config)


# --------------------------------------------------------------------------
# Reverberation time
# --------------------------------------------------------------------------


def schroeder_decay_db(h: np.ndarray) -> np.ndarray:
    """Backward-integrated energy decay curve in dB, 0 dB at the first sample."""
    energy = np.cumsum((h * h)[::-1])[::-1]
    with np.errstate(divide="ignore"):
        return 10.0 * np.log10(energy / energy[0])


def _octave_sos(center_hz: float, fs: int) -> np.ndarray:
    lo, hi = center_hz / math.sqrt(2.0), center_hz * math.sqrt(2.0)
    # order-2 prototype -> 4th-order band-pass
    return signal.butter(2, [lo, hi], btype="bandpass", fs=fs, output="sos")


def _band_t30(edc_db: np.ndarray, fs: int, upper_db=-5.0, lower_db=-35.0):
    below_upper = np.nonzero(edc_db <= upper_db)[0]
    below_lower = np.nonzero(edc_db <= lower_db)[0]
    if len(below_upper) == 0 or len(below_lower) == 0:
        raise UnreliableDecayError(f"unreliable decay: EDC never reaches {lower_db} dB")
    i0, i1 = below_upper[0], below_lower[0]
    if i1 - i0 < 10:
        raise UnreliableDecayError(f"unreliable decay: fit region has {i1 - i0} frames (< 10)")
    t = np.arange(i0, i1) / fs
    y = edc_db[i0:i1]
    slope, intercept = np.polyfit(t, y, 1)
    resid = y - (slope * t + intercept)
    ss_tot = np.sum((y - y.mean()) ** 2)
    r2 = 1.0 - np.sum(resid**2) / ss_tot if ss_tot > 0 else 0.0
    if slope >= 0 or r2 < 0.85:
        raise UnreliableDecayError(f"unreliable decay: slope {slope:.3g} dB/s, r2 {r2:.3f}")
    # 30 dB on the fitted line, doubled: the 60 dB decay time
    return 2.0 * (-30.0 / slope), r2


def estimate_t30(impulse_response: AudioClip, bands=OCTAVE_BANDS_HZ) -> ReverbEstimate:
    """T30 from an impulse response, averaged over the 250 Hz - 2 kHz octave bands.

    Each band is isolated with a 4th-order Butterworth band-pass applied to
    the time-reversed response, which keeps the filter's own ringing out of
    the decay tail.  The Schroeder curve is fitted between -5 and -35 dB and
    extrapolated to 60 dB.

    Raises
    ------
    UnreliableDecayError
        When the fit region is shorter than 10 samples or r^2 < 0.85.
    """
    clip = impulse_response.mono()
    h = clip.samples
    fs = clip.sample_rate_hz
    peak = int(np.argmax(np.abs(h)))
    if peak >= 0.9 * len(h):
        raise ValidationError("impulse response peak lies in the final 10% of samples; no decay tail")
    per_band = {}
    r2s = []
    for fc in bands:
        if fc * math.sqrt(2.0) >= fs / 2:
            raise ValidationError(f"sample rate {fs} Hz too low for the {fc:g} Hz octave band")
        band = signal.sosfilt(_octave_sos(fc, fs), h[::-1])[::-1]
        t30, r2 = _band_t30(schroeder_decay_db(band[peak:]), fs)
        per_band[float(fc)] = float(t30)
        r2s.append(r2)
    in_range = [v for fc, v in per_band.items() if 250.0 <= fc <= 2000.0]
    return ReverbEstimate(float(np.mean(in_range)), per_band, float(min(r2s)))


def synthetic_impulse_response(t60_s: float, fs: int = 48000, duration_s: float | None = None, seed: int = 0,
                               predelay_s: float = 0.005) -> AudioClip:
    """White noise under an exponential envelope that falls 60 dB in ``t60_s``."""
    rng = np.random.default_rng(seed)
    duration_s = duration_s or max(2.0 * t60_s, 0.1)
    n = int(round(duration_s * fs))
    t = np.arange(n) / fs
    h = rng.standard_normal(n) * np.exp(-t * math.log(1e6) / (2.0 * t60_s))
    h = np.concatenate([np.zeros(int(predelay_s * fs)), h])
    return AudioClip(h / np.max(np.abs(h)), fs)
