"""MFCC front-end: framing, mel filterbank, cepstra, deltas and CMVN.

The pipeline for one utterance is::

    waveform -> compute_mfcc (13) -> append_deltas (39) -> apply_cmvn

Framing uses the snip-edges convention, so an N-sample signal with a
frame of F samples and a shift of S samples yields ``(N - F) // S + 1``
frames and the trailing partial frame is dropped.
"""

from __future__ import annotations

import wave
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.fft import dct

from .errors import (
    InsufficientAudio,
    InsufficientFrames,
    InvalidConfig,
    InvalidInput,
    IoError,
)

CMVN_VAR_FLOOR = 1e-10


@dataclass(frozen=True)
class Waveform:
    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise InvalidInput("waveform must be mono (1-D samples)")
        if int(self.sample_rate) <= 0:
            raise InvalidInput(f"sample_rate must be positive, got {self.sample_rate}")
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "sample_rate", int(self.sample_rate))

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate


@dataclass(frozen=True)
class FrontendConfig:
    frame_length_ms: float = 25.0
    frame_shift_ms: float = 10.0
    num_mel_filters: int = 23
    num_cepstra: int = 13
    preemphasis: float = 0.97
    delta_window: int = 2
    energy_floor: float = 1e-10

    def __post_init__(self):
        if not self.frame_length_ms >= self.frame_shift_ms > 0:
            raise InvalidConfig("need frame_length_ms >= frame_shift_ms > 0")
        if not 0 < self.num_cepstra <= self.num_mel_filters:
            raise InvalidConfig("need 0 < num_cepstra <= num_mel_filters")
        if self.energy_floor <= 0:
            raise InvalidConfig("energy_floor must be positive")
        if self.delta_window < 1:
            raise InvalidConfig("delta_window must be >= 1")

    def frame_samples(self, sample_rate: int) -> int:
        return int(round(self.frame_length_ms * sample_rate / 1000.0))

    def shift_samples(self, sample_rate: int) -> int:
        return int(round(self.frame_shift_ms * sample_rate / 1000.0))


def num_frames(n_samples: int, frame: int, shift: int) -> int:
    """Snip-edges frame count; 0 when not even one frame fits."""
    if n_samples < frame:
        return 0
    return (n_samples - frame) // shift + 1


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(num_filters: int, n_fft: int, sample_rate: int) -> np.ndarray:
    """Triangular filters equally spaced on the mel scale from 0 Hz to Nyquist.

    Returns a (num_filters, n_fft // 2 + 1) weight matrix.
    """
    n_bins = n_fft // 2 + 1
    bin_freqs = np.arange(n_bins) * sample_rate / n_fft
    edges = mel_to_hz(np.linspace(0.0, hz_to_mel(sample_rate / 2.0), num_filters + 2))
    fb = np.zeros((num_filters, n_bins))
    for m in range(num_filters):
        lo, center, hi = edges[m], edges[m + 1], edges[m + 2]
        rising = (bin_freqs - lo) / (center - lo)
        falling = (hi - bin_freqs) / (hi - center)
        fb[m] = np.clip(np.minimum(rising, falling), 0.0, None)
    return fb


def filter_center_frequencies(num_filters: int, sample_rate: int) -> np.ndarray:
    edges = mel_to_hz(np.linspace(0.0, hz_to_mel(sample_rate / 2.0), num_filters + 2))
    return edges[1:-1]


def _frames(w: Waveform, cfg: FrontendConfig) -> np.ndarray:
    if not np.all(np.isfinite(w.samples)):
        raise InvalidInput("waveform contains non-finite samples")
    frame = cfg.frame_samples(w.sample_rate)
    shift = cfg.shift_samples(w.sample_rate)
    n = num_frames(len(w.samples), frame, shift)
    if n == 0:
        raise InsufficientAudio(
            f"{len(w.samples)} samples is shorter than one {frame}-sample frame"
        )
    idx = np.arange(frame)[None, :] + shift * np.arange(n)[:, None]
    frames = w.samples[idx]
    # per-frame pre-emphasis; the first sample of each frame is scaled by (1 - k)
    emphasized = frames.copy()
    emphasized[:, 1:] -= cfg.preemphasis * frames[:, :-1]
    emphasized[:, 0] -= cfg.preemphasis * frames[:, 0]
    return emphasized * np.hamming(frame)


def _fft_size(frame: int) -> int:
    n = 1
    while n < frame:
        n *= 2
    return n


def mel_energies(w: Waveform, cfg: FrontendConfig = FrontendConfig()) -> np.ndarray:
    """Linear (pre-log) mel filterbank energies, shape (T, num_mel_filters)."""
    windowed = _frames(w, cfg)
    n_fft = _fft_size(windowed.shape[1])
    spectrum = np.abs(np.fft.rfft(windowed, n=n_fft, axis=1))
    fb = mel_filterbank(cfg.num_mel_filters, n_fft, w.sample_rate)
    return spectrum @ fb.T


def compute_mfcc(w: Waveform, cfg: FrontendConfig = FrontendConfig()) -> np.ndarray:
    """Static cepstra, shape (T, num_cepstra).

    Magnitude spectrum -> mel filterbank -> floored log -> orthonormal DCT-II,
    keeping the first ``num_cepstra`` coefficients.
    """
    log_mel = np.log(np.maximum(mel_energies(w, cfg), cfg.energy_floor))
    return dct(log_mel, type=2, norm="ortho", axis=1)[:, : cfg.num_cepstra]


def _regression_delta(f: np.ndarray, window: int) -> np.ndarray:
    T = f.shape[0]
    padded = np.concatenate([np.repeat(f[:1], window, axis=0), f, np.repeat(f[-1:], window, axis=0)])
    denom = 2.0 * sum(n * n for n in range(1, window + 1))
    out = np.zeros_like(f)
    for n in range(1, window + 1):
        out += n * (padded[window + n : window + n + T] - padded[window - n : window - n + T])
    return out / denom


def append_deltas(f: np.ndarray, window: int = 2) -> np.ndarray:
    """Stack static, delta and delta-delta blocks: (T, D) -> (T, 3D)."""
    if window < 1:
        raise InvalidConfig(f"delta window must be >= 1, got {window}")
    f = np.asarray(f, dtype=np.float64)
    if f.ndim != 2 or f.shape[0] == 0:
        raise InvalidInput("append_deltas needs a non-empty (T, D) matrix")
    d1 = _regression_delta(f, window)
    d2 = _regression_delta(d1, window)
    return np.hstack([f, d1, d2])


def apply_cmvn(f: np.ndarray) -> np.ndarray:
    """Utterance-level mean/variance normalization with population statistics.

    Constant columns have their variance floored and come out as zeros.
    """
    f = np.asarray(f, dtype=np.float64)
    if f.ndim != 2 or f.shape[0] < 2:
        raise InsufficientFrames("CMVN needs at least 2 frames")
    mean = f.mean(axis=0)
    var = np.maximum(f.var(axis=0), CMVN_VAR_FLOOR)
    centered = f - mean
    # the mean of identical values can miss them by an ulp
    centered[:, np.ptp(f, axis=0) == 0] = 0.0
    return centered / np.sqrt(var)


def extract_features(w: Waveform, cfg: FrontendConfig = FrontendConfig()) -> np.ndarray:
    """Full 39-dim (for the default config) normalized features."""
    return apply_cmvn(append_deltas(compute_mfcc(w, cfg), cfg.delta_window))


def read_wav(path) -> Waveform:
    """Read a mono 16-bit little-endian PCM WAV file."""
    path = Path(path)
    try:
        with wave.open(str(path), "rb") as wf:
            if wf.getnchannels() != 1 or wf.getsampwidth() != 2:
                raise InvalidInput(f"{path}: expected mono 16-bit PCM")
            rate = wf.getframerate()
            raw = wf.readframes(wf.getnframes())
    except FileNotFoundError as exc:
        raise IoError(f"{path}: no such file") from exc
    except wave.Error as exc:
        raise InvalidInput(f"{path}: {exc}") from exc
    samples = np.frombuffer(raw, dtype="<i2").astype(np.float64) / 32768.0
    return Waveform(samples, rate)


def write_wav(path, w: Waveform) -> None:
    pcm = np.clip(np.round(w.samples * 32768.0), -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as wf:
        wf.setnchannels(1)
        wf.setsampwidth(2)
        wf.setframerate(w.sample_rate)
        wf.writeframes(pcm.tobytes())


# --- frame-matrix files ----------------------------------------------------
# Comma-separated text: a header row "c0,c1,...,c{D-1}" followed by one row
# per frame in full-precision decimals. ``.npy`` files are accepted as well.

def write_frame_matrix(path, f: np.ndarray) -> None:
    f = np.asarray(f, dtype=np.float64)
    lines = [",".join(f"c{j}" for j in range(f.shape[1]))]
    lines.extend(",".join(repr(float(v)) for v in row) for row in f)
    Path(path).write_text("\n".join(lines) + "\n")


def read_frame_matrix(path) -> np.ndarray:
    path = Path(path)
    if not path.exists():
        raise IoError(f"{path}: no such file")
    if path.suffix == ".npy":
        f = np.load(path)
    else:
        lines = [ln for ln in path.read_text().splitlines() if ln.strip()]
        if not lines:
            raise InvalidInput(f"{path}: empty feature file")
        dim = len(lines[0].split(","))
        try:
            f = np.array([[float(v) for v in ln.split(",")] for ln in lines[1:]], dtype=np.float64)
        except ValueError as exc:
            raise InvalidInput(f"{path}: {exc}") from exc
        f = f.reshape(-1, dim)
    if f.ndim != 2 or not np.all(np.isfinite(f)):
        raise InvalidInput(f"{path}: feature matrix must be 2-D and finite")
    return f
