"""Mono waveforms, WAV file I/O, and the signal primitives behind contamination.

Everything here is a pure function of its inputs (plus an explicit seed where
randomness is involved); no global RNG state is touched.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np
from scipy.signal import butter, lfilter

from .errors import (
    DegenerateSignalError,
    ParameterError,
    SampleRateError,
    UnsupportedWavError,
    WavFormatError,
)

DEFAULT_SAMPLE_RATE_HZ = 16_000

PCM16_SCALE = 32768  # int16 full scale; read maps q -> q / 32768

ROOM_CLASSES = ("small", "medium", "large")

_WAVE_FORMAT_PCM = 1
_WAVE_FORMAT_IEEE_FLOAT = 3


@dataclass
class Waveform:
    """Mono audio: float samples (nominally in [-1, 1]) at a fixed rate."""

    samples: np.ndarray
    sample_rate_hz: int = DEFAULT_SAMPLE_RATE_HZ

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1 or self.samples.size == 0:
            raise ValueError("waveform must be a nonempty 1-D sample sequence")
        if not np.all(np.isfinite(self.samples)):
            raise ValueError("waveform samples must be finite")
        if self.sample_rate_hz <= 0:
            raise ValueError("sample_rate_hz must be positive")

    def __len__(self) -> int:
        return self.samples.size

    @property
    def duration_s(self) -> float:
        return self.samples.size / self.sample_rate_hz


@dataclass
class RoomImpulseResponse:
    """Finite impulse response simulating a room, tagged by rough room size."""

    taps: np.ndarray
    sample_rate_hz: int = DEFAULT_SAMPLE_RATE_HZ
    room_class: str = "medium"

    def __post_init__(self):
        self.taps = np.asarray(self.taps, dtype=np.float64)
        if self.taps.ndim != 1 or self.taps.size == 0:
            raise ValueError("impulse response must be a nonempty 1-D tap sequence")
        if not np.all(np.isfinite(self.taps)):
            raise ValueError("impulse response taps must be finite")
        if not np.any(self.taps):
            raise DegenerateSignalError("impulse response has no nonzero tap")
        if self.sample_rate_hz <= 0:
            raise ValueError("sample_rate_hz must be positive")
        if self.room_class not in ROOM_CLASSES:
            raise ValueError(f"room_class must be one of {ROOM_CLASSES}")


def _require_same_rate(a_hz: int, b_hz: int):
    if a_hz != b_hz:
        raise SampleRateError(f"sample-rate mismatch: {a_hz} Hz vs {b_hz} Hz")


def read_wav(path) -> Waveform:
    """Read a RIFF/WAVE file (PCM16 or float32, any channel count) as mono.

    Multichannel input is averaged down to one channel; 16-bit integers map
    to [-1, 1) through division by 32768.
    """
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < 12 or data[:4] != b"RIFF" or data[8:12] != b"WAVE":
        raise WavFormatError(f"{path}: not a RIFF/WAVE file")

    fmt = None
    payload = None
    pos = 12
    while pos + 8 <= len(data):
        chunk_id = data[pos : pos + 4]
        (chunk_size,) = struct.unpack_from("<I", data, pos + 4)
        body = data[pos + 8 : pos + 8 + chunk_size]
        if chunk_id == b"fmt ":
            if chunk_size < 16:
                raise WavFormatError(f"{path}: fmt chunk too short")
            fmt = struct.unpack_from("<HHIIHH", body, 0)
        elif chunk_id == b"data":
            if len(body) < chunk_size:
                raise WavFormatError(f"{path}: data chunk truncated")
            payload = body
        pos += 8 + chunk_size + (chunk_size & 1)  # chunks are word-aligned

    if fmt is None or payload is None:
        raise WavFormatError(f"{path}: missing fmt or data chunk")
    audio_format, n_channels, rate, _byte_rate, _block_align, bits = fmt
    if n_channels < 1:
        raise WavFormatError(f"{path}: channel count {n_channels}")

    if audio_format == _WAVE_FORMAT_PCM:
        if bits != 16:
            raise UnsupportedWavError(f"{path}: {bits}-bit PCM not supported (16 only)")
        dtype, width = np.dtype("<i2"), 2
    elif audio_format == _WAVE_FORMAT_IEEE_FLOAT:
        if bits != 32:
            raise UnsupportedWavError(f"{path}: {bits}-bit float not supported (32 only)")
        dtype, width = np.dtype("<f4"), 4
    else:
        raise UnsupportedWavError(f"{path}: codec {audio_format} not supported")

    frame_bytes = width * n_channels
    if len(payload) == 0:
        raise WavFormatError(f"{path}: no audio frames")
    if len(payload) % frame_bytes != 0:
        raise WavFormatError(f"{path}: data chunk ends mid-sample")

    raw = np.frombuffer(payload, dtype=dtype).astype(np.float64)
    if audio_format == _WAVE_FORMAT_PCM:
        raw = raw / PCM16_SCALE
    mono = raw.reshape(-1, n_channels).mean(axis=1)
    return Waveform(mono, int(rate))


def write_wav(w: Waveform, path):
    """Write mono PCM16; samples outside [-1, 1] are clamped."""
    clamped = np.clip(w.samples, -1.0, 1.0)
    quantized = np.clip(np.rint(clamped * PCM16_SCALE), -32768, 32767).astype("<i2")
    body = quantized.tobytes()
    header = b"".join(
        [
            b"RIFF",
            struct.pack("<I", 36 + len(body)),
            b"WAVE",
            b"fmt ",
            struct.pack("<IHHIIHH", 16, _WAVE_FORMAT_PCM, 1, w.sample_rate_hz,
                        w.sample_rate_hz * 2, 2, 16),
            b"data",
            struct.pack("<I", len(body)),
        ]
    )
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(body)


def rms(w: Waveform) -> float:
    """Root-mean-square level over the full signal."""
    return float(np.sqrt(np.mean(np.square(w.samples))))


def _fit_to_length(noise: np.ndarray, n: int, rng: np.random.Generator) -> np.ndarray:
    """Crop (random offset) or wrap-tile the noise to exactly n samples."""
    if noise.size > n:
        offset = int(rng.integers(0, noise.size - n + 1))
        return noise[offset : offset + n]
    if noise.size < n:
        reps = -(-n // noise.size)
        return np.tile(noise, reps)[:n]
    return noise


def mix_at_snr(clean: Waveform, noise: Waveform, snr_db: float, seed: int) -> Waveform:
    """Add noise scaled so the full-utterance RMS power ratio hits snr_db exactly.

    Noise longer than the clean signal is cropped at a seeded random offset;
    shorter noise is tiled by wrapping. The gain applied to the fitted noise is
    rms(clean) / (rms(noise) * 10^(snr_db/20)), so recomputing the SNR from the
    two addends reproduces snr_db up to floating rounding.
    """
    _require_same_rate(clean.sample_rate_hz, noise.sample_rate_hz)
    clean_rms = rms(clean)
    if clean_rms == 0.0:
        raise DegenerateSignalError("clean signal has zero RMS")
    rng = np.random.default_rng(seed)
    fitted = _fit_to_length(noise.samples, len(clean), rng)
    noise_rms = float(np.sqrt(np.mean(np.square(fitted))))
    if noise_rms == 0.0:
        raise DegenerateSignalError("noise signal has zero RMS over the mixed span")
    gain = clean_rms / (noise_rms * 10.0 ** (snr_db / 20.0))
    return Waveform(clean.samples + gain * fitted, clean.sample_rate_hz)


def convolve_rir(clean: Waveform, rir: RoomImpulseResponse) -> Waveform:
    """Convolve with a room impulse response, keep the input length and level.

    The full linear convolution is truncated to the input length and rescaled
    so the output RMS equals the input RMS; a unit-impulse response is the
    exact identity.
    """
    _require_same_rate(clean.sample_rate_hz, rir.sample_rate_hz)
    if not np.any(rir.taps):
        raise DegenerateSignalError("impulse response has no nonzero tap")
    wet = np.convolve(clean.samples, rir.taps)[: len(clean)]
    wet_rms = float(np.sqrt(np.mean(np.square(wet))))
    if wet_rms == 0.0:
        raise DegenerateSignalError("convolution output has zero RMS")
    return Waveform(wet * (rms(clean) / wet_rms), clean.sample_rate_hz)


def white_noise(
    length: int,
    seed: int,
    narrowband: bool = False,
    sample_rate_hz: int = DEFAULT_SAMPLE_RATE_HZ,
    cutoff_hz: float = 2000.0,
    filter_order: int = 4,
) -> Waveform:
    """Seeded standard-normal noise, optionally low-passed to a narrow band.

    The narrowband variant applies a 4th-order Butterworth low-pass at 2 kHz
    (both configurable); the generator output is identical for a fixed seed.
    """
    if length <= 0:
        raise ParameterError(f"noise length must be positive, got {length}")
    rng = np.random.default_rng(seed)
    samples = rng.standard_normal(length)
    if narrowband:
        b, a = butter(filter_order, cutoff_hz / (sample_rate_hz / 2.0), btype="low")
        samples = lfilter(b, a, samples)
    return Waveform(samples, sample_rate_hz)
