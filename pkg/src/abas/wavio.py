"""Bit-exact RIFF/WAVE PCM16 reading and writing.

The pipeline operates on 16 kHz mono 16-bit PCM only; anything else is
rejected with a precise message. Unknown RIFF chunks are skipped. Written
files carry the canonical 44-byte header.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dsp import AudioSignal, PIPELINE_RATE, ROLE_SPEECH

PCM16_SCALE = 32768.0


class WavFormatError(ValueError):
    pass


@dataclass
class WavSpec:
    sample_rate: int
    channels: int
    bits_per_sample: int
    data_length: int  # samples


def _parse(raw: bytes) -> tuple[WavSpec, bytes]:
    if len(raw) < 12 or raw[:4] != b"RIFF":
        raise WavFormatError("not a RIFF file")
    if raw[8:12] != b"WAVE":
        raise WavFormatError("not a WAVE file")
    pos = 12
    fmt = None
    data = None
    while pos + 8 <= len(raw):
        cid = raw[pos : pos + 4]
        (size,) = struct.unpack("<I", raw[pos + 4 : pos + 8])
        body = raw[pos + 8 : pos + 8 + size]
        if len(body) < size:
            if cid == b"data":
                raise WavFormatError("truncated data chunk")
            raise WavFormatError(f"truncated {cid!r} chunk")
        if cid == b"fmt ":
            fmt = body
        elif cid == b"data":
            data = body
        pos += 8 + size + (size & 1)  # chunks are word-aligned
    if fmt is None:
        raise WavFormatError("missing fmt chunk")
    if data is None:
        raise WavFormatError("missing data chunk")
    if len(fmt) < 16:
        raise WavFormatError("malformed fmt chunk")
    tag, channels, rate, _, _, bits = struct.unpack("<HHIIHH", fmt[:16])
    if tag != 1:
        raise WavFormatError(f"unsupported non-PCM format (tag {tag})")
    spec = WavSpec(rate, channels, bits, len(data) // 2)
    return spec, data


def probe_wav(path) -> WavSpec:
    """Header info without converting samples."""
    spec, _ = _parse(Path(path).read_bytes())
    return spec


def read_wav(path, role: str = ROLE_SPEECH) -> AudioSignal:
    """Load a 16 kHz mono PCM16 file; samples scaled by 1/32768 into [-1, 1)."""
    spec, data = _parse(Path(path).read_bytes())
    if spec.sample_rate != PIPELINE_RATE:
        raise WavFormatError(f"expected {PIPELINE_RATE} Hz, got {spec.sample_rate}")
    if spec.channels != 1:
        raise WavFormatError(f"expected mono, got {spec.channels} channels")
    if spec.bits_per_sample != 16:
        raise WavFormatError(f"expected 16-bit PCM, got {spec.bits_per_sample}")
    samples = np.frombuffer(data, dtype="<i2").astype(np.float32) / PCM16_SCALE
    return AudioSignal(samples, PIPELINE_RATE, role)


def write_wav(path, signal: AudioSignal):
    """Write PCM16 mono: clamp to [-1, 1 - 1/32768], round half away from zero."""
    x = np.asarray(signal.samples, dtype=np.float64)
    x = np.clip(x, -1.0, 1.0 - 1.0 / PCM16_SCALE)
    scaled = x * PCM16_SCALE
    pcm = np.where(scaled >= 0, np.floor(scaled + 0.5), np.ceil(scaled - 0.5)).astype("<i2")
    payload = pcm.tobytes()
    rate = signal.sample_rate
    header = b"RIFF"
    header += struct.pack("<I", 36 + len(payload))
    header += b"WAVE"
    header += b"fmt " + struct.pack("<IHHIIHH", 16, 1, 1, rate, rate * 2, 2, 16)
    header += b"data" + struct.pack("<I", len(payload))
    Path(path).write_bytes(header + payload)
