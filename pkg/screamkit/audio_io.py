"""
Decode, resample, downmix and normalise audio into canonical clips.

The canonical clip used by the rest of the pipeline is 44100 Hz mono with a
peak amplitude of 1.0. Only RIFF/WAVE containers holding PCM16, PCM24 or
IEEE float32 samples are accepted; other encodings are refused rather than
approximated.
"""

import logging
import struct
from dataclasses import dataclass, field
from math import gcd
from pathlib import Path

import numpy as np
from scipy import signal

logger = logging.getLogger(__name__)

CANONICAL_RATE = 44100

WAVE_FORMAT_PCM = 0x0001
WAVE_FORMAT_IEEE_FLOAT = 0x0003
WAVE_FORMAT_EXTENSIBLE = 0xFFFE
SUPPORTED_FORMATS = {(WAVE_FORMAT_PCM, 16), (WAVE_FORMAT_PCM, 24), (WAVE_FORMAT_IEEE_FLOAT, 32)}

# Resampler filter design
KAISER_BETA = 8.6
TAPS_PER_PHASE = 64

##########
# ERRORS #
##########


class AudioClipError(ValueError):
    """Raised when an AudioClip would violate its invariants."""


class WavDecodeError(ValueError):
    """Base class for WAV decoding failures."""


class WavHeaderError(WavDecodeError):
    """The RIFF/WAVE header or chunk structure is malformed."""


class UnsupportedCodecError(WavDecodeError):
    """The file uses a sample format other than PCM16, PCM24 or float32."""


class TruncatedDataError(WavDecodeError):
    """The data chunk is shorter than its header declares."""


#########
# TYPES #
#########


@dataclass(frozen=True)
class AudioClip:
    """Decoded audio: samples are (channels x length), read-only."""

    samples: np.ndarray
    sample_rate: int
    source_id: str = field(default="")

    def __post_init__(self) -> None:
        samples = np.array(self.samples, dtype=np.float64)
        if samples.ndim == 1:
            samples = samples[np.newaxis, :]
        if samples.ndim != 2 or samples.shape[0] < 1:
            raise AudioClipError(
                f"Clip samples must be (channels x length); got shape {samples.shape}"
            )
        if not isinstance(self.sample_rate, int | np.integer) or self.sample_rate <= 0:
            raise AudioClipError(f"Sample rate must be a positive integer: {self.sample_rate}")
        if not np.all(np.isfinite(samples)):
            raise AudioClipError(f"Clip {self.source_id!r} contains non-finite samples.")
        samples.flags.writeable = False
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "sample_rate", int(self.sample_rate))

    @property
    def n_channels(self) -> int:
        return int(self.samples.shape[0])

    @property
    def length(self) -> int:
        return int(self.samples.shape[1])

    @property
    def duration(self) -> float:
        return self.length / self.sample_rate


############
# DECODING #
############


def _read_chunks(data: bytes) -> dict[bytes, bytes]:
    """Split a RIFF/WAVE byte stream into its top-level chunks.

    The data chunk may be shorter than declared; that case is left for the
    caller to report as truncation, so only its available bytes are kept.
    """
    if len(data) < 12:
        raise WavHeaderError("File is too short to hold a RIFF/WAVE header.")
    riff, _, wave = struct.unpack("<4sI4s", data[:12])
    if riff != b"RIFF" or wave != b"WAVE":
        raise WavHeaderError("Missing RIFF/WAVE signature.")
    chunks: dict[bytes, bytes] = {}
    declared: dict[bytes, int] = {}
    offset = 12
    while offset + 8 <= len(data):
        chunk_id, size = struct.unpack("<4sI", data[offset : offset + 8])
        body = data[offset + 8 : offset + 8 + size]
        if chunk_id not in chunks:
            chunks[chunk_id] = body
            declared[chunk_id] = size
        if chunk_id == b"data" and len(body) < size:
            break
        # Chunks are word-aligned
        offset += 8 + size + (size % 2)
    if b"fmt " not in chunks:
        raise WavHeaderError("No 'fmt ' chunk found.")
    if b"data" not in chunks:
        raise WavHeaderError("No 'data' chunk found.")
    if len(chunks[b"data"]) < declared[b"data"]:
        raise TruncatedDataError(
            f"Data chunk declares {declared[b'data']} bytes but only "
            f"{len(chunks[b'data'])} are present."
        )
    return chunks


def _parse_format(fmt: bytes) -> tuple[int, int, int, int]:
    """Return (format tag, channels, sample rate, bits per sample)."""
    if len(fmt) < 16:
        raise WavHeaderError(f"'fmt ' chunk is too short ({len(fmt)} bytes).")
    tag, channels, rate, _, block_align, bits = struct.unpack("<HHIIHH", fmt[:16])
    if tag == WAVE_FORMAT_EXTENSIBLE:
        if len(fmt) < 26:
            raise WavHeaderError("Extensible 'fmt ' chunk is missing its sub-format.")
        # The first two bytes of the sub-format GUID hold the real format tag
        (tag,) = struct.unpack("<H", fmt[24:26])
    if channels < 1:
        raise WavHeaderError(f"Invalid channel count: {channels}")
    if rate < 1:
        raise WavHeaderError(f"Invalid sample rate: {rate}")
    if (tag, bits) not in SUPPORTED_FORMATS:
        raise UnsupportedCodecError(
            f"Unsupported sample format: tag=0x{tag:04x}, bits={bits}. "
            "Expected PCM16, PCM24 or float32."
        )
    if block_align != channels * bits // 8:
        raise WavHeaderError(
            f"Block alignment {block_align} does not match {channels} x {bits}-bit samples."
        )
    return tag, channels, rate, bits


def _decode_samples(raw: bytes, tag: int, bits: int) -> np.ndarray:
    """Decode interleaved little-endian samples to float64 in [-1, 1]."""
    if tag == WAVE_FORMAT_IEEE_FLOAT:
        values = np.frombuffer(raw, dtype="<f4").astype(np.float64)
        if not np.all(np.isfinite(values)):
            raise WavHeaderError("Float data chunk contains non-finite samples.")
        return values
    if bits == 16:
        return np.frombuffer(raw, dtype="<i2").astype(np.float64) / 32768.0
    # 24-bit: assemble three little-endian bytes and sign-extend
    triples = np.frombuffer(raw, dtype=np.uint8).reshape(-1, 3).astype(np.int32)
    values = triples[:, 0] | (triples[:, 1] << 8) | (triples[:, 2] << 16)
    values = np.where(values & 0x800000, values - (1 << 24), values)
    return values.astype(np.float64) / 8388608.0


def decode_wav(data: bytes, source_id: str = "") -> AudioClip:
    """Decode a RIFF/WAVE byte stream into an AudioClip.

    Integer PCM is scaled linearly by 2^(bits-1), so 16384 maps to 0.5 and
    -32768 to -1.0. Float32 samples pass through unchanged.

    Raises:
        WavHeaderError: malformed header or chunk layout.
        UnsupportedCodecError: anything but PCM16, PCM24 or float32.
        TruncatedDataError: data chunk cut short.
    """
    chunks = _read_chunks(data)
    tag, channels, rate, bits = _parse_format(chunks[b"fmt "])
    raw = chunks[b"data"]
    frame_bytes = channels * bits // 8
    if len(raw) % frame_bytes != 0:
        raise TruncatedDataError(
            f"Data chunk holds {len(raw)} bytes, not a whole number of "
            f"{frame_bytes}-byte frames."
        )
    values = _decode_samples(raw, tag, bits)
    samples = values.reshape(-1, channels).T
    logger.debug(
        f"Decoded {source_id or '<bytes>'}: {channels} channel(s), {rate} Hz, "
        f"{bits}-bit, {samples.shape[1]} frames"
    )
    return AudioClip(samples=samples, sample_rate=rate, source_id=source_id)


def load_audio(path: str | Path) -> AudioClip:
    """Read a WAV file from disk; the source id is the file stem."""
    path = Path(path)
    return decode_wav(path.read_bytes(), source_id=path.stem)


##############
# PROCESSING #
##############


def resampled_length(n_samples: int, source_rate: int, target_rate: int) -> int:
    """round(n * target / source), with halves rounded up."""
    return (2 * n_samples * target_rate + source_rate) // (2 * source_rate)


def design_resampling_filter(up: int, down: int) -> np.ndarray:
    """Kaiser-windowed sinc low-pass with TAPS_PER_PHASE taps per polyphase branch."""
    max_rate = max(up, down)
    half_len = TAPS_PER_PHASE * max_rate // 2
    return signal.firwin(
        2 * half_len + 1, 1.0 / max_rate, window=("kaiser", KAISER_BETA)
    )


def resample(clip: AudioClip, target_rate: int) -> AudioClip:
    """Band-limited polyphase resampling to target_rate.

    Output length is round(n * target / source). Identical rates return the
    input samples untouched.
    """
    if target_rate <= 0:
        raise AudioClipError(f"Target rate must be positive: {target_rate}")
    if clip.sample_rate == target_rate:
        return clip
    divisor = gcd(target_rate, clip.sample_rate)
    up, down = target_rate // divisor, clip.sample_rate // divisor
    n_out = resampled_length(clip.length, clip.sample_rate, target_rate)
    if clip.length == 0:
        out = np.zeros((clip.n_channels, 0))
    else:
        taps = design_resampling_filter(up, down)
        out = signal.resample_poly(
            clip.samples, up, down, axis=1, window=taps, padtype="line"
        )[:, :n_out]
    logger.debug(
        f"Resampled {clip.source_id}: {clip.sample_rate} Hz -> {target_rate} Hz "
        f"({clip.length} -> {out.shape[1]} samples)"
    )
    return AudioClip(samples=out, sample_rate=target_rate, source_id=clip.source_id)


def downmix_mono(clip: AudioClip) -> AudioClip:
    """Unweighted mean across channels."""
    if clip.n_channels == 1:
        return clip
    mono = clip.samples.mean(axis=0, keepdims=True)
    return AudioClip(samples=mono, sample_rate=clip.sample_rate, source_id=clip.source_id)


def peak_normalize(clip: AudioClip) -> AudioClip:
    """Scale so max |sample| is 1.0; all-zero clips come back unchanged."""
    peak = float(np.max(np.abs(clip.samples))) if clip.length else 0.0
    if peak == 0.0 or peak == 1.0:
        return clip
    scaled = np.clip(clip.samples / peak, -1.0, 1.0)
    return AudioClip(samples=scaled, sample_rate=clip.sample_rate, source_id=clip.source_id)


def prepare_clip(clip: AudioClip, target_rate: int = CANONICAL_RATE) -> AudioClip:
    """Canonical chain: resample, downmix to mono, peak-normalise."""
    return peak_normalize(downmix_mono(resample(clip, target_rate)))
