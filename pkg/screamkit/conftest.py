"""Shared pytest fixtures for screamkit tests."""

import struct
from pathlib import Path
from typing import Any

import numpy as np
import pytest

_FORMAT_TAGS = {"pcm16": (1, 16), "pcm24": (1, 24), "float32": (3, 32)}


def wav_bytes(
    data: np.ndarray,
    sample_rate: int,
    fmt: str = "pcm16",
    extensible: bool = False,
    extra_chunks: bytes = b"",
) -> bytes:
    """Encode (channels, n) or (n,) samples as a RIFF/WAVE byte string.

    Integer formats take integer sample values; float32 takes floats.
    """
    tag, bits = _FORMAT_TAGS[fmt]
    frames = np.atleast_2d(np.asarray(data))
    channels = frames.shape[0]
    interleaved = frames.T.ravel()
    if fmt == "pcm16":
        raw = interleaved.astype("<i2").tobytes()
    elif fmt == "pcm24":
        ints = interleaved.astype(np.int64) & 0xFFFFFF
        raw = b"".join(int(v).to_bytes(3, "little") for v in ints)
    else:
        raw = interleaved.astype("<f4").tobytes()
    block_align = channels * bits // 8
    if extensible:
        guid_tail = b"\x00\x00\x00\x00\x10\x00\x80\x00\x00\xaa\x00\x38\x9b\x71"
        fmt_body = struct.pack(
            "<HHIIHHHHI", 0xFFFE, channels, sample_rate, sample_rate * block_align,
            block_align, bits, 22, bits, 0,
        ) + struct.pack("<H", tag) + guid_tail
    else:
        fmt_body = struct.pack(
            "<HHIIHH", tag, channels, sample_rate, sample_rate * block_align, block_align, bits
        )
    body = (
        b"WAVE"
        + b"fmt " + struct.pack("<I", len(fmt_body)) + fmt_body
        + extra_chunks
        + b"data" + struct.pack("<I", len(raw)) + raw
    )
    if len(raw) % 2:
        body += b"\x00"
    return b"RIFF" + struct.pack("<I", len(body)) + body


def sine(freq: float, seconds: float, sample_rate: int = 44100, amplitude: float = 1.0) -> np.ndarray:
    t = np.arange(round(seconds * sample_rate)) / sample_rate
    return amplitude * np.sin(2 * np.pi * freq * t)


@pytest.fixture
def wav_factory(tmp_path: Path) -> Any:
    """Factory fixture writing WAV files into the test's temp directory.

    Example:
        def test_something(wav_factory):
            path = wav_factory.create("tone.wav", ints, 44100, fmt="pcm24")
    """

    class WavFactory:
        def __init__(self, tmp_path: Path) -> None:
            self.tmp_path = tmp_path

        def encode(self, data: np.ndarray, sample_rate: int, **kwargs: Any) -> bytes:
            return wav_bytes(data, sample_rate, **kwargs)

        def create(self, filename: str, data: np.ndarray, sample_rate: int, **kwargs: Any) -> Path:
            path = self.tmp_path / filename
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_bytes(wav_bytes(data, sample_rate, **kwargs))
            return path

        def create_float(self, filename: str, samples: np.ndarray, sample_rate: int = 44100) -> Path:
            """Write float samples in [-1, 1] as 16-bit PCM."""
            ints = np.round(np.clip(samples, -1, 1) * 32767).astype(np.int64)
            return self.create(filename, ints, sample_rate)

    return WavFactory(tmp_path)


@pytest.fixture
def text_factory(tmp_path: Path) -> Any:
    """Factory fixture for small CSV and JSON-Lines inputs."""

    class TextFactory:
        def __init__(self, tmp_path: Path) -> None:
            self.tmp_path = tmp_path

        def create(self, filename: str, content: str) -> Path:
            path = self.tmp_path / filename
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_text(content)
            return path

        def create_lines(self, filename: str, lines: list[str]) -> Path:
            return self.create(filename, "".join(f"{line}\n" for line in lines))

        def get_path(self, filename: str) -> Path:
            return self.tmp_path / filename

    return TextFactory(tmp_path)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(12345)
