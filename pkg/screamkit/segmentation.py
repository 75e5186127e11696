"""Slice canonical clips into overlapping fixed-length observation blocks."""

import logging
from dataclasses import dataclass

import numpy as np

from screamkit.audio_io import CANONICAL_RATE, AudioClip

logger = logging.getLogger(__name__)

DEFAULT_BLOCK_LEN = 2.0
DEFAULT_HOP = 1.0


class SegmentationError(ValueError):
    """Raised for clips or block parameters that cannot be segmented."""


@dataclass(frozen=True)
class Block:
    """One observation window cut from a mono clip.

    samples is a read-only view into the clip's sample buffer.
    """

    samples: np.ndarray
    start_time: float
    source_id: str
    block_index: int
    sample_rate: int = CANONICAL_RATE

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate


def block_count(n_samples: int, block_samples: int, hop_samples: int) -> int:
    """Number of whole blocks that fit; trailing partial blocks are dropped."""
    if block_samples < 1 or hop_samples < 1:
        raise SegmentationError(
            f"Block and hop must span at least one sample: block={block_samples}, hop={hop_samples}"
        )
    if n_samples < block_samples:
        return 0
    return (n_samples - block_samples) // hop_samples + 1


def make_blocks(
    clip: AudioClip,
    block_len: float = DEFAULT_BLOCK_LEN,
    hop: float = DEFAULT_HOP,
    expected_rate: int = CANONICAL_RATE,
) -> list[Block]:
    """
    Cut a canonical clip into blocks starting at 0, hop, 2*hop, ...
    Hops are rounded to whole samples and start times follow the rounded hop.
    Args:
        clip: Mono clip at expected_rate.
        block_len: Block length in seconds.
        hop: Hop between block starts in seconds (0 < hop <= block_len).
        expected_rate: Sample rate the clip must have.
    Returns:
        Blocks in time order. A clip shorter than block_len yields none.
    Raises:
        SegmentationError: on stereo clips, a wrong sample rate or bad lengths.
    """
    if clip.n_channels != 1:
        raise SegmentationError(
            f"Clip {clip.source_id!r} has {clip.n_channels} channels; expected mono."
        )
    if clip.sample_rate != expected_rate:
        raise SegmentationError(
            f"Clip {clip.source_id!r} is at {clip.sample_rate} Hz; expected {expected_rate} Hz."
        )
    if block_len <= 0:
        raise SegmentationError(f"Block length must be positive: {block_len}")
    if not 0 < hop <= block_len:
        raise SegmentationError(
            f"Hop must satisfy 0 < hop <= block length ({block_len}): {hop}"
        )
    block_samples = round(block_len * clip.sample_rate)
    hop_samples = round(hop * clip.sample_rate)
    if block_samples < 1 or hop_samples < 1:
        raise SegmentationError(
            f"Block length {block_len} s and hop {hop} s must each span at least one "
            f"sample at {clip.sample_rate} Hz."
        )
    samples = clip.samples[0]
    count = block_count(clip.length, block_samples, hop_samples)
    blocks = [
        Block(
            samples=samples[i * hop_samples : i * hop_samples + block_samples],
            start_time=i * hop_samples / clip.sample_rate,
            source_id=clip.source_id,
            block_index=i,
            sample_rate=clip.sample_rate,
        )
        for i in range(count)
    ]
    logger.debug(f"Cut {count} block(s) from {clip.source_id} ({clip.duration:.2f} s)")
    return blocks
