"""
Frame-level analysis of observation blocks.

Computes the magnitude STFT, mel and log-mel spectrograms, MFCCs and their
deltas, and the low-level descriptors (RMS, zero-crossing rate, spectral
centroid, contrast, flatness and roll-off). Frames are Hann-windowed and
centred with reflect padding, so a block of n samples analysed with hop h
always yields 1 + n // h frames.
"""

###########
# IMPORTS #
###########

import logging
from dataclasses import dataclass
from functools import cache

import librosa
import numpy as np
from scipy import fft

from screamkit.segmentation import Block

logger = logging.getLogger(__name__)

# Descriptor order used by aggregation
DESCRIPTOR_ORDER = (
    "mfcc",
    "delta_mfcc",
    "rms",
    "zcr",
    "centroid",
    "contrast",
    "flatness",
    "rolloff",
)


class FeatureParameterError(ValueError):
    """Raised for invalid analysis parameters or degenerate inputs."""


#########
# TYPES #
#########


@dataclass(frozen=True)
class DspParams:
    """Analysis constants shared by every feature set."""

    sample_rate: int = 44100
    n_fft: int = 2048
    hop_length: int = 1024
    n_mels: int = 128
    fmin: float = 0.0
    fmax: float | None = None
    power_floor: float = 1e-10
    mel_power: float = 2.0
    n_mfcc: int = 13
    delta_width: int = 9
    contrast_bands: int = 6
    contrast_fmin: float = 200.0
    contrast_quantile: float = 0.02
    rolloff: float = 0.85

    @property
    def nyquist(self) -> float:
        return self.sample_rate / 2.0

    @property
    def mel_fmax(self) -> float:
        return self.nyquist if self.fmax is None else float(self.fmax)

    def validate(self) -> None:
        """Check every constant; raises FeatureParameterError on the first problem."""
        check_window(self.n_fft, self.hop_length)
        check_mel_range(self.n_mels, self.fmin, self.mel_fmax, self.sample_rate)
        check_delta_width(self.delta_width)
        if not 1 <= self.n_mfcc <= self.n_mels:
            raise FeatureParameterError(
                f"n_mfcc must lie in [1, n_mels={self.n_mels}]: {self.n_mfcc}"
            )
        if self.power_floor <= 0:
            raise FeatureParameterError(f"Power floor must be positive: {self.power_floor}")
        if not 0 < self.rolloff < 1:
            raise FeatureParameterError(f"Roll-off fraction must lie in (0, 1): {self.rolloff}")
        check_contrast_layout(
            self.contrast_bands, self.contrast_fmin, self.contrast_quantile, self.sample_rate
        )


@dataclass(frozen=True)
class Spectrogram:
    """Magnitude STFT, shape (n_fft // 2 + 1, frames)."""

    magnitudes: np.ndarray
    bin_freqs: np.ndarray
    frame_hop: int
    window_size: int
    sample_rate: int

    @property
    def n_frames(self) -> int:
        return int(self.magnitudes.shape[1])

    @property
    def power(self) -> np.ndarray:
        return self.magnitudes**2


@dataclass(frozen=True)
class LogMelSpectrogram:
    """Mel-band energies, shape (n_mels, frames).

    log_scaled is False for the power values returned by mel_spectrogram and
    True once log_compress has been applied.
    """

    values: np.ndarray
    n_mels: int
    fmin: float
    fmax: float
    norm: str = "slaney"
    power_floor: float = 1e-10
    log_scaled: bool = False

    @property
    def n_frames(self) -> int:
        return int(self.values.shape[1])


@dataclass(frozen=True)
class FrameSeries:
    """One named descriptor, shape (dims, frames)."""

    name: str
    values: np.ndarray

    @property
    def dims(self) -> int:
        return int(self.values.shape[0])

    @property
    def n_frames(self) -> int:
        return int(self.values.shape[1])


##############
# VALIDATION #
##############


def check_window(window: int, hop: int) -> None:
    if window < 2 or window & (window - 1):
        raise FeatureParameterError(f"Window size must be a power of two: {window}")
    if not 0 < hop <= window:
        raise FeatureParameterError(f"Hop must satisfy 0 < hop <= window ({window}): {hop}")


def check_mel_range(n_mels: int, fmin: float, fmax: float, sample_rate: int) -> None:
    if n_mels < 1:
        raise FeatureParameterError(f"n_mels must be at least 1: {n_mels}")
    if fmin < 0 or not fmin < fmax <= sample_rate / 2.0:
        raise FeatureParameterError(
            f"Mel band edges must satisfy 0 <= fmin < fmax <= {sample_rate / 2.0}: "
            f"fmin={fmin}, fmax={fmax}"
        )


def check_delta_width(width: int) -> None:
    if width < 3 or width % 2 == 0:
        raise FeatureParameterError(f"Delta width must be odd and at least 3: {width}")


def check_contrast_layout(n_bands: int, fmin: float, quantile: float, sample_rate: int) -> None:
    if n_bands < 1:
        raise FeatureParameterError(f"Contrast needs at least one sub-band: {n_bands}")
    if fmin <= 0:
        raise FeatureParameterError(f"Contrast fmin must be positive: {fmin}")
    if not 0 < quantile < 1:
        raise FeatureParameterError(f"Contrast quantile must lie in (0, 1): {quantile}")
    top_edge = fmin * 2.0 ** (n_bands - 1)
    if top_edge >= sample_rate / 2.0:
        raise FeatureParameterError(
            f"{n_bands} octave bands from {fmin} Hz exceed the Nyquist frequency "
            f"({sample_rate / 2.0} Hz)."
        )


def _samples(block: Block | np.ndarray) -> np.ndarray:
    """Extract a 1-D float64 sample array from a Block or raw array."""
    samples = block.samples if isinstance(block, Block) else np.asarray(block)
    samples = np.asarray(samples, dtype=np.float64)
    if samples.ndim != 1:
        raise FeatureParameterError(f"Expected 1-D samples; got shape {samples.shape}")
    if samples.size < 1:
        raise FeatureParameterError("Block holds no samples.")
    return samples


def _frames(samples: np.ndarray, window: int, hop: int) -> np.ndarray:
    """Centred, reflect-padded frames, shape (window, 1 + n // hop)."""
    padded = np.pad(samples, window // 2, mode="reflect")
    return librosa.util.frame(padded, frame_length=window, hop_length=hop)


################
# SPECTROGRAMS #
################


def fft_frequencies(sample_rate: int, n_fft: int) -> np.ndarray:
    """Centre frequency of every STFT bin in Hz."""
    return np.asarray(librosa.fft_frequencies(sr=sample_rate, n_fft=n_fft), dtype=np.float64)


def mel_band_centers(n_mels: int, fmin: float, fmax: float) -> np.ndarray:
    """Centre frequency of every mel filter in Hz (Slaney mel scale)."""
    edges = librosa.mel_frequencies(n_mels=n_mels + 2, fmin=fmin, fmax=fmax, htk=False)
    return np.asarray(edges[1:-1], dtype=np.float64)


def stft(
    block: Block | np.ndarray,
    window: int = 2048,
    hop: int = 1024,
    sample_rate: int = 44100,
) -> Spectrogram:
    """Hann-windowed, centred magnitude STFT."""
    check_window(window, hop)
    samples = _samples(block)
    spectrum = librosa.stft(
        samples,
        n_fft=window,
        hop_length=hop,
        window="hann",
        center=True,
        pad_mode="reflect",
    )
    return Spectrogram(
        magnitudes=np.abs(spectrum),
        bin_freqs=fft_frequencies(sample_rate, window),
        frame_hop=hop,
        window_size=window,
        sample_rate=sample_rate,
    )


@cache
def mel_filterbank(
    sample_rate: int, n_fft: int, n_mels: int, fmin: float, fmax: float
) -> np.ndarray:
    """Slaney-normalised triangular filters, shape (n_mels, n_fft // 2 + 1).

    Cached and returned read-only so one bank is shared by every block.
    """
    check_mel_range(n_mels, fmin, fmax, sample_rate)
    bank = librosa.filters.mel(
        sr=sample_rate,
        n_fft=n_fft,
        n_mels=n_mels,
        fmin=fmin,
        fmax=fmax,
        htk=False,
        norm="slaney",
        dtype=np.float64,
    )
    bank.flags.writeable = False
    return bank


def mel_spectrogram(
    spec: Spectrogram,
    n_mels: int = 128,
    fmin: float = 0.0,
    fmax: float | None = None,
    power: float = 2.0,
) -> LogMelSpectrogram:
    """Apply the mel filterbank to |X|^power (before any log compression)."""
    top = spec.sample_rate / 2.0 if fmax is None else float(fmax)
    bank = mel_filterbank(spec.sample_rate, spec.window_size, n_mels, float(fmin), top)
    values = bank @ (spec.magnitudes**power)
    return LogMelSpectrogram(values=values, n_mels=n_mels, fmin=float(fmin), fmax=top)


def log_compress(mel: LogMelSpectrogram, floor: float = 1e-10) -> LogMelSpectrogram:
    """Natural log after flooring; silence maps to log(floor) everywhere."""
    if floor <= 0:
        raise FeatureParameterError(f"Power floor must be positive: {floor}")
    if mel.log_scaled:
        raise FeatureParameterError("Mel spectrogram is already log-compressed.")
    return LogMelSpectrogram(
        values=np.log(np.maximum(mel.values, floor)),
        n_mels=mel.n_mels,
        fmin=mel.fmin,
        fmax=mel.fmax,
        norm=mel.norm,
        power_floor=floor,
        log_scaled=True,
    )


###########
# CEPSTRA #
###########


def mfcc(logmel: LogMelSpectrogram, n_coeffs: int = 13) -> FrameSeries:
    """Orthonormal DCT-II over the mel axis, keeping the first n_coeffs."""
    if not 1 <= n_coeffs <= logmel.n_mels:
        raise FeatureParameterError(
            f"n_coeffs must lie in [1, n_mels={logmel.n_mels}]: {n_coeffs}"
        )
    coeffs = fft.dct(logmel.values, type=2, norm="ortho", axis=0)[:n_coeffs]
    return FrameSeries(name="mfcc", values=coeffs)


def delta(series: FrameSeries, width: int = 9) -> FrameSeries:
    """Local least-squares slope over `width` frames with edge replication."""
    check_delta_width(width)
    if series.n_frames < 1:
        raise FeatureParameterError(f"Series {series.name!r} has no frames.")
    slopes = librosa.feature.delta(
        series.values, width=width, order=1, axis=-1, mode="nearest"
    )
    return FrameSeries(name=f"delta_{series.name}", values=slopes)


#####################
# TEMPORAL FEATURES #
#####################


def frame_rms(block: Block | np.ndarray, window: int = 2048, hop: int = 1024) -> FrameSeries:
    check_window(window, hop)
    frames = _frames(_samples(block), window, hop)
    return FrameSeries(name="rms", values=np.sqrt(np.mean(frames**2, axis=0, keepdims=True)))


def frame_zcr(block: Block | np.ndarray, window: int = 2048, hop: int = 1024) -> FrameSeries:
    """Sign changes between adjacent samples divided by (window - 1).

    Zero counts as positive.
    """
    check_window(window, hop)
    frames = _frames(_samples(block), window, hop)
    signs = np.signbit(frames)
    crossings = np.count_nonzero(signs[1:] != signs[:-1], axis=0)
    return FrameSeries(name="zcr", values=(crossings / (window - 1))[np.newaxis, :])


#####################
# SPECTRAL FEATURES #
#####################


def spectral_centroid(spec: Spectrogram) -> FrameSeries:
    """Magnitude-weighted mean bin frequency; 0 for silent frames."""
    total = spec.magnitudes.sum(axis=0)
    weighted = spec.bin_freqs @ spec.magnitudes
    centroid = np.divide(weighted, total, out=np.zeros_like(total), where=total > 0)
    return FrameSeries(name="centroid", values=centroid[np.newaxis, :])


def spectral_flatness(spec: Spectrogram, floor: float = 1e-10) -> FrameSeries:
    """Geometric over arithmetic mean of the floored power spectrum."""
    power = np.maximum(spec.power, floor)
    geometric = np.exp(np.mean(np.log(power), axis=0))
    return FrameSeries(name="flatness", values=(geometric / power.mean(axis=0))[np.newaxis, :])


def spectral_rolloff(spec: Spectrogram, fraction: float = 0.85) -> FrameSeries:
    """Frequency of the first bin whose cumulative magnitude reaches fraction of the total."""
    if not 0 < fraction < 1:
        raise FeatureParameterError(f"Roll-off fraction must lie in (0, 1): {fraction}")
    cumulative = np.cumsum(spec.magnitudes, axis=0)
    threshold = fraction * cumulative[-1]
    index = np.argmax(cumulative >= threshold[np.newaxis, :], axis=0)
    rolloff = np.where(cumulative[-1] > 0, spec.bin_freqs[index], 0.0)
    return FrameSeries(name="rolloff", values=rolloff[np.newaxis, :])


def contrast_band_masks(
    bin_freqs: np.ndarray, n_bands: int = 6, fmin: float = 200.0
) -> list[np.ndarray]:
    """Boolean bin masks of the n_bands + 1 octave sub-bands.

    Band 0 is [0, fmin]; band k covers [fmin * 2^(k-1), fmin * 2^k] extended
    one bin downwards, and the last band runs up to the Nyquist bin.
    """
    edges = np.zeros(n_bands + 2)
    edges[1:] = fmin * 2.0 ** np.arange(n_bands + 1)
    masks = []
    for k, (f_low, f_high) in enumerate(zip(edges[:-1], edges[1:], strict=True)):
        mask = (bin_freqs >= f_low) & (bin_freqs <= f_high)
        idx = np.flatnonzero(mask)
        if idx.size == 0:
            raise FeatureParameterError(
                f"Contrast sub-band {k} ({f_low:.1f}-{f_high:.1f} Hz) holds no STFT bins."
            )
        if k > 0 and idx[0] > 0:
            mask[idx[0] - 1] = True
        if k == n_bands:
            mask[idx[-1] + 1 :] = True
        masks.append(mask)
    return masks


def spectral_contrast(
    spec: Spectrogram,
    n_bands: int = 6,
    quantile: float = 0.02,
    fmin: float = 200.0,
    floor: float = 1e-10,
) -> FrameSeries:
    """Per sub-band log(peak) - log(valley), shape (n_bands + 1, frames).

    Peak and valley are the means of the top and bottom `quantile` share of
    the band's magnitudes (at least one bin each).
    """
    check_contrast_layout(n_bands, fmin, quantile, spec.sample_rate)
    magnitudes = np.maximum(spec.magnitudes, floor)
    contrast = np.zeros((n_bands + 1, spec.n_frames))
    for k, mask in enumerate(contrast_band_masks(spec.bin_freqs, n_bands, fmin)):
        sub_band = magnitudes[mask]
        if k < n_bands:
            # Upper edge bin belongs to the next band
            sub_band = sub_band[:-1]
        n_pick = max(int(np.rint(quantile * np.count_nonzero(mask))), 1)
        ordered = np.sort(sub_band, axis=0)
        valley = ordered[:n_pick].mean(axis=0)
        peak = ordered[-n_pick:].mean(axis=0)
        contrast[k] = np.log(peak) - np.log(valley)
    return FrameSeries(name="contrast", values=contrast)
