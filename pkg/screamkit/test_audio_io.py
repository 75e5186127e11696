"""Tests for audio_io.py."""

import numpy as np
import pytest

from screamkit.audio_io import (
    AudioClip,
    AudioClipError,
    TruncatedDataError,
    UnsupportedCodecError,
    WavHeaderError,
    decode_wav,
    downmix_mono,
    load_audio,
    peak_normalize,
    prepare_clip,
    resample,
    resampled_length,
)
from screamkit.conftest import sine, wav_bytes

##############
# decode_wav #
##############


class TestDecodeWav:
    def test_pcm16_scaling(self) -> None:
        clip = decode_wav(wav_bytes(np.array([0, 16384, -16384, 32767]), 44100))
        assert clip.n_channels == 1
        assert clip.sample_rate == 44100
        np.testing.assert_array_equal(clip.samples[0], [0.0, 0.5, -0.5, 32767 / 32768])

    def test_pcm24_sign_extension(self) -> None:
        data = np.array([0, 4194304, -4194304, -8388608, 8388607])
        clip = decode_wav(wav_bytes(data, 48000, fmt="pcm24"))
        np.testing.assert_array_equal(
            clip.samples[0], [0.0, 0.5, -0.5, -1.0, 8388607 / 8388608]
        )
        assert clip.sample_rate == 48000

    def test_float32_stereo_passthrough(self) -> None:
        left = np.array([0.25, -0.75, 1.0], dtype=np.float32)
        right = np.array([-0.125, 0.5, 0.0], dtype=np.float32)
        clip = decode_wav(wav_bytes(np.stack([left, right]), 22050, fmt="float32"))
        assert clip.n_channels == 2
        np.testing.assert_array_equal(clip.samples[0], left)
        np.testing.assert_array_equal(clip.samples[1], right)

    def test_extensible_container(self) -> None:
        clip = decode_wav(wav_bytes(np.array([16384, -16384]), 44100, extensible=True))
        np.testing.assert_array_equal(clip.samples[0], [0.5, -0.5])

    def test_skips_unknown_chunks(self) -> None:
        extra = b"LIST" + (4).to_bytes(4, "little") + b"INFO"
        clip = decode_wav(wav_bytes(np.array([16384]), 44100, extra_chunks=extra))
        np.testing.assert_array_equal(clip.samples[0], [0.5])

    def test_truncated_data_chunk(self) -> None:
        data = wav_bytes(np.arange(100), 44100)
        with pytest.raises(TruncatedDataError, match="declares"):
            decode_wav(data[:-20])

    def test_partial_frame_is_truncation(self) -> None:
        data = bytearray(wav_bytes(np.arange(4), 44100, fmt="pcm24"))
        # Shrink the declared data size by one byte and drop it
        data[-16:-12] = (11).to_bytes(4, "little")
        with pytest.raises(TruncatedDataError, match="whole number"):
            decode_wav(bytes(data[:-1]))

    def test_bad_signature(self) -> None:
        with pytest.raises(WavHeaderError, match="RIFF/WAVE"):
            decode_wav(b"RIFX" + bytes(40))

    def test_too_short(self) -> None:
        with pytest.raises(WavHeaderError, match="too short"):
            decode_wav(b"RIFF")

    def test_unsupported_codec(self) -> None:
        data = bytearray(wav_bytes(np.arange(4), 44100))
        data[20:22] = (0x0055).to_bytes(2, "little")  # MP3 format tag
        with pytest.raises(UnsupportedCodecError, match="0x0055"):
            decode_wav(bytes(data))

    def test_errors_are_distinct(self) -> None:
        assert not issubclass(TruncatedDataError, UnsupportedCodecError)
        assert not issubclass(WavHeaderError, TruncatedDataError)

    def test_load_audio_uses_file_stem(self, wav_factory) -> None:
        path = wav_factory.create("song_07.wav", np.array([0, 100]), 44100)
        assert load_audio(path).source_id == "song_07"


############
# resample #
############


class TestResample:
    def test_identity_rate_is_bit_identical(self) -> None:
        clip = AudioClip(np.random.default_rng(0).uniform(-1, 1, 1000), 44100)
        out = resample(clip, 44100)
        np.testing.assert_array_equal(out.samples, clip.samples)

    @pytest.mark.parametrize(
        ("n", "source", "target", "expected"),
        [(22050, 22050, 44100, 44100), (48000, 48000, 44100, 44100), (3, 48000, 44100, 3), (1, 44100, 22050, 1)],
        ids=["double", "48k", "short", "half_rounds_up"],
    )
    def test_output_length(self, n: int, source: int, target: int, expected: int) -> None:
        assert resampled_length(n, source, target) == expected
        clip = AudioClip(np.zeros(n), source)
        assert resample(clip, target).length == expected

    def test_dc_passthrough(self) -> None:
        clip = AudioClip(np.full(22050, 0.3), 22050)
        out = resample(clip, 44100)
        assert out.sample_rate == 44100
        np.testing.assert_allclose(out.samples[:, 500:-500], 0.3, atol=1e-3)

    def test_sine_keeps_frequency(self) -> None:
        clip = AudioClip(sine(1000.0, 1.0, 48000), 48000)
        out = resample(clip, 44100)
        spectrum = np.abs(np.fft.rfft(out.samples[0]))
        freqs = np.fft.rfftfreq(out.length, 1 / 44100)
        bin_width = freqs[1]
        assert abs(freqs[np.argmax(spectrum)] - 1000.0) <= bin_width

    def test_rejects_bad_target(self) -> None:
        with pytest.raises(AudioClipError, match="positive"):
            resample(AudioClip(np.zeros(10), 44100), 0)


###################################
# downmix_mono and peak_normalize #
###################################


class TestDownmixMono:
    def test_channel_mean(self) -> None:
        out = downmix_mono(AudioClip(np.array([[0.2], [0.6]]), 44100))
        assert out.n_channels == 1
        assert out.samples[0, 0] == pytest.approx(0.4)

    def test_mono_unchanged(self) -> None:
        clip = AudioClip(np.array([0.1, -0.2]), 44100)
        assert downmix_mono(clip) is clip

    def test_cancellation(self) -> None:
        x = np.random.default_rng(1).uniform(-1, 1, 500)
        out = downmix_mono(AudioClip(np.stack([x, -x]), 44100))
        np.testing.assert_array_equal(out.samples, 0.0)

    def test_idempotent(self) -> None:
        clip = AudioClip(np.random.default_rng(2).uniform(-1, 1, (3, 100)), 44100)
        once = downmix_mono(clip)
        np.testing.assert_array_equal(downmix_mono(once).samples, once.samples)


class TestPeakNormalize:
    def test_scales_to_unit_peak(self) -> None:
        out = peak_normalize(AudioClip(np.array([0.1, -0.5]), 44100))
        np.testing.assert_allclose(out.samples[0], [0.2, -1.0])

    def test_all_zero_passthrough(self) -> None:
        out = peak_normalize(AudioClip(np.zeros(10), 44100))
        assert np.all(np.isfinite(out.samples))
        np.testing.assert_array_equal(out.samples, 0.0)

    def test_already_at_peak(self) -> None:
        out = peak_normalize(AudioClip(np.array([-1.0, 0.25]), 44100))
        np.testing.assert_array_equal(out.samples[0], [-1.0, 0.25])

    def test_idempotent(self) -> None:
        once = peak_normalize(AudioClip(np.array([0.3, -0.1, 0.05]), 44100))
        np.testing.assert_array_equal(peak_normalize(once).samples, once.samples)


class TestPrepareClip:
    def test_canonical_chain_is_bounded(self) -> None:
        """Random stereo input at another rate ends as bounded 44.1 kHz mono."""
        rng = np.random.default_rng(3)
        for rate in (8000, 22050, 48000):
            ints = rng.integers(-32768, 32768, size=(2, rate // 4))
            clip = prepare_clip(decode_wav(wav_bytes(ints, rate)))
            assert clip.sample_rate == 44100
            assert clip.n_channels == 1
            assert np.all(np.isfinite(clip.samples))
            assert np.max(np.abs(clip.samples)) == pytest.approx(1.0)

    def test_clip_invariants(self) -> None:
        with pytest.raises(AudioClipError, match="non-finite"):
            AudioClip(np.array([0.0, np.nan]), 44100)
        with pytest.raises(AudioClipError, match="Sample rate"):
            AudioClip(np.zeros(3), 0)
