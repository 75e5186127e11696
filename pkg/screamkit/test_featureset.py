"""Tests for featureset.py."""

import json

import numpy as np
import pytest

from screamkit.conftest import sine
from screamkit.dataset import LabeledBlock, partition_lookup, tag_partitions
from screamkit.dsp_features import DspParams, FrameSeries
from screamkit.featureset import (
    BlockRef,
    FeatureFileError,
    FeatureSetError,
    FeatureSetId,
    FeatureVector,
    NormalizerError,
    VggishBlockRefError,
    VggishDimensionError,
    VggishJsonError,
    aggregate,
    apply_normalizer,
    assemble,
    assemble_many,
    attach_labels,
    expected_length,
    expected_shape,
    fit_normalizer,
    ingest_vggish,
    normalizer_from_dict,
    normalizer_to_dict,
    read_feature_records,
    stack_values,
    write_feature_records,
)
from screamkit.segmentation import Block


def _block(samples: np.ndarray, index: int = 0, source: str = "song") -> Block:
    return Block(samples=samples, start_time=float(index), source_id=source, block_index=index)


def _vector(values, index: int = 0, set_id: str = "FS1", **kwargs) -> FeatureVector:
    return FeatureVector(set_id, np.asarray(values, float), BlockRef("s", index), **kwargs)


###########
# LENGTHS #
###########


class TestExpectedLengths:
    @pytest.mark.parametrize(
        ("set_id", "length"),
        [("FS1", 76), ("FS2", 128), ("FS3", 52), ("FS4", 24)],
    )
    def test_defaults(self, set_id: str, length: int) -> None:
        assert expected_length(set_id) == length

    def test_follows_parameters(self) -> None:
        params = DspParams(n_mfcc=20, contrast_bands=4)
        assert expected_length("FS3", params) == 80
        assert expected_length("FS4", params) == 20
        assert expected_length("FS2", vggish_dim=64) == 64

    def test_fs5_is_a_matrix(self) -> None:
        assert expected_shape(88200) == (128, 87)
        with pytest.raises(FeatureSetError, match="expected_shape"):
            expected_length("FS5")


###############
# AGGREGATION #
###############


class TestAggregate:
    def test_mean_then_std_per_dimension(self) -> None:
        a = FrameSeries("a", np.array([[1.0, 3.0], [2.0, 2.0]]))
        b = FrameSeries("b", np.array([[0.0, 4.0]]))
        np.testing.assert_array_equal(aggregate([a, b]), [2.0, 1.0, 2.0, 0.0, 2.0, 2.0])

    def test_rejects_empty(self) -> None:
        with pytest.raises(FeatureSetError, match="empty"):
            aggregate([])

    def test_rejects_unequal_frames(self) -> None:
        with pytest.raises(FeatureSetError, match="frame count"):
            aggregate([FrameSeries("a", np.zeros((1, 3))), FrameSeries("b", np.zeros((1, 4)))])


class TestAssemble:
    @pytest.fixture(scope="class")
    def vectors(self) -> dict[FeatureSetId, FeatureVector]:
        x = sine(440.0, 2.0) + 0.01 * np.random.default_rng(0).normal(size=88200)
        return assemble_many(_block(x, index=3), ["FS1", "FS3", "FS4", "FS5"])

    def test_shapes(self, vectors: dict[FeatureSetId, FeatureVector]) -> None:
        assert vectors[FeatureSetId.FS1].values.shape == (76,)
        assert vectors[FeatureSetId.FS3].values.shape == (52,)
        assert vectors[FeatureSetId.FS4].values.shape == (24,)
        assert vectors[FeatureSetId.FS5].values.shape == (128, 87)

    def test_fs1_concatenates_fs3_and_fs4(self, vectors: dict[FeatureSetId, FeatureVector]) -> None:
        np.testing.assert_allclose(
            vectors[FeatureSetId.FS1].values,
            np.concatenate([vectors[FeatureSetId.FS3].values, vectors[FeatureSetId.FS4].values]),
        )

    def test_carries_block_identity(self, vectors: dict[FeatureSetId, FeatureVector]) -> None:
        for v in vectors.values():
            assert v.block_ref == BlockRef("song", 3)
            assert v.start_s == 3.0
            assert v.label is None
            assert np.all(np.isfinite(v.values))

    def test_single_set_matches_batch(self, vectors: dict[FeatureSetId, FeatureVector]) -> None:
        x = sine(440.0, 2.0) + 0.01 * np.random.default_rng(0).normal(size=88200)
        single = assemble(_block(x, index=3), "FS4")
        np.testing.assert_allclose(single.values, vectors[FeatureSetId.FS4].values)

    def test_silence_is_finite(self) -> None:
        out = assemble_many(_block(np.zeros(88200)), ["FS1", "FS5"])
        assert np.all(np.isfinite(out[FeatureSetId.FS1].values))
        np.testing.assert_array_equal(out[FeatureSetId.FS5].values, np.log(1e-10))

    def test_fs2_is_not_computed(self) -> None:
        with pytest.raises(FeatureSetError, match="ingest"):
            assemble(_block(np.zeros(88200)), "FS2")

    def test_vector_rejects_non_finite(self) -> None:
        with pytest.raises(FeatureSetError, match="non-finite"):
            _vector([1.0, np.inf])


##########
# VGGISH #
##########


class TestIngestVggish:
    def test_reads_records_in_order(self, text_factory) -> None:
        path = text_factory.create_lines(
            "emb.jsonl",
            [
                json.dumps({"source_id": "a", "block_index": 1, "embedding": [0.5, 1.5]}),
                "",
                json.dumps({"source_id": "a", "block_index": 0, "embedding": [2.0, 3.0]}),
            ],
        )
        vectors = ingest_vggish(path)
        assert [v.block_ref for v in vectors] == [BlockRef("a", 1), BlockRef("a", 0)]
        assert all(v.set_id is FeatureSetId.FS2 for v in vectors)
        np.testing.assert_array_equal(vectors[1].values, [2.0, 3.0])

    def test_empty_file(self, text_factory) -> None:
        assert ingest_vggish(text_factory.create("emb.jsonl", "")) == []

    @pytest.mark.parametrize(
        ("lines", "error"),
        [
            (['{"source_id": "a", "block_index": 0, "embedding": [1.0]', ], VggishJsonError),
            (['{"block_index": 0, "embedding": [1.0]}'], VggishBlockRefError),
            (['{"source_id": "a", "block_index": -1, "embedding": [1.0]}'], VggishBlockRefError),
            (
                [
                    '{"source_id": "a", "block_index": 0, "embedding": [1.0]}',
                    '{"source_id": "a", "block_index": 0, "embedding": [2.0]}',
                ],
                VggishBlockRefError,
            ),
            (
                [
                    '{"source_id": "a", "block_index": 0, "embedding": [1.0, 2.0]}',
                    '{"source_id": "a", "block_index": 1, "embedding": [1.0]}',
                ],
                VggishDimensionError,
            ),
        ],
        ids=["bad_json", "missing_source", "negative_index", "duplicate", "ragged"],
    )
    def test_errors(self, text_factory, lines: list[str], error: type) -> None:
        path = text_factory.create_lines("emb.jsonl", lines)
        with pytest.raises(error):
            ingest_vggish(path)

    def test_expected_dimension(self, text_factory) -> None:
        path = text_factory.create_lines(
            "emb.jsonl", ['{"source_id": "a", "block_index": 0, "embedding": [1.0, 2.0]}']
        )
        with pytest.raises(VggishDimensionError, match="expected 128"):
            ingest_vggish(path, expected_dim=128)

    def test_attach_labels_drops_unmatched(self) -> None:
        vectors = [_vector([1.0], 0, "FS2"), _vector([2.0], 1, "FS2")]
        labeled = [
            LabeledBlock(BlockRef("s", 1), "band", 1.0, "HighFry"),
            LabeledBlock(BlockRef("s", 2), "band", 2.0, "Sing"),
        ]
        joined = attach_labels(vectors, labeled)
        assert len(joined) == 1
        assert joined[0].block_ref == BlockRef("s", 1)
        assert (joined[0].label, joined[0].band_id, joined[0].start_s) == ("HighFry", "band", 1.0)


##############
# NORMALIZER #
##############


class TestNormalizer:
    def test_fit_and_apply(self) -> None:
        train = [_vector([1.0, 5.0], 0), _vector([3.0, 5.0], 1)]
        norm = fit_normalizer(train)
        np.testing.assert_array_equal(norm.means, [2.0, 5.0])
        # Zero-variance dimension keeps std 1
        np.testing.assert_array_equal(norm.stds, [1.0, 1.0])
        out = apply_normalizer(norm, _vector([4.0, 7.0]))
        np.testing.assert_array_equal(out.values, [2.0, 2.0])

    def test_training_vectors_standardised(self, rng: np.random.Generator) -> None:
        train = [_vector(rng.normal(3.0, 2.0, size=5), i) for i in range(50)]
        norm = fit_normalizer(train)
        matrix = stack_values([apply_normalizer(norm, v) for v in train])
        np.testing.assert_allclose(matrix.mean(axis=0), 0.0, atol=1e-12)
        np.testing.assert_allclose(matrix.std(axis=0), 1.0)

    def test_held_out_records_do_not_move_the_fit(self, rng: np.random.Generator) -> None:
        """Rewriting or reordering validation and test records leaves the fit unchanged."""
        refs = {
            "train": [BlockRef("s", i) for i in range(30)],
            "validation": [BlockRef("s", i) for i in range(30, 40)],
            "test": [BlockRef("s", i) for i in range(40, 60)],
        }
        lookup = partition_lookup(refs)
        records = [_vector(rng.normal(0.0, 1.0, size=4), i) for i in range(60)]
        fitted = fit_normalizer(tag_partitions(lookup, records)["train"])
        for _ in range(5):
            changed = [
                v if lookup[v.block_ref] == "train" else v.with_values(rng.normal(50.0, 9.0, size=4))
                for v in records
            ]
            order = rng.permutation(len(changed))
            refit = fit_normalizer(tag_partitions(lookup, [changed[i] for i in order])["train"])
            np.testing.assert_allclose(refit.means, fitted.means, rtol=1e-12)
            np.testing.assert_allclose(refit.stds, fitted.stds, rtol=1e-12)
        everything = fit_normalizer(changed)
        assert not np.allclose(everything.means, fitted.means)

    def test_held_out_records_use_training_statistics(self, rng: np.random.Generator) -> None:
        """Test vectors are shifted by the training fit, not re-standardised."""
        train = [_vector(rng.normal(0.0, 2.0, size=3), i) for i in range(40)]
        test = [_vector(rng.normal(10.0, 0.5, size=3), 100 + i) for i in range(20)]
        norm = fit_normalizer(train)
        for v in test:
            np.testing.assert_array_equal(
                apply_normalizer(norm, v).values, (v.values - norm.means) / norm.stds
            )
        matrix = stack_values([apply_normalizer(norm, v) for v in test])
        assert np.all(matrix.mean(axis=0) > 3.0)
        assert not np.allclose(matrix.std(axis=0), 1.0, atol=0.1)

    def test_round_trip(self) -> None:
        norm = fit_normalizer([_vector([1.0, 2.0], 0), _vector([3.0, 8.0], 1)])
        restored = normalizer_from_dict(json.loads(json.dumps(normalizer_to_dict(norm))))
        assert restored.set_id is FeatureSetId.FS1
        np.testing.assert_array_equal(restored.means, norm.means)
        np.testing.assert_array_equal(restored.stds, norm.stds)

    def test_rejects_empty(self) -> None:
        with pytest.raises(NormalizerError, match="empty"):
            fit_normalizer([])

    def test_rejects_fs5(self) -> None:
        with pytest.raises(NormalizerError, match="FS5"):
            fit_normalizer([_vector(np.zeros((2, 2)), set_id="FS5")])

    def test_rejects_other_set(self) -> None:
        norm = fit_normalizer([_vector([1.0], 0), _vector([2.0], 1)])
        with pytest.raises(NormalizerError, match="cannot be applied"):
            apply_normalizer(norm, _vector([1.0], set_id="FS4"))

    def test_rejects_wrong_length(self) -> None:
        norm = fit_normalizer([_vector([1.0], 0), _vector([2.0], 1)])
        with pytest.raises(NormalizerError, match="Expected 1 dimensions"):
            apply_normalizer(norm, _vector([1.0, 2.0]))

    def test_stack_rejects_mixed_sets(self) -> None:
        with pytest.raises(FeatureSetError, match="Mixed"):
            stack_values([_vector([1.0]), _vector([1.0], set_id="FS2")])


#################
# FEATURE FILES #
#################


class TestFeatureFiles:
    def test_round_trip_keeps_metadata(self, tmp_path) -> None:
        params = DspParams()
        vectors = [
            _vector(np.arange(76.0), 0, label="Sing", band_id="b1", start_s=0.0),
            _vector(np.ones(76), 1, label=None, band_id=None, start_s=1.0),
            _vector(np.zeros((128, 87)), 2, "FS5", label="LowFry", band_id="b1", start_s=2.0),
        ]
        path = tmp_path / "features.jsonl"
        assert write_feature_records(path, vectors) == 3
        restored = read_feature_records(path, params)
        assert [v.block_ref for v in restored] == [v.block_ref for v in vectors]
        assert [v.label for v in restored] == ["Sing", None, "LowFry"]
        assert restored[2].values.shape == (128, 87)
        np.testing.assert_array_equal(restored[0].values, vectors[0].values)

    def test_wrong_length_reports_line(self, text_factory) -> None:
        good = json.dumps({"source_id": "s", "block_index": 0, "set_id": "FS4", "values": [0.0] * 24})
        bad = json.dumps({"source_id": "s", "block_index": 1, "set_id": "FS4", "values": [0.0] * 23})
        path = text_factory.create_lines("f.jsonl", [good, bad])
        with pytest.raises(FeatureFileError, match="line 2") as excinfo:
            read_feature_records(path)
        assert excinfo.value.line_number == 2

    def test_schema_violation(self, text_factory) -> None:
        record = {"source_id": "s", "block_index": 0, "set_id": "FS4", "values": [0.0] * 24, "label": "Growl"}
        path = text_factory.create_lines("f.jsonl", [json.dumps(record)])
        with pytest.raises(FeatureFileError, match="line 1"):
            read_feature_records(path)

    def test_fs5_needs_matching_mels(self, text_factory) -> None:
        record = {"source_id": "s", "block_index": 0, "set_id": "FS5", "shape": [64, 2], "values": [0.0] * 128}
        path = text_factory.create_lines("f.jsonl", [json.dumps(record)])
        with pytest.raises(FeatureFileError, match="mel bands"):
            read_feature_records(path)

    def test_invalid_json(self, text_factory) -> None:
        path = text_factory.create_lines("f.jsonl", ["{not json"])
        with pytest.raises(FeatureFileError, match="invalid JSON"):
            read_feature_records(path)
