"""Tests for model_io.py."""

import json

import numpy as np
import pytest

from screamkit.cnn import CnnArchitecture, cnn_forward, cnn_init
from screamkit.featureset import BlockRef, FeatureVector, fit_normalizer
from screamkit.model_io import (
    FORMAT_VERSION,
    ModelChecksumError,
    ModelFileError,
    ModelVersionError,
    decode_array,
    encode_array,
    model_from_dict,
    model_load,
    model_save,
    model_to_dict,
)
from screamkit.svm import SvmModel, svm_predict_batch, svm_train


@pytest.fixture
def svm_model(rng: np.random.Generator) -> tuple[SvmModel, np.ndarray]:
    X = np.vstack([rng.normal(0, 1, (20, 4)), rng.normal(2, 1, (20, 4)), rng.normal(-2, 1, (20, 4))])
    y = ["Sing"] * 20 + ["Scream"] * 20 + ["NoVocal"] * 20
    vectors = [FeatureVector("FS4", row, BlockRef("s", i)) for i, row in enumerate(X)]
    norm = fit_normalizer(vectors)
    model = svm_train(norm.transform(X), y, classes=["Sing", "Scream", "NoVocal"], normalizer=norm)
    model.feature_set = norm.set_id
    return model, X


def _saved(model, tmp_path) -> dict:
    path = tmp_path / "m.model.json"
    model_save(model, path)
    return json.loads(path.read_text())


class TestArrays:
    @pytest.mark.parametrize("dtype", ["float32", "float64", "int64"])
    def test_exact(self, dtype: str) -> None:
        array = (np.arange(12).reshape(3, 4) * np.pi).astype(dtype)
        restored = decode_array(encode_array(array))
        assert restored.dtype == array.dtype
        np.testing.assert_array_equal(restored, array)

    def test_unsupported_dtype(self) -> None:
        with pytest.raises(ModelFileError, match="dtype"):
            encode_array(np.zeros(2, dtype=np.complex128))

    def test_bad_base64(self) -> None:
        with pytest.raises(ModelFileError, match="Malformed"):
            decode_array({"dtype": "float64", "shape": [1], "data": "***"})


class TestSvmRoundTrip:
    def test_predictions_identical(self, svm_model, tmp_path) -> None:
        model, X = svm_model
        path = tmp_path / "svm.model.json"
        model_save(model, path)
        loaded = model_load(path)
        assert isinstance(loaded, SvmModel)
        assert loaded.classes == model.classes
        assert loaded.feature_set == model.feature_set
        labels, votes = svm_predict_batch(model, X)
        loaded_labels, loaded_votes = svm_predict_batch(loaded, X)
        assert labels == loaded_labels
        np.testing.assert_array_equal(votes, loaded_votes)
        for a, b in zip(model.machines, loaded.machines, strict=True):
            np.testing.assert_array_equal(a.decision(X, model.kernel), b.decision(X, loaded.kernel))

    def test_container_layout(self, svm_model, tmp_path) -> None:
        data = _saved(svm_model[0], tmp_path)
        assert data["kind"] == "svm"
        assert data["format_version"] == FORMAT_VERSION
        assert data["payload"]["feature_set"] == "FS4"
        assert data["payload"]["normalizer"]["set_id"] == "FS4"

    def test_bytes_are_stable(self, svm_model, tmp_path) -> None:
        model, _ = svm_model
        model_save(model, tmp_path / "a.json")
        model_save(model_load(tmp_path / "a.json"), tmp_path / "b.json")
        assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()


class TestCnnRoundTrip:
    def test_predictions_identical(self, rng: np.random.Generator, tmp_path) -> None:
        arch = CnnArchitecture(n_classes=3, n_mels=8, n_frames=8, conv_channels=(4,), dense_units=(6,))
        model = cnn_init(3, 8, 8, seed=4, architecture=arch, classes=("Sing", "Scream", "NoVocal"))
        path = tmp_path / "cnn.model.json"
        model_save(model, path)
        loaded = model_load(path)
        assert loaded.architecture == arch
        assert loaded.classes == model.classes
        X = rng.normal(size=(5, 8, 8))
        np.testing.assert_array_equal(cnn_forward(loaded, X), cnn_forward(model, X))
        assert _saved(model, tmp_path)["payload"]["feature_set"] == "FS5"


class TestCorruption:
    def test_checksum_mismatch(self, svm_model, tmp_path) -> None:
        data = _saved(svm_model[0], tmp_path)
        data["payload"]["machines"][0]["bias"] += 1e-9
        with pytest.raises(ModelChecksumError, match="corrupted"):
            model_from_dict(data)

    def test_major_version_mismatch(self, svm_model, tmp_path) -> None:
        data = _saved(svm_model[0], tmp_path)
        data["format_version"] = "2.0.0"
        with pytest.raises(ModelVersionError, match="not compatible"):
            model_from_dict(data)

    def test_minor_version_accepted(self, svm_model, tmp_path) -> None:
        data = _saved(svm_model[0], tmp_path)
        data["format_version"] = "1.4.2"
        assert isinstance(model_from_dict(data), SvmModel)

    def test_schema_violation(self, svm_model, tmp_path) -> None:
        data = _saved(svm_model[0], tmp_path)
        data["kind"] = "forest"
        with pytest.raises(ModelFileError, match="malformed"):
            model_from_dict(data)

    def test_not_json(self, tmp_path) -> None:
        path = tmp_path / "m.model.json"
        path.write_text("{")
        with pytest.raises(ModelFileError, match="not valid JSON"):
            model_load(path)

    def test_unknown_model_type(self) -> None:
        with pytest.raises(ModelFileError, match="Cannot serialise"):
            model_to_dict(object())  # type: ignore[arg-type]
