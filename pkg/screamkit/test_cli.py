"""Tests for cli.py."""

import json
from pathlib import Path

import numpy as np
import pytest
from scipy.signal import butter, sosfilt

from screamkit import cli
from screamkit.cli import EXIT_INVALID, EXIT_OK, EXIT_PARTIAL, main, parse_arguments
from screamkit.config import load_config
from screamkit.conftest import sine, wav_bytes
from screamkit.dataset import PartitionLeakError
from screamkit.featureset import BlockRef, FeatureSetId, fit_normalizer, read_feature_records
from screamkit.metrics import read_report
from screamkit.model_io import model_load
from screamkit.svm import SvmModel

SR = 44100
SCREAMS = ("LowFry", "MidFry", "HighFry")
N_BANDS = 10
EXPERIMENT = "fs1_svm_3class"


def _song(band: int, rng: np.random.Generator) -> np.ndarray:
    """Four seconds each of a harmonic tone, band-passed noise and silence."""
    f0 = 180.0 + 25.0 * band
    tone = sum(sine(f0 * h, 4.0, SR, 0.5 / h) for h in range(1, 5))
    sos = butter(4, [800.0, 5000.0], btype="bandpass", fs=SR, output="sos")
    noise = sosfilt(sos, rng.normal(size=4 * SR))
    noise *= 0.8 / np.max(np.abs(noise))
    samples = np.concatenate([tone, noise, np.zeros(4 * SR)])
    return np.round(np.clip(samples, -1, 1) * 32767).astype(np.int64)


def _write_dataset(root: Path, n_bands: int = N_BANDS) -> None:
    rng = np.random.default_rng(2024)
    (root / "audio").mkdir(parents=True)
    (root / "annotations").mkdir()
    rows = ["song_id,band_id,audio_path,annotation_path"]
    for band in range(n_bands):
        song_id = f"band{band:02d}_song01"
        (root / "audio" / f"{song_id}.wav").write_bytes(wav_bytes(_song(band, rng), SR))
        (root / "annotations" / f"{song_id}.csv").write_text(
            f"start_seconds,end_seconds,label\n0,4,Sing\n4,8,{SCREAMS[band % 3]}\n"
        )
        rows.append(f"{song_id},band{band:02d},audio/{song_id}.wav,annotations/{song_id}.csv")
    (root / "manifest.csv").write_text("\n".join(rows) + "\n")


def _write_config(root: Path, **extra: object) -> Path:
    config = {
        "manifest": "manifest.csv",
        "output_dir": "out",
        "pipeline": {"hop": 2.0},
        "split": {"seed": 1, "undersample_seed": 2, "ratios": [0.6, 0.05, 0.35]},
        "tsne": {"seed": 0, "perplexity": 5.0, "n_iter": 100},
        "experiments": [
            {"name": EXPERIMENT, "feature_set": "FS1", "classifier": "svm", "classes": 3, "seed": 0}
        ],
        **extra,
    }
    path = root / "config.json"
    path.write_text(json.dumps(config))
    return path


@pytest.fixture(scope="module")
def pipeline_dir(tmp_path_factory: pytest.TempPathFactory) -> Path:
    """A dataset taken through extract, split, train and eval."""
    root = tmp_path_factory.mktemp("pipeline")
    _write_dataset(root)
    config = str(_write_config(root))
    for command in (
        ["extract", "--config", config, "--feature-set", "fs1"],
        ["split", "--config", config],
        ["train", "--config", config],
        ["eval", "--config", config],
    ):
        assert main(command) == EXIT_OK, command
    return root


#############
# ARGUMENTS #
#############


class TestArguments:
    def test_repeated_feature_sets(self) -> None:
        args = parse_arguments(["extract", "--feature-set", "fs1", "--feature-set", "FS5"])
        assert args.feature_sets == [FeatureSetId.FS1, FeatureSetId.FS5]
        assert args.workers == 1

    def test_unknown_feature_set(self) -> None:
        with pytest.raises(SystemExit):
            parse_arguments(["extract", "--feature-set", "fs9"])

    def test_classes_choices(self) -> None:
        with pytest.raises(SystemExit):
            parse_arguments(["train", "--classes", "4"])

    def test_validate_needs_out(self) -> None:
        with pytest.raises(SystemExit):
            parse_arguments(["validate"])


############
# PIPELINE #
############


class TestPipeline:
    def test_outputs(self, pipeline_dir: Path) -> None:
        out = pipeline_dir / "out"
        assert (out / "features" / "features_fs1.jsonl").exists()
        assert (out / "splits" / "split_3class.json").exists()
        assert (out / "models" / f"{EXPERIMENT}.model.json").exists()
        assert (out / "reports" / f"{EXPERIMENT}_recall.svg").exists()
        assert (out / "reports" / f"{EXPERIMENT}_confusion.svg").exists()
        n_records = len((out / "features" / "features_fs1.jsonl").read_text().splitlines())
        assert n_records == 6 * N_BANDS

    def test_split_is_band_disjoint(self, pipeline_dir: Path) -> None:
        split = json.loads((pipeline_dir / "out" / "splits" / "split_3class.json").read_text())
        bands = {
            name: {ref[0].split("_")[0] for ref in split[name]}
            for name in ("train", "validation", "test")
        }
        assert not bands["train"] & (bands["validation"] | bands["test"])
        assert split["class_counts"]["train"] == {"NoVocal": 12, "Scream": 12, "Sing": 12}

    def test_training_never_sees_test_data(self, pipeline_dir: Path) -> None:
        out = pipeline_dir / "out"
        log = json.loads((out / "logs" / f"{EXPERIMENT}_train.json").read_text())
        split = json.loads((out / "splits" / "split_3class.json").read_text())
        assert log["partition_audit"] == {"train": len(split["train"]), "validation": 0, "test": 0}
        assert log["partition_audit"]["train"] == 36

    def test_normalizer_fitted_on_train_partition(self, pipeline_dir: Path) -> None:
        out = pipeline_dir / "out"
        split = json.loads((out / "splits" / "split_3class.json").read_text())
        train_refs = {BlockRef(s, i) for s, i in split["train"]}
        records = read_feature_records(out / "features" / "features_fs1.jsonl")
        expected = fit_normalizer([v for v in records if v.block_ref in train_refs])
        model = model_load(out / "models" / f"{EXPERIMENT}.model.json")
        assert isinstance(model, SvmModel) and model.normalizer is not None
        np.testing.assert_array_equal(model.normalizer.means, expected.means)
        np.testing.assert_array_equal(model.normalizer.stds, expected.stds)
        assert not np.allclose(fit_normalizer(records).means, expected.means)

    def test_test_records_in_training_are_refused(
        self, pipeline_dir: Path, monkeypatch: pytest.MonkeyPatch
    ) -> None:
        """A grouping that hands test records to the trainer fails the audit."""
        honest = cli.tag_partitions

        def everything_in_train(lookup, vectors):
            grouped = honest(lookup, vectors)
            grouped["train"] = [*grouped["train"], *grouped["test"]]
            return grouped

        model = pipeline_dir / "out" / "models" / f"{EXPERIMENT}.model.json"
        before = model.read_bytes()
        monkeypatch.setattr(cli, "tag_partitions", everything_in_train)
        config = load_config(pipeline_dir / "config.json", "train")
        with pytest.raises(PartitionLeakError, match="test"):
            cli.train_experiment(config, config.require_experiments()[0])
        assert main(["train", "--config", str(pipeline_dir / "config.json")]) == EXIT_PARTIAL
        assert model.read_bytes() == before

    def test_report(self, pipeline_dir: Path) -> None:
        out = pipeline_dir / "out"
        report = read_report(out / "reports" / f"{EXPERIMENT}_report.json")
        split = json.loads((out / "splits" / "split_3class.json").read_text())
        assert report.confusion.class_names == ("Sing", "Scream", "NoVocal")
        assert report.n_samples == len(split["test"]) >= 21
        assert report.bal_acc > 0.9

    def test_rerun_is_byte_identical(self, pipeline_dir: Path) -> None:
        out = pipeline_dir / "out"
        config = str(pipeline_dir / "config.json")
        paths = [out / "models" / f"{EXPERIMENT}.model.json", out / "reports" / f"{EXPERIMENT}_report.json"]
        before = [p.read_bytes() for p in paths]
        assert main(["train", "--config", config]) == EXIT_OK
        assert main(["eval", "--config", config]) == EXIT_OK
        assert [p.read_bytes() for p in paths] == before

    def test_project_and_validate(self, pipeline_dir: Path) -> None:
        config = str(pipeline_dir / "config.json")
        assert main(["project", "--config", config, "--feature-set", "fs1", "--classes", "3"]) == EXIT_OK
        projection = json.loads((pipeline_dir / "out" / "projections" / "projection_fs1.json").read_text())
        assert len(projection["points"]) == 6 * N_BANDS
        assert set(projection["labels"]) == {"Sing", "Scream", "NoVocal"}
        assert main(["stats", "--config", config]) == EXIT_OK
        stats = json.loads((pipeline_dir / "out" / "stats" / "dataset_stats.json").read_text())
        assert stats["n_songs"] == N_BANDS
        assert stats["class_blocks"]["Sing"] == 2 * N_BANDS
        assert main(["validate", "--out", str(pipeline_dir / "out")]) == EXIT_OK


##########
# ERRORS #
##########


class TestExitCodes:
    def test_empty_manifest(self, tmp_path: Path) -> None:
        (tmp_path / "manifest.csv").write_text("song_id,band_id,audio_path,annotation_path\n")
        config = str(_write_config(tmp_path))
        assert main(["extract", "--config", config, "--feature-set", "fs1"]) == EXIT_OK
        assert (tmp_path / "out" / "features" / "features_fs1.jsonl").read_text() == ""

    def test_failed_row_is_partial(self, tmp_path: Path) -> None:
        _write_dataset(tmp_path, n_bands=2)
        (tmp_path / "audio" / "band01_song01.wav").unlink()
        config = str(_write_config(tmp_path))
        assert main(["extract", "--config", config, "--feature-set", "fs1"]) == EXIT_PARTIAL
        records = (tmp_path / "out" / "features" / "features_fs1.jsonl").read_text().splitlines()
        assert len(records) == 6
        assert all('"band00_song01"' in r for r in records)

    def test_bad_annotation_label_is_partial(self, tmp_path: Path) -> None:
        _write_dataset(tmp_path, n_bands=2)
        (tmp_path / "annotations" / "band00_song01.csv").write_text(
            "start_seconds,end_seconds,label\n0,4,Growl\n"
        )
        config = str(_write_config(tmp_path))
        assert main(["extract", "--config", config, "--feature-set", "fs1"]) == EXIT_PARTIAL

    def test_fs5_with_svm_is_invalid(self, tmp_path: Path) -> None:
        experiments = [{"name": "bad", "feature_set": "FS5", "classifier": "svm", "classes": 3, "seed": 0}]
        config = str(_write_config(tmp_path, experiments=experiments))
        assert main(["train", "--config", config]) == EXIT_INVALID

    def test_schema_violation_is_invalid(self, tmp_path: Path) -> None:
        config = str(_write_config(tmp_path, layered_as="Growl"))
        assert main(["train", "--config", config]) == EXIT_INVALID

    def test_train_before_split(self, tmp_path: Path) -> None:
        _write_dataset(tmp_path, n_bands=2)
        config = str(_write_config(tmp_path))
        assert main(["extract", "--config", config, "--feature-set", "fs1"]) == EXIT_OK
        assert main(["train", "--config", config]) == EXIT_PARTIAL

    def test_validate_flags_bad_output(self, tmp_path: Path) -> None:
        reports = tmp_path / "out" / "reports"
        reports.mkdir(parents=True)
        (reports / "x_report.json").write_text('{"acc": 2}')
        assert main(["validate", "--out", str(tmp_path / "out")]) == EXIT_PARTIAL
        assert main(["validate", "--out", str(tmp_path / "absent")]) == EXIT_PARTIAL
