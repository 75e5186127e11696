"""
Experiment configuration: a JSON file checked against
experiment_config.schema.json, with command-line flags merged in before
validation.

Relative paths in a config file resolve against the file's directory;
paths given as flags are used as given.
"""

###########
# IMPORTS #
###########

import copy
import json
import logging
from collections.abc import Sequence
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from screamkit.cnn import CnnArchitecture, CnnTrainConfig
from screamkit.dataset import DEFAULT_RATIOS
from screamkit.dsp_features import DspParams, FeatureParameterError
from screamkit.featureset import DEFAULT_VGGISH_DIM, FeatureSetId, expected_shape
from screamkit.schemas import json_errors
from screamkit.segmentation import DEFAULT_BLOCK_LEN, DEFAULT_HOP
from screamkit.svm import SvmParams

logger = logging.getLogger(__name__)

CLASSIFIER_FOR_SET = {
    FeatureSetId.FS1: "svm",
    FeatureSetId.FS2: "svm",
    FeatureSetId.FS3: "svm",
    FeatureSetId.FS4: "svm",
    FeatureSetId.FS5: "cnn",
}
_PATH_KEYS = ("manifest", "features_dir", "output_dir", "vggish")
_DSP_KEYS = (
    "sample_rate",
    "n_fft",
    "hop_length",
    "n_mels",
    "fmin",
    "fmax",
    "power_floor",
    "mel_power",
    "n_mfcc",
    "delta_width",
    "contrast_bands",
    "contrast_fmin",
    "contrast_quantile",
    "rolloff",
)


class ConfigError(ValueError):
    """Invalid configuration: schema violations or inconsistent settings."""

    def __init__(self, message: str, errors: Sequence[str] = ()) -> None:
        self.errors = list(errors)
        detail = "".join(f"\n  {e}" for e in self.errors)
        super().__init__(f"{message}{detail}")


#########
# TYPES #
#########


@dataclass(frozen=True)
class PipelineParams:
    dsp: DspParams = field(default_factory=DspParams)
    block_len: float = DEFAULT_BLOCK_LEN
    hop: float = DEFAULT_HOP
    vggish_dim: int = DEFAULT_VGGISH_DIM

    @property
    def sample_rate(self) -> int:
        return self.dsp.sample_rate

    @property
    def n_frames(self) -> int:
        """Frames of an FS5 log-mel matrix for one block."""
        return expected_shape(round(self.block_len * self.sample_rate), self.dsp)[1]


@dataclass(frozen=True)
class SplitConfig:
    seed: int
    undersample_seed: int
    ratios: tuple[float, float, float] = DEFAULT_RATIOS
    undersample: bool = True


@dataclass(frozen=True)
class TsneConfig:
    seed: int
    perplexity: float = 30.0
    n_iter: int = 1000
    learning_rate: float = 200.0
    max_points: int | None = None
    partition: str = "all"


@dataclass(frozen=True)
class CnnSettings:
    conv_channels: tuple[int, ...] = (256, 512, 1024)
    dense_units: tuple[int, ...] = (256, 64, 16)
    kernel_size: int = 3
    pool_size: int = 2
    learning_rate: float = 1e-3
    batch_size: int = 32
    epochs: int = 100
    patience: int = 10

    def architecture(self, n_classes: int, n_mels: int, n_frames: int) -> CnnArchitecture:
        return CnnArchitecture(
            n_classes=n_classes,
            n_mels=n_mels,
            n_frames=n_frames,
            conv_channels=self.conv_channels,
            dense_units=self.dense_units,
            kernel_size=self.kernel_size,
            pool_size=self.pool_size,
        )

    def train_config(self, seed: int) -> CnnTrainConfig:
        return CnnTrainConfig(
            learning_rate=self.learning_rate,
            batch_size=self.batch_size,
            epochs=self.epochs,
            patience=self.patience,
            seed=seed,
        )


@dataclass(frozen=True)
class ExperimentConfig:
    """One (feature set, classifier, class scheme) configuration.

    FS5 pairs with the CNN and FS1-FS4 with the SVM.
    """

    name: str
    feature_set: FeatureSetId
    classifier: str
    classes: int
    seed: int
    svm: SvmParams = field(default_factory=SvmParams)
    cnn: CnnSettings = field(default_factory=CnnSettings)

    def __post_init__(self) -> None:
        object.__setattr__(self, "feature_set", FeatureSetId(self.feature_set))
        expected = CLASSIFIER_FOR_SET[self.feature_set]
        if self.classifier != expected:
            raise ConfigError(
                f"Experiment '{self.name}': {self.feature_set} must be paired with "
                f"the {expected.upper()} classifier, not {self.classifier}"
            )
        if self.classes not in (3, 6):
            raise ConfigError(f"Experiment '{self.name}': classes must be 3 or 6; got {self.classes}")


@dataclass(frozen=True)
class RunConfig:
    manifest: Path
    output_dir: Path
    features_dir: Path
    vggish: Path | None = None
    layered_as: str = "Scream"
    pipeline: PipelineParams = field(default_factory=PipelineParams)
    split: SplitConfig | None = None
    tsne: TsneConfig | None = None
    experiments: tuple[ExperimentConfig, ...] = ()

    def require_split(self) -> SplitConfig:
        if self.split is None:
            raise ConfigError("A split section with seed and undersample_seed is required (or pass --seed).")
        return self.split

    def require_experiments(self) -> tuple[ExperimentConfig, ...]:
        if not self.experiments:
            raise ConfigError(
                "No experiments configured; give a config with experiments or "
                "--feature-set, --classes and --seed."
            )
        return self.experiments


###########
# PARSING #
###########


def default_experiment_name(feature_set: str, classes: int) -> str:
    set_id = FeatureSetId(feature_set.upper())
    return f"{set_id.lower()}_{CLASSIFIER_FOR_SET[set_id]}_{classes}class"


def _parse_pipeline(data: dict[str, Any]) -> PipelineParams:
    dsp = DspParams(**{k: data[k] for k in _DSP_KEYS if k in data})
    try:
        dsp.validate()
    except FeatureParameterError as e:
        raise ConfigError(f"Invalid pipeline settings: {e}") from e
    pipeline = PipelineParams(
        dsp=dsp,
        block_len=data.get("block_len", DEFAULT_BLOCK_LEN),
        hop=data.get("hop", DEFAULT_HOP),
        vggish_dim=data.get("vggish_dim", DEFAULT_VGGISH_DIM),
    )
    if pipeline.hop > pipeline.block_len:
        raise ConfigError(f"Block hop {pipeline.hop} s exceeds block length {pipeline.block_len} s")
    return pipeline


def _parse_experiment(data: dict[str, Any]) -> ExperimentConfig:
    svm = SvmParams(**data.get("svm", {}))
    cnn_data = dict(data.get("cnn", {}))
    for key in ("conv_channels", "dense_units"):
        if key in cnn_data:
            cnn_data[key] = tuple(cnn_data[key])
    return ExperimentConfig(
        name=data["name"],
        feature_set=FeatureSetId(data["feature_set"]),
        classifier=data["classifier"],
        classes=data["classes"],
        seed=data["seed"],
        svm=svm,
        cnn=CnnSettings(**cnn_data),
    )


def parse_config(data: dict[str, Any]) -> RunConfig:
    """
    Validate a config dictionary and build a RunConfig.
    Raises:
        ConfigError: on schema violations, a feature-set/classifier mismatch,
            invalid pipeline constants or duplicate experiment names.
    """
    errors = json_errors(data, "experiment_config")
    if errors:
        raise ConfigError("Configuration does not match the schema:", errors)
    experiments = tuple(_parse_experiment(e) for e in data.get("experiments", []))
    names = [e.name for e in experiments]
    dupes = sorted({n for n in names if names.count(n) > 1})
    if dupes:
        raise ConfigError(f"Duplicate experiment names: {dupes}")
    output_dir = Path(data["output_dir"])
    split = None
    if "split" in data:
        s = data["split"]
        split = SplitConfig(
            seed=s["seed"],
            undersample_seed=s["undersample_seed"],
            ratios=tuple(s.get("ratios", DEFAULT_RATIOS)),  # type: ignore[arg-type]
            undersample=s.get("undersample", True),
        )
    tsne = TsneConfig(**data["tsne"]) if "tsne" in data else None
    return RunConfig(
        manifest=Path(data["manifest"]),
        output_dir=output_dir,
        features_dir=Path(data.get("features_dir", output_dir / "features")),
        vggish=Path(data["vggish"]) if "vggish" in data else None,
        layered_as=data.get("layered_as", "Scream"),
        pipeline=_parse_pipeline(data.get("pipeline", {})),
        split=split,
        tsne=tsne,
        experiments=experiments,
    )


#############
# OVERRIDES #
#############


def merge_overrides(
    data: dict[str, Any],
    command: str,
    manifest: str | None = None,
    output_dir: str | None = None,
    seed: int | None = None,
    undersample_seed: int | None = None,
    feature_sets: Sequence[str] | None = None,
    classes: int | None = None,
) -> dict[str, Any]:
    """
    Return a copy of a raw config with command-line flags applied.

    --seed sets the split seed for `split`, the t-SNE seed for `project` and
    every experiment seed for `train`/`eval`. --feature-set and --classes
    rewrite a single experiment, filter a batch, or define the experiment
    when the config has none.
    """
    merged = copy.deepcopy(data)
    if manifest is not None:
        merged["manifest"] = manifest
    if output_dir is not None:
        merged["output_dir"] = output_dir
    if command == "split" and seed is not None:
        split = merged.setdefault("split", {})
        split["seed"] = seed
        split.setdefault("undersample_seed", seed)
    if undersample_seed is not None:
        merged.setdefault("split", {})["undersample_seed"] = undersample_seed
    if command == "project" and seed is not None:
        merged.setdefault("tsne", {})["seed"] = seed
    sets = [s.upper() for s in feature_sets] if feature_sets else None
    experiments = merged.get("experiments", [])
    if command in ("train", "eval") and (sets or classes is not None):
        if len(experiments) == 1 and (sets is None or len(sets) == 1):
            exp = experiments[0]
            if sets:
                exp["feature_set"] = sets[0]
                exp["classifier"] = CLASSIFIER_FOR_SET[FeatureSetId(sets[0])]
            if classes is not None:
                exp["classes"] = classes
            exp["name"] = default_experiment_name(exp["feature_set"], exp["classes"])
        elif experiments:
            merged["experiments"] = [
                e
                for e in experiments
                if (sets is None or e.get("feature_set") in sets)
                and (classes is None or e.get("classes") == classes)
            ]
        elif sets and classes is not None and seed is not None:
            merged["experiments"] = [
                {
                    "name": default_experiment_name(fs, classes),
                    "feature_set": fs,
                    "classifier": CLASSIFIER_FOR_SET[FeatureSetId(fs)],
                    "classes": classes,
                    "seed": seed,
                }
                for fs in sets
            ]
    if command in ("train", "eval") and seed is not None:
        for exp in merged.get("experiments", []):
            exp["seed"] = seed
    return merged


def _resolve_paths(data: dict[str, Any], base: Path) -> dict[str, Any]:
    resolved = dict(data)
    for key in _PATH_KEYS:
        if isinstance(resolved.get(key), str):
            resolved[key] = str(base / resolved[key])
    return resolved


def load_config(path: str | Path | None, command: str, **overrides: Any) -> RunConfig:
    """
    Read a config file (or start from an empty one), apply flag overrides
    and validate.
    Raises:
        ConfigError: unreadable file, invalid JSON or any parse_config error.
    """
    data: dict[str, Any] = {}
    if path is not None:
        path = Path(path)
        try:
            with open(path) as f:
                data = json.load(f)
        except OSError as e:
            raise ConfigError(f"Cannot read config {path}: {e}") from e
        except json.JSONDecodeError as e:
            raise ConfigError(f"Config {path} is not valid JSON: {e}") from e
        if not isinstance(data, dict):
            raise ConfigError(f"Config {path} must hold a JSON object.")
        data = _resolve_paths(data, path.parent)
    merged = merge_overrides(data, command, **overrides)
    config = parse_config(merged)
    logger.debug(f"Resolved configuration: {config}")
    return config
