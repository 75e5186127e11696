#!/usr/bin/env python3
DESC = """
Run the vocal-technique benchmark: extract features from a song manifest,
make a band-level split, train and evaluate SVM/CNN configurations, project
feature spaces with t-SNE, summarise the dataset and check output files
against their schemas.

Exit codes: 0 success, 1 partial failure, 2 invalid configuration or schema.
"""

###########
# IMPORTS #
###########

import argparse
import json
import logging
import math
import sys
import time
from collections import Counter
from collections.abc import Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any

import numpy as np

from screamkit.audio_io import decode_wav, prepare_clip
from screamkit.cnn import CnnModel, cnn_init, cnn_predict, cnn_train, parameter_count
from screamkit.config import ConfigError, ExperimentConfig, RunConfig, TsneConfig, load_config
from screamkit.dataset import (
    CLASSES_3,
    PARTITIONS,
    Annotation,
    LabeledBlock,
    ManifestRow,
    audit_partitions,
    band_split,
    class_mapping,
    class_names,
    dataset_stats,
    label_blocks,
    labeled_blocks_from_vectors,
    map_3class,
    partition_lookup,
    read_annotations,
    read_manifest,
    split_from_dict,
    split_to_dict,
    tag_partitions,
    undersample,
    undersample_target,
)
from screamkit.featureset import (
    BlockRef,
    FeatureSetId,
    FeatureVector,
    apply_normalizer,
    assemble_many,
    attach_labels,
    fit_normalizer,
    ingest_vggish,
    read_feature_records,
    write_feature_records,
)
from screamkit.log import configure_logging
from screamkit.metrics import (
    EvalReport,
    ExperimentDescriptor,
    build_report,
    collapse_report,
    confusion_from_labels,
    emit_report,
    summarize_reports,
)
from screamkit.model_io import ModelFileError, model_load, model_save
from screamkit.plots import (
    plot_confusion,
    plot_projection,
    plot_recall,
    plot_recall_comparison,
    save_svg,
)
from screamkit.schemas import SchemaValidationError, validate_json, validate_outputs
from screamkit.segmentation import make_blocks
from screamkit.svm import SvmModel, svm_predict_batch, svm_train
from screamkit.tsne import tsne

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_PARTIAL = 1
EXIT_INVALID = 2

DEFAULT_EXTRACT_SETS = (FeatureSetId.FS1, FeatureSetId.FS3, FeatureSetId.FS4, FeatureSetId.FS5)
LABEL_SOURCE_ORDER = (
    FeatureSetId.FS1,
    FeatureSetId.FS3,
    FeatureSetId.FS4,
    FeatureSetId.FS2,
    FeatureSetId.FS5,
)

####################
# HELPER FUNCTIONS #
####################


def _write_json(path: Path, obj: object, schema: str | None = None) -> None:
    """Write `obj` as pretty, key-sorted JSON, checking it against a schema first."""
    if schema is not None:
        validate_json(obj, schema)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _read_json(path: Path) -> Any:
    with open(path) as f:
        return json.load(f)


def _finite_or_none(value: float) -> float | None:
    return value if math.isfinite(value) else None


def feature_path(config: RunConfig, set_id: FeatureSetId) -> Path:
    return config.features_dir / f"features_{set_id.lower()}.jsonl"


def split_path(config: RunConfig, class_key: int) -> Path:
    return config.output_dir / "splits" / f"split_{class_key}class.json"


def model_path(config: RunConfig, name: str) -> Path:
    return config.output_dir / "models" / f"{name}.model.json"


def read_features(config: RunConfig, set_id: FeatureSetId) -> list[FeatureVector]:
    path = feature_path(config, set_id)
    if not path.exists():
        raise FileNotFoundError(f"No {set_id} feature file at {path}; run extract first.")
    return read_feature_records(path, config.pipeline.dsp, config.pipeline.vggish_dim)


def block_label(vector: FeatureVector, class_key: int, layered_as: str) -> str:
    if vector.label is None:
        raise ValueError(f"Feature record {vector.block_ref} has no label.")
    return vector.label if class_key == 6 else map_3class(vector.label, layered_as)


def read_partition_lookup(config: RunConfig, class_key: int) -> dict[BlockRef, str]:
    """Block reference to partition name, from the split of one class scheme."""
    path = split_path(config, class_key)
    if not path.exists():
        raise FileNotFoundError(f"No {class_key}-class split at {path}; run split first.")
    return partition_lookup(split_from_dict(_read_json(path)))


def partition_vectors(
    config: RunConfig, vectors: Sequence[FeatureVector], class_key: int
) -> dict[str, list[FeatureVector]]:
    """Group feature records by the partition the split file assigns them."""
    return tag_partitions(read_partition_lookup(config, class_key), vectors)


def experiment_descriptor(exp: ExperimentConfig) -> ExperimentDescriptor:
    return ExperimentDescriptor(
        feature_set=str(exp.feature_set),
        classifier=exp.classifier,
        classes=exp.classes,
        seed=exp.seed,
        name=exp.name,
    )


###########
# EXTRACT #
###########


@dataclass
class SongResult:
    song_id: str
    labeled: list[LabeledBlock]
    annotations: list[Annotation]
    duration: float
    vectors: dict[FeatureSetId, list[FeatureVector]] = field(default_factory=dict)


def process_song(
    row: ManifestRow, config: RunConfig, set_ids: Sequence[FeatureSetId] = ()
) -> SongResult:
    """Decode, block and label one song, computing the requested feature sets."""
    pipeline = config.pipeline
    clip = decode_wav(row.audio_path.read_bytes(), source_id=row.song_id)
    clip = prepare_clip(clip, pipeline.sample_rate)
    blocks = make_blocks(clip, pipeline.block_len, pipeline.hop, pipeline.sample_rate)
    annotations = read_annotations(row.annotation_path)
    labeled = label_blocks(blocks, annotations, row.band_id, config.layered_as)
    result = SongResult(row.song_id, labeled, annotations, clip.duration)
    result.vectors = {set_id: [] for set_id in set_ids}
    if set_ids:
        for block, lb in zip(blocks, labeled, strict=True):
            for set_id, vector in assemble_many(block, set_ids, pipeline.dsp).items():
                result.vectors[set_id].append(replace(vector, label=lb.label6, band_id=lb.band_id))
    return result


def process_manifest(
    rows: Sequence[ManifestRow],
    config: RunConfig,
    set_ids: Sequence[FeatureSetId] = (),
    workers: int = 1,
) -> tuple[list[SongResult], list[tuple[str, str]]]:
    """Process songs in parallel, keeping manifest order; failures are collected per row."""
    results: list[SongResult] = []
    failures: list[tuple[str, str]] = []
    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        futures = [pool.submit(process_song, row, config, set_ids) for row in rows]
        for i, (row, future) in enumerate(zip(rows, futures, strict=True), start=1):
            try:
                result = future.result()
            except (OSError, ValueError) as e:
                failures.append((row.song_id, str(e)))
                logger.error(f"Song {row.song_id} ({i}/{len(rows)}) failed: {e}")
                continue
            results.append(result)
            logger.info(
                f"Processed song {row.song_id} ({i}/{len(rows)}): {len(result.labeled)} blocks"
            )
    return results, failures


def _report_failures(failures: Sequence[tuple[str, str]]) -> None:
    logger.error(f"{len(failures)} song(s) failed:")
    for song_id, message in failures:
        logger.error(f"  - {song_id}: {message}")


def cmd_extract(config: RunConfig, set_ids: Sequence[FeatureSetId], workers: int = 1) -> int:
    """Write one JSON-Lines feature file per requested set."""
    rows = read_manifest(config.manifest)
    logger.info(f"Extracting {[str(s) for s in set_ids]} for {len(rows)} song(s)")
    computed = [s for s in set_ids if s is not FeatureSetId.FS2]
    if FeatureSetId.FS2 in set_ids and config.vggish is None:
        raise ConfigError("FS2 needs precomputed embeddings; pass --vggish or set vggish in the config.")
    results, failures = process_manifest(rows, config, computed, workers)
    config.features_dir.mkdir(parents=True, exist_ok=True)
    for set_id in computed:
        path = feature_path(config, set_id)
        count = write_feature_records(path, (v for r in results for v in r.vectors[set_id]))
        logger.info(f"Wrote {count} {set_id} record(s) to {path}")
    if FeatureSetId.FS2 in set_ids:
        assert config.vggish is not None
        embeddings = ingest_vggish(config.vggish, config.pipeline.vggish_dim)
        joined = attach_labels(embeddings, [lb for r in results for lb in r.labeled])
        path = feature_path(config, FeatureSetId.FS2)
        count = write_feature_records(path, joined)
        logger.info(f"Wrote {count} FS2 record(s) to {path}")
    if failures:
        _report_failures(failures)
        return EXIT_PARTIAL
    return EXIT_OK


#########
# SPLIT #
#########


def label_source(config: RunConfig, preferred: Sequence[FeatureSetId] = ()) -> Path:
    """The feature file whose labels define the blocks to split."""
    for set_id in [*preferred, *LABEL_SOURCE_ORDER]:
        path = feature_path(config, set_id)
        if path.exists():
            return path
    raise FileNotFoundError(f"No feature files under {config.features_dir}; run extract first.")


def cmd_split(
    config: RunConfig, class_keys: Sequence[int], preferred: Sequence[FeatureSetId] = ()
) -> int:
    split_config = config.require_split()
    source = label_source(config, preferred)
    logger.info(f"Reading block labels from {source}")
    vectors = read_feature_records(source, config.pipeline.dsp, config.pipeline.vggish_dim)
    blocks = labeled_blocks_from_vectors(vectors, config.layered_as)
    for class_key in class_keys:
        target = None
        kept = blocks
        if split_config.undersample:
            target = undersample_target(Counter(b.label(class_key) for b in blocks))
            kept = undersample(blocks, class_key, split_config.undersample_seed)
        split = band_split(kept, split_config.ratios, split_config.seed)
        split.check_band_disjoint()
        data = split_to_dict(
            split,
            class_key,
            config.layered_as,
            split_config.undersample_seed if split_config.undersample else None,
            target,
        )
        path = split_path(config, class_key)
        _write_json(path, data, "split")
        logger.info(f"Wrote {class_key}-class split to {path}: {data['class_counts']}")
    return EXIT_OK


#########
# TRAIN #
#########


def _train_svm(
    exp: ExperimentConfig, train: Sequence[FeatureVector], labels: Sequence[str]
) -> tuple[SvmModel, dict[str, Any]]:
    normalizer = fit_normalizer(train)
    normalized = [apply_normalizer(normalizer, v) for v in train]
    model = svm_train(normalized, labels, exp.svm, class_names(exp.classes), normalizer)
    log = {
        "gamma": model.kernel.gamma,
        "machines": [
            {
                "pair": [model.classes[m.pair[0]], model.classes[m.pair[1]]],
                "n_iter": m.n_iter,
                "n_support": len(m.dual_coef),
                "objective": m.objective_history[-1] if m.objective_history else None,
            }
            for m in model.machines
        ],
    }
    return model, log


def _train_cnn(
    config: RunConfig,
    exp: ExperimentConfig,
    train: Sequence[FeatureVector],
    validation: Sequence[FeatureVector],
) -> tuple[CnnModel, dict[str, Any]]:
    names = class_names(exp.classes)
    index = {name: i for i, name in enumerate(names)}

    def arrays(vectors: Sequence[FeatureVector]) -> tuple[np.ndarray, np.ndarray]:
        y = np.array([index[block_label(v, exp.classes, config.layered_as)] for v in vectors], dtype=np.int64)
        if not vectors:
            return np.zeros((0, *train[0].values.shape)), y
        return np.stack([v.values for v in vectors]), y

    X_train, y_train = arrays(train)
    n_mels, n_frames = X_train.shape[1:]
    arch = exp.cnn.architecture(exp.classes, n_mels, n_frames)
    model = cnn_init(exp.classes, n_mels, n_frames, exp.seed, arch, names)
    logger.info(f"CNN for {exp.name}: {parameter_count(model):,} parameters")
    trained, history = cnn_train(model, (X_train, y_train), arrays(validation), exp.cnn.train_config(exp.seed))
    log = {
        "parameters": parameter_count(trained),
        "history": [{k: _finite_or_none(float(v)) for k, v in epoch.items()} for epoch in history],
    }
    return trained, log


def train_experiment(config: RunConfig, exp: ExperimentConfig) -> None:
    logger.info(f"Training {exp.name} ({exp.feature_set} + {exp.classifier}, {exp.classes} classes)")
    lookup = read_partition_lookup(config, exp.classes)
    grouped = tag_partitions(lookup, read_features(config, exp.feature_set))
    train = grouped["train"]
    if not train:
        raise ValueError(f"The split leaves no {exp.feature_set} training records for {exp.name}.")
    validation = grouped["validation"] if exp.classifier == "cnn" else []
    audit = audit_partitions(lookup, [*train, *validation])
    logger.info(
        f"Partition audit for {exp.name}: train={audit['train']}, "
        f"validation={audit['validation']}, test={audit['test']}"
    )
    labels = [block_label(v, exp.classes, config.layered_as) for v in train]
    model: SvmModel | CnnModel
    if exp.classifier == "svm":
        model, details = _train_svm(exp, train, labels)
    else:
        model, details = _train_cnn(config, exp, train, validation)
    model_save(model, model_path(config, exp.name))
    _write_json(
        config.output_dir / "logs" / f"{exp.name}_train.json",
        {
            "experiment": experiment_descriptor(exp).to_dict(),
            "kind": exp.classifier,
            "partition_audit": audit,
            **details,
        },
    )


def cmd_train(config: RunConfig) -> int:
    (config.output_dir / "models").mkdir(parents=True, exist_ok=True)
    for exp in config.require_experiments():
        train_experiment(config, exp)
    return EXIT_OK


########
# EVAL #
########


def evaluate_experiment(config: RunConfig, exp: ExperimentConfig) -> list[EvalReport]:
    """Report on the test partition, plus the 3-class reading of a 6-class result."""
    model = model_load(model_path(config, exp.name))
    expected = SvmModel if exp.classifier == "svm" else CnnModel
    if not isinstance(model, expected):
        raise ModelFileError(f"Model for {exp.name} is not a {exp.classifier.upper()} model.")
    test = partition_vectors(config, read_features(config, exp.feature_set), exp.classes)["test"]
    y_true = [block_label(v, exp.classes, config.layered_as) for v in test]
    if isinstance(model, SvmModel):
        y_pred, _ = svm_predict_batch(model, test)
    else:
        inputs = np.stack([v.values for v in test]) if test else np.zeros((0, 1, 1))
        y_pred, _ = cnn_predict(model, inputs)
    logger.info(f"Evaluated {exp.name} on {len(test)} test block(s)")
    cm = confusion_from_labels(y_true, y_pred, class_names(exp.classes))
    report = build_report(cm, experiment_descriptor(exp))
    reports_dir = config.output_dir / "reports"
    reports_dir.mkdir(parents=True, exist_ok=True)
    emit_report(report, reports_dir / f"{exp.name}_report.json")
    save_svg(plot_recall(report), reports_dir / f"{exp.name}_recall.svg")
    save_svg(plot_confusion(report), reports_dir / f"{exp.name}_confusion.svg")
    reports = [report]
    if exp.classes == 6:
        collapsed = collapse_report(report, class_mapping(config.layered_as), CLASSES_3)
        emit_report(collapsed, reports_dir / f"{exp.name}_collapsed_report.json")
        reports.append(collapsed)
    return reports


def cmd_eval(config: RunConfig) -> int:
    experiments = config.require_experiments()
    reports: list[EvalReport] = []
    for exp in experiments:
        reports.append(evaluate_experiment(config, exp)[0])
    if len(reports) > 1:
        reports_dir = config.output_dir / "reports"
        summary = summarize_reports(reports)
        summary.to_csv(reports_dir / "summary.tsv", sep="\t", index=False)
        logger.info(f"Summary of {len(reports)} experiment(s):\n{summary.to_string(index=False)}")
        for class_key in sorted({r.experiment.classes for r in reports}):
            group = [r for r in reports if r.experiment.classes == class_key]
            save_svg(
                plot_recall_comparison(group),
                reports_dir / f"recall_comparison_{class_key}class.svg",
            )
    return EXIT_OK


###########
# PROJECT #
###########


def project_features(
    config: RunConfig, set_id: FeatureSetId, settings: TsneConfig, class_key: int
) -> Path:
    vectors = read_features(config, set_id)
    if settings.partition != "all":
        vectors = partition_vectors(config, vectors, class_key)[settings.partition]
    if settings.max_points is not None and len(vectors) > settings.max_points:
        rng = np.random.default_rng(settings.seed)
        keep = np.sort(rng.choice(len(vectors), settings.max_points, replace=False))
        vectors = [vectors[i] for i in keep]
    labels = [block_label(v, class_key, config.layered_as) if v.label else None for v in vectors]
    if set_id is not FeatureSetId.FS5 and vectors:
        normalizer = fit_normalizer(vectors)
        vectors = [apply_normalizer(normalizer, v) for v in vectors]
    logger.info(f"Projecting {len(vectors)} {set_id} vector(s) ({settings.partition})")
    projection = tsne(
        vectors,
        perplexity=settings.perplexity,
        n_iter=settings.n_iter,
        seed=settings.seed,
        learning_rate=settings.learning_rate,
        labels=labels,
    )
    projection = replace(projection, partition=settings.partition)
    out_dir = config.output_dir / "projections"
    path = out_dir / f"projection_{set_id.lower()}.json"
    _write_json(path, projection.to_dict(), "projection")
    save_svg(plot_projection(projection), out_dir / f"projection_{set_id.lower()}.svg")
    return path


def cmd_project(
    config: RunConfig, set_ids: Sequence[FeatureSetId], settings: TsneConfig, class_key: int
) -> int:
    for set_id in set_ids:
        path = project_features(config, set_id, settings, class_key)
        logger.info(f"Wrote projection to {path}")
    return EXIT_OK


#########
# STATS #
#########


def cmd_stats(config: RunConfig, workers: int = 1) -> int:
    rows = read_manifest(config.manifest)
    results, failures = process_manifest(rows, config, (), workers)
    stats = dataset_stats(
        [lb for r in results for lb in r.labeled],
        annotations={r.song_id: r.annotations for r in results},
        durations={r.song_id: r.duration for r in results},
        song_bands={row.song_id: row.band_id for row in rows},
    )
    stats_dir = config.output_dir / "stats"
    _write_json(stats_dir / "dataset_stats.json", stats.to_dict(), "dataset_stats")
    stats.class_table().to_csv(stats_dir / "class_table.tsv", sep="\t", index=False)
    logger.info(
        f"{stats.n_songs} song(s), {stats.n_blocks} block(s), "
        f"{stats.total_audio_minutes:.1f} min of audio"
    )
    if failures:
        _report_failures(failures)
        return EXIT_PARTIAL
    return EXIT_OK


##########
# PARSER #
##########


def _feature_set(value: str) -> FeatureSetId:
    try:
        return FeatureSetId(value.upper())
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"unknown feature set: {value}") from e


def parse_arguments(argv: Sequence[str] | None = None) -> argparse.Namespace:
    """Parse command-line arguments."""
    parser = argparse.ArgumentParser(
        prog="screamkit", description=DESC, formatter_class=argparse.RawDescriptionHelpFormatter
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="Experiment config JSON.")
    common.add_argument("--manifest", help="Song manifest CSV (overrides the config).")
    common.add_argument("--out", help="Output directory (overrides the config).")
    sets = argparse.ArgumentParser(add_help=False)
    sets.add_argument(
        "--feature-set",
        dest="feature_sets",
        type=_feature_set,
        action="append",
        metavar="{fs1,fs2,fs3,fs4,fs5}",
        help="Feature set; repeat for several.",
    )
    classes = argparse.ArgumentParser(add_help=False)
    classes.add_argument("--classes", type=int, choices=[3, 6], help="Class scheme.")
    seed = argparse.ArgumentParser(add_help=False)
    seed.add_argument("--seed", type=int, help="Seed (overrides the config).")
    workers = argparse.ArgumentParser(add_help=False)
    workers.add_argument("--workers", type=int, default=1, help="Songs processed in parallel.")

    sub = parser.add_subparsers(dest="command", required=True)
    extract = sub.add_parser("extract", parents=[common, sets, workers], help="Compute feature files.")
    extract.add_argument("--vggish", help="JSON-Lines file of precomputed FS2 embeddings.")
    split = sub.add_parser("split", parents=[common, sets, classes, seed], help="Make band-level splits.")
    split.add_argument("--undersample-seed", type=int, help="Undersampling seed (defaults to --seed).")
    split.add_argument("--ratios", type=float, nargs=3, metavar=("TRAIN", "VAL", "TEST"))
    split.add_argument(
        "--no-undersample", action="store_true", help="Keep the imbalanced class distribution."
    )
    sub.add_parser("train", parents=[common, sets, classes, seed], help="Train configured models.")
    sub.add_parser("eval", parents=[common, sets, classes, seed], help="Evaluate trained models.")
    project = sub.add_parser("project", parents=[common, sets, classes, seed], help="t-SNE projections.")
    project.add_argument("--partition", choices=["all", *PARTITIONS], help="Project one split partition.")
    project.add_argument("--max-points", type=int, help="Subsample to at most this many blocks.")
    project.add_argument("--perplexity", type=float)
    project.add_argument("--n-iter", type=int)
    sub.add_parser("stats", parents=[common, workers], help="Dataset statistics.")
    validate = sub.add_parser("validate", help="Check output files against their schemas.")
    validate.add_argument("--out", required=True, type=Path, help="Output directory to check.")
    return parser.parse_args(argv)


############
# COMMANDS #
############


def _resolve_config(args: argparse.Namespace) -> RunConfig:
    return load_config(
        args.config,
        args.command,
        manifest=args.manifest,
        output_dir=args.out,
        seed=getattr(args, "seed", None),
        undersample_seed=getattr(args, "undersample_seed", None),
        feature_sets=[str(s) for s in args.feature_sets] if getattr(args, "feature_sets", None) else None,
        classes=getattr(args, "classes", None),
    )


def _configured_sets(config: RunConfig) -> list[FeatureSetId]:
    return sorted({e.feature_set for e in config.experiments})


def run_command(args: argparse.Namespace) -> int:
    if args.command == "validate":
        return validate_outputs(args.out)
    config = _resolve_config(args)
    if args.command == "extract":
        set_ids = args.feature_sets or _configured_sets(config) or list(DEFAULT_EXTRACT_SETS)
        if args.vggish:
            config = replace(config, vggish=Path(args.vggish))
            if not args.feature_sets and FeatureSetId.FS2 not in set_ids:
                set_ids.append(FeatureSetId.FS2)
        return cmd_extract(config, sorted(set(set_ids)), args.workers)
    if args.command == "split":
        if args.no_undersample or args.ratios:
            split_config = config.require_split()
            if args.no_undersample:
                split_config = replace(split_config, undersample=False)
            if args.ratios:
                split_config = replace(split_config, ratios=tuple(args.ratios))
            config = replace(config, split=split_config)
        keys = [args.classes] if args.classes else sorted({e.classes for e in config.experiments}) or [3, 6]
        return cmd_split(config, keys, args.feature_sets or ())
    if args.command == "train":
        return cmd_train(config)
    if args.command == "eval":
        return cmd_eval(config)
    if args.command == "project":
        if config.tsne is None:
            raise ConfigError("t-SNE needs a seed; pass --seed or add a tsne section to the config.")
        settings = config.tsne
        for name in ("partition", "max_points", "perplexity", "n_iter"):
            value = getattr(args, name)
            if value is not None:
                settings = replace(settings, **{name: value})
        set_ids = args.feature_sets or _configured_sets(config) or [FeatureSetId.FS1]
        return cmd_project(config, set_ids, settings, args.classes or 6)
    return cmd_stats(config, args.workers)


def main(argv: Sequence[str] | None = None) -> int:
    """Main entry point."""
    configure_logging()
    logger.info("Initializing screamkit.")
    start_time = time.time()
    args = parse_arguments(argv)
    logger.info(f"Arguments: {args}")
    try:
        exit_code = run_command(args)
    except (ConfigError, SchemaValidationError) as e:
        logger.error(f"Invalid configuration or input schema: {e}")
        exit_code = EXIT_INVALID
    except (OSError, ValueError, RuntimeError) as e:
        logger.error(f"{args.command} failed: {e}")
        exit_code = EXIT_PARTIAL
    end_time = time.time()
    logger.info(f"Total time elapsed: {end_time - start_time:.2f} seconds")
    return exit_code


if __name__ == "__main__":
    sys.exit(main())
