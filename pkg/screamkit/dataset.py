"""
Annotations, block labels, class schemes, undersampling and band-level splits.

Songs are described by a manifest (song_id, band_id, audio_path,
annotation_path). Each annotation file lists labeled vocal intervals; time
outside every interval is NoVocal. Blocks take the label with the largest
overlap, and the train partition never shares a band with the held-out
partitions.
"""

###########
# IMPORTS #
###########

import csv
import io
import logging
import math
import re
from collections import Counter
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any

import numpy as np
import pandas as pd

from screamkit.featureset import BlockRef, FeatureVector
from screamkit.schemas import validate_json, validate_table
from screamkit.segmentation import Block

logger = logging.getLogger(__name__)

CLASSES_6 = ("Sing", "LowFry", "MidFry", "HighFry", "Layered", "NoVocal")
CLASSES_3 = ("Sing", "Scream", "NoVocal")
VOCAL_CLASSES = CLASSES_6[:5]
SCREAM_CLASSES = ("LowFry", "MidFry", "HighFry", "Layered")
# Earlier wins when overlaps tie
TIE_PRIORITY = ("Layered", "LowFry", "MidFry", "HighFry", "Sing", "NoVocal")
TIE_TOLERANCE = 1e-9
ANNOTATION_HEADER = ("start_seconds", "end_seconds", "label")
PARTITIONS = ("train", "validation", "test")
DEFAULT_RATIOS = (0.70, 0.15, 0.15)

_LABEL_LOOKUP = {re.sub(r"[\s_-]", "", name).lower(): name for name in CLASSES_6}

##########
# ERRORS #
##########


class AnnotationError(ValueError):
    """Base class for annotation failures."""


class AnnotationParseError(AnnotationError):
    """A row cannot be parsed or describes an invalid interval."""

    def __init__(self, line_number: int, message: str) -> None:
        self.line_number = line_number
        super().__init__(f"Line {line_number}: {message}")


class AnnotationOverlapError(AnnotationError):
    """Two intervals of the same song overlap."""


class AnnotationLabelError(AnnotationError):
    """A label is not one of the vocal classes."""


class SplitError(ValueError):
    """Raised when a band-level split is impossible or violated."""


class PartitionLeakError(SplitError):
    """Raised when training would consume a record outside its allowed partitions."""


class ManifestError(ValueError):
    """Raised for an invalid song manifest."""


#########
# TYPES #
#########


@dataclass(frozen=True)
class Annotation:
    start: float
    end: float
    label: str


@dataclass(frozen=True)
class LabeledBlock:
    """A block's identity, band and 6-class label; label3 is derived."""

    block_ref: BlockRef
    band_id: str
    start_time: float
    label6: str
    layered_as: str = "Scream"

    @property
    def label3(self) -> str:
        return map_3class(self.label6, self.layered_as)

    def label(self, class_key: int) -> str:
        return self.label6 if class_key == 6 else self.label3


@dataclass(frozen=True)
class ManifestRow:
    song_id: str
    band_id: str
    audio_path: Path
    annotation_path: Path


@dataclass(frozen=True)
class Split:
    """Band-disjoint train/validation/test partition of labeled blocks."""

    train: tuple[LabeledBlock, ...]
    validation: tuple[LabeledBlock, ...]
    test: tuple[LabeledBlock, ...]
    seed: int
    ratios: tuple[float, float, float] = DEFAULT_RATIOS
    train_bands: tuple[str, ...] = field(default=())

    def partition(self, name: str) -> tuple[LabeledBlock, ...]:
        if name not in PARTITIONS:
            raise SplitError(f"Unknown partition: {name}")
        return getattr(self, name)  # type: ignore[no-any-return]

    def check_band_disjoint(self) -> None:
        """Raise SplitError if any band appears in train and in the held-out partitions."""
        train_bands = {b.band_id for b in self.train}
        held_out = {b.band_id for b in self.validation} | {b.band_id for b in self.test}
        shared = train_bands & held_out
        if shared:
            raise SplitError(f"Bands present in train and held-out partitions: {sorted(shared)}")


#################
# CLASS SCHEMES #
#################


def class_names(class_key: int) -> tuple[str, ...]:
    if class_key == 6:
        return CLASSES_6
    if class_key == 3:
        return CLASSES_3
    raise ValueError(f"Class scheme must be 3 or 6: {class_key}")


def map_3class(label6: str, layered_as: str = "Scream") -> str:
    """Collapse a 6-class label: fry classes become Scream, Layered follows layered_as."""
    if label6 not in CLASSES_6:
        raise AnnotationLabelError(f"Unknown 6-class label: {label6!r}")
    if label6 == "Layered":
        return layered_as
    if label6 in SCREAM_CLASSES:
        return "Scream"
    return label6


def class_mapping(layered_as: str = "Scream") -> dict[str, str]:
    """Total 6-to-3 mapping."""
    return {name: map_3class(name, layered_as) for name in CLASSES_6}


def normalize_label(text: str) -> str:
    """Match a vocal label ignoring case, spaces, hyphens and underscores."""
    key = re.sub(r"[\s_-]", "", text).lower()
    label = _LABEL_LOOKUP.get(key)
    if label is None or label == "NoVocal":
        raise AnnotationLabelError(
            f"Unknown vocal label {text!r}; expected one of {', '.join(VOCAL_CLASSES)}"
        )
    return label


###############
# ANNOTATIONS #
###############


def parse_annotations(text: str) -> list[Annotation]:
    """
    Parse an annotation CSV with header start_seconds,end_seconds,label.
    Args:
        text: File contents.
    Returns:
        Annotations sorted by start time.
    Raises:
        AnnotationParseError: bad header, malformed row or end <= start
            (line numbers count the header as line 1).
        AnnotationLabelError: unknown label.
        AnnotationOverlapError: overlapping intervals.
    """
    rows = csv.reader(io.StringIO(text))
    annotations: list[Annotation] = []
    header_seen = False
    for line_number, row in enumerate(rows, start=1):
        cells = [c.strip() for c in row]
        if not any(cells):
            continue
        if not header_seen:
            if tuple(c.lower() for c in cells) != ANNOTATION_HEADER:
                raise AnnotationParseError(
                    line_number, f"Expected header {','.join(ANNOTATION_HEADER)}; got {','.join(cells)}"
                )
            header_seen = True
            continue
        if len(cells) != 3:
            raise AnnotationParseError(line_number, f"Expected 3 columns; got {len(cells)}")
        try:
            start, end = float(cells[0]), float(cells[1])
        except ValueError as e:
            raise AnnotationParseError(line_number, f"Non-numeric time ({e})") from e
        if not (math.isfinite(start) and math.isfinite(end)):
            raise AnnotationParseError(line_number, "Times must be finite.")
        if start < 0:
            raise AnnotationParseError(line_number, f"Start time is negative: {start}")
        if end <= start:
            raise AnnotationParseError(line_number, f"End {end} is not after start {start}")
        try:
            label = normalize_label(cells[2])
        except AnnotationLabelError as e:
            raise AnnotationLabelError(f"Line {line_number}: {e}") from e
        annotations.append(Annotation(start, end, label))
    if not header_seen:
        raise AnnotationParseError(1, "Annotation file is empty; a header row is required.")
    annotations.sort(key=lambda a: (a.start, a.end))
    for previous, current in zip(annotations, annotations[1:], strict=False):
        if current.start < previous.end:
            raise AnnotationOverlapError(
                f"Intervals overlap: [{previous.start}, {previous.end}) {previous.label} "
                f"and [{current.start}, {current.end}) {current.label}"
            )
    return annotations


def read_annotations(path: str | Path) -> list[Annotation]:
    """Validate an annotation CSV against its table schema, then parse it."""
    is_valid, errors = validate_table(Path(path), "annotations")
    if not is_valid:
        raise AnnotationParseError(1, f"{path} does not match the annotation schema: {'; '.join(errors)}")
    return parse_annotations(Path(path).read_text())


################
# BLOCK LABELS #
################


def interval_label(start: float, end: float, annotations: Sequence[Annotation]) -> str:
    """Class with the largest overlap with [start, end); gaps count as NoVocal."""
    overlap: dict[str, float] = dict.fromkeys(CLASSES_6, 0.0)
    for ann in annotations:
        covered = min(end, ann.end) - max(start, ann.start)
        if covered > 0:
            overlap[ann.label] += covered
    overlap["NoVocal"] = max(0.0, (end - start) - sum(overlap[c] for c in VOCAL_CLASSES))
    best = max(overlap.values())
    for name in TIE_PRIORITY:
        if overlap[name] >= best - TIE_TOLERANCE:
            return name
    raise AssertionError("unreachable")


def label_blocks(
    blocks: Sequence[Block],
    annotations: Sequence[Annotation],
    band_id: str,
    layered_as: str = "Scream",
) -> list[LabeledBlock]:
    """Give every block of one song exactly one 6-class label."""
    return [
        LabeledBlock(
            block_ref=BlockRef(block.source_id, block.block_index),
            band_id=band_id,
            start_time=block.start_time,
            label6=interval_label(block.start_time, block.start_time + block.duration, annotations),
            layered_as=layered_as,
        )
        for block in blocks
    ]


def labeled_blocks_from_vectors(
    vectors: Iterable[FeatureVector], layered_as: str = "Scream"
) -> list[LabeledBlock]:
    """Recover labeled blocks from feature records that carry labels and bands."""
    blocks = []
    for v in vectors:
        if v.label is None or not v.band_id:
            raise SplitError(f"Feature record {v.block_ref} lacks a label or band_id.")
        blocks.append(
            LabeledBlock(
                block_ref=v.block_ref,
                band_id=v.band_id,
                start_time=v.start_s or 0.0,
                label6=v.label,
                layered_as=layered_as,
            )
        )
    return blocks


#################
# UNDERSAMPLING #
#################


def undersample_target(counts: Mapping[str, int]) -> int:
    """Minimum class count floored to the thousand, or itself when below 1000."""
    smallest = min(counts.values())
    if smallest < 1000:
        return smallest
    return max(1, (smallest // 1000) * 1000)


def undersample(
    blocks: Sequence[LabeledBlock], class_key: int, seed: int
) -> list[LabeledBlock]:
    """
    Reduce every class above the target count by seeded sampling without replacement.
    Args:
        blocks: Labeled blocks (any order; sorted by block_ref internally).
        class_key: 3 or 6, the scheme whose classes are balanced.
        seed: Sampling seed.
    Returns:
        Kept blocks sorted by block_ref. Classes absent from the input stay absent.
    """
    if not blocks:
        raise SplitError("Cannot undersample an empty block list.")
    ordered = sorted(blocks, key=lambda b: b.block_ref)
    labels = [b.label(class_key) for b in ordered]
    counts = Counter(labels)
    target = undersample_target(counts)
    rng = np.random.default_rng(seed)
    keep: list[int] = []
    for name in class_names(class_key):
        members = [i for i, label in enumerate(labels) if label == name]
        if len(members) > target:
            chosen = rng.choice(len(members), size=target, replace=False)
            members = [members[i] for i in sorted(chosen)]
        keep.extend(members)
    keep.sort()
    logger.info(
        f"Undersampled {len(ordered)} blocks to {len(keep)} "
        f"(target {target} per class, counts {dict(sorted(counts.items()))})"
    )
    return [ordered[i] for i in keep]


##############
# BAND SPLIT #
##############


def _check_ratios(ratios: Sequence[float]) -> tuple[float, float, float]:
    if len(ratios) != 3:
        raise SplitError(f"Expected three split ratios; got {list(ratios)}")
    train, val, test = (float(r) for r in ratios)
    if min(train, val, test) < 0 or train <= 0 or val + test <= 0:
        raise SplitError(f"Split ratios must be non-negative with train and held-out > 0: {list(ratios)}")
    if abs(train + val + test - 1.0) > 1e-6:
        raise SplitError(f"Split ratios must sum to 1: {list(ratios)}")
    return train, val, test


def band_split(
    blocks: Sequence[LabeledBlock],
    ratios: Sequence[float] = DEFAULT_RATIOS,
    seed: int = 0,
) -> Split:
    """
    Assign whole bands to train, then halve the rest at block level.
    Bands are shuffled with the seed and stably sorted largest first; each
    band joins train when that brings the train size closer to the train
    ratio. Remaining blocks are shuffled and split by the validation:test
    ratio.
    Raises:
        SplitError: on bad ratios, missing band ids or fewer than 2 bands.
    """
    train_ratio, val_ratio, test_ratio = _check_ratios(ratios)
    missing = [b.block_ref for b in blocks if not b.band_id]
    if missing:
        raise SplitError(f"{len(missing)} block(s) have no band_id, e.g. {missing[0]}")
    ordered = sorted(blocks, key=lambda b: b.block_ref)
    sizes = Counter(b.band_id for b in ordered)
    bands = sorted(sizes)
    if len(bands) < 2:
        raise SplitError(f"A band-level split needs at least 2 bands; got {len(bands)}")
    rng = np.random.default_rng(seed)
    shuffled = [bands[i] for i in rng.permutation(len(bands))]
    shuffled.sort(key=lambda band: -sizes[band])
    target = train_ratio * len(ordered)
    train_bands: list[str] = []
    train_size = 0
    for band in shuffled:
        if abs(train_size + sizes[band] - target) < abs(train_size - target):
            train_bands.append(band)
            train_size += sizes[band]
    if not train_bands:
        train_bands.append(shuffled[0])
    if len(train_bands) == len(bands):
        train_bands.pop()
    train_set = set(train_bands)
    train = [b for b in ordered if b.band_id in train_set]
    rest = [b for b in ordered if b.band_id not in train_set]
    permutation = rng.permutation(len(rest))
    n_val = math.floor(len(rest) * val_ratio / (val_ratio + test_ratio))
    validation = sorted((rest[i] for i in permutation[:n_val]), key=lambda b: b.block_ref)
    test = sorted((rest[i] for i in permutation[n_val:]), key=lambda b: b.block_ref)
    split = Split(
        train=tuple(train),
        validation=tuple(validation),
        test=tuple(test),
        seed=seed,
        ratios=(train_ratio, val_ratio, test_ratio),
        train_bands=tuple(sorted(train_bands)),
    )
    split.check_band_disjoint()
    logger.info(
        f"Band split: {len(train_bands)}/{len(bands)} bands in train; "
        f"{len(train)}/{len(validation)}/{len(test)} blocks"
    )
    return split


def class_counts(blocks: Iterable[LabeledBlock], class_key: int) -> dict[str, int]:
    counts = Counter(b.label(class_key) for b in blocks)
    return {name: counts.get(name, 0) for name in class_names(class_key)}


def split_to_dict(
    split: Split,
    class_key: int,
    layered_as: str = "Scream",
    undersample_seed: int | None = None,
    undersample_target: int | None = None,
) -> dict[str, Any]:
    """Serialisable split record (see split.schema.json)."""
    data = {
        "seed": split.seed,
        "undersample_seed": undersample_seed,
        "ratios": list(split.ratios),
        "classes": class_key,
        "layered_as": layered_as,
        "class_names": list(class_names(class_key)),
        "undersampled": undersample_target is not None,
        "undersample_target": undersample_target,
        "class_counts": {p: class_counts(split.partition(p), class_key) for p in PARTITIONS},
        "train_bands": list(split.train_bands),
    }
    for name in PARTITIONS:
        data[name] = [[b.block_ref.source_id, b.block_ref.block_index] for b in split.partition(name)]
    validate_json(data, "split")
    return data


def split_from_dict(data: Mapping[str, Any]) -> dict[str, list[BlockRef]]:
    """Block references per partition from a split record.

    Raises:
        SchemaValidationError: if the record is malformed.
        SplitError: if a block appears in more than one partition.
    """
    validate_json(data, "split")
    refs = {name: [BlockRef(s, int(i)) for s, i in data[name]] for name in PARTITIONS}
    seen: set[BlockRef] = set()
    for name in PARTITIONS:
        overlap = seen & set(refs[name])
        if overlap:
            raise SplitError(f"Block {sorted(overlap)[0]} appears in more than one partition.")
        seen |= set(refs[name])
    return refs


def partition_lookup(refs: Mapping[str, Sequence[BlockRef]]) -> dict[BlockRef, str]:
    return {ref: name for name, members in refs.items() for ref in members}


def tag_partitions(
    lookup: Mapping[BlockRef, str], vectors: Iterable[FeatureVector]
) -> dict[str, list[FeatureVector]]:
    """Group feature records by split partition, tagging each with its partition."""
    grouped: dict[str, list[FeatureVector]] = {name: [] for name in PARTITIONS}
    for vector in vectors:
        name = lookup.get(vector.block_ref)
        if name is not None:
            grouped[name].append(replace(vector, partition=name))
    return grouped


def audit_partitions(
    lookup: Mapping[BlockRef, str],
    consumed: Iterable[FeatureVector],
    allowed: Sequence[str] = ("train", "validation"),
) -> dict[str, int]:
    """
    Count the records a model consumes per split partition.

    Every record is looked up again by block reference; its partition tag,
    when present, must agree with the split.

    Raises:
        PartitionLeakError: a record outside `allowed`, outside the split, or
            tagged with a partition the split does not give it.
    """
    counts = dict.fromkeys(PARTITIONS, 0)
    for vector in consumed:
        name = lookup.get(vector.block_ref)
        if name is None:
            raise PartitionLeakError(f"Record {vector.block_ref} is not part of the split.")
        if vector.partition is not None and vector.partition != name:
            raise PartitionLeakError(
                f"Record {vector.block_ref} is tagged {vector.partition} "
                f"but the split places it in {name}."
            )
        counts[name] += 1
    leaked = {name: counts[name] for name in PARTITIONS if counts[name] and name not in allowed}
    if leaked:
        raise PartitionLeakError(
            f"Training would consume records from {leaked}; only {list(allowed)} are allowed."
        )
    return counts


############
# MANIFEST #
############


def read_manifest(path: str | Path) -> list[ManifestRow]:
    """
    Read a song manifest CSV.
    Relative audio and annotation paths resolve against the manifest's directory.
    Raises:
        ManifestError: schema violations or duplicate song ids.
    """
    path = Path(path)
    is_valid, errors = validate_table(path, "manifest")
    if not is_valid:
        raise ManifestError(f"{path} does not match the manifest schema: {'; '.join(errors)}")
    df = pd.read_csv(path, dtype=str, keep_default_na=False)
    dupes = df.loc[df["song_id"].duplicated(), "song_id"].tolist()
    if dupes:
        raise ManifestError(f"Duplicate song_id in {path}: {sorted(set(dupes))}")
    base = path.parent
    return [
        ManifestRow(
            song_id=row.song_id,
            band_id=row.band_id,
            audio_path=base / row.audio_path,
            annotation_path=base / row.annotation_path,
        )
        for row in df.itertuples(index=False)
    ]


##############
# STATISTICS #
##############


@dataclass
class DatasetStats:
    n_blocks: int
    n_songs: int
    class_blocks: dict[str, int]
    class_seconds: dict[str, float]
    total_annotated_minutes: float
    total_audio_minutes: float
    band_songs: dict[str, int]
    song_durations: dict[str, float]
    length_histogram: dict[str, int]

    def to_dict(self) -> dict[str, Any]:
        return {
            "n_blocks": self.n_blocks,
            "n_songs": self.n_songs,
            "class_blocks": self.class_blocks,
            "class_seconds": self.class_seconds,
            "total_annotated_minutes": self.total_annotated_minutes,
            "total_audio_minutes": self.total_audio_minutes,
            "band_songs": self.band_songs,
            "song_durations": self.song_durations,
            "length_histogram": self.length_histogram,
        }

    def class_table(self) -> pd.DataFrame:
        """Per-class blocks, seconds and minutes in 6-class order."""
        df = pd.DataFrame(
            {
                "class": list(CLASSES_6),
                "blocks": [self.class_blocks[c] for c in CLASSES_6],
                "seconds": [self.class_seconds[c] for c in CLASSES_6],
            }
        )
        df["minutes"] = df["seconds"] / 60.0
        return df


def dataset_stats(
    blocks: Sequence[LabeledBlock],
    annotations: Mapping[str, Sequence[Annotation]] | None = None,
    durations: Mapping[str, float] | None = None,
    song_bands: Mapping[str, str] | None = None,
) -> DatasetStats:
    """
    Summarise a labeled dataset.
    Args:
        blocks: Labeled blocks of every song.
        annotations: Annotations per song, for annotated time per class.
        durations: Song durations in seconds; NoVocal time is the duration
            not covered by annotations.
        song_bands: Band of every song, so songs without blocks still count.
    Returns:
        DatasetStats with zero entries for every class absent from the data.
    """
    annotations = annotations or {}
    durations = durations or {}
    block_df = pd.DataFrame(
        {
            "source_id": [b.block_ref.source_id for b in blocks],
            "band_id": [b.band_id for b in blocks],
            "label": pd.Categorical([b.label6 for b in blocks], categories=CLASSES_6),
        }
    )
    class_blocks = {str(k): int(v) for k, v in block_df["label"].value_counts(sort=False).items()}
    ann_df = pd.DataFrame(
        [
            {"song": song, "label": a.label, "seconds": a.end - a.start}
            for song, anns in annotations.items()
            for a in anns
        ],
        columns=["song", "label", "seconds"],
    )
    seconds = ann_df.groupby("label")["seconds"].sum()
    class_seconds = {name: float(seconds.get(name, 0.0)) for name in CLASSES_6}
    annotated = float(ann_df["seconds"].sum())
    total_audio = float(sum(durations.values()))
    class_seconds["NoVocal"] = max(0.0, total_audio - annotated)
    songs = dict(song_bands or {})
    songs.update(zip(block_df["source_id"], block_df["band_id"], strict=True))
    band_songs = pd.Series(list(songs.values()), dtype=str).value_counts().to_dict()
    minutes = pd.Series(durations, dtype=float) // 60
    histogram = minutes.astype(int).value_counts().sort_index() if len(minutes) else pd.Series(dtype=int)
    return DatasetStats(
        n_blocks=len(blocks),
        n_songs=len(set(songs) | set(durations)),
        class_blocks=class_blocks,
        class_seconds=class_seconds,
        total_annotated_minutes=annotated / 60.0,
        total_audio_minutes=total_audio / 60.0,
        band_songs={str(k): int(v) for k, v in sorted(band_songs.items())},
        song_durations={k: float(v) for k, v in sorted(durations.items())},
        length_histogram={str(k): int(v) for k, v in histogram.items()},
    )
