"""
Assemble the five per-block feature sets.

FS1, FS3 and FS4 aggregate frame descriptors into mean/std vectors, FS5 keeps
the log-mel matrix, and FS2 is ingested from precomputed embedding files.
Also holds the z-score Normalizer and the JSON-Lines feature file codec.
"""

###########
# IMPORTS #
###########

import json
import logging
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field, replace
from enum import StrEnum
from pathlib import Path
from typing import TYPE_CHECKING, Any, NamedTuple

import numpy as np

from screamkit import dsp_features as dsp
from screamkit.schemas import json_errors
from screamkit.segmentation import Block

if TYPE_CHECKING:
    from screamkit.dataset import LabeledBlock

logger = logging.getLogger(__name__)

DEFAULT_VGGISH_DIM = 128

##########
# ERRORS #
##########


class FeatureSetError(ValueError):
    """Raised for invalid feature-set requests or inconsistent vectors."""


class VggishError(ValueError):
    """Base class for embedding-file ingestion failures."""


class VggishJsonError(VggishError):
    """A line of the embedding file is not valid JSON."""


class VggishBlockRefError(VggishError):
    """A record's block reference is missing, malformed or duplicated."""


class VggishDimensionError(VggishError):
    """Embeddings in one file disagree in length."""


class NormalizerError(ValueError):
    """Raised when a normalizer cannot be fitted or applied."""


class FeatureFileError(ValueError):
    """Raised for an invalid record in a feature file."""

    def __init__(self, path: str | Path, line_number: int, message: str) -> None:
        self.path = str(path)
        self.line_number = line_number
        super().__init__(f"{path}, line {line_number}: {message}")


#########
# TYPES #
#########


class FeatureSetId(StrEnum):
    FS1 = "FS1"
    FS2 = "FS2"
    FS3 = "FS3"
    FS4 = "FS4"
    FS5 = "FS5"


# Descriptors aggregated into each summary feature set, in vector order
SET_DESCRIPTORS: dict[FeatureSetId, tuple[str, ...]] = {
    FeatureSetId.FS1: dsp.DESCRIPTOR_ORDER,
    FeatureSetId.FS3: ("mfcc", "delta_mfcc"),
    FeatureSetId.FS4: ("rms", "zcr", "centroid", "contrast", "flatness", "rolloff"),
}


class BlockRef(NamedTuple):
    source_id: str
    block_index: int


@dataclass(frozen=True, eq=False)
class FeatureVector:
    """Feature representation of one block.

    values is 1-D for FS1-FS4 and (n_mels, frames) for FS5. partition is the
    split partition the record was assigned to once a split is applied; it is
    never written to feature files.
    """

    set_id: FeatureSetId
    values: np.ndarray
    block_ref: BlockRef
    label: str | None = None
    band_id: str | None = None
    start_s: float | None = None
    partition: str | None = None

    def __post_init__(self) -> None:
        set_id = FeatureSetId(self.set_id)
        values = np.array(self.values, dtype=np.float64)
        expected_ndim = 2 if set_id is FeatureSetId.FS5 else 1
        if values.ndim != expected_ndim or values.size == 0:
            raise FeatureSetError(
                f"{set_id} values for {self.block_ref} must be a non-empty "
                f"{expected_ndim}-D array; got shape {values.shape}"
            )
        if not np.all(np.isfinite(values)):
            raise FeatureSetError(f"{set_id} vector for {self.block_ref} has non-finite values.")
        values.flags.writeable = False
        object.__setattr__(self, "set_id", set_id)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "block_ref", BlockRef(*self.block_ref))

    def with_values(self, values: np.ndarray) -> "FeatureVector":
        return replace(self, values=values)


def expected_length(
    set_id: FeatureSetId | str,
    params: dsp.DspParams | None = None,
    vggish_dim: int = DEFAULT_VGGISH_DIM,
) -> int:
    """Vector length of a 1-D feature set (76/128/52/24 under defaults)."""
    params = params or dsp.DspParams()
    dims = {
        "mfcc": params.n_mfcc,
        "delta_mfcc": params.n_mfcc,
        "contrast": params.contrast_bands + 1,
    }
    set_id = FeatureSetId(set_id)
    if set_id is FeatureSetId.FS2:
        return vggish_dim
    if set_id is FeatureSetId.FS5:
        raise FeatureSetError("FS5 is a matrix; use expected_shape.")
    return 2 * sum(dims.get(name, 1) for name in SET_DESCRIPTORS[set_id])


def expected_shape(n_samples: int, params: dsp.DspParams | None = None) -> tuple[int, int]:
    """FS5 matrix shape for a block of n_samples (128 x 87 under defaults)."""
    params = params or dsp.DspParams()
    return params.n_mels, 1 + n_samples // params.hop_length


###############
# AGGREGATION #
###############


def aggregate(series: Sequence[dsp.FrameSeries]) -> np.ndarray:
    """Mean then population std of every dimension, in series order.

    Raises:
        FeatureSetError: on an empty list, empty series or unequal frame counts.
    """
    if not series:
        raise FeatureSetError("Cannot aggregate an empty list of frame series.")
    frame_counts = {s.n_frames for s in series}
    if len(frame_counts) != 1:
        raise FeatureSetError(
            f"Frame series disagree in frame count: "
            f"{ {s.name: s.n_frames for s in series} }"
        )
    if 0 in frame_counts:
        raise FeatureSetError("Cannot aggregate frame series with no frames.")
    stacked = np.vstack([s.values for s in series])
    stats = np.empty((stacked.shape[0], 2))
    stats[:, 0] = stacked.mean(axis=1)
    stats[:, 1] = stacked.std(axis=1)
    return stats.reshape(-1)


def compute_descriptors(
    block: Block,
    names: Iterable[str],
    params: dsp.DspParams,
    spec: dsp.Spectrogram | None = None,
) -> dict[str, dsp.FrameSeries]:
    """Compute the named frame descriptors, sharing one STFT and log-mel."""
    wanted = set(names)
    if spec is None:
        spec = dsp.stft(block, params.n_fft, params.hop_length, params.sample_rate)
    out: dict[str, dsp.FrameSeries] = {}
    if wanted & {"mfcc", "delta_mfcc"}:
        logmel = _logmel(spec, params)
        out["mfcc"] = dsp.mfcc(logmel, params.n_mfcc)
        out["delta_mfcc"] = dsp.delta(out["mfcc"], params.delta_width)
    if "rms" in wanted:
        out["rms"] = dsp.frame_rms(block, params.n_fft, params.hop_length)
    if "zcr" in wanted:
        out["zcr"] = dsp.frame_zcr(block, params.n_fft, params.hop_length)
    if "centroid" in wanted:
        out["centroid"] = dsp.spectral_centroid(spec)
    if "contrast" in wanted:
        out["contrast"] = dsp.spectral_contrast(
            spec,
            params.contrast_bands,
            params.contrast_quantile,
            params.contrast_fmin,
            params.power_floor,
        )
    if "flatness" in wanted:
        out["flatness"] = dsp.spectral_flatness(spec, params.power_floor)
    if "rolloff" in wanted:
        out["rolloff"] = dsp.spectral_rolloff(spec, params.rolloff)
    return out


def _logmel(spec: dsp.Spectrogram, params: dsp.DspParams) -> dsp.LogMelSpectrogram:
    mel = dsp.mel_spectrogram(spec, params.n_mels, params.fmin, params.fmax, params.mel_power)
    return dsp.log_compress(mel, params.power_floor)


def assemble_many(
    block: Block,
    set_ids: Iterable[FeatureSetId | str],
    params: dsp.DspParams | None = None,
) -> dict[FeatureSetId, FeatureVector]:
    """Build several feature sets for one block from a single analysis pass.

    Raises:
        FeatureSetError: if FS2 is requested (it is ingested, not computed).
    """
    params = params or dsp.DspParams()
    ids = [FeatureSetId(s) for s in set_ids]
    if FeatureSetId.FS2 in ids:
        raise FeatureSetError("FS2 embeddings are ingested with ingest_vggish, not computed.")
    names = {name for s in ids if s in SET_DESCRIPTORS for name in SET_DESCRIPTORS[s]}
    spec = dsp.stft(block, params.n_fft, params.hop_length, params.sample_rate)
    descriptors = compute_descriptors(block, names, params, spec) if names else {}
    ref = BlockRef(block.source_id, block.block_index)
    out: dict[FeatureSetId, FeatureVector] = {}
    for set_id in ids:
        if set_id is FeatureSetId.FS5:
            values = _logmel(spec, params).values
        else:
            values = aggregate([descriptors[name] for name in SET_DESCRIPTORS[set_id]])
            if len(values) != expected_length(set_id, params):
                raise FeatureSetError(
                    f"{set_id} vector for {ref} has length {len(values)}; "
                    f"expected {expected_length(set_id, params)}"
                )
        out[set_id] = FeatureVector(
            set_id=set_id, values=values, block_ref=ref, start_s=block.start_time
        )
    return out


def assemble(
    block: Block, set_id: FeatureSetId | str, params: dsp.DspParams | None = None
) -> FeatureVector:
    """Build one feature set (FS1, FS3, FS4 or FS5) for a block."""
    set_id = FeatureSetId(set_id)
    return assemble_many(block, [set_id], params)[set_id]


##########
# VGGISH #
##########


def _parse_block_ref(record: Any, line_number: int) -> BlockRef:
    if not isinstance(record, dict):
        raise VggishBlockRefError(f"Line {line_number}: record is not a JSON object.")
    source_id = record.get("source_id")
    block_index = record.get("block_index")
    if not isinstance(source_id, str) or not source_id:
        raise VggishBlockRefError(f"Line {line_number}: source_id must be a non-empty string.")
    if isinstance(block_index, bool) or not isinstance(block_index, int) or block_index < 0:
        raise VggishBlockRefError(
            f"Line {line_number}: block_index must be a non-negative integer; got {block_index!r}"
        )
    return BlockRef(source_id, block_index)


def ingest_vggish(path: str | Path, expected_dim: int | None = None) -> list[FeatureVector]:
    """
    Read precomputed embeddings, one JSON object per line:
    {"source_id": ..., "block_index": ..., "embedding": [...]}.
    Args:
        path: JSON-Lines embedding file.
        expected_dim: Required embedding length; when None the first record
            fixes it for the rest of the file.
    Returns:
        FS2 vectors in file order. An empty file yields an empty list.
    Raises:
        VggishJsonError: malformed JSON.
        VggishBlockRefError: missing, malformed or duplicate block reference.
        VggishDimensionError: embedding length disagreement.
    """
    vectors: list[FeatureVector] = []
    seen: set[BlockRef] = set()
    dim = expected_dim
    with open(path) as f:
        for line_number, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as e:
                raise VggishJsonError(f"{path}, line {line_number}: invalid JSON ({e})") from e
            ref = _parse_block_ref(record, line_number)
            if ref in seen:
                raise VggishBlockRefError(f"Line {line_number}: duplicate block reference {ref}")
            seen.add(ref)
            embedding = record.get("embedding")
            if not isinstance(embedding, list) or not embedding:
                raise VggishDimensionError(
                    f"Line {line_number}: embedding must be a non-empty list of numbers."
                )
            if dim is None:
                dim = len(embedding)
            if len(embedding) != dim:
                raise VggishDimensionError(
                    f"Line {line_number}: embedding has {len(embedding)} values; expected {dim}"
                )
            try:
                vectors.append(FeatureVector(FeatureSetId.FS2, np.asarray(embedding, float), ref))
            except (TypeError, ValueError) as e:
                raise VggishDimensionError(f"Line {line_number}: {e}") from e
    logger.info(f"Ingested {len(vectors)} embedding(s) of dimension {dim} from {path}")
    return vectors


def attach_labels(
    vectors: Sequence[FeatureVector], labeled_blocks: Sequence["LabeledBlock"]
) -> list[FeatureVector]:
    """Join ingested vectors to block labels, band ids and start times.

    Vectors without a labeled block are dropped; both kinds of mismatch are
    logged.
    """
    by_ref = {lb.block_ref: lb for lb in labeled_blocks}
    joined: list[FeatureVector] = []
    dropped = 0
    for vector in vectors:
        lb = by_ref.get(vector.block_ref)
        if lb is None:
            dropped += 1
            continue
        joined.append(replace(vector, label=lb.label6, band_id=lb.band_id, start_s=lb.start_time))
    missing = len(by_ref) - len(joined)
    if dropped:
        logger.warning(f"Dropped {dropped} embedding(s) with no matching labeled block.")
    if missing:
        logger.warning(f"{missing} labeled block(s) have no embedding.")
    return joined


##############
# NORMALIZER #
##############


@dataclass(frozen=True, eq=False)
class Normalizer:
    """Per-dimension z-score parameters fitted on a training partition.

    Zero-variance dimensions are stored with std 1.
    """

    set_id: FeatureSetId
    means: np.ndarray
    stds: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        means = np.array(self.means, dtype=np.float64)
        stds = np.array(self.stds, dtype=np.float64)
        if means.shape != stds.shape or means.ndim != 1:
            raise NormalizerError(
                f"Means and stds must be 1-D of equal length; got {means.shape}, {stds.shape}"
            )
        if not np.all(stds > 0):
            raise NormalizerError("Normalizer stds must be strictly positive.")
        means.flags.writeable = False
        stds.flags.writeable = False
        object.__setattr__(self, "set_id", FeatureSetId(self.set_id))
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "stds", stds)

    @property
    def dim(self) -> int:
        return len(self.means)

    def transform(self, values: np.ndarray) -> np.ndarray:
        """Normalise a vector or a (n, dim) matrix."""
        values = np.asarray(values, dtype=np.float64)
        if values.shape[-1] != self.dim:
            raise NormalizerError(
                f"Expected {self.dim} dimensions; got {values.shape[-1]}"
            )
        return (values - self.means) / self.stds

    def inverse(self, values: np.ndarray) -> np.ndarray:
        return np.asarray(values, dtype=np.float64) * self.stds + self.means


def stack_values(vectors: Sequence[FeatureVector]) -> np.ndarray:
    """Stack same-set vectors into an (n, ...) array."""
    if not vectors:
        raise FeatureSetError("No feature vectors to stack.")
    set_ids = {v.set_id for v in vectors}
    if len(set_ids) != 1:
        raise FeatureSetError(f"Mixed feature sets: {sorted(set_ids)}")
    shapes = {v.values.shape for v in vectors}
    if len(shapes) != 1:
        raise FeatureSetError(f"Feature vectors disagree in shape: {sorted(shapes)}")
    return np.stack([v.values for v in vectors])


def fit_normalizer(train: Sequence[FeatureVector]) -> Normalizer:
    """Fit per-dimension means and population stds on training vectors only.

    Raises:
        NormalizerError: on empty input, mixed set ids, unequal lengths or FS5.
    """
    if not train:
        raise NormalizerError("Cannot fit a normalizer on an empty training set.")
    set_ids = {v.set_id for v in train}
    if len(set_ids) != 1:
        raise NormalizerError(f"Training vectors mix feature sets: {sorted(set_ids)}")
    (set_id,) = set_ids
    if set_id is FeatureSetId.FS5:
        raise NormalizerError("FS5 log-mel input is not z-score normalised.")
    lengths = {len(v.values) for v in train}
    if len(lengths) != 1:
        raise NormalizerError(f"Training vectors disagree in length: {sorted(lengths)}")
    matrix = np.stack([v.values for v in train])
    stds = matrix.std(axis=0)
    stds[stds == 0] = 1.0
    return Normalizer(set_id=set_id, means=matrix.mean(axis=0), stds=stds)


def apply_normalizer(norm: Normalizer, v: FeatureVector) -> FeatureVector:
    if v.set_id is not norm.set_id:
        raise NormalizerError(f"Normalizer for {norm.set_id} cannot be applied to {v.set_id}")
    return v.with_values(norm.transform(v.values))


def normalizer_to_dict(norm: Normalizer) -> dict[str, Any]:
    return {
        "set_id": str(norm.set_id),
        "means": norm.means.tolist(),
        "stds": norm.stds.tolist(),
    }


def normalizer_from_dict(data: dict[str, Any]) -> Normalizer:
    try:
        return Normalizer(set_id=data["set_id"], means=data["means"], stds=data["stds"])
    except KeyError as e:
        raise NormalizerError(f"Normalizer record is missing {e}") from e


#################
# FEATURE FILES #
#################


def feature_record(vector: FeatureVector) -> dict[str, Any]:
    record: dict[str, Any] = {
        "source_id": vector.block_ref.source_id,
        "band_id": vector.band_id,
        "block_index": vector.block_ref.block_index,
        "start_s": vector.start_s,
        "label": vector.label,
        "set_id": str(vector.set_id),
    }
    if vector.set_id is FeatureSetId.FS5:
        record["shape"] = list(vector.values.shape)
    record["values"] = vector.values.reshape(-1).tolist()
    return record


def write_feature_records(path: str | Path, vectors: Iterable[FeatureVector]) -> int:
    """Write vectors as JSON-Lines; returns the record count."""
    count = 0
    with open(path, "w") as f:
        for vector in vectors:
            f.write(json.dumps(feature_record(vector)) + "\n")
            count += 1
    logger.debug(f"Wrote {count} feature record(s) to {path}")
    return count


def read_feature_records(
    path: str | Path, params: dsp.DspParams | None = None, vggish_dim: int | None = None
) -> list[FeatureVector]:
    """
    Read and validate a JSON-Lines feature file.
    Args:
        path: Feature file.
        params: Analysis constants used to check FS1/FS3/FS4 lengths and
            the FS5 mel count.
        vggish_dim: Required FS2 length; when None the first record fixes it.
    Returns:
        Vectors in file order.
    Raises:
        FeatureFileError: on malformed JSON, schema violations or wrong
            vector lengths, with the offending line number.
    """
    params = params or dsp.DspParams()
    vectors: list[FeatureVector] = []
    fs2_dim = vggish_dim
    with open(path) as f:
        for line_number, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as e:
                raise FeatureFileError(path, line_number, f"invalid JSON ({e})") from e
            errors = json_errors(record, "feature_record")
            if errors:
                raise FeatureFileError(path, line_number, "; ".join(errors))
            set_id = FeatureSetId(record["set_id"])
            values = np.asarray(record["values"], dtype=np.float64)
            if set_id is FeatureSetId.FS5:
                shape = tuple(record["shape"])
                if values.size != shape[0] * shape[1] or shape[0] != params.n_mels:
                    raise FeatureFileError(
                        path, line_number,
                        f"FS5 shape {shape} does not fit {values.size} values with "
                        f"{params.n_mels} mel bands",
                    )
                values = values.reshape(shape)
            else:
                if set_id is FeatureSetId.FS2 and fs2_dim is None:
                    fs2_dim = len(values)
                want = expected_length(set_id, params, fs2_dim or DEFAULT_VGGISH_DIM)
                if len(values) != want:
                    raise FeatureFileError(
                        path, line_number,
                        f"{set_id} vector has length {len(values)}; expected {want}",
                    )
            vectors.append(
                FeatureVector(
                    set_id=set_id,
                    values=values,
                    block_ref=BlockRef(record["source_id"], record["block_index"]),
                    label=record.get("label"),
                    band_id=record.get("band_id"),
                    start_s=record.get("start_s"),
                )
            )
    logger.debug(f"Read {len(vectors)} feature record(s) from {path}")
    return vectors
