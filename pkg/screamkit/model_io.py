"""
Versioned JSON container for trained models.

    {"kind": "svm" | "cnn", "format_version": "1.0.0", "payload": {...}, "checksum": "<sha256>"}

Arrays inside the payload are {"dtype", "shape", "data"} with data holding
base64 of little-endian raw bytes, so a reloaded model predicts
bit-identically. The checksum covers the canonical (sorted, compact) JSON
encoding of the payload.
"""

import base64
import hashlib
import json
import logging
from pathlib import Path
from typing import Any

import numpy as np
import torch
from packaging.version import InvalidVersion, Version

from screamkit.cnn import CnnArchitecture, CnnModel, CnnTrainConfig, VocalCnn
from screamkit.featureset import FeatureSetId, normalizer_from_dict, normalizer_to_dict
from screamkit.schemas import json_errors
from screamkit.svm import BinaryMachine, Kernel, SvmModel

logger = logging.getLogger(__name__)

FORMAT_VERSION = "1.0.0"
_DTYPES = {"float32": "<f4", "float64": "<f8", "int64": "<i8"}


class ModelFileError(ValueError):
    """Raised for unreadable or malformed model files."""


class ModelVersionError(ModelFileError):
    """The file was written by an incompatible format version."""


class ModelChecksumError(ModelFileError):
    """The payload does not match its recorded checksum."""


##########
# ARRAYS #
##########


def encode_array(array: np.ndarray) -> dict[str, Any]:
    array = np.asarray(array)
    dtype = str(array.dtype)
    if dtype not in _DTYPES:
        raise ModelFileError(f"Cannot store arrays of dtype {dtype}")
    raw = np.ascontiguousarray(array, dtype=_DTYPES[dtype]).tobytes()
    return {"dtype": dtype, "shape": list(array.shape), "data": base64.b64encode(raw).decode("ascii")}


def decode_array(record: dict[str, Any]) -> np.ndarray:
    try:
        dtype = _DTYPES[record["dtype"]]
        raw = base64.b64decode(record["data"], validate=True)
        array = np.frombuffer(raw, dtype=dtype).reshape(record["shape"])
    except (KeyError, ValueError, TypeError) as e:
        raise ModelFileError(f"Malformed array record: {e}") from e
    return array.astype(np.dtype(record["dtype"]))


def payload_checksum(payload: dict[str, Any]) -> str:
    canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


############
# PAYLOADS #
############


def _svm_payload(model: SvmModel) -> dict[str, Any]:
    normalizer = (
        normalizer_to_dict(model.normalizer) if model.normalizer is not None else None
    )
    return {
        "classes": list(model.classes),
        "feature_set": str(model.feature_set) if model.feature_set else None,
        "kernel": {"name": model.kernel.name, "gamma": model.kernel.gamma},
        "C": model.C,
        "normalizer": normalizer,
        "machines": [
            {
                "pair": list(m.pair),
                "support_vectors": encode_array(m.support_vectors),
                "dual_coef": encode_array(m.dual_coef),
                "bias": m.bias,
                "n_iter": m.n_iter,
            }
            for m in model.machines
        ],
    }


def _svm_from_payload(payload: dict[str, Any]) -> SvmModel:
    norm = payload.get("normalizer")
    normalizer = normalizer_from_dict(norm) if norm is not None else None
    machines = [
        BinaryMachine(
            pair=(m["pair"][0], m["pair"][1]),
            support_vectors=decode_array(m["support_vectors"]),
            dual_coef=decode_array(m["dual_coef"]),
            bias=m["bias"],
            n_iter=m["n_iter"],
        )
        for m in payload["machines"]
    ]
    feature_set = payload.get("feature_set")
    return SvmModel(
        classes=tuple(payload["classes"]),
        kernel=Kernel(payload["kernel"]["name"], payload["kernel"]["gamma"]),
        C=payload["C"],
        machines=machines,
        feature_set=FeatureSetId(feature_set) if feature_set else None,
        normalizer=normalizer,
    )


def _cnn_payload(model: CnnModel) -> dict[str, Any]:
    config = model.train_config
    return {
        "classes": list(model.classes),
        "feature_set": str(FeatureSetId.FS5),
        "architecture": model.architecture.to_dict(),
        "train_config": {
            "learning_rate": config.learning_rate,
            "betas": list(config.betas),
            "batch_size": config.batch_size,
            "epochs": config.epochs,
            "patience": config.patience,
            "seed": config.seed,
        },
        "state": [
            {"name": name, "array": encode_array(tensor.detach().cpu().numpy())}
            for name, tensor in model.network.state_dict().items()
        ],
    }


def _cnn_from_payload(payload: dict[str, Any]) -> CnnModel:
    arch = CnnArchitecture(**payload["architecture"])
    network = VocalCnn(arch)
    state = {
        entry["name"]: torch.from_numpy(decode_array(entry["array"]).copy())
        for entry in payload["state"]
    }
    try:
        network.load_state_dict(state)
    except RuntimeError as e:
        raise ModelFileError(f"Stored weights do not fit the architecture: {e}") from e
    config = payload["train_config"]
    return CnnModel(
        architecture=arch,
        network=network,
        classes=tuple(payload["classes"]),
        train_config=CnnTrainConfig(
            learning_rate=config["learning_rate"],
            betas=(config["betas"][0], config["betas"][1]),
            batch_size=config["batch_size"],
            epochs=config["epochs"],
            patience=config["patience"],
            seed=config["seed"],
        ),
    )


###############
# SAVE / LOAD #
###############


def model_to_dict(model: SvmModel | CnnModel) -> dict[str, Any]:
    if isinstance(model, SvmModel):
        kind, payload = "svm", _svm_payload(model)
    elif isinstance(model, CnnModel):
        kind, payload = "cnn", _cnn_payload(model)
    else:
        raise ModelFileError(f"Cannot serialise {type(model).__name__}")
    return {
        "kind": kind,
        "format_version": FORMAT_VERSION,
        "payload": payload,
        "checksum": payload_checksum(payload),
    }


def model_from_dict(data: dict[str, Any]) -> SvmModel | CnnModel:
    """
    Rebuild a model from its container.
    Raises:
        ModelFileError: schema violations or undecodable arrays.
        ModelVersionError: a different major format version.
        ModelChecksumError: payload altered after writing.
    """
    errors = json_errors(data, "model")
    if errors:
        raise ModelFileError(f"Model container is malformed: {'; '.join(errors)}")
    try:
        version = Version(data["format_version"])
    except InvalidVersion as e:
        raise ModelVersionError(f"Invalid format version: {data['format_version']}") from e
    if version.major != Version(FORMAT_VERSION).major:
        raise ModelVersionError(
            f"Model format {version} is not compatible with this reader ({FORMAT_VERSION})"
        )
    if payload_checksum(data["payload"]) != data["checksum"]:
        raise ModelChecksumError("Model payload does not match its checksum; the file is corrupted.")
    try:
        if data["kind"] == "svm":
            return _svm_from_payload(data["payload"])
        return _cnn_from_payload(data["payload"])
    except (KeyError, TypeError, IndexError) as e:
        raise ModelFileError(f"Model payload is incomplete: {e}") from e


def model_save(model: SvmModel | CnnModel, path: str | Path) -> None:
    data = model_to_dict(model)
    with open(path, "w") as f:
        json.dump(data, f, sort_keys=True)
    logger.info(f"Saved {data['kind']} model to {path}")


def model_load(path: str | Path) -> SvmModel | CnnModel:
    try:
        with open(path) as f:
            data = json.load(f)
    except json.JSONDecodeError as e:
        raise ModelFileError(f"{path} is not valid JSON: {e}") from e
    model = model_from_dict(data)
    logger.debug(f"Loaded {data['kind']} model from {path}")
    return model
