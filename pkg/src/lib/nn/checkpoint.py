"""
Checkpoint persistence: JSON manifest plus one contiguous little-endian tensor blob.
"""
import hashlib
import json
import logging
import os
from collections import OrderedDict
from typing import Any, Dict, List, Mapping, Optional, Tuple

import numpy as np
from pydantic import BaseModel, Field, ValidationError

from src.lib.error.handler import CheckpointError

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1
DTYPES = {"float64": "<f8", "float32": "<f4"}


class TensorEntry(BaseModel):
    name: str
    shape: List[int]
    dtype: str
    offset: int
    nbytes: int


class CheckpointManifest(BaseModel):
    """Layout of a checkpoint blob"""

    format_version: int = FORMAT_VERSION
    config_hash: str = ""
    blob: str
    blob_sha256: str
    tensors: List[TensorEntry] = Field(default_factory=list)
    metadata: Dict[str, Any] = Field(default_factory=dict)


def config_hash(payload: Any) -> str:
    """SHA-256 of the canonical JSON form of a configuration payload"""
    canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def checkpoint_paths(stem: str) -> Tuple[str, str]:
    return f"{stem}.json", f"{stem}.bin"


def checkpoint_exists(stem: str) -> bool:
    return all(os.path.exists(path) for path in checkpoint_paths(stem))


def save_checkpoint(
    stem: str,
    tensors: Mapping[str, np.ndarray],
    config_hash: str = "",
    metadata: Optional[Dict[str, Any]] = None,
    dtype: str = "float64",
) -> CheckpointManifest:
    """
    Write tensors to ``<stem>.bin`` and their manifest to ``<stem>.json``.

    Args:
        stem: Output path without extension
        tensors: Named arrays in write order
        config_hash: Hash of the configuration that produced the tensors
        metadata: Free-form JSON metadata
        dtype: ``float64`` (bit-exact) or ``float32``

    Returns:
        The written manifest
    """
    if dtype not in DTYPES:
        raise CheckpointError(f"Unsupported checkpoint dtype '{dtype}'", details={"dtype": dtype})
    manifest_path, blob_path = checkpoint_paths(stem)
    directory = os.path.dirname(stem)
    if directory:
        os.makedirs(directory, exist_ok=True)

    entries = []
    chunks = []
    offset = 0
    for name, value in tensors.items():
        data = np.ascontiguousarray(value, dtype=DTYPES[dtype]).tobytes()
        entries.append(TensorEntry(name=name, shape=list(np.shape(value)), dtype=DTYPES[dtype], offset=offset, nbytes=len(data)))
        chunks.append(data)
        offset += len(data)
    blob = b"".join(chunks)
    with open(blob_path, "wb") as f:
        f.write(blob)

    manifest = CheckpointManifest(
        config_hash=config_hash,
        blob=os.path.basename(blob_path),
        blob_sha256=hashlib.sha256(blob).hexdigest(),
        tensors=entries,
        metadata=metadata or {},
    )
    with open(manifest_path, "w") as f:
        f.write(manifest.model_dump_json(indent=2))
    logger.info(f"Saved checkpoint {stem} ({len(entries)} tensors, {offset} bytes)")
    return manifest


def load_checkpoint(
    stem: str,
    expected_hash: Optional[str] = None,
) -> Tuple["OrderedDict[str, np.ndarray]", CheckpointManifest]:
    """
    Read a checkpoint written by ``save_checkpoint``.

    Raises:
        CheckpointError: If files are missing, corrupt, or the config hash does not match
    """
    manifest_path, blob_path = checkpoint_paths(stem)
    if not checkpoint_exists(stem):
        raise CheckpointError(f"Checkpoint '{stem}' not found", details={"stem": stem})
    try:
        with open(manifest_path, "r") as f:
            manifest = CheckpointManifest.model_validate_json(f.read())
    except (ValidationError, json.JSONDecodeError) as e:
        raise CheckpointError(f"Corrupt checkpoint manifest '{manifest_path}': {e}") from e
    if expected_hash is not None and manifest.config_hash != expected_hash:
        raise CheckpointError(
            f"Checkpoint '{stem}' was written for a different configuration",
            details={"expected": expected_hash, "found": manifest.config_hash},
        )
    with open(blob_path, "rb") as f:
        blob = f.read()
    if hashlib.sha256(blob).hexdigest() != manifest.blob_sha256:
        raise CheckpointError(f"Checkpoint blob '{blob_path}' does not match its manifest hash")

    tensors: "OrderedDict[str, np.ndarray]" = OrderedDict()
    for entry in manifest.tensors:
        raw = np.frombuffer(blob, dtype=entry.dtype, count=entry.nbytes // np.dtype(entry.dtype).itemsize, offset=entry.offset)
        tensors[entry.name] = raw.astype(np.float64).reshape(entry.shape)
    logger.info(f"Loaded checkpoint {stem} ({len(tensors)} tensors)")
    return tensors, manifest


def file_sha256(path: str) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()
