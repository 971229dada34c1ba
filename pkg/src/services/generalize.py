"""
Two-step training: reuse one trained user side across feedback rates or across user counts,
retraining only the BS decoder.
"""
import json
import logging
import math
import os
from typing import List, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel

from src.lib.error.handler import CheckpointError, DegenerateInputError
from src.lib.nn.checkpoint import file_sha256, load_checkpoint, save_checkpoint
from src.lib.numerics import SeedTree
from src.models.system import (
    ChannelDistribution,
    DecoderSpec,
    EncoderSpec,
    SoftEncoderSpec,
    SystemConfig,
    TrainingSchedule,
)
from src.services.channel import ChannelBatch, draw_noise, generate_batch
from src.services.dsc import E2EModel, build_model, train
from src.services.quantizer import ScalarQuantizer, lloyd_max_fit
from src.services.training import TrainingResult, split_chunks

logger = logging.getLogger(__name__)

MIN_QUANTIZER_SAMPLES = 100_000
BUNDLE_MANIFEST = "bundle.json"

Quantizers = Union[ScalarQuantizer, List[ScalarQuantizer]]


def with_users(system: SystemConfig, k_users: int) -> SystemConfig:
    """Same system with a different user count, validated again"""
    return SystemConfig(**{**system.model_dump(), "k_users": k_users})


def train_soft_encoder(
    system: SystemConfig,
    encoder: EncoderSpec,
    decoder: DecoderSpec,
    soft: SoftEncoderSpec,
    schedule: TrainingSchedule,
    dist: ChannelDistribution,
    seeds: SeedTree,
    checkpoint_stem: Optional[str] = None,
    config_hash: str = "",
) -> TrainingResult:
    """
    Joint training with tanh user outputs instead of sign bits.

    The returned decoder is only a by-product; the pilots and encoders are what later steps
    freeze.
    """
    soft_encoder = encoder.model_copy(update={"output": "tanh"})
    model = build_model(system, soft_encoder, decoder, seeds, soft=soft)
    logger.info(f"Training soft encoder with S={soft.s} outputs per user")
    return train(model, schedule, dist, seeds, checkpoint_stem=checkpoint_stem, config_hash=config_hash)


def soft_outputs(model: E2EModel, channels: ChannelBatch, noise: np.ndarray) -> np.ndarray:
    """Inference-mode tanh outputs, shape (N, K, S)"""
    was_training = model.training
    model.eval()
    try:
        chunks = [model.encode(channels.h[a:b], noise[a:b]) for a, b in split_chunks(channels.n, 1024)]
    finally:
        model.train(was_training)
    return np.concatenate(chunks, axis=0)


def sample_soft_outputs(model: E2EModel, dist: ChannelDistribution, seeds: SeedTree, min_samples: int) -> np.ndarray:
    """Draw enough fresh channels that the pooled outputs number at least ``min_samples``"""
    system = model.system
    per_draw = system.k_users * model.message_width
    draws = max(2, math.ceil(min_samples / per_draw))
    channels = generate_batch(dist, system.array, system.k_users, draws, seeds.stream("channels", 1))
    noise = draw_noise(seeds.stream("noise", 1), (draws, system.k_users, system.l_pilots), system.sigma2)
    return soft_outputs(model, channels, noise)


def fit_output_quantizer(
    outputs: np.ndarray,
    q_bits: int,
    per_neuron: bool = False,
    min_samples: int = MIN_QUANTIZER_SAMPLES,
) -> Quantizers:
    """
    Lloyd-Max quantizer on the empirical distribution of the soft outputs.

    Args:
        outputs: Soft outputs of shape (..., S)
        q_bits: Resolution Q
        per_neuron: Fit one quantizer per output neuron instead of one pooled quantizer
        min_samples: Smallest accepted pooled sample count

    Returns:
        One ScalarQuantizer, or a list of S quantizers when ``per_neuron``

    Raises:
        DegenerateInputError: If fewer than ``min_samples`` outputs are supplied
    """
    outputs = np.asarray(outputs, dtype=np.float64)
    if outputs.size < min_samples:
        raise DegenerateInputError(
            f"Quantizer fitting needs at least {min_samples} outputs, got {outputs.size}",
            details={"samples": int(outputs.size), "required": min_samples},
        )
    if per_neuron:
        columns = outputs.reshape(-1, outputs.shape[-1])
        quantizers = [lloyd_max_fit(columns[:, index], q_bits) for index in range(columns.shape[1])]
        logger.info(f"Fitted {len(quantizers)} per-neuron {q_bits}-bit quantizers")
        return quantizers
    quantizer = lloyd_max_fit(outputs.ravel(), q_bits)
    logger.info(f"Fitted pooled {q_bits}-bit quantizer on {outputs.size} outputs: levels {quantizer.levels}")
    return quantizer


def _copy_user_side(source: E2EModel, target: E2EModel) -> None:
    target.pilot.load_state_dict(source.pilot.state_dict())
    for index, encoder in enumerate(target.encoders):
        source_index = 0 if source.shared_encoder else index
        encoder.load_state_dict(source.encoders[source_index].state_dict())
    target.freeze_user_side()


def retrain_bs_decoder(
    soft_model: E2EModel,
    quantizers: Optional[Quantizers],
    decoder: DecoderSpec,
    schedule: TrainingSchedule,
    dist: ChannelDistribution,
    seeds: SeedTree,
    checkpoint_stem: Optional[str] = None,
    config_hash: str = "",
    metadata: Optional[dict] = None,
) -> TrainingResult:
    """
    Train a fresh decoder behind the frozen soft user side.

    With ``quantizers=None`` the decoder sees the raw tanh outputs (the infinite-resolution
    proxy); otherwise it sees their quantize-dequantize reconstruction.
    """
    q_bits = _q_bits(quantizers)
    init_index = q_bits if q_bits is not None else 0
    model = E2EModel(
        soft_model.system,
        soft_model.encoder_spec,
        decoder,
        seeds.stream("init", 1 + init_index),
        soft=soft_model.soft,
        shared_encoder=soft_model.shared_encoder,
    )
    _copy_user_side(soft_model, model)
    if quantizers is not None:
        model.attach_quantizers(quantizers)
    label = "unquantized" if q_bits is None else f"Q={q_bits} (B={model.feedback_bits})"
    logger.info(f"Retraining BS decoder for {label}")
    return train(
        model, schedule, dist, seeds, checkpoint_stem=checkpoint_stem, config_hash=config_hash, metadata=metadata
    )


def _q_bits(quantizers: Optional[Quantizers]) -> Optional[int]:
    if quantizers is None:
        return None
    if isinstance(quantizers, ScalarQuantizer):
        return quantizers.q_bits
    return quantizers[0].q_bits


def train_shared_encoder_single_user(
    system: SystemConfig,
    encoder: EncoderSpec,
    decoder: DecoderSpec,
    schedule: TrainingSchedule,
    dist: ChannelDistribution,
    seeds: SeedTree,
    checkpoint_stem: Optional[str] = None,
    config_hash: str = "",
) -> TrainingResult:
    """Train a K = 1 system whose pilots and encoder are then reused for every user"""
    single = with_users(system, 1)
    model = build_model(single, encoder, decoder, seeds, shared_encoder=True)
    logger.info("Training single-user system for a shared encoder")
    return train(model, schedule, dist, seeds, checkpoint_stem=checkpoint_stem, config_hash=config_hash)


def decoder_for_users(k_users: int, base: DecoderSpec, large: DecoderSpec) -> DecoderSpec:
    """Wider decoder once more than two users share the BS"""
    return large if k_users > 2 else base


def train_bs_for_k(
    shared_model: E2EModel,
    k_users: int,
    decoder: DecoderSpec,
    schedule: TrainingSchedule,
    dist: ChannelDistribution,
    seeds: SeedTree,
    checkpoint_stem: Optional[str] = None,
    config_hash: str = "",
    metadata: Optional[dict] = None,
) -> TrainingResult:
    """
    Train a K-user decoder behind the frozen single-user pilots and encoder.

    The decoder input width is K * B.
    """
    if not shared_model.shared_encoder:
        raise ValueError("train_bs_for_k needs a model trained with a shared encoder")
    system = with_users(shared_model.system, k_users)
    model = E2EModel(
        system,
        shared_model.encoder_spec,
        decoder,
        seeds.stream("init", 100 + k_users),
        soft=shared_model.soft,
        shared_encoder=True,
    )
    _copy_user_side(shared_model, model)
    logger.info(f"Training BS decoder for K={k_users} behind the shared encoder")
    return train(
        model, schedule, dist, seeds, checkpoint_stem=checkpoint_stem, config_hash=config_hash, metadata=metadata
    )


def save_quantizers(path: str, quantizers: Quantizers) -> None:
    """Write a pooled quantizer or a per-neuron list as JSON"""
    listed = [quantizers] if isinstance(quantizers, ScalarQuantizer) else list(quantizers)
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    payload = {"per_neuron": not isinstance(quantizers, ScalarQuantizer), "quantizers": [q.model_dump() for q in listed]}
    with open(path, "w") as f:
        json.dump(payload, f, indent=2)


def load_quantizers(path: str) -> Quantizers:
    with open(path, "r") as f:
        payload = json.load(f)
    listed = [ScalarQuantizer(**q) for q in payload["quantizers"]]
    return listed if payload["per_neuron"] else listed[0]


class BundleManifest(BaseModel):
    """Describes a frozen user side on disk"""

    system: dict
    encoder: dict
    soft: Optional[dict] = None
    shared_encoder: bool = False
    checkpoint: str
    checkpoint_sha256: str
    quantizers: Optional[str] = None
    quantizers_sha256: Optional[str] = None


def save_bundle(directory: str, model: E2EModel, quantizers: Optional[Quantizers] = None) -> BundleManifest:
    """
    Write the pilots and encoder(s) of ``model`` plus optional quantizers as a bundle.

    Returns:
        The manifest; ``checkpoint_sha256`` identifies the bundle in decoder metadata
    """
    os.makedirs(directory, exist_ok=True)
    stem = os.path.join(directory, "user_side")
    state = {name: value for name, value in model.state_dict().items() if not name.startswith("decoder.")}
    save_checkpoint(stem, state, metadata={"kind": "user_side"})
    manifest = BundleManifest(
        system=model.system.model_dump(),
        encoder=model.encoder_spec.model_dump(),
        soft=model.soft.model_dump() if model.soft else None,
        shared_encoder=model.shared_encoder,
        checkpoint="user_side",
        checkpoint_sha256=file_sha256(f"{stem}.bin"),
    )
    if quantizers is not None:
        path = os.path.join(directory, "quantizers.json")
        save_quantizers(path, quantizers)
        manifest.quantizers = "quantizers.json"
        manifest.quantizers_sha256 = file_sha256(path)
    with open(os.path.join(directory, BUNDLE_MANIFEST), "w") as f:
        f.write(manifest.model_dump_json(indent=2))
    logger.info(f"Saved frozen user-side bundle to {directory}")
    return manifest


def load_bundle(directory: str, model: E2EModel) -> Tuple[BundleManifest, Optional[Quantizers]]:
    """
    Load a bundle's pilots and encoder(s) into ``model`` and freeze them.

    Raises:
        CheckpointError: If the bundle is missing or any file fails its hash
    """
    manifest_path = os.path.join(directory, BUNDLE_MANIFEST)
    if not os.path.exists(manifest_path):
        raise CheckpointError(f"No frozen-encoder bundle in '{directory}'", details={"directory": directory})
    with open(manifest_path, "r") as f:
        manifest = BundleManifest.model_validate_json(f.read())
    stem = os.path.join(directory, manifest.checkpoint)
    if file_sha256(f"{stem}.bin") != manifest.checkpoint_sha256:
        raise CheckpointError(f"Bundle checkpoint in '{directory}' does not match its manifest hash")
    tensors, _ = load_checkpoint(stem)

    model.pilot.load_state_dict(_strip(tensors, "pilot."))
    for index, encoder in enumerate(model.encoders):
        source = 0 if manifest.shared_encoder else index
        encoder.load_state_dict(_strip(tensors, f"encoder.{source}."))
    model.freeze_user_side()

    quantizers: Optional[Quantizers] = None
    if manifest.quantizers:
        path = os.path.join(directory, manifest.quantizers)
        if file_sha256(path) != manifest.quantizers_sha256:
            raise CheckpointError(f"Bundle quantizers in '{directory}' do not match their manifest hash")
        quantizers = load_quantizers(path)
    logger.info(f"Loaded frozen user-side bundle from {directory}")
    return manifest, quantizers


def _strip(tensors: dict, prefix: str) -> dict:
    return {name[len(prefix) :]: value for name, value in tensors.items() if name.startswith(prefix)}
