"""
Base class for evaluable methods and the per-run context they share.
"""
import logging
import os
from abc import ABC, abstractmethod
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

from src.lib.error.handler import CheckpointError
from src.lib.nn.checkpoint import checkpoint_exists, config_hash, load_checkpoint
from src.lib.nn.layers import Module
from src.lib.numerics import SeedTree
from src.models.experiment import ExperimentConfig, GridPoint
from src.models.system import ChannelDistribution, DecoderSpec, EncoderSpec, SystemConfig, TrainingSchedule
from src.services.channel import PilotMatrix
from src.services.dsc import PrecodingPipeline
from src.services.generalize import decoder_for_users
from src.services.quantizer import ChannelParamCodec
from src.services.sparse import AngularDictionary, build_dictionary
from src.services.training import TrainingResult

logger = logging.getLogger(__name__)


class RunContext:
    """
    Resolved settings of one experiment run plus caches of shared artifacts.

    Every trained artifact is keyed by the hash of the payload that determines it, and its
    random streams come from a seed sub-tree derived from that hash, so the same artifact is
    bit-identical whichever grid point (or process) produces it.
    """

    def __init__(
        self,
        config: ExperimentConfig,
        m: int,
        encoder: EncoderSpec,
        decoder: DecoderSpec,
        large_k_decoder: DecoderSpec,
        schedule: TrainingSchedule,
    ):
        self.config = config
        self.m = m
        self.encoder = encoder
        self.decoder = decoder
        self.large_k_decoder = large_k_decoder
        self.schedule = schedule
        self.checkpoint_dir = os.path.join(config.output_dir, "checkpoints")
        self.used_checkpoints: List[str] = []
        self._codecs: Dict[str, ChannelParamCodec] = {}
        self._dictionaries: Dict[Tuple[int, float], AngularDictionary] = {}

    @property
    def eval_only(self) -> bool:
        return self.config.eval_only

    def train_distribution(self) -> ChannelDistribution:
        return self.config.distribution()

    def decoder_for(self, k_users: int) -> DecoderSpec:
        return decoder_for_users(k_users, self.decoder, self.large_k_decoder)

    def base_payload(self) -> Dict[str, Any]:
        """Settings every trained artifact depends on"""
        return {
            "seed": self.config.seed,
            "distribution": self.train_distribution().model_dump(),
            "schedule": self.schedule.model_dump(),
        }

    def seeds_for(self, payload: Dict[str, Any]) -> Tuple[str, SeedTree]:
        digest = config_hash(payload)
        return digest, SeedTree(self.config.seed).child(int(digest[:15], 16))

    def stem(self, kind: str, digest: str) -> str:
        return os.path.join(self.checkpoint_dir, f"{kind}-{digest[:16]}")

    def is_complete(self, stem: str) -> bool:
        """A checkpoint counts once its training run has written the history file"""
        return checkpoint_exists(stem) and os.path.exists(f"{stem}.history.json")

    def load_or_train(
        self,
        label: str,
        stem: str,
        digest: str,
        model: Module,
        train_fn: Callable[[str], TrainingResult],
    ) -> Module:
        """
        Load ``model``'s state from a finished checkpoint or train it into ``stem``.

        Raises:
            CheckpointError: In eval-only mode when no finished checkpoint exists
        """
        self.used_checkpoints.append(stem)
        if self.is_complete(stem):
            tensors, _ = load_checkpoint(stem, expected_hash=digest)
            model.load_state_dict(tensors)
            model.eval()
            logger.info(f"Reusing checkpoint {stem} for {label}")
            return model
        if self.eval_only:
            raise CheckpointError(
                f"No checkpoint for {label} and eval-only mode forbids training",
                details={"stem": stem, "config_hash": digest},
            )
        logger.warning(f"No cached checkpoint for {label}; training into {stem}")
        return train_fn(stem).model

    def codec(self, lp: int, bit_counts: Sequence[int]) -> ChannelParamCodec:
        """Channel-parameter codec for the training prior, fitted once and cached on disk"""
        bits = sorted(set(int(b) for b in bit_counts))
        payload = {
            "kind": "codec",
            "seed": self.config.seed,
            "distribution": self.train_distribution().model_dump(),
            "lp": lp,
            "bits": bits,
            "samples": self.config.codec_samples,
        }
        digest, seeds = self.seeds_for(payload)
        if digest in self._codecs:
            return self._codecs[digest]
        path = f"{self.stem('codec', digest)}.json"
        if os.path.exists(path):
            codec = ChannelParamCodec.load(path)
        else:
            dist = self.train_distribution()
            codec = ChannelParamCodec.fit(dist, lp, bits, seeds.stream("channels", 0), n_samples=self.config.codec_samples)
            codec.save(path)
        self._codecs[digest] = codec
        return codec

    def dictionary(self, system: SystemConfig) -> AngularDictionary:
        """OMP dictionary spanning the AoD range of the prior"""
        key = (system.m, system.spacing_over_lambda)
        if key not in self._dictionaries:
            angle_range = (self.config.aod_low_deg, self.config.aod_high_deg)
            self._dictionaries[key] = build_dictionary(system.array, self.config.omp_grid, angle_range)
        return self._dictionaries[key]

    def baseline_pilot(self, system: SystemConfig) -> PilotMatrix:
        """Fixed random pilot used by the non-learned estimators"""
        payload = {"kind": "pilot", "seed": self.config.seed, "m": system.m, "l": system.l_pilots, "power": system.total_power}
        _, seeds = self.seeds_for(payload)
        return PilotMatrix.random(system.m, system.l_pilots, system.total_power, seeds.stream("init", 0))


class Method(ABC):
    """A precoding method that can be evaluated at a grid point"""

    name: str = ""
    description: str = ""
    trains: bool = False

    def prepare(self, points: Sequence[GridPoint], context: RunContext) -> None:
        """Build artifacts shared by several grid points; runs once, before any point"""

    def artifact_key(self, point: GridPoint, context: RunContext) -> Optional[str]:
        """Points with the same key share a trained artifact and must run in one task"""
        return None

    @abstractmethod
    def pipeline(self, point: GridPoint, context: RunContext) -> PrecodingPipeline:
        """Pipeline that precodes the test channels of ``point``"""
