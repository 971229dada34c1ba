"""
Learned methods: the jointly trained system and the two two-step variants.
"""
import logging
import os
from typing import Any, Dict, Optional, Sequence

from src.lib.error.handler import CheckpointError
from src.models.experiment import GridPoint
from src.models.system import SoftEncoderSpec, SystemConfig
from src.services.dsc import E2EModel, build_model, train
from src.services.generalize import (
    fit_output_quantizer,
    load_bundle,
    load_quantizers,
    retrain_bs_decoder,
    sample_soft_outputs,
    save_bundle,
    save_quantizers,
    train_bs_for_k,
    train_shared_encoder_single_user,
    train_soft_encoder,
    with_users,
)
from src.tools.base import Method, RunContext

logger = logging.getLogger(__name__)


class ProposedMethod(Method):
    name = "proposed"
    description = "Pilots, user encoders and BS decoder trained jointly for the sum rate"
    trains = True

    def _payload(self, point: GridPoint, context: RunContext) -> Dict[str, Any]:
        payload = context.base_payload()
        payload.update(
            {
                "kind": "proposed",
                "system": point.system.model_dump(),
                "encoder": context.encoder.model_dump(),
                "decoder": context.decoder_for(point.system.k_users).model_dump(),
            }
        )
        return payload

    def artifact_key(self, point: GridPoint, context: RunContext) -> Optional[str]:
        return context.seeds_for(self._payload(point, context))[0]

    def pipeline(self, point: GridPoint, context: RunContext) -> E2EModel:
        digest, seeds = context.seeds_for(self._payload(point, context))
        decoder = context.decoder_for(point.system.k_users)
        model = build_model(point.system, context.encoder, decoder, seeds)

        def train_fn(path: str):
            return train(model, context.schedule, context.train_distribution(), seeds, checkpoint_stem=path, config_hash=digest)

        label = f"proposed (K={point.system.k_users}, L={point.system.l_pilots}, B={point.system.b_bits})"
        return context.load_or_train(label, context.stem("proposed", digest), digest, model, train_fn)


class TwoStepBMethod(Method):
    name = "proposed-two-step-B"
    description = "Soft user outputs trained once; Lloyd-Max quantizer and BS decoder refitted per feedback rate"
    trains = True

    def _soft_system(self, point: GridPoint, context: RunContext) -> SystemConfig:
        return SystemConfig(**{**point.system.model_dump(), "b_bits": context.config.network.soft_outputs})

    def _soft_spec(self, point: GridPoint, context: RunContext) -> SoftEncoderSpec:
        s = context.config.network.soft_outputs
        return SoftEncoderSpec(
            s=s, q_bits=point.system.b_bits // s, per_neuron=context.config.network.per_neuron_quantizers
        )

    def _soft_payload(self, point: GridPoint, context: RunContext) -> Dict[str, Any]:
        payload = context.base_payload()
        payload.update(
            {
                "kind": "soft",
                "system": self._soft_system(point, context).model_dump(),
                "encoder": context.encoder.model_dump(),
                "decoder": context.decoder_for(point.system.k_users).model_dump(),
                "s": context.config.network.soft_outputs,
            }
        )
        return payload

    def _decoder_payload(self, point: GridPoint, context: RunContext) -> Dict[str, Any]:
        payload = self._soft_payload(point, context)
        spec = self._soft_spec(point, context)
        payload.update(
            {
                "kind": "two-step-B",
                "q_bits": spec.q_bits,
                "per_neuron": spec.per_neuron,
                "quantizer_samples": context.config.soft_quantizer_samples,
            }
        )
        return payload

    def _soft_model(self, point: GridPoint, context: RunContext, seeds) -> E2EModel:
        encoder = context.encoder.model_copy(update={"output": "tanh"})
        return build_model(
            self._soft_system(point, context),
            encoder,
            context.decoder_for(point.system.k_users),
            seeds,
            soft=self._soft_spec(point, context),
        )

    def prepare(self, points: Sequence[GridPoint], context: RunContext) -> None:
        if context.eval_only:
            return
        for point in points:
            digest, seeds = context.seeds_for(self._soft_payload(point, context))
            stem = context.stem("soft", digest)
            bundle = f"{stem}.bundle"
            if os.path.exists(os.path.join(bundle, "bundle.json")):
                continue
            system = self._soft_system(point, context)
            spec = self._soft_spec(point, context)

            def train_fn(path: str):
                return train_soft_encoder(
                    system,
                    context.encoder,
                    context.decoder_for(system.k_users),
                    spec,
                    context.schedule,
                    context.train_distribution(),
                    seeds,
                    checkpoint_stem=path,
                    config_hash=digest,
                )

            model = context.load_or_train("soft encoder", stem, digest, self._soft_model(point, context, seeds), train_fn)
            save_bundle(bundle, model)

    def artifact_key(self, point: GridPoint, context: RunContext) -> Optional[str]:
        return context.seeds_for(self._decoder_payload(point, context))[0]

    def pipeline(self, point: GridPoint, context: RunContext) -> E2EModel:
        soft_digest, soft_seeds = context.seeds_for(self._soft_payload(point, context))
        digest, seeds = context.seeds_for(self._decoder_payload(point, context))
        stem = context.stem("two-step-B", digest)
        quantizer_path = f"{stem}.quantizer.json"
        spec = self._soft_spec(point, context)
        decoder = context.decoder_for(point.system.k_users)
        model = self._soft_model(point, context, seeds)

        def train_fn(path: str):
            soft_model = self._soft_model(point, context, soft_seeds)
            bundle = f"{context.stem('soft', soft_digest)}.bundle"
            manifest, _ = load_bundle(bundle, soft_model)
            outputs = sample_soft_outputs(soft_model, context.train_distribution(), soft_seeds, context.config.soft_quantizer_samples)
            quantizers = fit_output_quantizer(
                outputs, spec.q_bits, per_neuron=spec.per_neuron, min_samples=context.config.soft_quantizer_samples
            )
            save_quantizers(quantizer_path, quantizers)
            return retrain_bs_decoder(
                soft_model,
                quantizers,
                decoder,
                context.schedule,
                context.train_distribution(),
                seeds,
                checkpoint_stem=path,
                config_hash=digest,
                metadata={"bundle_sha256": manifest.checkpoint_sha256, "q_bits": spec.q_bits},
            )

        label = f"two-step B decoder (Q={spec.q_bits}, B={point.system.b_bits})"
        loaded = context.load_or_train(label, stem, digest, model, train_fn)
        if loaded is model:
            if not os.path.exists(quantizer_path):
                raise CheckpointError(f"Quantizer for {label} is missing", details={"path": quantizer_path})
            model.freeze_user_side()
            model.attach_quantizers(load_quantizers(quantizer_path))
        return loaded


class TwoStepKMethod(Method):
    name = "proposed-two-step-K"
    description = "Single-user pilots and encoder shared by all users; BS decoder trained per user count"
    trains = True

    def _shared_payload(self, point: GridPoint, context: RunContext) -> Dict[str, Any]:
        payload = context.base_payload()
        payload.update(
            {
                "kind": "shared",
                "system": with_users(point.system, 1).model_dump(),
                "encoder": context.encoder.model_dump(),
                "decoder": context.decoder.model_dump(),
            }
        )
        return payload

    def _decoder_payload(self, point: GridPoint, context: RunContext) -> Dict[str, Any]:
        payload = self._shared_payload(point, context)
        payload.update(
            {
                "kind": "two-step-K",
                "k_users": point.system.k_users,
                "k_decoder": context.decoder_for(point.system.k_users).model_dump(),
            }
        )
        return payload

    def _shared_model(self, point: GridPoint, context: RunContext, seeds) -> E2EModel:
        return build_model(with_users(point.system, 1), context.encoder, context.decoder, seeds, shared_encoder=True)

    def prepare(self, points: Sequence[GridPoint], context: RunContext) -> None:
        if context.eval_only:
            return
        for point in points:
            digest, seeds = context.seeds_for(self._shared_payload(point, context))
            stem = context.stem("shared", digest)
            bundle = f"{stem}.bundle"
            if os.path.exists(os.path.join(bundle, "bundle.json")):
                continue

            def train_fn(path: str):
                return train_shared_encoder_single_user(
                    point.system,
                    context.encoder,
                    context.decoder,
                    context.schedule,
                    context.train_distribution(),
                    seeds,
                    checkpoint_stem=path,
                    config_hash=digest,
                )

            model = context.load_or_train("shared encoder", stem, digest, self._shared_model(point, context, seeds), train_fn)
            save_bundle(bundle, model)

    def artifact_key(self, point: GridPoint, context: RunContext) -> Optional[str]:
        return context.seeds_for(self._decoder_payload(point, context))[0]

    def pipeline(self, point: GridPoint, context: RunContext) -> E2EModel:
        shared_digest, shared_seeds = context.seeds_for(self._shared_payload(point, context))
        digest, seeds = context.seeds_for(self._decoder_payload(point, context))
        decoder = context.decoder_for(point.system.k_users)
        model = build_model(point.system, context.encoder, decoder, seeds, shared_encoder=True)

        def train_fn(path: str):
            shared = self._shared_model(point, context, shared_seeds)
            manifest, _ = load_bundle(f"{context.stem('shared', shared_digest)}.bundle", shared)
            return train_bs_for_k(
                shared,
                point.system.k_users,
                decoder,
                context.schedule,
                context.train_distribution(),
                seeds,
                checkpoint_stem=path,
                config_hash=digest,
                metadata={"bundle_sha256": manifest.checkpoint_sha256, "k_users": point.system.k_users},
            )

        label = f"two-step K decoder (K={point.system.k_users})"
        loaded = context.load_or_train(label, context.stem("two-step-K", digest), digest, model, train_fn)
        if loaded is model:
            model.freeze_user_side()
        return loaded
