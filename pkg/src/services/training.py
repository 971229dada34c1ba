"""
Epoch loop shared by every trainable system: online mini-batches, Adam, slope annealing,
learning-rate decay, best-model checkpointing and early stopping.
"""
import json
import logging
import math
import os
import time
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Protocol, Tuple

import numpy as np
from pydantic import BaseModel

from src.lib.error.handler import DivergenceError
from src.lib.nn.checkpoint import save_checkpoint
from src.lib.nn.layers import Module, Parameter
from src.lib.nn.optim import Adam
from src.lib.numerics import SeedTree
from src.models.system import TrainingSchedule

logger = logging.getLogger(__name__)


class EpochRecord(BaseModel):
    """One line of the training history"""

    epoch: int
    lr: float
    alpha: Optional[float] = None
    train_loss: Optional[float] = None
    validation: float
    best: bool = False


class TrainingObjective(Protocol):
    """What the loop needs from a trainable system"""

    model: Module

    def trainable_parameters(self) -> List[Parameter]: ...

    def sample_batch(self, channel_rng: np.random.Generator, noise_rng: np.random.Generator, n: int) -> Any: ...

    def step_loss(self, batch: Any) -> float: ...

    def validate(self) -> float: ...

    def after_step(self) -> None: ...

    def set_alpha(self, alpha: float) -> None: ...


@dataclass
class TrainingResult:
    """Trained model (restored to its best validation state) and its history"""

    model: Module
    history: List[EpochRecord] = field(default_factory=list)
    best_validation: float = -math.inf
    best_epoch: int = 0
    stopped_reason: str = ""
    wall_time: float = 0.0

    def save_history(self, path: str) -> None:
        directory = os.path.dirname(path)
        if directory:
            os.makedirs(directory, exist_ok=True)
        with open(path, "w") as f:
            json.dump([record.model_dump() for record in self.history], f, indent=2)


class Trainer:
    """
    Runs the epoch loop for one objective.

    Channels and noise for training come from the ``channels``/``noise`` leaves of the seed
    tree, so the same root seed reproduces the same history.
    """

    def __init__(
        self,
        objective: TrainingObjective,
        schedule: TrainingSchedule,
        seeds: SeedTree,
        checkpoint_stem: Optional[str] = None,
        config_hash: str = "",
        metadata: Optional[Dict[str, Any]] = None,
        uses_annealing: bool = True,
    ):
        self.objective = objective
        self.schedule = schedule
        self.seeds = seeds
        self.checkpoint_stem = checkpoint_stem
        self.config_hash = config_hash
        self.metadata = metadata or {}
        self.uses_annealing = uses_annealing

    def _checkpoint(self, state: Dict[str, np.ndarray], epoch: int, validation: float) -> None:
        if not self.checkpoint_stem:
            return
        metadata = dict(self.metadata)
        metadata.update({"epoch": epoch, "validation": validation})
        save_checkpoint(self.checkpoint_stem, state, config_hash=self.config_hash, metadata=metadata)

    def run(self) -> TrainingResult:
        schedule = self.schedule
        objective = self.objective
        model = objective.model
        started = time.time()

        model.train()
        optimizer = Adam(
            objective.trainable_parameters(),
            lr=schedule.lr_start,
            beta1=schedule.adam_beta1,
            beta2=schedule.adam_beta2,
            eps=schedule.adam_eps,
        )
        lr = schedule.lr_start
        alpha = schedule.alpha_start
        objective.set_alpha(alpha)
        channel_rng = self.seeds.stream("channels", 0)
        noise_rng = self.seeds.stream("noise", 0)

        best = objective.validate()
        best_state = model.state_dict()
        best_epoch = 0
        history = [
            EpochRecord(epoch=0, lr=lr, alpha=alpha if self.uses_annealing else None, validation=best, best=True)
        ]
        self._checkpoint(best_state, 0, best)
        logger.info(f"Training started: initial validation metric {best:.4f}")

        since_improvement = 0
        since_decay = 0
        epoch = 0
        reason = ""
        while True:
            epoch += 1
            losses = []
            for batch_index in range(schedule.batches_per_epoch):
                batch = objective.sample_batch(channel_rng, noise_rng, schedule.batch_size)
                optimizer.zero_grad()
                loss = objective.step_loss(batch)
                if not np.isfinite(loss):
                    raise DivergenceError(
                        f"Training loss became non-finite at epoch {epoch}, batch {batch_index}",
                        details={"epoch": epoch, "batch": batch_index, "lr": lr, "alpha": alpha, "loss": str(loss)},
                    )
                optimizer.step()
                objective.after_step()
                losses.append(loss)
                logger.debug(f"epoch {epoch} batch {batch_index}: loss {loss:.6f}")

            validation = objective.validate()
            improved = validation > best
            if improved:
                best = validation
                best_state = model.state_dict()
                best_epoch = epoch
                since_improvement = 0
                since_decay = 0
                self._checkpoint(best_state, epoch, validation)
            else:
                since_improvement += 1
                since_decay += 1

            record = EpochRecord(
                epoch=epoch,
                lr=lr,
                alpha=alpha if self.uses_annealing else None,
                train_loss=float(np.mean(losses)),
                validation=validation,
                best=improved,
            )
            history.append(record)
            logger.info(
                f"epoch {epoch}: lr={lr:.2e} alpha={alpha:.4f} loss={record.train_loss:.4f} "
                f"validation={validation:.4f}{' *' if improved else ''}"
            )

            if since_improvement >= schedule.patience:
                reason = "patience"
                break
            if schedule.max_epochs is not None and epoch >= schedule.max_epochs:
                reason = "max_epochs"
                logger.warning(f"Training capped at {epoch} epochs before early stopping triggered")
                break

            if self.uses_annealing:
                alpha = schedule.next_alpha(alpha)
                objective.set_alpha(alpha)
            if since_decay >= schedule.lr_decay_patience and lr > schedule.lr_floor:
                lr = schedule.decayed_lr(lr)
                optimizer.lr = lr
                since_decay = 0
                logger.info(f"Learning rate decayed to {lr:.2e}")

        model.load_state_dict(best_state)
        model.eval()
        result = TrainingResult(
            model=model,
            history=history,
            best_validation=best,
            best_epoch=best_epoch,
            stopped_reason=reason,
            wall_time=time.time() - started,
        )
        if self.checkpoint_stem:
            result.save_history(f"{self.checkpoint_stem}.history.json")
        logger.info(f"Training finished after {epoch} epochs ({reason}); best validation {best:.4f} at epoch {best_epoch}")
        return result


def split_chunks(n: int, chunk: int) -> List[Tuple[int, int]]:
    """Contiguous [start, stop) ranges covering n items"""
    return [(start, min(start + chunk, n)) for start in range(0, n, chunk)]
