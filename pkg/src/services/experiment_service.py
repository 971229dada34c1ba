"""
Experiment Service - runs configured sweeps and writes result files
"""
import csv
import json
import logging
import os
import subprocess
import time
from collections import OrderedDict
from concurrent.futures import ProcessPoolExecutor
from typing import Any, Dict, List, Optional, Sequence, Tuple

from pydantic import BaseModel, Field, ValidationError

from src.config.loader import ConfigLoader, load_document
from src.lib.error.handler import ConfigValidationError
from src.lib.nn.checkpoint import config_hash
from src.models.experiment import CSV_HEADER, ExperimentConfig, GridPoint, ResultRow, expand_grid
from src.models.system import DecoderSpec, EncoderSpec, TrainingSchedule
from src.services.dsc import TestSet, build_test_set, evaluate
from src.services.quantizer import ParamBitAllocation
from src.tools.base import RunContext
from src.tools.registry import MethodRegistry

logger = logging.getLogger(__name__)

REPO_ROOT = os.path.dirname(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))


class RunSummary(BaseModel):
    """What a run produced"""

    name: str
    config_hash: str
    git_describe: str
    csv_path: str
    manifest_path: str
    rows: List[ResultRow] = Field(default_factory=list)
    checkpoints: List[str] = Field(default_factory=list)
    wall_time: float = 0.0


def git_describe(path: str = REPO_ROOT) -> str:
    """``git describe`` of the source tree, or ``unknown`` outside a repository"""
    try:
        result = subprocess.run(
            ["git", "describe", "--always", "--dirty", "--tags"],
            cwd=path,
            stdout=subprocess.PIPE,
            stderr=subprocess.PIPE,
            text=True,
            timeout=10,
        )
    except (OSError, subprocess.SubprocessError) as e:
        logger.debug(f"git describe failed: {e}")
        return "unknown"
    if result.returncode != 0:
        return "unknown"
    return result.stdout.strip() or "unknown"


def test_set_for(point: GridPoint, context: RunContext) -> TestSet:
    """Fixed test set of a grid point; shared by every method with the same K and test L_p"""
    config = context.config
    dist = config.distribution(point.test_lp)
    payload = {
        "kind": "test",
        "seed": config.seed,
        "m": point.system.m,
        "k_users": point.system.k_users,
        "distribution": dist.model_dump(),
        "size": config.test_size,
        "sigma2": point.system.sigma2,
    }
    _, seeds = context.seeds_for(payload)
    return build_test_set(dist, point.system, config.test_size, seeds)


def run_points(context: RunContext, points: Sequence[GridPoint]) -> Tuple[List[ResultRow], List[str]]:
    """
    Evaluate a group of grid points in order.

    Module-level so it can be shipped to worker processes.

    Returns:
        (one row per point in the given order, checkpoint stems used)
    """
    registry = MethodRegistry()
    rows = []
    for point in points:
        started = time.time()
        method = registry.create_method(point.method)
        pipeline = method.pipeline(point, context)
        test_set = test_set_for(point, context)
        result = evaluate(pipeline, test_set)
        row = ResultRow(
            method=point.method,
            m=point.system.m,
            k_users=point.system.k_users,
            l_pilots=point.system.l_pilots,
            b_bits=point.system.b_bits,
            lp=point.test_lp,
            snr_db=point.system.snr_db,
            seed=context.config.seed,
            sum_rate=result.sum_rate,
            sum_rate_stderr=result.sum_rate_stderr,
            per_user_rates=result.per_user_rates,
            test_size=result.test_size,
            wall_time=time.time() - started,
        )
        logger.info(
            f"[{point.index}] {point.method} K={row.k_users} L={row.l_pilots} B={row.b_bits} Lp={row.lp} "
            f"SNR={row.snr_db}: sum rate {row.sum_rate:.4f} +/- {row.sum_rate_stderr:.4f}"
        )
        rows.append(row)
    return rows, list(context.used_checkpoints)


class ExperimentService:
    """Service for experiment sweeps"""

    def __init__(self, config_loader: Optional[ConfigLoader] = None):
        """Initialize the service with the simulator configuration"""
        self.config_loader = config_loader or ConfigLoader()
        self.registry = MethodRegistry()
        self.experiment_defaults = self.config_loader.get("experiment", default={}) or {}
        logger.info(f"Experiment service initialized with defaults {self.experiment_defaults}")

    def validate(self, document: Dict[str, Any], overrides: Optional[Dict[str, Any]] = None) -> ExperimentConfig:
        """
        Validate an experiment document (plus command-line overrides) before any compute.

        Raises:
            ConfigValidationError: Listing every offending field
        """
        payload = dict(self.experiment_defaults)
        payload.update(document)
        payload.update({key: value for key, value in (overrides or {}).items() if value is not None})
        try:
            config = ExperimentConfig(**payload)
        except ValidationError as e:
            raise ConfigValidationError.from_pydantic(e) from None
        self.build_context(config)
        return config

    def load_config(self, path: str, overrides: Optional[Dict[str, Any]] = None) -> ExperimentConfig:
        return self.validate(load_document(path), overrides)

    def build_context(self, config: ExperimentConfig) -> RunContext:
        """Apply the scale preset and check every grid point against the system constraints"""
        preset = self.config_loader.preset(config.preset)
        m = config.m if config.m is not None else int(preset["m"])
        try:
            encoder = config.network.encoder or EncoderSpec(hidden=preset["encoder"])
            decoder = config.network.decoder or DecoderSpec(hidden=preset["decoder"])
            large_k_decoder = config.network.large_k_decoder or DecoderSpec(hidden=preset["large_k_decoder"])
            schedule = TrainingSchedule(**{**preset.get("schedule", {}), **config.schedule})
            expand_grid(config, m)
        except ValidationError as e:
            raise ConfigValidationError.from_pydantic(e, prefix=f"preset.{config.preset}") from None
        return RunContext(config, m, encoder, decoder, large_k_decoder, schedule)

    def _tasks(self, points: Sequence[GridPoint], context: RunContext) -> List[List[GridPoint]]:
        """Group points sharing a trained artifact so only one task ever trains it"""
        groups: "OrderedDict[str, List[GridPoint]]" = OrderedDict()
        for point in points:
            key = self.registry.create_method(point.method).artifact_key(point, context)
            groups.setdefault(f"{point.method}:{key}" if key else f"point:{point.index}", []).append(point)
        return list(groups.values())

    def run(self, config: ExperimentConfig) -> RunSummary:
        """
        Run every method at every grid point and write the CSV and manifest.

        Args:
            config: Validated experiment configuration

        Returns:
            RunSummary with rows in grid order
        """
        started = time.time()
        context = self.build_context(config)
        points = expand_grid(config, context.m)
        logger.info(f"Running '{config.name}': {len(points)} grid points, {len(config.methods)} methods")

        for name in config.methods:
            self.registry.create_method(name).prepare([p for p in points if p.method == name], context)

        tasks = self._tasks(points, context)
        if config.workers > 1 and len(tasks) > 1:
            with ProcessPoolExecutor(max_workers=config.workers) as pool:
                futures = [pool.submit(run_points, context, group) for group in tasks]
                outcomes = [future.result() for future in futures]
        else:
            outcomes = [run_points(context, group) for group in tasks]

        indexed = {}
        checkpoints = set(context.used_checkpoints)
        for group, (rows, used) in zip(tasks, outcomes):
            checkpoints.update(used)
            for point, row in zip(group, rows):
                indexed[point.index] = row
        rows = [indexed[index] for index in sorted(indexed)]

        os.makedirs(config.output_dir, exist_ok=True)
        csv_path = os.path.join(config.output_dir, f"{config.name}.csv")
        manifest_path = os.path.join(config.output_dir, f"{config.name}.manifest.json")
        summary = RunSummary(
            name=config.name,
            config_hash=config_hash(config.model_dump()),
            git_describe=git_describe(),
            csv_path=csv_path,
            manifest_path=manifest_path,
            rows=rows,
            checkpoints=sorted(checkpoints),
            wall_time=time.time() - started,
        )
        self.emit_csv(rows, csv_path)
        self.emit_manifest(summary, config)
        logger.info(f"Finished '{config.name}' in {summary.wall_time:.1f}s: {len(rows)} rows")
        return summary

    def train(self, config: ExperimentConfig) -> List[str]:
        """Train (or confirm cached) every learned artifact of the sweep without evaluating"""
        context = self.build_context(config)
        points = expand_grid(config, context.m)
        for name in config.methods:
            method = self.registry.create_method(name)
            if not method.trains:
                continue
            selected = [p for p in points if p.method == name]
            method.prepare(selected, context)
            for point in selected:
                method.pipeline(point, context)
        return sorted(set(context.used_checkpoints))

    def baselines_only(self, config: ExperimentConfig) -> ExperimentConfig:
        """Same sweep restricted to methods that need no training"""
        methods = [name for name in config.methods if not self.registry.create_method(name).trains]
        if not methods:
            raise ConfigValidationError(
                "The configuration lists no baseline methods",
                errors=[{"field": "methods", "message": "no method without training"}],
            )
        return config.model_copy(update={"methods": methods})

    def fit_quantizers(self, config: ExperimentConfig) -> List[str]:
        """Fit the parametric-feedback codecs for every B of the sweep and export them"""
        context = self.build_context(config)
        directory = os.path.join(config.output_dir, "quantizers")
        paths = []
        for b_bits in config.b_bits:
            alloc = ParamBitAllocation.allocate(b_bits, config.assumed_lp)
            codec = context.codec(alloc.lp, alloc.bits_per_param)
            path = os.path.join(directory, f"codec-Lp{alloc.lp}-B{b_bits}.json")
            codec.save(path)
            with open(os.path.join(directory, f"allocation-Lp{alloc.lp}-B{b_bits}.json"), "w") as f:
                f.write(alloc.model_dump_json(indent=2))
            paths.append(path)
            logger.info(f"Wrote codec for B={b_bits} to {path}")
        return paths

    @staticmethod
    def emit_csv(rows: Sequence[ResultRow], path: str) -> str:
        """Write rows under the fixed header; an empty list gives a header-only file"""
        directory = os.path.dirname(path)
        if directory:
            os.makedirs(directory, exist_ok=True)
        with open(path, "w", newline="") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(CSV_HEADER)
            for row in rows:
                writer.writerow(row.to_csv_record())
        logger.info(f"Wrote {len(rows)} rows to {path}")
        return path

    @staticmethod
    def read_csv(path: str) -> List[ResultRow]:
        with open(path, "r", newline="") as f:
            return [ResultRow.from_csv_record(record) for record in csv.DictReader(f)]

    @staticmethod
    def emit_manifest(summary: RunSummary, config: ExperimentConfig) -> str:
        """JSON record of the run: source version, config hash, checkpoints and timed rows"""
        payload = {
            "name": summary.name,
            "config_hash": summary.config_hash,
            "git_describe": summary.git_describe,
            "seed": config.seed,
            "preset": config.preset,
            "config": config.model_dump(),
            "csv": summary.csv_path,
            "checkpoints": summary.checkpoints,
            "rows": [row.model_dump() for row in summary.rows],
            "wall_time": summary.wall_time,
        }
        with open(summary.manifest_path, "w") as f:
            json.dump(payload, f, indent=2, sort_keys=True)
        logger.info(f"Wrote manifest {summary.manifest_path}")
        return summary.manifest_path
