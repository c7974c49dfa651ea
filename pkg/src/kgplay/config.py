"""Run configuration: one JSON file, flag overrides, validated before any work.

Every knob of every stage lives here with its default, so a bare run uses the
standard hyperparameters end to end. Each command stamps its output directory
with a fingerprint of the resolved config plus the code version; identical
fingerprints with scripted endpoints mean identical outputs.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

from . import __version__
from .construct import ConstructConfig
from .embeddings import EmbeddingProvider, EmbedProviderConfig
from .errors import GraphError, SchemaError
from .kgstore import EdgeType
from .model_client import (
    HttpGenerationClient,
    HttpRelationClassifier,
    ScriptedGenerationClient,
    ScriptedRelationClassifier,
    load_scenario,
)
from .refine import RefineConfig
from .rewards import AnnealSchedule, RewardWeights
from .sampling import (
    DEFAULT_DIFFICULTY_SCHEDULE,
    DEFAULT_EDGE_WEIGHTS,
    DEFAULT_HOP_SCHEDULE,
    validate_weights,
)
from .selfplay import MINIBATCH_INTERVAL, RETENTION_THRESHOLD, SelfPlayConfig


def _default_edge_weights() -> dict:
    return {t.value: w for t, w in DEFAULT_EDGE_WEIGHTS.items()}


@dataclass
class RunConfig:
    corpus: list[str] = field(default_factory=list)
    output_dir: str = "run_out"
    seed: int = 0
    epochs: int = 30
    questions_per_epoch: int = 100
    group_size: int = 8
    max_tokens: int = 256
    temperature: float = 0.7

    # Endpoints; a scripted scenario file stands in when URLs are absent.
    generate_url: str | None = None
    classify_url: str | None = None
    embed_url: str | None = None
    scenario: str | None = None
    embed_mode: str = "deterministic_test"
    embed_dim: int = 384
    max_in_flight: int = 4

    # Construction thresholds.
    tau_semantic: float = 0.75
    max_edges_per_node: int = 10
    tau_cross: float = 0.85
    concept_min_freq: int = 2

    # Reward engine.
    epsilon: float = 0.05
    tau_num: float = 0.05
    anneal_initial: list[float] = field(default_factory=lambda: [0.5, 0.3, 0.2])
    anneal_final: list[float] = field(default_factory=lambda: [0.3, 0.4, 0.3])
    anneal_total_epochs: int = 30
    retention_threshold: float = RETENTION_THRESHOLD
    minibatch_interval: int = MINIBATCH_INTERVAL

    # Curriculum.
    edge_weights: dict = field(default_factory=_default_edge_weights)
    hop_schedule: list = field(default_factory=lambda: [list(x) for x in DEFAULT_HOP_SCHEDULE])
    difficulty_schedule: list = field(default_factory=lambda: [list(x) for x in DEFAULT_DIFFICULTY_SCHEDULE])

    # Refinement.
    high_reward_threshold: float = 0.8
    confidence_penalty: float = 0.05
    new_edge_confidence: float = 0.5
    tau_prune: float = 0.15
    tau_merge: float = 0.88
    quarantine_new_edges: bool = False
    merge_each_epoch: bool = False

    # -- loading ------------------------------------------------------------

    @classmethod
    def from_file(cls, path: str | Path) -> "RunConfig":
        try:
            raw = json.loads(Path(path).read_text(encoding="utf-8"))
        except OSError as exc:
            raise SchemaError(f"{path}: cannot read config: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise SchemaError(f"{path}: invalid JSON: {exc}") from exc
        return cls.from_dict(raw, source=str(path))

    @classmethod
    def from_dict(cls, raw: dict, source: str = "<config>") -> "RunConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(raw) - known
        if unknown:
            raise SchemaError(f"{source}: unknown config keys {sorted(unknown)}")
        return cls(**raw)

    def apply_overrides(self, overrides: dict) -> None:
        for key, value in overrides.items():
            if value is None:
                continue
            if key not in self.__dataclass_fields__:
                raise SchemaError(f"unknown config override '{key}'")
            setattr(self, key, value)

    # -- derived objects ------------------------------------------------------

    def construct_config(self) -> ConstructConfig:
        return ConstructConfig(
            tau_semantic=self.tau_semantic,
            max_edges_per_node=self.max_edges_per_node,
            tau_cross=self.tau_cross,
            concept_min_freq=self.concept_min_freq,
        )

    def anneal_schedule(self) -> AnnealSchedule:
        return AnnealSchedule(
            initial=RewardWeights(*self.anneal_initial),
            final=RewardWeights(*self.anneal_final),
            total_epochs=self.anneal_total_epochs,
        )

    def typed_edge_weights(self) -> dict:
        try:
            weights = {EdgeType(name): float(w) for name, w in self.edge_weights.items()}
        except ValueError as exc:
            raise SchemaError(f"edge_weights: {exc}") from exc
        validate_weights(weights)
        return weights

    def typed_hop_schedule(self) -> tuple:
        return tuple((int(e), int(h)) for e, h in self.hop_schedule)

    def typed_difficulty_schedule(self) -> tuple:
        return tuple((int(e), str(level)) for e, level in self.difficulty_schedule)

    def selfplay_config(self) -> SelfPlayConfig:
        return SelfPlayConfig(
            questions_per_epoch=self.questions_per_epoch,
            group_size=self.group_size,
            max_tokens=self.max_tokens,
            temperature=self.temperature,
            epsilon=self.epsilon,
            tau_num=self.tau_num,
            retention_threshold=self.retention_threshold,
            minibatch_interval=self.minibatch_interval,
            edge_weights=self.typed_edge_weights(),
            anneal=self.anneal_schedule(),
            config_fingerprint=self.fingerprint(),
        )

    def refine_config(self) -> RefineConfig:
        return RefineConfig(
            high_reward_threshold=self.high_reward_threshold,
            confidence_penalty=self.confidence_penalty,
            new_edge_confidence=self.new_edge_confidence,
            tau_prune=self.tau_prune,
            tau_merge=self.tau_merge,
            quarantine_new_edges=self.quarantine_new_edges,
        )

    def make_embedder(self) -> EmbeddingProvider:
        if self.embed_url:
            cfg = EmbedProviderConfig(
                mode="http_endpoint",
                endpoint_url=self.embed_url,
                dim=self.embed_dim,
                max_in_flight=self.max_in_flight,
            )
        else:
            cfg = EmbedProviderConfig(mode=self.embed_mode, dim=self.embed_dim, max_in_flight=self.max_in_flight)
        return EmbeddingProvider(cfg)

    def make_model(self):
        if self.generate_url:
            return HttpGenerationClient(self.generate_url)
        if self.scenario:
            return ScriptedGenerationClient(load_scenario(self.scenario))
        raise SchemaError("config needs generate_url or a scenario file for generation")

    def make_classifier(self):
        if self.classify_url:
            return HttpRelationClassifier(self.classify_url)
        if self.scenario:
            return ScriptedRelationClassifier(load_scenario(self.scenario))
        raise SchemaError("config needs classify_url or a scenario file for classification")

    # -- validation + provenance ----------------------------------------------

    def validate(self) -> None:
        if self.epochs < 0:
            raise SchemaError("epochs must be >= 0")
        for name in ("questions_per_epoch", "group_size", "max_tokens", "minibatch_interval"):
            if getattr(self, name) < 1:
                raise SchemaError(f"{name} must be >= 1")
        try:
            self.construct_config()
            self.anneal_schedule()
            self.refine_config()
            self.typed_edge_weights()
            hops = self.typed_hop_schedule()
            self.typed_difficulty_schedule()
        except GraphError as exc:
            raise SchemaError(str(exc)) from exc
        values = [h for _, h in sorted(hops)]
        if values != sorted(values):
            raise SchemaError("hop_schedule must be non-decreasing")

    def fingerprint(self) -> str:
        canonical = json.dumps(asdict(self), sort_keys=True, ensure_ascii=False)
        digest = hashlib.sha256()
        digest.update(canonical.encode("utf-8"))
        digest.update(__version__.encode("utf-8"))
        return digest.hexdigest()

    def write_fingerprint(self, directory: str | Path) -> Path:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        payload = {"fingerprint": self.fingerprint(), "code_version": __version__, "config": asdict(self)}
        out = directory / "fingerprint.json"
        out.write_text(json.dumps(payload, sort_keys=True, ensure_ascii=False, indent=2) + "\n", encoding="utf-8")
        return out
