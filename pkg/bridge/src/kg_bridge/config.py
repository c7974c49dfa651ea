"""Bridge configuration. Training hyperparameters are accepted and recorded
verbatim into logs; only the trainer stub ever reads them."""
from __future__ import annotations

from dataclasses import dataclass, field


def default_trainer_settings() -> dict:
    return {
        "learning_rate": 2.0e-4,
        "batch_size": 2,
        "grad_accum_steps": 4,
        "dpo_beta": 0.1,
        "max_update_steps_per_epoch": 100,
        "lora": {"rank": 16, "alpha": 32, "dropout": 0.05, "target_projections": ["q_proj", "v_proj"]},
    }


@dataclass
class BridgeConfig:
    model: str = "deterministic"  # or "hf:<model-id>"
    embedder: str = "hashed-bow-384"  # or "sentence-transformers/<model-id>"
    host: str = "127.0.0.1"
    port: int = 8080
    trainer: dict = field(default_factory=default_trainer_settings)

    def __post_init__(self):
        if not (0 <= self.port <= 65535):
            raise ValueError(f"invalid port {self.port}")
