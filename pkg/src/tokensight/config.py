"""Run configuration and the default prompts shipped with the CLI."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .oracle import OracleConfig

# Default prompts used by the captioning and yes/no VQA flows.
CAPTION_PROMPT = (
    "Describe the image in one factual English sentence of no more than 20 "
    "words. Do not include information that is not clearly visible."
)

YESNO_PROMPT_TEMPLATE = (
    "You are asked a visual question answering task.\n"
    'First, answer strictly with "Yes" or "No".\n'
    "Then, provide a short explanation if necessary.\n"
    "\n"
    "Question: {question}\n"
    "Answer:"
)

ORACLE_URL_ENV = "EAGLE_ORACLE_URL"

DEFAULT_REGION_COUNT = 64
DEFAULT_SLICO_ITERATIONS = 10


@dataclass(frozen=True)
class RunConfig:
    """Everything that shapes an attribution run; serializes round-trip stably."""

    oracle: OracleConfig = field(default_factory=OracleConfig)
    region_count: int = DEFAULT_REGION_COUNT
    slico_iterations: int = DEFAULT_SLICO_ITERATIONS
    fill: tuple[int, int, int] = (128, 128, 128)
    budget: int | None = None  # None means the full region count
    influence_variant: str = "body"
    objective_mode: str = "both"
    x_axis_mode: str = "regions"
    amcr_mode: str = "area"
    sensitive_threshold: float = 0.2
    output_dir: str = "out"
    seed: int | None = None  # reserved; the engine is deterministic

    def __post_init__(self):
        if self.region_count < 1:
            raise ValueError("region_count must be >= 1")
        if self.slico_iterations < 1:
            raise ValueError("slico_iterations must be >= 1")
        if self.influence_variant not in ("body", "algorithm1"):
            raise ValueError(f"unknown influence variant: {self.influence_variant}")
        if self.objective_mode not in ("both", "insight", "necessity"):
            raise ValueError(f"unknown objective mode: {self.objective_mode}")
        if self.x_axis_mode != "regions":
            raise ValueError("x_axis_mode supports only 'regions'")
        if self.amcr_mode not in ("area", "count"):
            raise ValueError(f"unknown amcr mode: {self.amcr_mode}")
        object.__setattr__(self, "fill", tuple(int(c) for c in self.fill))
        if len(self.fill) != 3 or any(not 0 <= c <= 255 for c in self.fill):
            raise ValueError(f"fill must be three bytes, got {self.fill}")

    def to_dict(self) -> dict:
        record = asdict(self)
        record["fill"] = list(self.fill)
        record["oracle"] = {
            "endpoint": self.oracle.endpoint,
            "synthetic": self.oracle.synthetic,
            "max_in_flight": self.oracle.max_in_flight,
            "cache_capacity": self.oracle.cache_capacity,
            "timeout": self.oracle.timeout,
            "bearer_token": self.oracle.bearer_token,
        }
        return record

    @classmethod
    def from_dict(cls, record: dict) -> "RunConfig":
        record = dict(record)
        oracle_rec = record.pop("oracle", {}) or {}
        oracle = OracleConfig(
            endpoint=oracle_rec.get("endpoint"),
            synthetic=oracle_rec.get("synthetic"),
            max_in_flight=int(oracle_rec.get("max_in_flight", 8)),
            cache_capacity=int(oracle_rec.get("cache_capacity", 200_000)),
            timeout=float(oracle_rec.get("timeout", 60.0)),
            bearer_token=oracle_rec.get("bearer_token"),
        )
        if "fill" in record:
            record["fill"] = tuple(record["fill"])
        known = {f for f in cls.__dataclass_fields__ if f != "oracle"}
        unknown = set(record) - known
        if unknown:
            raise ValueError(f"unknown config fields: {sorted(unknown)}")
        return cls(oracle=oracle, **record)

    @classmethod
    def from_json_file(cls, path: str | Path) -> "RunConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))
