"""Counterfactual attribution of wrong yes/no answers and minimal correction.

A hallucination case is a question the model answered incorrectly. Attribution
runs against the token of the *correct* answer, so regions that support the
correct response rank early and regions suppressing it (the hallucination
drivers) sink to the tail of the ordering. Correction then deletes regions
from that tail, one at a time, until the model's regenerated answer flips.
"""

from __future__ import annotations

import json
import string
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Literal, Sequence

from .attribution import OrderedAttribution, greedy_attribute
from .oracle import OracleGateway, Scene, TokenTargets
from .partition import KeepSet

AmcrMode = Literal["area", "count"]

Answer = Literal["Yes", "No"]


@dataclass(frozen=True)
class HallucinationCase:
    """A question the model got wrong, plus the counterfactual target token."""

    image_ref: str
    question: str
    model_answer: Answer
    ground_truth: Answer
    counterfactual_vocab_id: int
    answer_position: int = 0

    def __post_init__(self):
        if self.model_answer == self.ground_truth:
            raise ValueError("hallucination case requires model_answer != ground_truth")
        if self.model_answer not in ("Yes", "No") or self.ground_truth not in ("Yes", "No"):
            raise ValueError("answers must be 'Yes' or 'No'")

    @classmethod
    def from_dict(cls, record: dict) -> "HallucinationCase":
        return cls(
            image_ref=str(record["image"]),
            question=str(record["question"]),
            model_answer=record["model_answer"],
            ground_truth=record["ground_truth"],
            counterfactual_vocab_id=int(record["counterfactual_vocab_id"]),
            answer_position=int(record.get("answer_position", 0)),
        )

    def to_dict(self) -> dict:
        return {
            "image": self.image_ref,
            "question": self.question,
            "model_answer": self.model_answer,
            "ground_truth": self.ground_truth,
            "counterfactual_vocab_id": self.counterfactual_vocab_id,
            "answer_position": self.answer_position,
        }


@dataclass(frozen=True)
class CorrectionOutcome:
    """Result of progressive tail removal for one case.

    ``removed_area_fraction`` is the pixel-area share of the removed regions
    (or the region-count share in "count" mode); uncorrected cases report 1.0
    so they weigh fully in the AMCR aggregate.
    """

    corrected: bool
    removed_regions: tuple[int, ...]
    removed_area_fraction: float
    probability_trace: tuple[float, ...]

    def to_dict(self) -> dict:
        return {
            "corrected": self.corrected,
            "removed_regions": list(self.removed_regions),
            "removed_area_fraction": self.removed_area_fraction,
            "probability_trace": list(self.probability_trace),
        }


def load_cases(path: str | Path) -> list[HallucinationCase]:
    """Read a JSON-lines case file; blank lines are skipped."""
    cases = []
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if line:
            cases.append(HallucinationCase.from_dict(json.loads(line)))
    return cases


def parse_answer(text: str) -> Answer | None:
    """Leading yes/no of a generated answer, or None when unparseable."""
    for word in text.split():
        cleaned = word.strip(string.punctuation + string.whitespace).lower()
        if cleaned == "yes":
            return "Yes"
        if cleaned == "no":
            return "No"
        return None
    return None


def counterfactual_targets(
    case: HallucinationCase, prompt: str | None = None
) -> TokenTargets:
    """Single-token targets for the correct answer at the answer position.

    ``prompt`` defaults to the bare question; callers wrapping questions in a
    VQA template pass the formatted prompt instead.
    """
    ids = [0] * (case.answer_position + 1)
    ids[case.answer_position] = case.counterfactual_vocab_id
    return TokenTargets(
        prompt=case.question if prompt is None else prompt,
        generated_ids=tuple(ids),
        targets=((case.answer_position, case.counterfactual_vocab_id),),
    )


def counterfactual_attribute(
    gateway: OracleGateway,
    scene: Scene,
    case: HallucinationCase,
    prompt: str | None = None,
) -> OrderedAttribution:
    """Full greedy ordering with respect to the correct-answer token.

    Regions ranked early support the correct answer; regions ranked late
    suppress it and are the hallucination-prone candidates for removal.
    """
    return greedy_attribute(gateway, scene, counterfactual_targets(case, prompt))


def minimal_correction(
    gateway: OracleGateway,
    scene: Scene,
    case: HallucinationCase,
    attribution: OrderedAttribution,
    amcr_mode: AmcrMode = "area",
    prompt: str | None = None,
) -> CorrectionOutcome:
    """Remove ordering-tail regions one at a time until the answer flips.

    After each removal the masked image is regenerated through the oracle and
    the leading answer word parsed; an unparseable generation counts as
    not-corrected at that step. The per-step probability of the correct token
    is recorded (those queries coincide with the greedy prefix queries, so a
    warm cache answers them).
    """
    n = scene.region_count
    if len(attribution.order) != n:
        raise ValueError("minimal correction requires a full ordering")
    targets = counterfactual_targets(case, prompt)
    question = targets.prompt
    total_area = int(scene.partition.region_areas.sum())

    def fraction(removed: Sequence[int]) -> float:
        if amcr_mode == "count":
            return len(removed) / n
        removed_area = sum(int(scene.partition.region_areas[r]) for r in removed)
        return removed_area / total_area

    # Zero removals: the model may already answer correctly.
    text, _ = gateway.generate(scene.image, question, max_tokens=8)
    if parse_answer(text) == case.ground_truth:
        return CorrectionOutcome(
            corrected=True,
            removed_regions=(),
            removed_area_fraction=0.0,
            probability_trace=(),
        )

    removed: list[int] = []
    trace: list[float] = []
    keep = KeepSet.full(n)
    for region in reversed(attribution.order):
        removed.append(region)
        keep = keep.without_region(region)
        masked = scene.masked(keep)
        prob = gateway.score_targets(scene.query(keep, targets)).probs[0]
        trace.append(prob)
        text, _ = gateway.generate(masked, question, max_tokens=8)
        if parse_answer(text) == case.ground_truth:
            return CorrectionOutcome(
                corrected=True,
                removed_regions=tuple(removed),
                removed_area_fraction=fraction(removed),
                probability_trace=tuple(trace),
            )
    return CorrectionOutcome(
        corrected=False,
        removed_regions=tuple(removed),
        removed_area_fraction=1.0,
        probability_trace=tuple(trace),
    )


def amcr(outcomes: Iterable[CorrectionOutcome]) -> float:
    """Mean removed-area fraction; uncorrected cases contribute 1.0."""
    fractions = [o.removed_area_fraction for o in outcomes]
    if not fractions:
        raise ValueError("amcr requires at least one outcome")
    return sum(fractions) / len(fractions)


def csr_at_budget(outcomes: Iterable[CorrectionOutcome], budget: float) -> float:
    """Share of cases corrected while removing at most ``budget`` of the image."""
    if not 0.0 < budget <= 1.0:
        raise ValueError("budget must lie in (0, 1]")
    outcomes = list(outcomes)
    if not outcomes:
        raise ValueError("csr requires at least one outcome")
    good = sum(
        1 for o in outcomes if o.corrected and o.removed_area_fraction <= budget
    )
    return good / len(outcomes)
