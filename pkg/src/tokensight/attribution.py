"""Region attribution core: objective scoring, greedy ordering, influence.

The objective over a keep-set S combines sufficiency (probability of the
target tokens when only S is visible) and indispensability (probability lost
when S is removed). Greedy search over that objective produces an ordered
region ranking; saliency scores follow from the marginal gains along the
ranking, and per-token influence scores from how each token's probability
moves as the ranking's prefixes are revealed.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations
from typing import Literal, Sequence

from .oracle import OracleBatchError, OracleError, OracleGateway, Scene, TokenTargets
from .partition import KeepSet

ObjectiveMode = Literal["both", "insight", "necessity"]
InfluenceVariant = Literal["body", "algorithm1"]

SENSITIVE_TOKEN_THRESHOLD = 0.2


class AttributionError(OracleError):
    """Oracle failure during an attribution run, tagged with the greedy round."""

    def __init__(self, round_index: int, cause: Exception):
        self.round_index = round_index
        super().__init__(f"oracle failure in greedy round {round_index}: {cause}")


@dataclass(frozen=True)
class ObjectiveValue:
    insight: float
    necessity: float
    total: float


@dataclass(frozen=True)
class OrderedAttribution:
    """Greedy region ordering with per-step objective values and saliency.

    ``order[i]`` is the region chosen at step i; ``step_values[i]`` the
    objective of the first i+1 regions; ``raw_scores`` follow the
    start-at-zero, gain-decrement recurrence and ``norm_scores`` its min-max
    normalization (an all-equal raw vector maps to all ones).
    """

    order: tuple[int, ...]
    step_values: tuple[float, ...]
    gains: tuple[float, ...]
    raw_scores: tuple[float, ...]
    norm_scores: tuple[float, ...]
    region_count: int
    candidate_evaluations: int

    def region_scores(self) -> list[float]:
        """Per-region normalized scores; regions outside the budget get 0."""
        scores = [0.0] * self.region_count
        for rank, region in enumerate(self.order):
            scores[region] = self.norm_scores[rank]
        return scores


@dataclass(frozen=True)
class InfluenceReport:
    """Per-target influence of perceptual evidence, raw and max-normalized.

    ``variant`` records which spread anchor produced ``raw``: "body" sums
    deviations above the prefix-probability minimum, "algorithm1" sums
    deviations below the maximum. Both are zero exactly when a token's
    probability never moves across prefix reveals (a pure language-prior
    token).
    """

    variant: InfluenceVariant
    raw: tuple[float, ...]
    norm: tuple[float, ...]
    prefix_probs: tuple[tuple[float, ...], ...]


@dataclass(frozen=True)
class GammaEstimate:
    gamma: float
    raw_min_ratio: float
    evaluated_pairs: int
    skipped_pairs: int


def insight_score(
    gateway: OracleGateway, scene: Scene, keep: KeepSet, targets: TokenTargets
) -> float:
    """Summed target-token probability with only ``keep`` visible (one query)."""
    if len(targets) == 0:
        raise ValueError("at least one target is required")
    response = gateway.score_targets(scene.query(keep, targets))
    return sum(response.probs)


def necessity_score(
    gateway: OracleGateway, scene: Scene, removed: KeepSet, targets: TokenTargets
) -> float:
    """Summed probability loss when ``removed`` is taken away (one query).

    Evaluates the model on the complement of ``removed``; each target
    contributes 1 - p.
    """
    if len(targets) == 0:
        raise ValueError("at least one target is required")
    response = gateway.score_targets(scene.query(removed.complement(), targets))
    return sum(1.0 - p for p in response.probs)


def objective(
    gateway: OracleGateway,
    scene: Scene,
    keep: KeepSet,
    targets: TokenTargets,
    mode: ObjectiveMode = "both",
) -> ObjectiveValue:
    """Combined objective for keep-set S; at most two (cacheable) queries.

    ``mode`` selects the ablations: "insight" and "necessity" drop the other
    term entirely (including its query).
    """
    ins = 0.0
    nec = 0.0
    if mode in ("both", "insight"):
        ins = insight_score(gateway, scene, keep, targets)
    if mode in ("both", "necessity"):
        nec = necessity_score(gateway, scene, keep, targets)
    return ObjectiveValue(insight=ins, necessity=nec, total=ins + nec)


def attribution_scores(
    step_values: Sequence[float],
) -> tuple[list[float], list[float]]:
    """Raw and normalized saliency from the per-step objective trajectory.

    raw starts at zero and decreases by the absolute step-to-step change;
    norm is min-max over raw, with the all-equal case mapped to all ones so a
    flat trajectory still ranks every region maximally.
    """
    if len(step_values) == 0:
        raise ValueError("at least one step value is required")
    raw = [0.0]
    for prev, cur in zip(step_values, step_values[1:]):
        raw.append(raw[-1] - abs(cur - prev))
    lo, hi = min(raw), max(raw)
    if hi == lo:
        norm = [1.0] * len(raw)
    else:
        norm = [(v - lo) / (hi - lo) for v in raw]
    return raw, norm


def greedy_attribute(
    gateway: OracleGateway,
    scene: Scene,
    targets: TokenTargets,
    budget: int | None = None,
    mode: ObjectiveMode = "both",
) -> OrderedAttribution:
    """Greedy ordered-subset search over regions.

    Each round evaluates the objective for every remaining candidate (one
    concurrent batch of masked-image queries through the gateway) and appends
    the argmax, ties broken by the lowest region index. The default budget is
    the full region count, giving a complete ordering in
    (n^2 + n) / 2 candidate evaluations.
    """
    n = scene.region_count
    if budget is None:
        budget = n
    if not 1 <= budget <= n:
        raise ValueError(f"budget must be in [1, {n}], got {budget}")
    if len(targets) == 0:
        raise ValueError("at least one target is required")

    remaining = list(range(n))
    chosen = KeepSet.empty(n)
    order: list[int] = []
    step_values: list[float] = []
    evaluations = 0

    for round_index in range(budget):
        queries = []
        for candidate in remaining:
            keep = chosen.with_region(candidate)
            if mode in ("both", "insight"):
                queries.append(scene.query(keep, targets))
            if mode in ("both", "necessity"):
                queries.append(scene.query(keep.complement(), targets))
        try:
            responses = gateway.score_batch(queries)
        except OracleBatchError as exc:
            raise AttributionError(round_index, exc) from exc
        evaluations += len(remaining)

        per_candidate = 2 if mode == "both" else 1
        best_value = None
        best_candidate = None
        for slot, candidate in enumerate(remaining):
            group = responses[slot * per_candidate : (slot + 1) * per_candidate]
            value = 0.0
            cursor = 0
            if mode in ("both", "insight"):
                value += sum(group[cursor].probs)
                cursor += 1
            if mode in ("both", "necessity"):
                value += sum(1.0 - p for p in group[cursor].probs)
            if best_value is None or value > best_value:
                best_value = value
                best_candidate = candidate

        assert best_candidate is not None and best_value is not None
        order.append(best_candidate)
        step_values.append(best_value)
        chosen = chosen.with_region(best_candidate)
        remaining.remove(best_candidate)

    gains = [abs(b - a) for a, b in zip(step_values, step_values[1:])]
    raw, norm = attribution_scores(step_values)
    return OrderedAttribution(
        order=tuple(order),
        step_values=tuple(step_values),
        gains=tuple(gains),
        raw_scores=tuple(raw),
        norm_scores=tuple(norm),
        region_count=n,
        candidate_evaluations=evaluations,
    )


def prefix_probabilities(
    gateway: OracleGateway,
    scene: Scene,
    order: Sequence[int],
    targets: TokenTargets,
) -> list[tuple[float, ...]]:
    """Per-target probabilities at every ordering prefix (|order| queries).

    Row r holds the per-target probabilities with the first r+1 regions
    visible; the queries coincide with the winning insight queries of the
    greedy rounds, so a warm cache answers them without new forwards.
    """
    n = scene.region_count
    probs: list[tuple[float, ...]] = []
    keep = KeepSet.empty(n)
    for region in order:
        keep = keep.with_region(region)
        probs.append(gateway.score_targets(scene.query(keep, targets)).probs)
    return probs


def influence_from_trace(trace: Sequence[float], variant: InfluenceVariant) -> float:
    """Influence of one target given its probabilities over ordering prefixes.

    "body" sums deviations above the trace minimum; "algorithm1" sums
    deviations below the trace maximum. Either way a constant trace scores
    zero (a pure language-prior token) and any movement scores positive.
    """
    if len(trace) == 0:
        raise ValueError("prefix-probability trace must be non-empty")
    if variant == "body":
        anchor = min(trace)
        return sum(p - anchor for p in trace)
    if variant == "algorithm1":
        anchor = max(trace)
        return sum(anchor - p for p in trace)
    raise ValueError(f"unknown influence variant: {variant}")


def normalize_influence(raw: Sequence[float]) -> list[float]:
    """Max-division across targets; an all-zero vector stays all zero."""
    peak = max(raw)
    return [v / peak for v in raw] if peak > 0 else [0.0] * len(raw)


def influence_scores(
    gateway: OracleGateway,
    scene: Scene,
    order: Sequence[int],
    targets: TokenTargets,
    variant: InfluenceVariant = "body",
) -> InfluenceReport:
    """Spread of each target's probability across ordering prefixes."""
    if len(order) == 0:
        raise ValueError("ordering must be non-empty")
    if len(targets) == 0:
        raise ValueError("at least one target is required")
    rows = prefix_probabilities(gateway, scene, order, targets)
    raw = [
        influence_from_trace([row[t] for row in rows], variant)
        for t in range(len(targets))
    ]
    return InfluenceReport(
        variant=variant,
        raw=tuple(raw),
        norm=tuple(normalize_influence(raw)),
        prefix_probs=tuple(tuple(row) for row in rows),
    )


def sensitive_tokens(
    gateway: OracleGateway,
    scene: Scene,
    targets: TokenTargets,
    threshold: float = SENSITIVE_TOKEN_THRESHOLD,
) -> TokenTargets:
    """Targets whose probability drops by strictly more than ``threshold``
    when the whole image is masked (two queries)."""
    if not 0.0 < threshold < 1.0:
        raise ValueError("threshold must lie in (0, 1)")
    if len(targets) == 0:
        raise ValueError("at least one target is required")
    n = scene.region_count
    full = gateway.score_targets(scene.query(KeepSet.full(n), targets)).probs
    masked = gateway.score_targets(scene.query(KeepSet.empty(n), targets)).probs
    kept = [
        targets.targets[i][0]
        for i in range(len(targets))
        if full[i] - masked[i] > threshold
    ]
    return targets.restricted_to(kept)


def estimate_submodularity_ratio(
    gateway: OracleGateway,
    scene: Scene,
    targets: TokenTargets,
    max_regions: int = 8,
    mode: ObjectiveMode = "both",
) -> GammaEstimate:
    """Exhaustive submodularity-ratio estimate over all (L, S) pairs.

    For every base set L and every non-empty S disjoint from L with a strictly
    positive joint gain, compares the sum of singleton gains against the joint
    gain; gamma is the worst such ratio clamped to 1. Exponential in the
    region count, hence the guard.
    """
    n = scene.region_count
    if n > max_regions:
        raise ValueError(
            f"region count {n} exceeds max_regions={max_regions}; "
            "exhaustive enumeration would blow up"
        )

    values: dict[int, float] = {}
    for bits in range(1 << n):
        keep = KeepSet(n, bits)
        values[bits] = objective(gateway, scene, keep, targets, mode=mode).total

    raw_min = float("inf")
    evaluated = 0
    skipped = 0
    universe = list(range(n))
    for l_bits in range(1 << n):
        rest = [i for i in universe if not l_bits >> i & 1]
        for size in range(1, len(rest) + 1):
            for combo in combinations(rest, size):
                s_bits = 0
                for i in combo:
                    s_bits |= 1 << i
                denom = values[l_bits | s_bits] - values[l_bits]
                if denom <= 0.0:
                    skipped += 1
                    continue
                numer = sum(
                    values[l_bits | (1 << i)] - values[l_bits] for i in combo
                )
                raw_min = min(raw_min, numer / denom)
                evaluated += 1

    if evaluated == 0:
        raw_min = 1.0
    return GammaEstimate(
        gamma=min(1.0, raw_min),
        raw_min_ratio=raw_min,
        evaluated_pairs=evaluated,
        skipped_pairs=skipped,
    )
