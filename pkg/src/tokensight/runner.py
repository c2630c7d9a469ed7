"""Pipeline orchestration: build oracles, resolve targets, assemble bundles."""

from __future__ import annotations

import re
import time
from dataclasses import dataclass

import numpy as np

from .attribution import (
    InfluenceVariant,
    OrderedAttribution,
    greedy_attribute,
    influence_scores,
    sensitive_tokens,
)
from .bundle import SCHEMA_VERSION
from .config import RunConfig
from .metrics import auc, average_highest, deletion_curve, insertion_curve
from .oracle import (
    HttpOracle,
    OracleError,
    OracleGateway,
    ProbOracle,
    Scene,
    TokenTargets,
)
from .partition import RegionPartition, SaliencyMap, rasterize_saliency
from .synthetic import (
    ConstantOracle,
    CoverageOracle,
    InteractionOracle,
    ModularOracle,
    YesNoOracle,
)


def build_oracle(config: RunConfig, partition: RegionPartition | None) -> ProbOracle:
    """Instantiate the oracle named by the config.

    Synthetic descriptors bind to the partition in use; weight vectors may be
    given inline or generated from a seed so the CLI works before the region
    count is known.
    """
    spec = config.oracle
    if spec.synthetic is not None:
        if partition is None:
            raise ValueError("synthetic oracles require a partition")
        return _build_synthetic(spec.synthetic, partition, config.fill)
    if spec.endpoint:
        return HttpOracle(
            spec.endpoint, timeout=spec.timeout, bearer_token=spec.bearer_token
        )
    raise ValueError("oracle config needs an endpoint or a synthetic descriptor")


def _seeded_weights(descriptor: dict, n: int) -> list[float]:
    if "weights" in descriptor:
        weights = [float(w) for w in descriptor["weights"]]
        if len(weights) != n:
            raise ValueError(f"descriptor has {len(weights)} weights for {n} regions")
        return weights
    if "seed" in descriptor:
        rng = np.random.default_rng(int(descriptor["seed"]))
        return rng.uniform(-1.0, 1.0, size=n).tolist()
    raise ValueError("synthetic descriptor needs 'weights' or 'seed'")


def _build_synthetic(descriptor: dict, partition: RegionPartition, fill) -> ProbOracle:
    kind = descriptor.get("kind")
    n = partition.region_count
    bias = float(descriptor.get("bias", 0.0))
    if kind == "constant":
        return ConstantOracle(partition, float(descriptor.get("value", 1.0)), fill=fill)
    if kind == "modular":
        return ModularOracle(partition, _seeded_weights(descriptor, n), bias=bias, fill=fill)
    if kind == "yesno":
        return YesNoOracle(
            partition,
            _seeded_weights(descriptor, n),
            bias=bias,
            yes_id=int(descriptor.get("yes_id", YesNoOracle.YES_ID)),
            no_id=int(descriptor.get("no_id", YesNoOracle.NO_ID)),
            fill=fill,
        )
    if kind == "coverage":
        if "region" in descriptor:
            mask = partition.region_mask(int(descriptor["region"]))
        elif "bbox" in descriptor:
            x, y, w, h = (int(v) for v in descriptor["bbox"])
            mask = np.zeros((partition.height, partition.width), dtype=bool)
            mask[y : y + h, x : x + w] = True
        else:
            raise ValueError("coverage descriptor needs 'region' or 'bbox'")
        return CoverageOracle(partition, mask, fill=fill)
    if kind == "interaction":
        weights = _seeded_weights(descriptor, n)
        pairs = np.asarray(descriptor.get("pairs", np.zeros((n, n))), dtype=np.float64)
        return InteractionOracle(partition, weights, pairs, bias=bias, fill=fill)
    raise ValueError(f"unknown synthetic oracle kind: {kind}")


def make_gateway(config: RunConfig, partition: RegionPartition | None) -> OracleGateway:
    oracle = build_oracle(config, partition)
    return OracleGateway.from_config(oracle, config.oracle)


def word_target_positions(
    text: str,
    token_offsets: list[tuple[int, int]],
    words: list[str],
) -> list[int]:
    """Token positions covered by any occurrence of the requested words.

    A token counts as covered when its character span overlaps a
    case-insensitive whole-word match; multi-token words contribute every
    covered position.
    """
    spans = []
    for word in words:
        if not word:
            continue
        for match in re.finditer(rf"\b{re.escape(word)}\b", text, flags=re.IGNORECASE):
            spans.append(match.span())
    positions = []
    for i, (start, end) in enumerate(token_offsets):
        if any(start < s_end and end > s_start for s_start, s_end in spans):
            positions.append(i)
    return positions


def resolve_targets(
    gateway: OracleGateway,
    scene: Scene,
    prompt: str,
    explicit: list[str] | None = None,
    generated_ids: list[int] | None = None,
    words: list[str] | None = None,
    all_tokens: bool = False,
    sensitive_only: bool = False,
    threshold: float = 0.2,
    max_tokens: int = 64,
) -> TokenTargets:
    """Turn the CLI/API target selectors into concrete TokenTargets."""
    text: str | None = None
    if generated_ids is None:
        text, generated_ids = gateway.generate(scene.image, prompt, max_tokens)
    ids = tuple(int(t) for t in generated_ids)

    if explicit:
        pairs = []
        for item in explicit:
            if ":" in str(item):
                pos_s, vocab_s = str(item).split(":", 1)
                pairs.append((int(pos_s), int(vocab_s)))
            else:
                pos = int(item)
                pairs.append((pos, ids[pos]))
        pairs.sort()
        targets = TokenTargets(prompt=prompt, generated_ids=ids, targets=tuple(pairs))
    elif words:
        if text is None:
            raise ValueError("word targeting requires generation (omit --generated-ids)")
        token_ids, offsets = gateway.tokenize(text)
        if tuple(token_ids) != ids:
            raise OracleError(
                "tokenizer does not round-trip the generated text; "
                "cannot map words to token positions"
            )
        positions = word_target_positions(text, offsets, words)
        if not positions:
            raise ValueError(f"no generated token matches words: {words}")
        targets = TokenTargets(
            prompt=prompt,
            generated_ids=ids,
            targets=tuple((p, ids[p]) for p in positions),
        )
    elif all_tokens or sensitive_only:
        targets = TokenTargets(
            prompt=prompt,
            generated_ids=ids,
            targets=tuple((i, t) for i, t in enumerate(ids)),
        )
    else:
        raise ValueError("no targets selected")

    if len(targets) == 0:
        raise ValueError("empty target set")
    if sensitive_only:
        targets = sensitive_tokens(gateway, scene, targets, threshold=threshold)
        if len(targets) == 0:
            raise ValueError(
                f"no token moved by more than {threshold} when the image was masked"
            )
    return targets


@dataclass
class AttributionRun:
    bundle: dict
    attribution: OrderedAttribution
    saliency: SaliencyMap
    influence_norm: tuple[float, ...]


def run_attribution(
    gateway: OracleGateway,
    scene: Scene,
    targets: TokenTargets,
    config: RunConfig,
    image_ref: str = "",
    partition_ref: str = "",
) -> AttributionRun:
    """Full pipeline: greedy ordering, influence (both variants), curves, bundle."""
    started = time.perf_counter()
    attribution = greedy_attribute(
        gateway, scene, targets, budget=config.budget, mode=config.objective_mode
    )
    main_variant: InfluenceVariant = config.influence_variant  # type: ignore[assignment]
    alt_variant: InfluenceVariant = "algorithm1" if main_variant == "body" else "body"
    influence = influence_scores(gateway, scene, attribution.order, targets, main_variant)
    influence_alt = influence_scores(gateway, scene, attribution.order, targets, alt_variant)
    ins = insertion_curve(gateway, scene, attribution.order, targets)
    dele = deletion_curve(gateway, scene, attribution.order, targets)
    saliency = rasterize_saliency(scene.partition, attribution.region_scores())
    elapsed = time.perf_counter() - started

    config_snapshot = config.to_dict()
    if config_snapshot["oracle"].get("bearer_token"):
        config_snapshot["oracle"]["bearer_token"] = "[redacted]"

    bundle = {
        "schema_version": SCHEMA_VERSION,
        "config": config_snapshot,
        "image_ref": image_ref,
        "partition_ref": partition_ref,
        "targets": {
            "prompt": targets.prompt,
            "generated_ids": list(targets.generated_ids),
            "targets": [[p, v] for p, v in targets.targets],
        },
        "attribution": {
            "order": list(attribution.order),
            "step_values": list(attribution.step_values),
            "gains": list(attribution.gains),
            "raw_scores": list(attribution.raw_scores),
            "norm_scores": list(attribution.norm_scores),
            "region_scores": attribution.region_scores(),
        },
        "influence": {
            "variant": influence.variant,
            "raw": list(influence.raw),
            "norm": list(influence.norm),
        },
        "influence_alt": {
            "variant": influence_alt.variant,
            "raw": list(influence_alt.raw),
            "norm": list(influence_alt.norm),
        },
        "curves": {
            "x_axis_mode": config.x_axis_mode,
            "insertion": {"xs": list(ins.xs), "ys": list(ins.ys), "auc": auc(ins)},
            "deletion": {"xs": list(dele.xs), "ys": list(dele.ys), "auc": auc(dele)},
            "average_highest": average_highest(ins),
        },
        "oracle": {
            "model_id": gateway.model_id,
            "query_count": gateway.query_count,
            "upstream_count": gateway.upstream_count,
            "generate_count": gateway.generate_count,
            "candidate_evaluations": attribution.candidate_evaluations,
        },
        "metrics": None,
        "hallucination": None,
        "timing": {"seconds": elapsed},
    }
    return AttributionRun(
        bundle=bundle,
        attribution=attribution,
        saliency=saliency,
        influence_norm=influence.norm,
    )
