"""Synthetic benchmark families with known ground truth, driven by the CLI."""

from __future__ import annotations

import itertools
import math

import numpy as np
from scipy import ndimage

from .attribution import greedy_attribute, objective
from .hallucination import (
    HallucinationCase,
    counterfactual_attribute,
    csr_at_budget,
    minimal_correction,
)
from .imgio import Image
from .metrics import GroundTruthRegion, pointing_game
from .oracle import OracleGateway, Scene, TokenTargets
from .partition import KeepSet, grid_partition, rasterize_saliency
from .slico import slico_partition
from .synthetic import CoverageOracle, ModularOracle, YesNoOracle


def _targets() -> TokenTargets:
    return TokenTargets(prompt="bench", generated_ids=(0,), targets=((0, 0),))


def _random_image(rng, width, height) -> Image:
    return Image(rng.integers(0, 256, size=(height, width, 3), dtype=np.uint8))


def bench_modular_exactness(rng, trials: int) -> dict:
    """Greedy on modular oracles must equal the descending-weight ordering."""
    failures = 0
    for t in range(trials):
        n = int(rng.integers(4, 9))
        image = _random_image(rng, 2 * n, 2)
        scene = Scene(image=image, partition=grid_partition(2 * n, 2, 1, n))
        weights = rng.uniform(-1.0, 1.0, size=n)
        gateway = OracleGateway(ModularOracle(scene.partition, weights.tolist()))
        result = greedy_attribute(gateway, scene, _targets())
        expected = tuple(int(i) for i in np.argsort(-weights, kind="stable"))
        if result.order != expected:
            failures += 1
    return {
        "passed": failures == 0,
        "detail": f"{trials - failures}/{trials} orderings match descending weights",
    }


def bench_coverage_bound(rng, trials: int) -> dict:
    """Insight-only greedy prefixes on coverage oracles meet the 1-1/e bound."""
    bound = 1.0 - math.exp(-1.0)
    violations = 0
    for t in range(trials):
        n = int(rng.integers(4, 8))
        image = _random_image(rng, 2 * n, 2)
        part = grid_partition(2 * n, 2, 1, n)
        scene = Scene(image=image, partition=part)
        obj_mask = rng.random((2, 2 * n)) < 0.4
        if not obj_mask.any():
            obj_mask[0, 0] = True
        gateway = OracleGateway(CoverageOracle(part, obj_mask))
        result = greedy_attribute(gateway, scene, _targets(), mode="insight")
        for k in range(1, n + 1):
            opt = max(
                objective(
                    gateway, scene, KeepSet.from_indices(n, combo), _targets(),
                    mode="insight",
                ).total
                for combo in itertools.combinations(range(n), k)
            )
            if result.step_values[k - 1] < bound * opt - 1e-12:
                violations += 1
    return {
        "passed": violations == 0,
        "detail": f"{violations} prefix bound violations over {trials} oracles",
    }


def choose_planted_region(rng, part) -> int:
    """Plant in a substantial region: connectivity cleanup can leave slivers
    whose one-pixel margin would outweigh the region itself."""
    areas = part.region_areas
    eligible = np.flatnonzero(areas >= np.median(areas))
    return int(eligible[rng.integers(0, eligible.size)])


def planted_object_mask(part, planted: int) -> np.ndarray:
    """A planted region plus a one-pixel margin bleeding into its neighbors.

    The margin keeps the coverage response graded: a single saturated region
    would make every greedy step value equal, and the degenerate all-equal
    normalization would wash the saliency map flat.
    """
    core = part.labels == planted
    return ndimage.binary_dilation(core, structure=np.ones((3, 3), dtype=bool))


def bench_planted_localization(rng, trials: int) -> dict:
    """Coverage oracle on a planted object: top rank and pointing hit."""
    hits = 0
    top_ranked = 0
    for t in range(trials):
        image = _random_image(rng, 32, 32)
        part = slico_partition(image, region_count=16)
        planted = choose_planted_region(rng, part)
        obj = planted_object_mask(part, planted)
        gateway = OracleGateway(CoverageOracle(part, obj))
        scene = Scene(image=image, partition=part)
        result = greedy_attribute(gateway, scene, _targets())
        if result.order[0] == planted:
            top_ranked += 1
        saliency = rasterize_saliency(part, result.region_scores())
        ys, xs = np.nonzero(obj)
        bbox = (int(xs.min()), int(ys.min()), int(xs.max() - xs.min() + 1),
                int(ys.max() - ys.min() + 1))
        truth = GroundTruthRegion(kind="bbox", bbox=bbox)
        if pointing_game(saliency, part, truth).hit:
            hits += 1
    return {
        "passed": hits == trials and top_ranked == trials,
        "detail": f"pointing {hits}/{trials}, top-ranked {top_ranked}/{trials}",
    }


def bench_hallucination_correction(rng, trials: int) -> dict:
    """Planted suppressors must be corrected within the 10% removal budget."""
    outcomes = []
    for t in range(trials):
        n = 16
        image = _random_image(rng, 4 * n, 4)
        part = grid_partition(4 * n, 4, 1, n)
        scene = Scene(image=image, partition=part)
        weights = rng.uniform(-0.05, 0.05, size=n)
        suppressor = int(rng.integers(0, n))
        weights[suppressor] = 3.0
        oracle = YesNoOracle(part, weights.tolist(), bias=-1.5)
        gateway = OracleGateway(oracle)
        case = HallucinationCase(
            image_ref="synthetic",
            question="Is the planted object there?",
            model_answer="Yes",
            ground_truth="No",
            counterfactual_vocab_id=oracle.no_id,
        )
        attribution = counterfactual_attribute(gateway, scene, case)
        outcomes.append(minimal_correction(gateway, scene, case, attribution))
    csr = csr_at_budget(outcomes, 0.10)
    return {
        "passed": csr == 1.0,
        "detail": f"csr@10% = {csr:.3f} over {trials} cases",
    }


def run_benchmarks(seed: int = 7, trials: int = 10) -> dict:
    rng = np.random.default_rng(seed)
    benchmarks = {
        "modular_exactness": bench_modular_exactness(rng, trials),
        "coverage_bound": bench_coverage_bound(rng, trials),
        "planted_localization": bench_planted_localization(rng, trials),
        "hallucination_correction": bench_hallucination_correction(rng, trials),
    }
    return {
        "seed": seed,
        "trials": trials,
        "benchmarks": benchmarks,
        "all_passed": all(b["passed"] for b in benchmarks.values()),
    }
