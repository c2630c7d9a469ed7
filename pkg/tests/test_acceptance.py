"""Acceptance criteria for the attribution engine, one test per criterion.

Each criterion runs against synthetic oracles with known ground truth; the
terminal summary hook in conftest prints one pass/fail line per criterion.
"""

from __future__ import annotations

import itertools
import json
import math
import time

import numpy as np
import pytest
from click.testing import CliRunner
from PIL import Image as PILImage

from tokensight.attribution import (
    attribution_scores,
    estimate_submodularity_ratio,
    greedy_attribute,
    influence_from_trace,
    objective,
)
from tokensight.bench import choose_planted_region, planted_object_mask
from tokensight.bundle import canonical_bytes, strip_volatile
from tokensight.cli import main as cli_main
from tokensight.hallucination import (
    HallucinationCase,
    amcr,
    counterfactual_attribute,
    csr_at_budget,
    minimal_correction,
)
from tokensight.imgio import Image
from tokensight.metrics import (
    GroundTruthRegion,
    auc,
    average_highest,
    deletion_curve,
    insertion_curve,
    pointing_game,
)
from tokensight.oracle import OracleGateway, Scene, TokenTargets
from tokensight.partition import KeepSet, grid_partition, rasterize_saliency
from tokensight.slico import slico_partition
from tokensight.synthetic import (
    CoverageOracle,
    InteractionOracle,
    ModularOracle,
    YesNoOracle,
)


def one_target() -> TokenTargets:
    return TokenTargets(prompt="t", generated_ids=(0,), targets=((0, 0),))


def strip_scene(rng, n) -> Scene:
    image = Image(rng.integers(0, 256, size=(2, 2 * n, 3), dtype=np.uint8))
    return Scene(image=image, partition=grid_partition(2 * n, 2, 1, n))


def test_c01_modular_oracle_exactness():
    """Criterion 1: greedy equals descending weights and brute-force optima."""
    started = time.perf_counter()
    rng = np.random.default_rng(101)
    for trial in range(50):
        n = int(rng.integers(4, 11))
        scene = strip_scene(rng, n)
        weights = rng.uniform(-1.0, 1.0, size=n)
        gateway = OracleGateway(ModularOracle(scene.partition, weights.tolist()))
        result = greedy_attribute(gateway, scene, one_target())

        expected = tuple(int(i) for i in np.argsort(-weights, kind="stable"))
        assert result.order == expected, f"trial {trial}: order mismatch"

        by_size: dict[int, float] = {}
        for bits in range(1, 1 << n):
            keep = KeepSet(n, bits)
            value = objective(gateway, scene, keep, one_target()).total
            size = len(keep)
            if size not in by_size or value > by_size[size]:
                by_size[size] = value
        for k in range(1, n + 1):
            assert result.step_values[k - 1] == by_size[k], (
                f"trial {trial}: prefix {k} not brute-force optimal"
            )
    elapsed = time.perf_counter() - started
    assert elapsed < 10.0, f"criterion 1 took {elapsed:.1f}s (limit 10s)"


def test_c02_submodular_approximation_bound():
    """Criterion 2: insight-only greedy meets the (1 - 1/e) bound on coverage."""
    started = time.perf_counter()
    bound = 1.0 - math.exp(-1.0)
    rng = np.random.default_rng(202)
    for trial in range(30):
        n = int(rng.integers(4, 9))
        scene = strip_scene(rng, n)
        mask = rng.random((2, 2 * n)) < 0.35
        if not mask.any():
            mask[0, 0] = True
        gateway = OracleGateway(CoverageOracle(scene.partition, mask))
        result = greedy_attribute(gateway, scene, one_target(), mode="insight")
        for k in range(1, n + 1):
            opt = max(
                objective(
                    gateway, scene, KeepSet.from_indices(n, combo), one_target(),
                    mode="insight",
                ).total
                for combo in itertools.combinations(range(n), k)
            )
            assert result.step_values[k - 1] >= bound * opt - 1e-12, (
                f"trial {trial}: greedy prefix {k} below (1-1/e) bound"
            )
    elapsed = time.perf_counter() - started
    assert elapsed < 60.0, f"criterion 2 took {elapsed:.1f}s (limit 60s)"


def test_c03_submodularity_ratio_estimator():
    """Criterion 3: gamma is exactly 1 on modular set functions, below 1 on a
    supermodular interaction oracle."""
    started = time.perf_counter()
    rng = np.random.default_rng(303)
    for trial in range(8):
        n = int(rng.integers(4, 7))
        scene = strip_scene(rng, n)
        mask = rng.random((2, 2 * n)) < 0.5
        if not mask.any():
            mask[0, 0] = True
        gateway = OracleGateway(CoverageOracle(scene.partition, mask))
        estimate = estimate_submodularity_ratio(
            gateway, scene, one_target(), mode="insight"
        )
        assert abs(estimate.raw_min_ratio - 1.0) <= 1e-12, (
            f"trial {trial}: modular ratio {estimate.raw_min_ratio}"
        )
        assert estimate.gamma == min(1.0, estimate.raw_min_ratio)

    scene = strip_scene(rng, 5)
    pairs = np.zeros((5, 5))
    pairs[0, 1] = pairs[1, 0] = 2.0
    pairs[2, 3] = pairs[3, 2] = 1.0
    gateway = OracleGateway(InteractionOracle(scene.partition, [0.0] * 5, pairs))
    estimate = estimate_submodularity_ratio(gateway, scene, one_target(), mode="insight")
    assert estimate.gamma < 1.0, "supermodular oracle should push gamma below 1"
    elapsed = time.perf_counter() - started
    assert elapsed < 30.0, f"criterion 3 took {elapsed:.1f}s (limit 30s)"


def test_c04_saliency_recurrence_properties():
    """Criterion 4: 10,000 random step-value sequences satisfy the recurrence
    and normalization contract exactly."""
    rng = np.random.default_rng(404)
    for case in range(10_000):
        length = int(rng.integers(1, 21))
        if case % 10 == 0:
            steps = [float(rng.uniform(-5, 5))] * length
        else:
            steps = rng.uniform(-5.0, 5.0, size=length).tolist()
        raw, norm = attribution_scores(steps)
        assert raw[0] == 0.0
        assert all(b <= a for a, b in zip(raw, raw[1:]))
        assert all(0.0 <= v <= 1.0 for v in norm)
        if all(s == steps[0] for s in steps):
            assert norm == [1.0] * length
        else:
            assert norm[0] == 1.0
            assert min(norm) == 0.0


def test_c05_influence_variants():
    """Criterion 5: both influence variants are non-negative, zero only on
    constant traces, and match the asymmetric fixture exactly."""
    rng = np.random.default_rng(505)
    for case in range(1_000):
        length = int(rng.integers(1, 21))
        if case % 7 == 0:
            trace = [float(rng.uniform(0, 1))] * length
        else:
            trace = rng.uniform(0.0, 1.0, size=length).tolist()
        body = influence_from_trace(trace, "body")
        alg = influence_from_trace(trace, "algorithm1")
        assert body >= 0.0 and alg >= 0.0
        constant = all(p == trace[0] for p in trace)
        assert (body == 0.0) == constant
        assert (alg == 0.0) == constant

    fixture = [0.1, 0.1, 0.9]
    assert influence_from_trace(fixture, "body") == pytest.approx(0.8, abs=1e-15)
    assert influence_from_trace(fixture, "algorithm1") == pytest.approx(1.6, abs=1e-15)


def test_c06_metric_closed_forms():
    """Criterion 6: insertion AUC closed form for an object in the first-ranked
    region, with deletion mirroring by complement."""
    rng = np.random.default_rng(606)
    for n in (4, 8, 64):
        scene = strip_scene(rng, n)
        target_region = int(rng.integers(0, n))
        gateway = OracleGateway(CoverageOracle.for_region(scene.partition, target_region))
        order = (target_region,) + tuple(i for i in range(n) if i != target_region)
        ins = insertion_curve(gateway, scene, order, one_target())
        dele = deletion_curve(gateway, scene, order, one_target())
        assert auc(ins) == pytest.approx(1.0 - 1.0 / (2 * n), abs=1e-12)
        assert auc(dele) == pytest.approx(1.0 / (2 * n), abs=1e-12)
        for y_ins, y_del in zip(ins.ys, dele.ys):
            assert y_ins + y_del == pytest.approx(1.0, abs=1e-12)
        assert average_highest(ins) == max(ins.ys)


def test_c07_planted_object_localization():
    """Criterion 7: planted objects are top-ranked and pointed at."""
    started = time.perf_counter()
    rng = np.random.default_rng(707)
    trials = 100
    hits = 0
    top_ranked = 0
    for _ in range(trials):
        image = Image(rng.integers(0, 256, size=(32, 32, 3), dtype=np.uint8))
        part = slico_partition(image, region_count=16)
        planted = choose_planted_region(rng, part)
        obj = planted_object_mask(part, planted)
        scene = Scene(image=image, partition=part)
        gateway = OracleGateway(CoverageOracle(part, obj))
        result = greedy_attribute(gateway, scene, one_target())
        if result.order[0] == planted:
            top_ranked += 1
        saliency = rasterize_saliency(part, result.region_scores())
        ys, xs = np.nonzero(obj)
        bbox = (
            int(xs.min()),
            int(ys.min()),
            int(xs.max() - xs.min() + 1),
            int(ys.max() - ys.min() + 1),
        )
        if pointing_game(saliency, part, GroundTruthRegion(kind="bbox", bbox=bbox)).hit:
            hits += 1
    assert hits / trials >= 0.95, f"pointing hit rate {hits}/{trials}"
    assert top_ranked / trials >= 0.95, f"top-ranked rate {top_ranked}/{trials}"
    elapsed = time.perf_counter() - started
    assert elapsed < 120.0, f"criterion 7 took {elapsed:.1f}s (limit 120s)"


def test_c08_hallucination_correction_family():
    """Criterion 8: every planted suppressor is corrected within 10% removal."""
    rng = np.random.default_rng(808)
    outcomes = []
    n = 16
    for _ in range(50):
        image = Image(rng.integers(0, 256, size=(4, 4 * n, 3), dtype=np.uint8))
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
    assert csr_at_budget(outcomes, 0.10) == 1.0
    assert amcr(outcomes) <= 0.10


def test_c09_partition_invariants():
    """Criterion 9: totality, connectivity, count tolerance, determinism over
    200 random images."""
    rng = np.random.default_rng(909)
    region_counts = (16, 36, 50, 64)
    for trial in range(200):
        n = region_counts[trial % len(region_counts)]
        width = int(rng.integers(24, 81))
        height = int(rng.integers(24, 81))
        image = Image(rng.integers(0, 256, size=(height, width, 3), dtype=np.uint8))
        part = slico_partition(image, region_count=n)
        assert part.labels.shape == (height, width)
        assert part.labels.min() >= 0
        assert part.labels.max() == part.region_count - 1
        assert part.region_areas.min() >= 1
        assert int(part.region_areas.sum()) == width * height
        assert abs(part.region_count - n) <= 0.25 * n, (
            f"trial {trial}: {part.region_count} regions for requested {n}"
        )
        assert part.is_fully_connected()
        again = slico_partition(image, region_count=n)
        assert again.labels.tobytes() == part.labels.tobytes()


def test_c10_query_budget():
    """Criterion 10: a full ordering costs exactly n(n+1)/2 candidate
    evaluations and at most twice that in uncached forwards."""
    rng = np.random.default_rng(1010)
    n = 16
    scene = strip_scene(rng, n)
    weights = rng.uniform(-1.0, 1.0, size=n).tolist()
    gateway = OracleGateway(ModularOracle(scene.partition, weights))
    result = greedy_attribute(gateway, scene, one_target())
    expected = sum(n - i + 1 for i in range(1, n + 1))
    assert expected == n * n // 2 + n // 2
    assert result.candidate_evaluations == expected
    assert gateway.upstream_count <= 2 * expected


def test_c11_cli_determinism(tmp_path):
    """Criterion 11: two identical CLI runs produce byte-identical canonical
    bundles once timestamps are excluded."""
    img_path = tmp_path / "img.png"
    PILImage.fromarray(np.full((8, 8, 3), 190, dtype=np.uint8)).save(img_path)
    descriptor = json.dumps({"kind": "modular", "weights": [0.6, 0.1, 0.3]})
    runner = CliRunner()
    args = [
        "--synthetic", descriptor,
        "--regions", "3",
        "--out", str(tmp_path / "out"),
        "attribute", str(img_path),
        "--generated-ids", "0",
        "--target", "0",
    ]
    bundles = []
    for _ in range(2):
        result = runner.invoke(cli_main, args)
        assert result.exit_code == 0, result.output
        bundles.append((tmp_path / "out" / "bundle.json").read_text())
    first = canonical_bytes(strip_volatile(json.loads(bundles[0])))
    second = canonical_bytes(strip_volatile(json.loads(bundles[1])))
    assert first == second
