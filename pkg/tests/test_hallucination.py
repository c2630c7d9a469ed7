from __future__ import annotations

import json

import numpy as np
import pytest

from tokensight.hallucination import (
    CorrectionOutcome,
    HallucinationCase,
    amcr,
    counterfactual_attribute,
    counterfactual_targets,
    csr_at_budget,
    load_cases,
    minimal_correction,
    parse_answer,
)
from tokensight.metrics import deletion_curve
from tokensight.oracle import OracleGateway, Scene
from tokensight.partition import grid_partition
from tokensight.synthetic import YesNoOracle

from conftest import random_image


def make_case(ground_truth="No", vocab=YesNoOracle.NO_ID):
    return HallucinationCase(
        image_ref="mem",
        question="Is there a snowboard?",
        model_answer="Yes" if ground_truth == "No" else "No",
        ground_truth=ground_truth,
        counterfactual_vocab_id=vocab,
    )


def suppressor_scene(rng, suppressor=7, n=10):
    """Oracle answers Yes only while the suppressor region is visible."""
    img = random_image(rng, 2 * n, 2)
    part = grid_partition(2 * n, 2, 1, n)
    scene = Scene(image=img, partition=part)
    weights = [0.01] * n
    weights[suppressor] = 3.0
    oracle = YesNoOracle(part, weights, bias=-1.6)
    return scene, oracle


class TestParseAnswer:
    def test_leading_answers(self):
        assert parse_answer("Yes, it is.") == "Yes"
        assert parse_answer("  no!") == "No"
        assert parse_answer("NO rationale needed") == "No"

    def test_unparseable(self):
        assert parse_answer("Maybe") is None
        assert parse_answer("") is None
        assert parse_answer("The answer is yes") is None


class TestCaseValidation:
    def test_requires_disagreement(self):
        with pytest.raises(ValueError):
            HallucinationCase(
                image_ref="x",
                question="q",
                model_answer="Yes",
                ground_truth="Yes",
                counterfactual_vocab_id=1,
            )

    def test_jsonl_roundtrip(self, tmp_path):
        case = make_case()
        path = tmp_path / "cases.jsonl"
        path.write_text(json.dumps(case.to_dict()) + "\n\n")
        loaded = load_cases(path)
        assert loaded == [case]


class TestCounterfactualAttribution:
    def test_suppressor_ranked_last(self, rng):
        scene, oracle = suppressor_scene(rng, suppressor=7)
        gw = OracleGateway(oracle)
        result = counterfactual_attribute(gw, scene, make_case())
        assert result.order[-1] == 7

    def test_single_region(self, rng):
        img = random_image(rng, 4, 4)
        part = grid_partition(4, 4, 1, 1)
        scene = Scene(image=img, partition=part)
        gw = OracleGateway(YesNoOracle(part, [2.0], bias=-1.0))
        result = counterfactual_attribute(gw, scene, make_case())
        assert result.order == (0,)

    def test_flat_trace_when_already_correct(self, rng):
        img = random_image(rng, 8, 2)
        part = grid_partition(8, 2, 1, 4)
        scene = Scene(image=img, partition=part)
        # p(yes) is ~0 everywhere: the correct-answer (No) probability is ~1
        # under every keep-set, so the ordering gains are flat.
        gw = OracleGateway(YesNoOracle(part, [0.0] * 4, bias=-9.0))
        result = counterfactual_attribute(gw, scene, make_case())
        assert max(result.gains) < 1e-3
        assert result.norm_scores == (1.0, 1.0, 1.0, 1.0)


class TestMinimalCorrection:
    def test_planted_suppressor_removed_at_ten_percent(self, rng):
        scene, oracle = suppressor_scene(rng, suppressor=3, n=10)
        gw = OracleGateway(oracle)
        case = make_case()
        attribution = counterfactual_attribute(gw, scene, case)
        outcome = minimal_correction(gw, scene, case, attribution)
        assert outcome.corrected
        assert outcome.removed_regions == (3,)
        assert outcome.removed_area_fraction == pytest.approx(0.10)

    def test_never_corrects_full_fraction(self, rng):
        img = random_image(rng, 8, 2)
        part = grid_partition(8, 2, 1, 4)
        scene = Scene(image=img, partition=part)
        # Yes regardless of masking; ground truth No is unreachable.
        gw = OracleGateway(YesNoOracle(part, [0.0] * 4, bias=5.0))
        case = make_case()
        attribution = counterfactual_attribute(gw, scene, case)
        outcome = minimal_correction(gw, scene, case, attribution)
        assert not outcome.corrected
        assert outcome.removed_area_fraction == 1.0
        assert len(outcome.probability_trace) == 4

    def test_already_correct_zero_removals(self, rng):
        img = random_image(rng, 8, 2)
        part = grid_partition(8, 2, 1, 4)
        scene = Scene(image=img, partition=part)
        gw = OracleGateway(YesNoOracle(part, [0.0] * 4, bias=-5.0))
        case = make_case()
        attribution = counterfactual_attribute(gw, scene, case)
        outcome = minimal_correction(gw, scene, case, attribution)
        assert outcome.corrected
        assert outcome.removed_regions == ()
        assert outcome.removed_area_fraction == 0.0

    def test_count_mode(self, rng):
        scene, oracle = suppressor_scene(rng, suppressor=2, n=5)
        gw = OracleGateway(oracle)
        case = make_case()
        attribution = counterfactual_attribute(gw, scene, case)
        outcome = minimal_correction(gw, scene, case, attribution, amcr_mode="count")
        assert outcome.removed_area_fraction == pytest.approx(1 / 5)

    def test_trace_is_reversed_deletion_curve(self, rng):
        scene, oracle = suppressor_scene(rng, suppressor=6, n=8)
        gw = OracleGateway(oracle)
        case = make_case()
        attribution = counterfactual_attribute(gw, scene, case)
        # Force the full trace by making the answer never flip.
        stubborn = OracleGateway(
            YesNoOracle(scene.partition, list(oracle.weights), bias=9.0)
        )
        outcome = minimal_correction(stubborn, scene, case, attribution)
        reversed_order = tuple(reversed(attribution.order))
        curve = deletion_curve(
            stubborn, scene, reversed_order, counterfactual_targets(case)
        )
        assert outcome.probability_trace == curve.ys[1:]


class TestAggregates:
    def _outcome(self, corrected, fraction):
        return CorrectionOutcome(
            corrected=corrected,
            removed_regions=(),
            removed_area_fraction=fraction,
            probability_trace=(),
        )

    def test_amcr_mean(self):
        outcomes = [self._outcome(True, 0.1), self._outcome(True, 0.3)]
        assert amcr(outcomes) == pytest.approx(0.2)

    def test_amcr_all_uncorrected(self):
        outcomes = [self._outcome(False, 1.0)] * 3
        assert amcr(outcomes) == 1.0

    def test_amcr_single(self):
        assert amcr([self._outcome(True, 0.05)]) == 0.05

    def test_csr_budget(self):
        outcomes = [
            self._outcome(True, 0.05),
            self._outcome(True, 0.5),
            self._outcome(False, 1.0),
        ]
        assert csr_at_budget(outcomes, 0.10) == pytest.approx(1 / 3)

    def test_csr_all_corrected_at_zero(self):
        outcomes = [self._outcome(True, 0.0)] * 4
        assert csr_at_budget(outcomes, 0.10) == 1.0

    def test_csr_budget_boundary_inclusive(self):
        outcomes = [self._outcome(True, 0.10)]
        assert csr_at_budget(outcomes, 0.10) == 1.0

    def test_csr_budget_validation(self):
        with pytest.raises(ValueError):
            csr_at_budget([self._outcome(True, 0.1)], 0.0)
