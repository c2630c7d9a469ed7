from __future__ import annotations

import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tokensight.bundle import (
    canonical_bytes,
    canonical_dumps,
    format_float,
    strip_volatile,
)
from tokensight.config import RunConfig
from tokensight.imgio import Image
from tokensight.oracle import OracleConfig
from tokensight.partition import grid_partition, rasterize_saliency
from tokensight.render import boundary_overlay, heat_colormap, heatmap_overlay, token_report_html

from conftest import random_image


class TestCanonicalJson:
    def test_sorted_keys_and_floats(self):
        text = canonical_dumps({"b": 0.1, "a": 1})
        assert text.index('"a"') < text.index('"b"')
        assert "0.10000000000000001" in text

    def test_nan_rejected(self):
        with pytest.raises(ValueError):
            canonical_dumps({"x": float("nan")})

    def test_non_string_key_rejected(self):
        with pytest.raises(TypeError):
            canonical_dumps({1: "x"})

    def test_roundtrip_byte_identical(self):
        bundle = {
            "floats": [0.1, 1.0, -0.0, 3.141592653589793, 1e-17],
            "nested": {"z": [1, 2, 3], "a": "text", "flag": True, "none": None},
            "empty_list": [],
            "empty_map": {},
        }
        first = canonical_bytes(bundle)
        reparsed = json.loads(first)
        second = canonical_bytes(reparsed)
        assert first == second

    @settings(max_examples=200, deadline=None)
    @given(st.floats(allow_nan=False, allow_infinity=False))
    def test_float_format_roundtrips(self, value):
        assert float(format_float(value)) == value

    def test_strip_volatile(self):
        bundle = {"timing": {"seconds": 1.0}, "order": [1]}
        assert strip_volatile(bundle) == {"order": [1]}


class TestRunConfig:
    def test_defaults(self):
        config = RunConfig()
        assert config.region_count == 64
        assert config.slico_iterations == 10
        assert config.fill == (128, 128, 128)
        assert config.influence_variant == "body"

    def test_roundtrip(self):
        config = RunConfig(
            oracle=OracleConfig(synthetic={"kind": "modular", "seed": 3}),
            region_count=36,
            fill=(0, 0, 0),
            budget=10,
        )
        back = RunConfig.from_dict(json.loads(json.dumps(config.to_dict())))
        assert back == config

    def test_unknown_field_rejected(self):
        with pytest.raises(ValueError):
            RunConfig.from_dict({"regions": 4})

    def test_validation(self):
        with pytest.raises(ValueError):
            RunConfig(region_count=0)
        with pytest.raises(ValueError):
            RunConfig(influence_variant="other")
        with pytest.raises(ValueError):
            RunConfig(fill=(256, 0, 0))


class TestRender:
    def test_colormap_range(self):
        colors = heat_colormap(np.linspace(0, 1, 11))
        assert colors.shape == (11, 3)
        assert colors.dtype == np.uint8

    def test_overlay_dimensions(self, rng):
        img = random_image(rng, 9, 7)
        part = grid_partition(9, 7, 1, 3)
        sal = rasterize_saliency(part, [0.0, 0.5, 1.0])
        overlay = heatmap_overlay(img, sal, alpha=0.5)
        assert (overlay.width, overlay.height) == (img.width, img.height)

    def test_overlay_blend_alpha(self):
        img = Image(np.full((2, 2, 3), 100, dtype=np.uint8))
        part = grid_partition(2, 2, 1, 1)
        sal = rasterize_saliency(part, [0.0])
        overlay = heatmap_overlay(img, sal, alpha=0.5)
        # Half base (100) + half heat stop at 0 (0, 0, 143).
        assert overlay.pixels[0, 0].tolist() == [50, 50, 122]

    def test_boundary_overlay_marks_edges(self, rng):
        img = random_image(rng, 6, 6)
        part = grid_partition(6, 6, 1, 2)
        marked = boundary_overlay(img, part, color=(255, 0, 0))
        assert np.all(marked.pixels[:, 2] == [255, 0, 0])

    def test_token_report_contains_tokens(self):
        html_text = token_report_html(["Yes", ",", "there"], [0], [1.0])
        assert "Yes" in html_text and "influence 1.000" in html_text
