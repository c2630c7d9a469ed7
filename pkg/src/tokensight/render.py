"""Visual outputs: heatmap overlays, partition previews, token reports."""

from __future__ import annotations

import html

import numpy as np

from .imgio import Image
from .partition import RegionPartition, SaliencyMap

# Jet-style anchors for saliency heatmaps.
_HEAT_STOPS = np.array(
    [
        [0.0, 0, 0, 143],
        [0.125, 0, 0, 255],
        [0.375, 0, 255, 255],
        [0.625, 255, 255, 0],
        [0.875, 255, 0, 0],
        [1.0, 128, 0, 0],
    ]
)


def heat_colormap(values: np.ndarray) -> np.ndarray:
    """Map values in [0, 1] to (..., 3) uint8 colors."""
    v = np.clip(np.asarray(values, dtype=np.float64), 0.0, 1.0)
    xs = _HEAT_STOPS[:, 0]
    out = np.empty(v.shape + (3,), dtype=np.uint8)
    for ch in range(3):
        out[..., ch] = np.interp(v, xs, _HEAT_STOPS[:, ch + 1]).round().astype(np.uint8)
    return out


def heatmap_overlay(image: Image, saliency: SaliencyMap, alpha: float = 0.5) -> Image:
    """Alpha-blend the saliency heatmap over the source image."""
    if (saliency.height, saliency.width) != (image.height, image.width):
        raise ValueError("saliency dimensions do not match image")
    heat = heat_colormap(saliency.scores).astype(np.float64)
    base = image.pixels.astype(np.float64)
    blended = (1.0 - alpha) * base + alpha * heat
    return Image(np.clip(blended.round(), 0, 255).astype(np.uint8))


def boundary_overlay(
    image: Image, partition: RegionPartition, color: tuple[int, int, int] = (255, 40, 40)
) -> Image:
    """Draw region boundaries (label changes to the right or below) over the image."""
    if (partition.height, partition.width) != (image.height, image.width):
        raise ValueError("partition dimensions do not match image")
    labels = partition.labels
    edge = np.zeros(labels.shape, dtype=bool)
    edge[:, :-1] |= labels[:, :-1] != labels[:, 1:]
    edge[:-1, :] |= labels[:-1, :] != labels[1:, :]
    out = image.pixels.copy()
    out[edge] = np.asarray(color, dtype=np.uint8)
    return Image(out)


def influence_color(norm_value: float) -> str:
    """Diverging hex color: blue for prior-driven, red for evidence-driven."""
    v = min(max(float(norm_value), 0.0), 1.0)
    # Interpolate blue (low) -> light gray (mid) -> red (high).
    if v < 0.5:
        t = v / 0.5
        r, g, b = (
            int(70 + t * (235 - 70)),
            int(130 + t * (235 - 130)),
            int(220 + t * (235 - 220)),
        )
    else:
        t = (v - 0.5) / 0.5
        r, g, b = (
            int(235 + t * (200 - 235)),
            int(235 + t * (60 - 235)),
            int(235 + t * (60 - 235)),
        )
    return f"#{r:02x}{g:02x}{b:02x}"


def token_report_html(
    tokens: list[str],
    positions: list[int],
    influence_norm: list[float],
    title: str = "Token influence",
) -> str:
    """Self-contained HTML page coloring the targeted tokens by influence."""
    colored = {p: v for p, v in zip(positions, influence_norm)}
    spans = []
    for i, token in enumerate(tokens):
        text = html.escape(token) if token else "&#xB7;"
        if i in colored:
            value = colored[i]
            spans.append(
                f'<span class="tok hit" style="background:{influence_color(value)}" '
                f'title="influence {value:.3f}">{text}</span>'
            )
        else:
            spans.append(f'<span class="tok">{text}</span>')
    body = "".join(spans)
    return f"""<!doctype html>
<html><head><meta charset="utf-8"><title>{html.escape(title)}</title>
<style>
body {{ font-family: system-ui, sans-serif; margin: 2rem; }}
.tok {{ padding: 2px 1px; border-radius: 3px; white-space: pre-wrap; }}
.tok.hit {{ outline: 1px solid #8883; }}
.legend {{ margin-top: 1rem; color: #555; font-size: 0.9rem; }}
</style></head>
<body><h3>{html.escape(title)}</h3>
<div>{body}</div>
<div class="legend">blue = language prior, red = perceptual evidence</div>
</body></html>
"""
