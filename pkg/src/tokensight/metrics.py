"""Faithfulness and localization metrics over an attribution ordering."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal, Sequence

import numpy as np

from .oracle import OracleGateway, Scene, TokenTargets
from .partition import KeepSet, RegionPartition, SaliencyMap


@dataclass(frozen=True)
class FaithfulnessCurve:
    """Mean target probability as regions are revealed (insertion) or
    removed (deletion), sampled at every prefix length of the ordering."""

    kind: Literal["insertion", "deletion"]
    xs: tuple[float, ...]
    ys: tuple[float, ...]


@dataclass(frozen=True)
class GroundTruthRegion:
    """Object annotation: a pixel-space bounding box or a binary mask."""

    kind: Literal["bbox", "mask"]
    bbox: tuple[int, int, int, int] | None = None  # x, y, w, h
    mask: np.ndarray | None = None

    def __post_init__(self):
        if self.kind == "bbox":
            if self.bbox is None:
                raise ValueError("bbox ground truth requires a bbox")
            x, y, w, h = self.bbox
            if w < 1 or h < 1 or x < 0 or y < 0:
                raise ValueError(f"invalid bbox {self.bbox}")
        elif self.kind == "mask":
            if self.mask is None:
                raise ValueError("mask ground truth requires a mask")
            mask = np.asarray(self.mask, dtype=bool)
            if not mask.any():
                raise ValueError("ground-truth mask is empty")
            object.__setattr__(self, "mask", mask)
        else:
            raise ValueError(f"unknown ground truth kind: {self.kind}")

    def contains(self, x: int, y: int) -> bool:
        if self.kind == "bbox":
            bx, by, bw, bh = self.bbox
            return bx <= x < bx + bw and by <= y < by + bh
        return bool(self.mask[y, x])

    @classmethod
    def from_dict(cls, record: dict) -> "GroundTruthRegion":
        if record.get("kind") == "bbox" or "bbox" in record or "x" in record:
            box = record["bbox"] if "bbox" in record else [
                record["x"], record["y"], record["w"], record["h"]
            ]
            return cls(kind="bbox", bbox=tuple(int(v) for v in box))
        if record.get("kind") == "mask" or "rle" in record:
            mask = decode_rle_mask(
                int(record["width"]), int(record["height"]), record["rle"]
            )
            return cls(kind="mask", mask=mask)
        raise ValueError("ground truth record must carry a bbox or an rle mask")


def decode_rle_mask(width: int, height: int, runs: Sequence[int]) -> np.ndarray:
    """Row-major run-length decoding; runs alternate 0s and 1s, starting with 0s."""
    total = width * height
    flat = np.zeros(total, dtype=bool)
    pos = 0
    value = False
    for run in runs:
        run = int(run)
        if run < 0 or pos + run > total:
            raise ValueError("rle runs exceed grid size")
        if value:
            flat[pos : pos + run] = True
        pos += run
        value = not value
    if pos != total:
        raise ValueError(f"rle covers {pos} of {total} pixels")
    return flat.reshape(height, width)


def encode_rle_mask(mask: np.ndarray) -> list[int]:
    flat = np.asarray(mask, dtype=bool).ravel()
    runs = []
    current = False
    count = 0
    for v in flat:
        if v == current:
            count += 1
        else:
            runs.append(count)
            current = bool(v)
            count = 1
    runs.append(count)
    return runs


def insertion_curve(
    gateway: OracleGateway,
    scene: Scene,
    order: Sequence[int],
    targets: TokenTargets,
) -> FaithfulnessCurve:
    """Reveal regions in ranking order starting from a fully masked canvas.

    Point r is the mean target probability with the first r regions visible;
    r runs from 0 (everything masked) to len(order) (full image when the
    ordering is complete). Shares cached queries with the greedy run.
    """
    return _curve(gateway, scene, order, targets, kind="insertion")


def deletion_curve(
    gateway: OracleGateway,
    scene: Scene,
    order: Sequence[int],
    targets: TokenTargets,
) -> FaithfulnessCurve:
    """Mask regions in ranking order starting from the full image."""
    return _curve(gateway, scene, order, targets, kind="deletion")


def _curve(gateway, scene, order, targets, kind) -> FaithfulnessCurve:
    if len(order) == 0:
        raise ValueError("ordering must be non-empty")
    if len(set(order)) != len(order):
        raise ValueError("ordering contains duplicate regions")
    if len(targets) == 0:
        raise ValueError("at least one target is required")
    n = scene.region_count
    steps = len(order)
    xs = [r / steps for r in range(steps + 1)]
    ys = []
    keep = KeepSet.empty(n)
    prefix_sets = [keep]
    for region in order:
        keep = keep.with_region(region)
        prefix_sets.append(keep)
    for prefix in prefix_sets:
        query_keep = prefix if kind == "insertion" else prefix.complement()
        probs = gateway.score_targets(scene.query(query_keep, targets)).probs
        ys.append(sum(probs) / len(probs))
    return FaithfulnessCurve(kind=kind, xs=tuple(xs), ys=tuple(ys))


def auc(curve: FaithfulnessCurve) -> float:
    """Trapezoidal area under the curve over the [0, 1] x-range."""
    if len(curve.xs) < 2:
        raise ValueError("curve needs at least two points")
    return float(np.trapezoid(np.asarray(curve.ys), np.asarray(curve.xs)))


def average_highest(curve: FaithfulnessCurve) -> float:
    """Highest mean target probability reached along the curve."""
    return max(curve.ys)


@dataclass(frozen=True)
class PointingResult:
    hit: bool
    point: tuple[int, int]  # x, y
    region: int


def pointing_game(
    saliency: SaliencyMap,
    partition: RegionPartition,
    truth: GroundTruthRegion,
) -> PointingResult:
    """Does the attribution maximum land inside the annotated object?

    The maximum of a region-constant map is a whole region, so the
    representative point is the region pixel nearest to the region centroid
    (the centroid itself can fall outside non-convex regions); ties resolve
    in row-major order. Invariant to monotone rescaling of the scores.
    """
    if (saliency.height, saliency.width) != (partition.height, partition.width):
        raise ValueError("saliency dimensions do not match partition")
    if truth.kind == "mask" and truth.mask.shape != (partition.height, partition.width):
        raise ValueError("ground-truth mask dimensions do not match partition")

    region_scores = np.full(partition.region_count, -np.inf)
    labels = partition.labels
    flat_scores = saliency.scores.ravel()
    flat_labels = labels.ravel()
    np.maximum.at(region_scores, flat_labels, flat_scores)
    top_region = int(np.argmax(region_scores))

    ys, xs = np.nonzero(labels == top_region)
    cy = ys.mean()
    cx = xs.mean()
    d2 = (ys - cy) ** 2 + (xs - cx) ** 2
    best = int(np.argmin(d2))  # nonzero() is row-major, argmin takes the first
    px, py = int(xs[best]), int(ys[best])
    return PointingResult(hit=truth.contains(px, py), point=(px, py), region=top_region)
