"""Region partitions, keep-sets over regions, and region-level saliency maps."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np
from scipy import ndimage

from .imgio import Image

FOUR_CONNECTED = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool)


@dataclass(frozen=True, eq=False)
class RegionPartition:
    """Labeling of every pixel into one of ``region_count`` connected regions.

    Labels are a (height, width) int array with values in [0, region_count).
    Every label is used by at least one pixel.
    """

    labels: np.ndarray
    region_count: int

    def __post_init__(self):
        labels = np.asarray(self.labels, dtype=np.int32)
        if labels.ndim != 2:
            raise ValueError(f"labels must be 2-D, got shape {labels.shape}")
        labels = labels.copy()
        labels.flags.writeable = False
        object.__setattr__(self, "labels", labels)
        areas = np.bincount(labels.ravel(), minlength=self.region_count)
        if labels.min() < 0 or labels.max() >= self.region_count:
            raise ValueError("labels out of range for region_count")
        if np.any(areas == 0):
            raise ValueError("every region must contain at least one pixel")
        object.__setattr__(self, "_areas", areas.astype(np.int64))

    @property
    def height(self) -> int:
        return self.labels.shape[0]

    @property
    def width(self) -> int:
        return self.labels.shape[1]

    @property
    def region_areas(self) -> np.ndarray:
        return self._areas.copy()

    def region_mask(self, region: int) -> np.ndarray:
        if not 0 <= region < self.region_count:
            raise ValueError(f"region {region} out of range")
        return self.labels == region

    def is_fully_connected(self) -> bool:
        """True when every region is one 4-connected component."""
        for r in range(self.region_count):
            _, n = ndimage.label(self.labels == r, structure=FOUR_CONNECTED)
            if n != 1:
                return False
        return True

    def to_json(self) -> str:
        record = {
            "width": self.width,
            "height": self.height,
            "region_count": self.region_count,
            "labels": self.labels.ravel().tolist(),
        }
        return json.dumps(record)

    @classmethod
    def from_json(cls, text: str) -> "RegionPartition":
        record = json.loads(text)
        labels = np.asarray(record["labels"], dtype=np.int32).reshape(
            record["height"], record["width"]
        )
        return cls(labels=labels, region_count=int(record["region_count"]))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json())

    @classmethod
    def load(cls, path: str | Path) -> "RegionPartition":
        return cls.from_json(Path(path).read_text())


@dataclass(frozen=True)
class KeepSet:
    """Bitset over region indices: which regions stay visible under masking."""

    region_count: int
    bits: int = 0

    def __post_init__(self):
        if self.region_count < 0:
            raise ValueError("region_count must be non-negative")
        if self.bits < 0 or self.bits >> self.region_count:
            raise ValueError("bits out of range for region_count")

    @classmethod
    def empty(cls, region_count: int) -> "KeepSet":
        return cls(region_count, 0)

    @classmethod
    def full(cls, region_count: int) -> "KeepSet":
        return cls(region_count, (1 << region_count) - 1)

    @classmethod
    def from_indices(cls, region_count: int, indices: Iterable[int]) -> "KeepSet":
        bits = 0
        for i in indices:
            if not 0 <= i < region_count:
                raise ValueError(f"region index {i} out of range")
            bits |= 1 << i
        return cls(region_count, bits)

    def with_region(self, region: int) -> "KeepSet":
        if not 0 <= region < self.region_count:
            raise ValueError(f"region index {region} out of range")
        return KeepSet(self.region_count, self.bits | (1 << region))

    def without_region(self, region: int) -> "KeepSet":
        if not 0 <= region < self.region_count:
            raise ValueError(f"region index {region} out of range")
        return KeepSet(self.region_count, self.bits & ~(1 << region))

    def complement(self) -> "KeepSet":
        return KeepSet(self.region_count, self.bits ^ ((1 << self.region_count) - 1))

    def union(self, other: "KeepSet") -> "KeepSet":
        if other.region_count != self.region_count:
            raise ValueError("keep-set length mismatch")
        return KeepSet(self.region_count, self.bits | other.bits)

    def issubset(self, other: "KeepSet") -> bool:
        return self.bits & ~other.bits == 0

    def indices(self) -> tuple[int, ...]:
        return tuple(i for i in range(self.region_count) if self.bits >> i & 1)

    def __contains__(self, region: int) -> bool:
        return 0 <= region < self.region_count and bool(self.bits >> region & 1)

    def __len__(self) -> int:
        return int(self.bits).bit_count()

    def __iter__(self) -> Iterator[int]:
        return iter(self.indices())


@dataclass(frozen=True, eq=False)
class SaliencyMap:
    """Per-pixel saliency in [0, 1], constant within each region."""

    scores: np.ndarray

    def __post_init__(self):
        scores = np.asarray(self.scores, dtype=np.float64)
        if scores.ndim != 2:
            raise ValueError("scores must be 2-D")
        if not np.all(np.isfinite(scores)):
            raise ValueError("saliency scores must be finite")
        if scores.min() < 0.0 or scores.max() > 1.0:
            raise ValueError("saliency scores must lie in [0, 1]")
        scores = scores.copy()
        scores.flags.writeable = False
        object.__setattr__(self, "scores", scores)

    @property
    def height(self) -> int:
        return self.scores.shape[0]

    @property
    def width(self) -> int:
        return self.scores.shape[1]


DEFAULT_FILL = (128, 128, 128)


def compose_masked_image(
    image: Image,
    partition: RegionPartition,
    keep: KeepSet,
    fill: tuple[int, int, int] = DEFAULT_FILL,
) -> Image:
    """Copy pixels of kept regions verbatim; set all other pixels to ``fill``."""
    if (partition.height, partition.width) != (image.height, image.width):
        raise ValueError(
            f"partition {partition.width}x{partition.height} does not match "
            f"image {image.width}x{image.height}"
        )
    if keep.region_count != partition.region_count:
        raise ValueError("keep-set length does not match partition region count")
    keep_lut = np.zeros(partition.region_count, dtype=bool)
    for i in keep:
        keep_lut[i] = True
    visible = keep_lut[partition.labels]
    out = np.empty_like(image.pixels)
    out[:] = np.asarray(fill, dtype=np.uint8)
    out[visible] = image.pixels[visible]
    return Image(out)


def rasterize_saliency(
    partition: RegionPartition, region_scores: Sequence[float]
) -> SaliencyMap:
    """Spread per-region scores onto pixels: each pixel gets its region's score."""
    scores = np.asarray(region_scores, dtype=np.float64)
    if scores.shape != (partition.region_count,):
        raise ValueError(
            f"expected {partition.region_count} region scores, got {scores.shape}"
        )
    return SaliencyMap(scores[partition.labels])


def grid_partition(width: int, height: int, rows: int, cols: int) -> RegionPartition:
    """Axis-aligned rows x cols partition; regions ordered row-major.

    Used by synthetic benchmarks and tests that need an exact region layout
    without running the superpixel segmentation.
    """
    if rows < 1 or cols < 1 or rows > height or cols > width:
        raise ValueError("grid dimensions out of range")
    row_edges = np.linspace(0, height, rows + 1).astype(int)
    col_edges = np.linspace(0, width, cols + 1).astype(int)
    labels = np.zeros((height, width), dtype=np.int32)
    for r in range(rows):
        for c in range(cols):
            labels[row_edges[r] : row_edges[r + 1], col_edges[c] : col_edges[c + 1]] = (
                r * cols + c
            )
    return RegionPartition(labels=labels, region_count=rows * cols)
