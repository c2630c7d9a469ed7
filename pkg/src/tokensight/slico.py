"""Superpixel partitioning with the zero-parameter (adaptive-compactness) SLIC variant.

The segmentation is a deterministic local k-means in CIELAB x spatial space:
grid-seeded cluster centers, seeds nudged to the lowest-gradient pixel in a
3x3 neighborhood, per-cluster adaptive color normalization, and a final
connectivity pass that merges orphan components into the largest adjacent
region. Labels depend only on (image, region_count, iterations).
"""

from __future__ import annotations

import math

import numpy as np
from scipy import ndimage

from .imgio import Image
from .partition import FOUR_CONNECTED, RegionPartition

# sRGB (D65) to XYZ, then XYZ to CIELAB with the D65 white point.
_SRGB_TO_XYZ = np.array(
    [
        [0.4124564, 0.3575761, 0.1804375],
        [0.2126729, 0.7151522, 0.0721750],
        [0.0193339, 0.1191920, 0.9503041],
    ]
)
_WHITE_D65 = np.array([0.95047, 1.0, 1.08883])


def rgb_to_lab(pixels: np.ndarray) -> np.ndarray:
    """Convert (H, W, 3) uint8 sRGB to float64 CIELAB."""
    srgb = pixels.astype(np.float64) / 255.0
    linear = np.where(
        srgb <= 0.04045, srgb / 12.92, ((srgb + 0.055) / 1.055) ** 2.4
    )
    xyz = linear @ _SRGB_TO_XYZ.T
    t = xyz / _WHITE_D65
    delta = 6.0 / 29.0
    f = np.where(t > delta**3, np.cbrt(t), t / (3 * delta**2) + 4.0 / 29.0)
    lab = np.empty_like(xyz)
    lab[..., 0] = 116.0 * f[..., 1] - 16.0
    lab[..., 1] = 500.0 * (f[..., 0] - f[..., 1])
    lab[..., 2] = 200.0 * (f[..., 1] - f[..., 2])
    return lab


def _grid_dims(height: int, width: int, n: int) -> tuple[int, int]:
    """Pick a rows x cols seed grid whose size is as close to n as possible."""
    r0 = math.sqrt(n * height / width)
    row_candidates = {
        min(max(1, r), min(height, n)) for r in (math.floor(r0), math.ceil(r0))
    }
    best = None
    for rows in sorted(row_candidates):
        for cols_raw in (math.floor(n / rows), math.ceil(n / rows)):
            cols = min(max(1, cols_raw), min(width, n))
            key = (abs(rows * cols - n), -(rows * cols), rows)
            if best is None or key < best[0]:
                best = (key, rows, cols)
    assert best is not None
    return best[1], best[2]


def _initial_seeds(lab: np.ndarray, rows: int, cols: int) -> np.ndarray:
    """Grid-centered float seeds, each nudged to its lowest-gradient neighbor.

    Gradient is the squared CIELAB difference between horizontal and vertical
    neighbors (edge-replicated). The probe scans the 3x3 neighborhood in
    row-major order and moves only on strict improvement, so a flat image
    leaves every seed at its exact cell center.
    """
    h, w = lab.shape[:2]
    padded = np.pad(lab, ((1, 1), (1, 1), (0, 0)), mode="edge")
    dx = padded[1:-1, 2:] - padded[1:-1, :-2]
    dy = padded[2:, 1:-1] - padded[:-2, 1:-1]
    gradient = (dx**2).sum(axis=2) + (dy**2).sum(axis=2)

    seeds = np.empty((rows * cols, 2), dtype=np.float64)
    k = 0
    for i in range(rows):
        for j in range(cols):
            sy = (i + 0.5) * h / rows - 0.5
            sx = (j + 0.5) * w / cols - 0.5
            py = min(max(int(round(sy)), 0), h - 1)
            px = min(max(int(round(sx)), 0), w - 1)
            best_g = gradient[py, px]
            best_dy = best_dx = 0
            for ny in (-1, 0, 1):
                for nx in (-1, 0, 1):
                    qy, qx = py + ny, px + nx
                    if 0 <= qy < h and 0 <= qx < w and gradient[qy, qx] < best_g:
                        best_g = gradient[qy, qx]
                        best_dy, best_dx = ny, nx
            seeds[k] = (sy + best_dy, sx + best_dx)
            k += 1
    return seeds


def slico_partition(
    image: Image, region_count: int, iterations: int = 10
) -> RegionPartition:
    """Partition ``image`` into roughly ``region_count`` connected superpixels.

    The returned region count can deviate from the request (empty clusters are
    dropped, the seed grid may not factor exactly) but stays within +/-25% for
    reasonable inputs. Pure function of its arguments.
    """
    h, w = image.height, image.width
    if not 1 <= region_count <= h * w:
        raise ValueError(
            f"region_count must be in [1, {h * w}], got {region_count}"
        )
    if iterations < 1:
        raise ValueError("iterations must be >= 1")

    lab = rgb_to_lab(image.pixels)
    step = math.sqrt(h * w / region_count)
    step2 = step * step
    offset = max(2, int(round(1.5 * step)))

    rows, cols = _grid_dims(h, w, region_count)
    seeds = _initial_seeds(lab, rows, cols)
    k = seeds.shape[0]

    center_lab = lab[
        np.clip(np.rint(seeds[:, 0]).astype(int), 0, h - 1),
        np.clip(np.rint(seeds[:, 1]).astype(int), 0, w - 1),
    ].copy()
    center_y = seeds[:, 0].copy()
    center_x = seeds[:, 1].copy()
    # Adaptive per-cluster color normalization, seeded at the classic m=10.
    maxlab2 = np.full(k, 100.0)

    ys = np.arange(h, dtype=np.float64)
    xs = np.arange(w, dtype=np.float64)
    yy, xx = np.meshgrid(ys, xs, indexing="ij")
    labels = np.full((h, w), -1, dtype=np.int32)

    for _ in range(iterations):
        best = np.full((h, w), np.inf)
        best_dc2 = np.zeros((h, w))
        labels = np.full((h, w), -1, dtype=np.int32)
        for c in range(k):
            cy, cx = center_y[c], center_x[c]
            y0 = max(0, int(round(cy)) - offset)
            y1 = min(h, int(round(cy)) + offset + 1)
            x0 = max(0, int(round(cx)) - offset)
            x1 = min(w, int(round(cx)) + offset + 1)
            if y0 >= y1 or x0 >= x1:
                continue
            dc2 = ((lab[y0:y1, x0:x1] - center_lab[c]) ** 2).sum(axis=2)
            ds2 = (ys[y0:y1, None] - cy) ** 2 + (xs[None, x0:x1] - cx) ** 2
            dist = dc2 / maxlab2[c] + ds2 / step2
            window = best[y0:y1, x0:x1]
            better = dist < window
            window[better] = dist[better]
            best_dc2[y0:y1, x0:x1][better] = dc2[better]
            labels[y0:y1, x0:x1][better] = c

        unassigned = labels < 0
        if unassigned.any():
            # Window drift can strand pixels; assign them by full distance.
            uy, ux = np.nonzero(unassigned)
            dc2 = ((lab[uy, ux][:, None, :] - center_lab[None, :, :]) ** 2).sum(
                axis=2
            )
            ds2 = (uy[:, None] - center_y[None, :]) ** 2 + (
                ux[:, None] - center_x[None, :]
            ) ** 2
            dist = dc2 / maxlab2[None, :] + ds2 / step2
            choice = np.argmin(dist, axis=1)
            labels[uy, ux] = choice
            best_dc2[uy, ux] = dc2[np.arange(len(uy)), choice]

        flat = labels.ravel()
        np.maximum.at(maxlab2, flat, best_dc2.ravel())

        counts = np.bincount(flat, minlength=k).astype(np.float64)
        occupied = counts > 0
        for dim, values in enumerate(
            (lab[..., 0], lab[..., 1], lab[..., 2], yy, xx)
        ):
            sums = np.bincount(flat, weights=values.ravel(), minlength=k)
            means = np.divide(sums, counts, out=np.zeros(k), where=occupied)
            if dim < 3:
                center_lab[occupied, dim] = means[occupied]
            elif dim == 3:
                center_y[occupied] = means[occupied]
            else:
                center_x[occupied] = means[occupied]

    labels = _enforce_connectivity(labels, k)
    partition = RegionPartition(labels=labels, region_count=int(labels.max()) + 1)
    assert partition.is_fully_connected()
    return partition


def _enforce_connectivity(labels: np.ndarray, k: int) -> np.ndarray:
    """Keep each cluster's largest 4-connected component; merge the orphans.

    Every orphan component is absorbed by the adjacent region with the largest
    current area (ties to the lowest region label). Orphans whose neighbors are
    all still unsettled are deferred to a later pass; the image is finite and
    at least one core exists, so the loop terminates.
    """
    h, w = labels.shape
    merged = labels.copy()
    settled = np.zeros((h, w), dtype=bool)
    areas = np.zeros(k, dtype=np.int64)
    orphans: list[tuple[int, np.ndarray, np.ndarray]] = []

    for c in range(k):
        mask = labels == c
        if not mask.any():
            continue
        comp, ncomp = ndimage.label(mask, structure=FOUR_CONNECTED)
        sizes = np.bincount(comp.ravel())[1:]
        core = int(np.argmax(sizes)) + 1
        core_mask = comp == core
        settled |= core_mask
        areas[c] = sizes[core - 1]
        for j in range(1, ncomp + 1):
            if j == core:
                continue
            oy, ox = np.nonzero(comp == j)
            orphans.append((int(oy[0] * w + ox[0]), oy, ox))

    # Scan-order processing keeps the merge result deterministic.
    orphans.sort(key=lambda item: item[0])
    pending = orphans
    while pending:
        deferred = []
        progressed = False
        for item in pending:
            _, oy, ox = item
            neighbor_labels = _settled_neighbor_labels(merged, settled, oy, ox)
            if neighbor_labels.size == 0:
                deferred.append(item)
                continue
            candidate_areas = areas[neighbor_labels]
            target = int(neighbor_labels[np.argmax(candidate_areas)])
            merged[oy, ox] = target
            settled[oy, ox] = True
            areas[target] += oy.size
            progressed = True
        if not progressed:
            raise AssertionError("connectivity merge failed to make progress")
        pending = deferred

    # Relabel surviving clusters to a contiguous [0, M) range.
    survivors = np.unique(merged)
    remap = np.full(k, -1, dtype=np.int32)
    remap[survivors] = np.arange(survivors.size, dtype=np.int32)
    return remap[merged]


def _settled_neighbor_labels(
    merged: np.ndarray, settled: np.ndarray, oy: np.ndarray, ox: np.ndarray
) -> np.ndarray:
    """Distinct labels of settled 4-neighbors around a pixel set, ascending."""
    h, w = merged.shape
    found = []
    for dy, dx in ((-1, 0), (1, 0), (0, -1), (0, 1)):
        ny, nx = oy + dy, ox + dx
        ok = (ny >= 0) & (ny < h) & (nx >= 0) & (nx < w)
        ny, nx = ny[ok], nx[ok]
        good = settled[ny, nx]
        if good.any():
            found.append(merged[ny[good], nx[good]])
    if not found:
        return np.empty(0, dtype=np.int32)
    return np.unique(np.concatenate(found))
