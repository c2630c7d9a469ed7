"""In-process oracles with closed-form ground truth, used for tests and benchmarks.

Each oracle is constructed against a specific partition and fill color. When a
query carries the keep-set hint it is used directly; when driven through the
wire protocol (pixels only) the keep-set is recovered by exact fill matching:
a region counts as masked only if every one of its pixels equals the fill.
"""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from .imgio import Image
from .oracle import OracleError, ProbQuery
from .partition import DEFAULT_FILL, KeepSet, RegionPartition


def sigmoid(x: float) -> float:
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    z = math.exp(x)
    return z / (1.0 + z)


def recover_keep_set(
    image: Image, partition: RegionPartition, fill: tuple[int, int, int]
) -> KeepSet:
    """Recover which regions are visible in a masked image by fill matching."""
    if (partition.height, partition.width) != (image.height, image.width):
        raise ValueError("partition dimensions do not match image")
    is_fill = np.all(image.pixels == np.asarray(fill, dtype=np.uint8), axis=2)
    fill_counts = np.bincount(
        partition.labels.ravel(),
        weights=is_fill.ravel(),
        minlength=partition.region_count,
    )
    areas = partition.region_areas
    kept = [r for r in range(partition.region_count) if fill_counts[r] < areas[r]]
    return KeepSet.from_indices(partition.region_count, kept)


def _byte_tokenize(text: str) -> tuple[list[int], list[tuple[int, int]]]:
    """One token per character (codepoint modulo 256), offsets are char spans."""
    ids = [ord(ch) % 256 for ch in text]
    offsets = [(i, i + 1) for i in range(len(text))]
    return ids, offsets


class _SyntheticOracle:
    """Shared keep-set plumbing for the synthetic oracle family."""

    model_id = "synthetic"

    def __init__(self, partition: RegionPartition, fill: tuple[int, int, int] = DEFAULT_FILL):
        self.partition = partition
        self.fill = tuple(int(c) for c in fill)

    def _keep(self, query: ProbQuery) -> KeepSet:
        if query.keep is not None:
            if query.keep.region_count != self.partition.region_count:
                raise OracleError("keep-set length does not match oracle partition")
            return query.keep
        return recover_keep_set(query.image, self.partition, self.fill)

    def keep_from_image(self, image: Image) -> KeepSet:
        return recover_keep_set(image, self.partition, self.fill)

    def tokenize(self, text: str) -> tuple[list[int], list[tuple[int, int]]]:
        return _byte_tokenize(text)

    def generate(self, image: Image, prompt: str, max_tokens: int) -> tuple[str, list[int]]:
        raise OracleError(f"{self.model_id} does not support generation")


class ConstantOracle(_SyntheticOracle):
    """Fixed probability for every target regardless of masking."""

    model_id = "synthetic-constant"

    def __init__(
        self,
        partition: RegionPartition,
        value: float = 1.0,
        fill: tuple[int, int, int] = DEFAULT_FILL,
    ):
        super().__init__(partition, fill)
        if not 0.0 <= value <= 1.0:
            raise ValueError("constant probability must lie in [0, 1]")
        self.value = float(value)

    def token_probs(self, query: ProbQuery) -> list[float]:
        return [self.value] * len(query.targets)


class ModularOracle(_SyntheticOracle):
    """p(target | keep S) = sigmoid(bias + sum of per-region weights over S).

    The probability depends only on the keep-set, never on pixel content, and
    is identical for every target in the query.
    """

    model_id = "synthetic-modular"

    def __init__(
        self,
        partition: RegionPartition,
        weights: Sequence[float],
        bias: float = 0.0,
        fill: tuple[int, int, int] = DEFAULT_FILL,
    ):
        super().__init__(partition, fill)
        if len(weights) != partition.region_count:
            raise ValueError(
                f"expected {partition.region_count} weights, got {len(weights)}"
            )
        self.weights = tuple(float(w) for w in weights)
        self.bias = float(bias)

    def prob(self, keep: KeepSet) -> float:
        return sigmoid(self.bias + sum(self.weights[i] for i in keep))

    def token_probs(self, query: ProbQuery) -> list[float]:
        p = self.prob(self._keep(query))
        return [p] * len(query.targets)


class CoverageOracle(_SyntheticOracle):
    """p = fraction of a planted object's pixels visible under the keep-set.

    Monotone and submodular (in fact additive) as a set function over regions.
    """

    model_id = "synthetic-coverage"

    def __init__(
        self,
        partition: RegionPartition,
        object_pixels: np.ndarray,
        fill: tuple[int, int, int] = DEFAULT_FILL,
    ):
        super().__init__(partition, fill)
        mask = np.asarray(object_pixels, dtype=bool)
        if mask.shape != (partition.height, partition.width):
            raise ValueError("object mask dimensions do not match partition")
        if not mask.any():
            raise ValueError("object pixel set must be non-empty")
        self.object_mask = mask
        counts = np.bincount(
            partition.labels[mask].ravel(), minlength=partition.region_count
        )
        self._region_counts = counts.astype(np.int64)
        self._total = int(mask.sum())

    @classmethod
    def for_region(
        cls,
        partition: RegionPartition,
        region: int,
        fill: tuple[int, int, int] = DEFAULT_FILL,
    ) -> "CoverageOracle":
        return cls(partition, partition.region_mask(region), fill=fill)

    def prob(self, keep: KeepSet) -> float:
        covered = sum(int(self._region_counts[i]) for i in keep)
        return covered / self._total

    def token_probs(self, query: ProbQuery) -> list[float]:
        p = self.prob(self._keep(query))
        return [p] * len(query.targets)


class InteractionOracle(_SyntheticOracle):
    """Modular oracle plus pairwise interaction terms inside the logit.

    Positive pair terms make the underlying set function supermodular, which
    drives the submodularity-ratio estimate below one.
    """

    model_id = "synthetic-interaction"

    def __init__(
        self,
        partition: RegionPartition,
        weights: Sequence[float],
        pair_matrix: np.ndarray,
        bias: float = 0.0,
        fill: tuple[int, int, int] = DEFAULT_FILL,
    ):
        super().__init__(partition, fill)
        n = partition.region_count
        if len(weights) != n:
            raise ValueError(f"expected {n} weights, got {len(weights)}")
        pairs = np.asarray(pair_matrix, dtype=np.float64)
        if pairs.shape != (n, n):
            raise ValueError(f"pair matrix must be {n}x{n}, got {pairs.shape}")
        if not np.allclose(pairs, pairs.T):
            raise ValueError("pair matrix must be symmetric")
        if not np.allclose(np.diag(pairs), 0.0):
            raise ValueError("pair matrix diagonal must be zero")
        self.weights = tuple(float(w) for w in weights)
        self.pairs = pairs
        self.bias = float(bias)

    def prob(self, keep: KeepSet) -> float:
        members = keep.indices()
        logit = self.bias + sum(self.weights[i] for i in members)
        for a in range(len(members)):
            for b in range(a + 1, len(members)):
                logit += self.pairs[members[a], members[b]]
        return sigmoid(logit)

    def token_probs(self, query: ProbQuery) -> list[float]:
        p = self.prob(self._keep(query))
        return [p] * len(query.targets)


class YesNoOracle(_SyntheticOracle):
    """Binary-answer oracle: p(yes | keep S) = sigmoid(bias + sum of weights over S).

    token_probs answers for the yes/no vocabulary entries (anything else gets
    probability zero). generate greedily emits "Yes." or "No." as byte-level
    tokens whose leading id is the configured answer id; with the default ids
    (the Y/N byte values) generation round-trips through tokenize exactly.
    """

    model_id = "synthetic-yesno"

    YES_ID = ord("Y")
    NO_ID = ord("N")

    def __init__(
        self,
        partition: RegionPartition,
        weights: Sequence[float],
        bias: float = 0.0,
        yes_id: int = YES_ID,
        no_id: int = NO_ID,
        fill: tuple[int, int, int] = DEFAULT_FILL,
    ):
        super().__init__(partition, fill)
        if len(weights) != partition.region_count:
            raise ValueError(
                f"expected {partition.region_count} weights, got {len(weights)}"
            )
        if yes_id == no_id:
            raise ValueError("yes and no vocabulary ids must differ")
        self.weights = tuple(float(w) for w in weights)
        self.bias = float(bias)
        self.yes_id = int(yes_id)
        self.no_id = int(no_id)

    def prob_yes(self, keep: KeepSet) -> float:
        return sigmoid(self.bias + sum(self.weights[i] for i in keep))

    def token_probs(self, query: ProbQuery) -> list[float]:
        p_yes = self.prob_yes(self._keep(query))
        out = []
        for _, vocab_id in query.targets.targets:
            if vocab_id == self.yes_id:
                out.append(p_yes)
            elif vocab_id == self.no_id:
                out.append(1.0 - p_yes)
            else:
                out.append(0.0)
        return out

    def generate(self, image: Image, prompt: str, max_tokens: int) -> tuple[str, list[int]]:
        if max_tokens < 1:
            raise OracleError("max_tokens must be >= 1")
        p_yes = self.prob_yes(self.keep_from_image(image))
        answer, lead = ("Yes.", self.yes_id) if p_yes > 0.5 else ("No.", self.no_id)
        ids = ([lead] + [ord(c) for c in answer[1:]])[:max_tokens]
        return answer[: len(ids)], ids


def make_modular_oracle(
    partition: RegionPartition,
    weights: Sequence[float],
    bias: float = 0.0,
    fill: tuple[int, int, int] = DEFAULT_FILL,
) -> ModularOracle:
    return ModularOracle(partition, weights, bias=bias, fill=fill)


def make_coverage_oracle(
    partition: RegionPartition,
    object_pixels: np.ndarray,
    fill: tuple[int, int, int] = DEFAULT_FILL,
) -> CoverageOracle:
    return CoverageOracle(partition, object_pixels, fill=fill)


def make_interaction_oracle(
    partition: RegionPartition,
    weights: Sequence[float],
    pair_matrix: np.ndarray,
    bias: float = 0.0,
    fill: tuple[int, int, int] = DEFAULT_FILL,
) -> InteractionOracle:
    return InteractionOracle(partition, weights, pair_matrix, bias=bias, fill=fill)
