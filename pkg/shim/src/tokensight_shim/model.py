"""Tiny deterministic multimodal causal LM used for shim contract tests.

A 2-layer pre-norm transformer over character-level tokens with a 16-patch
image prefix. Weights are seeded at construction and inference is forced
single-threaded, so identical requests produce identical probabilities on a
given machine. Real deployments swap this class for a wrapper around an
actual MLLM exposing the same call surface.
"""

from __future__ import annotations

import math

import numpy as np
import torch
from torch import nn

VOCAB_SIZE = 256
IMAGE_PATCHES = 16
MAX_POSITIONS = 512
THUMB_SIDE = 8
PATCH_SIDE = 2


def tokenize_text(text: str) -> tuple[list[int], list[tuple[int, int]]]:
    """Character-level ids (codepoint modulo 256) with character offsets."""
    ids = [ord(ch) % VOCAB_SIZE for ch in text]
    offsets = [(i, i + 1) for i in range(len(text))]
    return ids, offsets


def detokenize(ids: list[int]) -> str:
    return "".join(chr(i) for i in ids)


class Block(nn.Module):
    def __init__(self, d_model: int, n_heads: int):
        super().__init__()
        self.n_heads = n_heads
        self.ln1 = nn.LayerNorm(d_model)
        self.qkv = nn.Linear(d_model, 3 * d_model)
        self.proj = nn.Linear(d_model, d_model)
        self.ln2 = nn.LayerNorm(d_model)
        self.mlp_in = nn.Linear(d_model, 4 * d_model)
        self.mlp_out = nn.Linear(4 * d_model, d_model)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        b, length, d = x.shape
        head_dim = d // self.n_heads
        h = self.ln1(x)
        q, k, v = self.qkv(h).split(d, dim=2)
        q = q.view(b, length, self.n_heads, head_dim).transpose(1, 2)
        k = k.view(b, length, self.n_heads, head_dim).transpose(1, 2)
        v = v.view(b, length, self.n_heads, head_dim).transpose(1, 2)
        scores = q @ k.transpose(2, 3) / math.sqrt(head_dim)
        causal = torch.triu(
            torch.full((length, length), float("-inf")), diagonal=1
        )
        attn = torch.softmax(scores + causal, dim=-1)
        mixed = (attn @ v).transpose(1, 2).reshape(b, length, d)
        x = x + self.proj(mixed)
        h = self.ln2(x)
        x = x + self.mlp_out(torch.nn.functional.gelu(self.mlp_in(h)))
        return x


class TinyVlm(nn.Module):
    """Image-prefixed causal LM over character tokens."""

    def __init__(self, seed: int = 0, d_model: int = 32, n_heads: int = 2, n_layers: int = 2):
        super().__init__()
        torch.manual_seed(seed)
        torch.set_num_threads(1)
        self.seed = seed
        self.d_model = d_model
        self.tok_emb = nn.Embedding(VOCAB_SIZE, d_model)
        self.pos_emb = nn.Embedding(MAX_POSITIONS, d_model)
        self.patch_proj = nn.Linear(PATCH_SIDE * PATCH_SIDE, d_model)
        self.blocks = nn.ModuleList(Block(d_model, n_heads) for _ in range(n_layers))
        self.ln_f = nn.LayerNorm(d_model)
        self.head = nn.Linear(d_model, VOCAB_SIZE)
        self.eval()

    @property
    def model_id(self) -> str:
        return f"tiny-vlm-seed{self.seed}"

    def image_patches(self, pixels: np.ndarray) -> torch.Tensor:
        """(H, W, 3) uint8 -> (IMAGE_PATCHES, PATCH_SIDE**2) normalized grays.

        The image is average-pooled to an 8x8 grayscale thumbnail and split
        into 2x2 patches in row-major order.
        """
        gray = torch.from_numpy(pixels.astype(np.float32)).mean(dim=2) / 255.0
        thumb = torch.nn.functional.adaptive_avg_pool2d(
            gray.unsqueeze(0).unsqueeze(0), (THUMB_SIDE, THUMB_SIDE)
        )[0, 0]
        patches = (
            thumb.view(THUMB_SIDE // PATCH_SIDE, PATCH_SIDE, THUMB_SIDE // PATCH_SIDE, PATCH_SIDE)
            .permute(0, 2, 1, 3)
            .reshape(IMAGE_PATCHES, PATCH_SIDE * PATCH_SIDE)
        )
        return patches

    def _embed(self, images: torch.Tensor, token_ids: list[int]) -> torch.Tensor:
        """(B, IMAGE_PATCHES, 4) patches + shared token ids -> (B, L, d)."""
        b = images.shape[0]
        prefix = self.patch_proj(images)
        if token_ids:
            toks = self.tok_emb(torch.tensor(token_ids, dtype=torch.long))
            toks = toks.unsqueeze(0).expand(b, -1, -1)
            x = torch.cat([prefix, toks], dim=1)
        else:
            x = prefix
        length = x.shape[1]
        if length > MAX_POSITIONS:
            raise ValueError(f"sequence length {length} exceeds {MAX_POSITIONS}")
        positions = self.pos_emb(torch.arange(length, dtype=torch.long))
        return x + positions.unsqueeze(0)

    @torch.no_grad()
    def logits(self, images: torch.Tensor, token_ids: list[int]) -> torch.Tensor:
        x = self._embed(images, token_ids)
        for block in self.blocks:
            x = block(x)
        return self.head(self.ln_f(x))

    @torch.no_grad()
    def token_probs(
        self,
        pixels_batch: list[np.ndarray],
        prompt: str,
        generated_ids: list[int],
        targets: list[tuple[int, int]],
    ) -> list[list[float]]:
        """Teacher-forced target probabilities for each image in the batch.

        The probability of generated_ids[t] is read from the softmax at the
        sequence index just before that token (image prefix + prompt length
        + t - 1), the standard next-token shift.
        """
        prompt_ids, _ = tokenize_text(prompt)
        for position, vocab_id in targets:
            if not 0 <= position < len(generated_ids):
                raise ValueError(f"target position {position} out of range")
            if not 0 <= vocab_id < VOCAB_SIZE:
                raise ValueError(f"vocab id {vocab_id} out of range")
        token_ids = prompt_ids + list(generated_ids)
        images = torch.stack([self.image_patches(p) for p in pixels_batch])
        logits = self.logits(images, token_ids)
        probs = torch.softmax(logits, dim=-1)
        base = IMAGE_PATCHES + len(prompt_ids)
        out = []
        for b in range(len(pixels_batch)):
            row = [
                float(probs[b, base + position - 1, vocab_id])
                for position, vocab_id in targets
            ]
            out.append(row)
        return out

    @torch.no_grad()
    def generate(
        self, pixels: np.ndarray, prompt: str, max_tokens: int
    ) -> tuple[str, list[int]]:
        """Greedy decoding; deterministic argmax (first index on ties)."""
        if max_tokens < 1:
            raise ValueError("max_tokens must be >= 1")
        prompt_ids, _ = tokenize_text(prompt)
        images = torch.stack([self.image_patches(pixels)])
        generated: list[int] = []
        for _ in range(max_tokens):
            logits = self.logits(images, prompt_ids + generated)
            next_id = int(torch.argmax(logits[0, -1]))
            generated.append(next_id)
        return detokenize(generated), generated
