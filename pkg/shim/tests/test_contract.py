"""Wire-protocol contract tests against the tiny in-process model."""

from __future__ import annotations

import base64
import io
import math

import numpy as np
import pytest
import torch
from fastapi.testclient import TestClient
from PIL import Image as PILImage

from tokensight_shim.model import IMAGE_PATCHES, TinyVlm, tokenize_text
from tokensight_shim.server import create_app


@pytest.fixture(scope="module")
def model():
    return TinyVlm(seed=11)


@pytest.fixture(scope="module")
def client(model):
    with TestClient(create_app(model, max_batch=3)) as c:
        yield c


def image_bytes(seed=0, side=16) -> bytes:
    rng = np.random.default_rng(seed)
    arr = rng.integers(0, 256, size=(side, side, 3), dtype=np.uint8)
    buf = io.BytesIO()
    PILImage.fromarray(arr).save(buf, format="PNG")
    return buf.getvalue()


def image_b64(seed=0, side=16) -> str:
    return base64.b64encode(image_bytes(seed, side)).decode("ascii")


def manual_token_probs(model, pixels, prompt, generated_ids, targets):
    """Forward pass rebuilt from the raw weight tensors, outside the server.

    Everything is recomputed with primitive tensor ops: block-mean image
    pooling, embedding lookups, per-head attention loops, explicit layer
    norm. Only the parameter tensors are shared with the model.
    """
    d = model.d_model
    eps = 1e-5

    gray = torch.from_numpy(pixels.astype(np.float32)).mean(dim=2) / 255.0
    h, w = gray.shape
    assert h % 8 == 0 and w % 8 == 0
    thumb = gray.view(8, h // 8, 8, w // 8).mean(dim=(1, 3))
    patches = torch.stack(
        [
            thumb[2 * r : 2 * r + 2, 2 * c : 2 * c + 2].reshape(4)
            for r in range(4)
            for c in range(4)
        ]
    )

    prompt_ids, _ = tokenize_text(prompt)
    token_ids = prompt_ids + list(generated_ids)
    prefix = patches @ model.patch_proj.weight.T + model.patch_proj.bias
    toks = model.tok_emb.weight[torch.tensor(token_ids, dtype=torch.long)]
    x = torch.cat([prefix, toks], dim=0)
    length = x.shape[0]
    x = x + model.pos_emb.weight[:length]

    def layer_norm(t, weight, bias):
        mean = t.mean(dim=-1, keepdim=True)
        var = t.var(dim=-1, unbiased=False, keepdim=True)
        return (t - mean) / torch.sqrt(var + eps) * weight + bias

    for block in model.blocks:
        n_heads = block.n_heads
        head_dim = d // n_heads
        hnorm = layer_norm(x, block.ln1.weight, block.ln1.bias)
        qkv = hnorm @ block.qkv.weight.T + block.qkv.bias
        q, k, v = qkv[:, :d], qkv[:, d : 2 * d], qkv[:, 2 * d :]
        heads = []
        for head in range(n_heads):
            sl = slice(head * head_dim, (head + 1) * head_dim)
            qh, kh, vh = q[:, sl], k[:, sl], v[:, sl]
            scores = qh @ kh.T / math.sqrt(head_dim)
            mask = torch.triu(torch.full((length, length), float("-inf")), diagonal=1)
            attn = torch.softmax(scores + mask, dim=-1)
            heads.append(attn @ vh)
        mixed = torch.cat(heads, dim=1)
        x = x + mixed @ block.proj.weight.T + block.proj.bias
        hnorm = layer_norm(x, block.ln2.weight, block.ln2.bias)
        inner = torch.nn.functional.gelu(hnorm @ block.mlp_in.weight.T + block.mlp_in.bias)
        x = x + inner @ block.mlp_out.weight.T + block.mlp_out.bias

    x = layer_norm(x, model.ln_f.weight, model.ln_f.bias)
    logits = x @ model.head.weight.T + model.head.bias
    probs = torch.softmax(logits, dim=-1)
    base = IMAGE_PATCHES + len(prompt_ids)
    return [float(probs[base + pos - 1, vocab]) for pos, vocab in targets]


class TestTokenProbs:
    def test_matches_independent_forward(self, model, client):
        rng = np.random.default_rng(5)
        pixels = rng.integers(0, 256, size=(16, 16, 3), dtype=np.uint8)
        buf = io.BytesIO()
        PILImage.fromarray(pixels).save(buf, format="PNG")
        b64 = base64.b64encode(buf.getvalue()).decode("ascii")

        prompt = "Q: what? A:"
        generated = [72, 105, 33]
        targets = [(0, 72), (1, 105), (2, 33)]
        response = client.post(
            "/v1/token_probs",
            json={
                "image_b64": b64,
                "prompt": prompt,
                "generated_ids": generated,
                "targets": [{"position": p, "vocab_id": v} for p, v in targets],
            },
        )
        assert response.status_code == 200, response.text
        body = response.json()
        expected = manual_token_probs(model, pixels, prompt, generated, targets)
        assert body["probs"] == pytest.approx(expected, abs=1e-5)
        assert body["model_id"] == model.model_id

    def test_protocol_shapes(self, client):
        response = client.post(
            "/v1/token_probs",
            json={
                "image_b64": image_b64(1),
                "prompt": "hello",
                "generated_ids": [65, 66],
                "targets": [{"position": 0, "vocab_id": 65}],
            },
        )
        body = response.json()
        assert set(body) == {"probs", "model_id"}
        assert isinstance(body["model_id"], str)
        assert all(isinstance(p, float) and 0.0 <= p <= 1.0 for p in body["probs"])

    def test_position_out_of_range_is_400(self, client):
        response = client.post(
            "/v1/token_probs",
            json={
                "image_b64": image_b64(1),
                "prompt": "p",
                "generated_ids": [65],
                "targets": [{"position": 1, "vocab_id": 65}],
            },
        )
        assert response.status_code == 400
        assert "error" in response.json()

    def test_bad_image_is_400(self, client):
        response = client.post(
            "/v1/token_probs",
            json={
                "image_b64": "not-base64!!",
                "prompt": "p",
                "generated_ids": [65],
                "targets": [{"position": 0, "vocab_id": 65}],
            },
        )
        assert response.status_code == 400
        assert "error" in response.json()

    def test_deterministic_repeat(self, client):
        payload = {
            "image_b64": image_b64(2),
            "prompt": "same",
            "generated_ids": [70, 71],
            "targets": [{"position": 1, "vocab_id": 71}],
        }
        first = client.post("/v1/token_probs", json=payload).json()
        second = client.post("/v1/token_probs", json=payload).json()
        assert first == second


class TestBatch:
    def test_batch_equals_serial(self, client):
        images = [image_b64(seed) for seed in (3, 4, 5, 6)]
        context = {
            "prompt": "caption:",
            "generated_ids": [100, 101, 102],
            "targets": [{"position": 0, "vocab_id": 100}, {"position": 2, "vocab_id": 102}],
        }
        batch = client.post(
            "/v1/token_probs_batch", json={"images_b64": images, **context}
        )
        assert batch.status_code == 200, batch.text
        rows = batch.json()["probs"]
        assert len(rows) == 4
        for b64, row in zip(images, rows):
            single = client.post(
                "/v1/token_probs", json={"image_b64": b64, **context}
            ).json()["probs"]
            assert row == pytest.approx(single, abs=1e-6)

    def test_identical_images_identical_rows(self, client):
        b64 = image_b64(7)
        body = client.post(
            "/v1/token_probs_batch",
            json={
                "images_b64": [b64, b64],
                "prompt": "p",
                "generated_ids": [80],
                "targets": [{"position": 0, "vocab_id": 80}],
            },
        ).json()
        assert body["probs"][0] == body["probs"][1]

    def test_empty_batch_is_400(self, client):
        response = client.post(
            "/v1/token_probs_batch",
            json={"images_b64": [], "prompt": "p", "generated_ids": [80],
                  "targets": [{"position": 0, "vocab_id": 80}]},
        )
        assert response.status_code == 400


class TestGenerate:
    def test_single_token(self, client):
        response = client.post(
            "/v1/generate",
            json={"image_b64": image_b64(8), "prompt": "go", "max_tokens": 1},
        )
        body = response.json()
        assert len(body["token_ids"]) == 1
        assert isinstance(body["text"], str)

    def test_deterministic_text(self, client):
        payload = {"image_b64": image_b64(9), "prompt": "describe", "max_tokens": 6}
        first = client.post("/v1/generate", json=payload).json()
        second = client.post("/v1/generate", json=payload).json()
        assert first == second

    def test_teacher_forcing_consistency(self, model, client):
        """token_probs on the generated sequence equals the stepwise greedy
        probabilities the decoder saw while emitting it."""
        b64 = image_b64(10)
        prompt = "caption:"
        gen = client.post(
            "/v1/generate",
            json={"image_b64": b64, "prompt": prompt, "max_tokens": 5},
        ).json()
        ids = gen["token_ids"]
        probs = client.post(
            "/v1/token_probs",
            json={
                "image_b64": b64,
                "prompt": prompt,
                "generated_ids": ids,
                "targets": [{"position": t, "vocab_id": ids[t]} for t in range(len(ids))],
            },
        ).json()["probs"]

        raw = base64.b64decode(b64)
        with PILImage.open(io.BytesIO(raw)) as im:
            pixels = np.asarray(im.convert("RGB"))
        prompt_ids, _ = tokenize_text(prompt)
        images = torch.stack([model.image_patches(pixels)])
        for t in range(len(ids)):
            logits = model.logits(images, prompt_ids + ids[:t])
            step_prob = float(torch.softmax(logits[0, -1], dim=-1)[ids[t]])
            assert probs[t] == pytest.approx(step_prob, abs=1e-5)


class TestTokenize:
    def test_empty_string(self, client):
        body = client.post("/v1/tokenize", json={"text": ""}).json()
        assert body == {"token_ids": [], "offsets": []}

    def test_yes_offsets(self, client):
        body = client.post("/v1/tokenize", json={"text": "Yes"}).json()
        assert body["offsets"] == [[0, 1], [1, 2], [2, 3]]
        assert body["token_ids"] == [89, 101, 115]

    def test_word_offsets_partition_the_word(self, client):
        body = client.post("/v1/tokenize", json={"text": "snowboard"}).json()
        offsets = body["offsets"]
        assert offsets[0][0] == 0 and offsets[-1][1] == len("snowboard")
        for prev, cur in zip(offsets, offsets[1:]):
            assert prev[1] == cur[0]


def test_health(client, model):
    body = client.get("/v1/health").json()
    assert body["status"] == "ok"
    assert body["model_id"] == model.model_id
