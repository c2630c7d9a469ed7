"""Regenerate UI test fixtures from the attribution engine.

Drives the serve API in-process and the CLI on the same synthetic session so
the what-if fixture carries the engine's own numbers, including the
fully-masked probability the CLI reports as the insertion-curve origin.

Run from the frontend directory:  python3 scripts/gen_fixtures.py
"""

from __future__ import annotations

import json
import sys
import tempfile
import time
from pathlib import Path

import numpy as np
from click.testing import CliRunner
from fastapi.testclient import TestClient
from PIL import Image as PILImage

from tokensight.bundle import load_bundle
from tokensight.cli import main as cli_main
from tokensight.config import RunConfig
from tokensight.imgio import Image, image_to_b64
from tokensight.oracle import OracleConfig
from tokensight.server import create_app

FIXTURE_DIR = Path(__file__).resolve().parent.parent / "fixtures"

WEIGHTS = [0.4, 2.5, -0.3, 0.2]
BIAS = -1.1
PROMPT = "Is the planted object there?"
DESCRIPTOR = {"kind": "yesno", "weights": WEIGHTS, "bias": BIAS}


def main() -> int:
    config = RunConfig(
        oracle=OracleConfig(synthetic=DESCRIPTOR, max_in_flight=1),
        region_count=4,
        slico_iterations=4,
    )
    pixels = np.full((8, 8, 3), 200, dtype=np.uint8)
    image = Image(pixels)

    with TestClient(create_app(config)) as client:
        session = client.post(
            "/api/session",
            json={"image_b64": image_to_b64(image), "prompt": PROMPT},
        ).json()
        job = client.post(
            "/api/attribute",
            json={"session_id": session["session_id"], "positions": [0]},
        ).json()
        deadline = time.time() + 60
        while True:
            poll = client.get(f"/api/bundle/{job['bundle_id']}").json()
            if poll["status"] == "done":
                serve_bundle = poll["bundle"]
                break
            if poll["status"] == "error" or time.time() > deadline:
                raise RuntimeError(f"attribution job failed: {poll}")
            time.sleep(0.05)
        whatif_all = client.post(
            "/api/whatif",
            json={
                "session_id": session["session_id"],
                "removed_region_ids": [0, 1, 2, 3],
                "positions": [0],
            },
        ).json()
        whatif_none = client.post(
            "/api/whatif",
            json={
                "session_id": session["session_id"],
                "removed_region_ids": [],
                "positions": [0],
            },
        ).json()

    with tempfile.TemporaryDirectory() as tmp:
        img_path = Path(tmp) / "img.png"
        PILImage.fromarray(pixels).save(img_path)
        runner = CliRunner()
        result = runner.invoke(
            cli_main,
            [
                "--synthetic", json.dumps(DESCRIPTOR),
                "--regions", "4",
                "--out", str(Path(tmp) / "out"),
                "attribute", str(img_path),
                "--prompt", PROMPT,
                "--target", "0",
            ],
        )
        if result.exit_code != 0:
            raise RuntimeError(f"CLI failed: {result.output}")
        cli_bundle = load_bundle(Path(tmp) / "out" / "bundle.json")

    fixture = {
        "note": "generated by scripts/gen_fixtures.py; do not edit by hand",
        "descriptor": DESCRIPTOR,
        "prompt": PROMPT,
        "session": session,
        "bundle": serve_bundle,
        "whatif_remove_all": whatif_all,
        "whatif_remove_none": whatif_none,
        "cli_insertion_ys": cli_bundle["curves"]["insertion"]["ys"],
        "cli_fully_masked_prob": cli_bundle["curves"]["insertion"]["ys"][0],
        "cli_full_image_prob": cli_bundle["curves"]["insertion"]["ys"][-1],
    }
    FIXTURE_DIR.mkdir(exist_ok=True)
    out = FIXTURE_DIR / "session_fixture.json"
    out.write_text(json.dumps(fixture, indent=2, sort_keys=True))
    print(f"wrote {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
