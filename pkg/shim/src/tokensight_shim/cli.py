"""Shim launcher."""

from __future__ import annotations

import click

from .model import TinyVlm
from .server import create_app


def load_model(spec: str) -> TinyVlm:
    """Parse --model: "tiny" or "tiny:<seed>".

    Wrapping a real multimodal LM means implementing the TinyVlm call surface
    (token_probs / generate / model_id) around it and registering a new spec
    prefix here; the wire protocol and server stay unchanged.
    """
    if spec == "tiny":
        return TinyVlm(seed=0)
    if spec.startswith("tiny:"):
        return TinyVlm(seed=int(spec.split(":", 1)[1]))
    raise click.BadParameter(f"unknown model spec: {spec}")


@click.command()
@click.option("--model", "model_spec", default="tiny", show_default=True)
@click.option("--port", type=int, default=8400, show_default=True)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--max-batch", type=int, default=8, show_default=True)
def main(model_spec, port, host, max_batch):
    """Serve token probabilities for a multimodal causal LM."""
    import uvicorn

    model = load_model(model_spec)
    app = create_app(model, max_batch=max_batch)
    uvicorn.run(app, host=host, port=port, log_level="info")


if __name__ == "__main__":
    main()
