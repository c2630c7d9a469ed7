"""HTTP shim exposing per-token probabilities of a multimodal causal LM."""

from .model import TinyVlm, tokenize_text
from .server import create_app

__all__ = ["TinyVlm", "create_app", "tokenize_text"]
