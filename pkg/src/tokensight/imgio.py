"""RGB image container plus PNG/JPEG load and save."""

from __future__ import annotations

import base64
import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image as PILImage
from PIL import UnidentifiedImageError


class ImageLoadError(Exception):
    """File could not be read or decoded as a supported raster image."""


@dataclass(frozen=True, eq=False)
class Image:
    """8-bit RGB raster, row-major (height, width, 3) uint8 array."""

    pixels: np.ndarray

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=np.uint8)
        if px.ndim != 3 or px.shape[2] != 3:
            raise ValueError(f"expected (H, W, 3) pixel array, got shape {px.shape}")
        if px.shape[0] < 1 or px.shape[1] < 1:
            raise ValueError("image must be at least 1x1")
        px = px.copy()
        px.flags.writeable = False
        object.__setattr__(self, "pixels", px)

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    def tobytes(self) -> bytes:
        return self.pixels.tobytes()

    def same_pixels(self, other: "Image") -> bool:
        return self.pixels.shape == other.pixels.shape and np.array_equal(
            self.pixels, other.pixels
        )


def load_image(path: str | Path) -> Image:
    """Decode a PNG or JPEG file to RGB; alpha, if present, is dropped."""
    try:
        with PILImage.open(path) as im:
            rgb = im.convert("RGB")
            return Image(np.asarray(rgb))
    except FileNotFoundError as exc:
        raise ImageLoadError(f"cannot read image file: {path}") from exc
    except (UnidentifiedImageError, OSError, SyntaxError) as exc:
        raise ImageLoadError(f"cannot decode image file: {path}") from exc


def encode_png(image: Image) -> bytes:
    buf = io.BytesIO()
    PILImage.fromarray(image.pixels, mode="RGB").save(buf, format="PNG")
    return buf.getvalue()


def decode_png(data: bytes) -> Image:
    try:
        with PILImage.open(io.BytesIO(data)) as im:
            return Image(np.asarray(im.convert("RGB")))
    except (UnidentifiedImageError, OSError, SyntaxError) as exc:
        raise ImageLoadError("cannot decode image bytes") from exc


def image_to_b64(image: Image) -> str:
    return base64.b64encode(encode_png(image)).decode("ascii")


def image_from_b64(data: str) -> Image:
    try:
        raw = base64.b64decode(data, validate=True)
    except (ValueError, TypeError) as exc:
        raise ImageLoadError("invalid base64 image payload") from exc
    return decode_png(raw)


def save_png(image: Image, path: str | Path) -> None:
    Path(path).write_bytes(encode_png(image))


def encode_gray_png(values: np.ndarray) -> bytes:
    """Render a (H, W) array of values in [0, 1] as an 8-bit grayscale PNG."""
    arr = np.asarray(values, dtype=np.float64)
    gray = np.clip(np.rint(arr * 255.0), 0, 255).astype(np.uint8)
    buf = io.BytesIO()
    PILImage.fromarray(gray, mode="L").save(buf, format="PNG")
    return buf.getvalue()


def save_gray_png(values: np.ndarray, path: str | Path) -> None:
    Path(path).write_bytes(encode_gray_png(values))
