"""Image tensor arithmetic: perturbation application, median-filter
denoising, and 8-bit RGB PNG I/O.

Pixels are held as float64 on the 0-255 scale throughout a pipeline and are
rounded (half to even) only when a PNG is written, so clipping followed by
filtering does not accumulate quantization error.
"""
from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np
from PIL import Image as PILImage
from scipy import ndimage

from .errors import BadWindow, DimensionMismatch, IoError, UnsupportedFormat


@dataclass
class Image:
    """d x d x 3 pixel tensor on the 0-255 scale."""

    pixels: np.ndarray

    def __post_init__(self):
        self.pixels = np.asarray(self.pixels, dtype=np.float64)
        if self.pixels.ndim != 3 or self.pixels.shape[2] != 3 or self.pixels.shape[0] != self.pixels.shape[1]:
            raise DimensionMismatch(f"expected (d, d, 3) pixels, got {self.pixels.shape}")

    @property
    def side(self) -> int:
        return self.pixels.shape[0]


@dataclass
class PerturbationField:
    """Signed d x d x 3 perturbation with the l-inf bound it was built for."""

    values: np.ndarray
    eps: float

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 3 or self.values.shape[2] != 3:
            raise DimensionMismatch(f"expected (d, d, 3) perturbation, got {self.values.shape}")

    @property
    def side(self) -> int:
        return self.values.shape[0]


def apply(x: Image, s: PerturbationField) -> Image:
    """Add the perturbation and clip back into pixel space [0, 255]."""
    if x.pixels.shape != s.values.shape:
        raise DimensionMismatch(f"image {x.pixels.shape} vs perturbation {s.values.shape}")
    return Image(np.clip(x.pixels + s.values, 0.0, 255.0))


def median_filter(x: Image, k: int) -> Image:
    """Replace each pixel with the median of its k x k neighbourhood,
    per channel, with mirror padding (edge pixel not repeated)."""
    if k % 2 == 0 or k < 3:
        raise BadWindow(f"window must be odd and >= 3, got {k}")
    if k > x.side:
        raise BadWindow(f"window {k} exceeds image side {x.side}")
    out = np.empty_like(x.pixels)
    for c in range(3):
        out[:, :, c] = ndimage.median_filter(x.pixels[:, :, c], size=k, mode="mirror")
    return Image(out)


def quantize(pixels: np.ndarray) -> np.ndarray:
    """Round half-to-even onto the 8-bit grid."""
    return np.clip(np.rint(pixels), 0, 255).astype(np.uint8)


def load_png(path) -> Image:
    try:
        im = PILImage.open(path)
    except (FileNotFoundError, OSError) as e:
        raise IoError(f"cannot read {path}: {e}") from e
    with im:
        if im.format != "PNG":
            raise UnsupportedFormat(f"{path}: expected PNG, got {im.format!r}")
        if im.mode != "RGB":
            raise UnsupportedFormat(f"{path}: expected 8-bit RGB PNG, got mode {im.mode!r}")
        arr = np.asarray(im, dtype=np.float64)
    return Image(arr)


def save_png(x: Image, path) -> None:
    im = PILImage.fromarray(quantize(x.pixels), mode="RGB")
    try:
        im.save(path, format="PNG")
    except OSError as e:
        raise IoError(f"cannot write {path}: {e}") from e


def encode_png(x: Image) -> bytes:
    """PNG bytes for the quantized image (deterministic for equal pixels)."""
    buf = io.BytesIO()
    PILImage.fromarray(quantize(x.pixels), mode="RGB").save(buf, format="PNG")
    return buf.getvalue()


def decode_png(data: bytes) -> Image:
    try:
        with PILImage.open(io.BytesIO(data)) as im:
            if im.mode != "RGB":
                raise UnsupportedFormat(f"expected 8-bit RGB PNG, got mode {im.mode!r}")
            arr = np.asarray(im, dtype=np.float64)
    except UnsupportedFormat:
        raise
    except Exception as e:
        raise UnsupportedFormat(f"undecodable PNG payload: {e}") from e
    return Image(arr)


def render_perturbation(s: PerturbationField) -> Image:
    """Shift by +eps and rescale so the signed field is visible in a PNG."""
    scaled = (s.values + s.eps) * (255.0 / (2.0 * s.eps))
    return Image(np.clip(scaled, 0.0, 255.0))
