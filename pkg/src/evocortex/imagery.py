"""Image I/O, color-space decomposition and shared real-valued map arithmetic.

Every map in the pipeline is a 2-D ``float64`` numpy array ("real map").
Values are normalized to [0, 1] at the decomposition boundary and may leave
that range during downstream computation; quantization back to 8 bits only
happens at attack I/O boundaries.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import cv2
import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import DataError, FormatError

cv2.setNumThreads(1)  # keep single-image ops deterministic and reentrant

CHANNEL_KEYS = ("r", "g", "b", "c", "m", "y", "k", "h", "s", "v")


@dataclass
class LabeledImage:
    """An 8-bit RGB raster with a binary class label (+1 target, -1 background)."""

    pixels: np.ndarray  # (H, W, 3) uint8
    label: int
    source_path: str = ""
    _colorset: "ColorSet | None" = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.label not in (+1, -1):
            raise DataError(f"label must be +1 or -1, got {self.label!r}")
        if self.pixels.dtype != np.uint8 or self.pixels.ndim != 3 or self.pixels.shape[2] != 3:
            raise DataError("pixels must be an (H, W, 3) uint8 array")

    @property
    def colorset(self) -> "ColorSet":
        """Ten-channel decomposition, computed lazily and cached."""
        if self._colorset is None:
            self._colorset = decompose_colors(self.pixels)
        return self._colorset


@dataclass
class ColorSet:
    """The ten-channel decomposition of one image.

    Channels are keyed r,g,b,c,m,y,k,h,s,v; all are same-sized float64 maps
    in [0, 1].
    """

    channels: dict

    def __post_init__(self):
        if set(self.channels) != set(CHANNEL_KEYS):
            raise DataError(f"ColorSet needs exactly the channels {CHANNEL_KEYS}")
        shapes = {ch.shape for ch in self.channels.values()}
        if len(shapes) != 1:
            raise DataError("all ColorSet channels must share one shape")

    def __getitem__(self, key):
        return self.channels[key]

    @property
    def shape(self):
        return self.channels["r"].shape


def load_image(path) -> np.ndarray:
    """Decode a PNG or JPEG file into an (H, W, 3) uint8 RGB raster.

    Grayscale sources are replicated across the three channels. Raises
    DataError for unreadable files and FormatError for anything Pillow
    cannot parse as PNG/JPEG.
    """
    path = os.fspath(path)
    if not os.path.isfile(path):
        raise DataError(f"no such image file: {path}")
    try:
        with Image.open(path) as im:
            if im.format not in ("PNG", "JPEG"):
                raise FormatError(f"unsupported image format {im.format!r}: {path}")
            rgb = im.convert("RGB")
            out = np.asarray(rgb, dtype=np.uint8)
    except FormatError:
        raise
    except UnidentifiedImageError as exc:
        raise FormatError(f"cannot parse image file: {path}") from exc
    except OSError as exc:
        raise DataError(f"cannot read image file: {path}") from exc
    if out.ndim != 3 or out.shape[2] != 3:
        raise FormatError(f"decoded raster has unexpected shape {out.shape}: {path}")
    return out


def save_image(raster: np.ndarray, path) -> None:
    """Write an (H, W, 3) uint8 raster as PNG (deterministic encoder settings)."""
    Image.fromarray(raster, mode="RGB").save(os.fspath(path), format="PNG")


def decompose_colors(raster: np.ndarray) -> ColorSet:
    """Split an 8-bit RGB raster into the ten r,g,b,c,m,y,k,h,s,v channels.

    r,g,b are raster/255. CMYK uses the standard conversion with the black
    singularity fixed as c=m=y=0, k=1. HSV uses the standard conversion with
    hue scaled to [0, 1] and the achromatic hue pinned to 0. Total function:
    every output lies in [0, 1].
    """
    x = raster.astype(np.float64) / 255.0
    r, g, b = x[..., 0], x[..., 1], x[..., 2]

    v = np.max(x, axis=-1)
    mn = np.min(x, axis=-1)
    delta = v - mn

    # CMYK; where v == 0 the quotient is forced to 0 (k carries the black).
    inv_v = np.zeros_like(v)
    np.divide(1.0, v, out=inv_v, where=v > 0)
    c = (v - r) * inv_v
    m = (v - g) * inv_v
    y = (v - b) * inv_v
    k = 1.0 - v

    s = delta * inv_v

    # Hue in [0, 1): piecewise by the argmax channel, 0 where achromatic.
    h = np.zeros_like(v)
    chromatic = delta > 0
    inv_d = np.zeros_like(delta)
    np.divide(1.0, delta, out=inv_d, where=chromatic)
    rmax = chromatic & (r == v)
    gmax = chromatic & (g == v) & ~rmax
    bmax = chromatic & ~rmax & ~gmax
    h[rmax] = ((g - b) * inv_d)[rmax] % 6.0
    h[gmax] = ((b - r) * inv_d)[gmax] + 2.0
    h[bmax] = ((r - g) * inv_d)[bmax] + 4.0
    h /= 6.0

    channels = {"r": r, "g": g, "b": b, "c": c, "m": m, "y": y, "k": k, "h": h, "s": s, "v": v}
    return ColorSet({key: np.ascontiguousarray(ch) for key, ch in channels.items()})


def intensity_map(cs: ColorSet) -> np.ndarray:
    """Pointwise (r + g + b) / 3."""
    return (cs["r"] + cs["g"] + cs["b"]) / 3.0


def map_stats(m: np.ndarray) -> dict:
    """Exact min/max/mean of a real map."""
    return {"min": float(m.min()), "max": float(m.max()), "mean": float(m.mean())}


def resize_map(m: np.ndarray, height: int, width: int) -> np.ndarray:
    """Bilinear resize (half-pixel centers) of one float64 map."""
    if m.shape == (height, width):
        return m.copy()
    return cv2.resize(m, (width, height), interpolation=cv2.INTER_LINEAR)


def resize_raster_max_side(raster: np.ndarray, max_side: int) -> np.ndarray:
    """Downscale an RGB raster so its longer side is at most ``max_side``.

    No-op when the raster is already small enough; aspect ratio preserved.
    """
    h, w = raster.shape[:2]
    longest = max(h, w)
    if longest <= max_side:
        return raster
    scale = max_side / longest
    nh, nw = max(1, round(h * scale)), max(1, round(w * scale))
    return cv2.resize(raster, (nw, nh), interpolation=cv2.INTER_LINEAR)


def to_unit(raster: np.ndarray) -> np.ndarray:
    """uint8 raster -> float64 image in [0, 1]."""
    return raster.astype(np.float64) / 255.0


def quantize(image01: np.ndarray) -> np.ndarray:
    """Clamp a [0, 1] float image onto the 8-bit grid."""
    return np.clip(np.rint(image01 * 255.0), 0, 255).astype(np.uint8)


def save_heatmap(m: np.ndarray, path) -> None:
    """Dump one real map as a false-color PNG for inspection."""
    lo, hi = float(m.min()), float(m.max())
    unit = np.zeros_like(m) if hi <= lo else (m - lo) / (hi - lo)
    gray = np.clip(np.rint(unit * 255.0), 0, 255).astype(np.uint8)
    bgr = cv2.applyColorMap(gray, cv2.COLORMAP_VIRIDIS)
    save_image(bgr[..., ::-1].copy(), path)
