"""Image value type, PNG/JPEG codecs and the deterministic preprocessing chain.

Intensities are float64 in [0, 1]; 8-bit codecs scale by 1/255.
Grayscale images are stored as ``(height, width)`` arrays, colour images
as ``(height, width, 3)``.
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image as PILImage
from PIL import UnidentifiedImageError

from .errors import CropTooLarge, DecodeError, InvalidDimension

LUMA_WEIGHTS = (0.299, 0.587, 0.114)
IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg")


@dataclass(frozen=True, eq=False)
class Image:
    pixels: np.ndarray

    def __post_init__(self):
        arr = np.array(self.pixels, dtype=np.float64, copy=True)
        if arr.ndim == 3 and arr.shape[2] == 1:
            arr = arr[:, :, 0]
        if arr.ndim not in (2, 3) or (arr.ndim == 3 and arr.shape[2] != 3):
            raise InvalidDimension(f"expected (h, w) or (h, w, 3) array, got shape {arr.shape}")
        if arr.shape[0] == 0 or arr.shape[1] == 0:
            raise InvalidDimension(f"image must be non-empty, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)) or arr.min() < 0.0 or arr.max() > 1.0:
            raise ValueError("intensities must lie in [0, 1]")
        arr.setflags(write=False)
        object.__setattr__(self, "pixels", arr)

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def channels(self) -> int:
        return 1 if self.pixels.ndim == 2 else 3

    @property
    def size(self) -> tuple[int, int]:
        return self.width, self.height

    @property
    def data(self) -> np.ndarray:
        """Row-major, channel-interleaved flat view of the intensities."""
        return self.pixels.reshape(-1)

    def __eq__(self, other):
        if not isinstance(other, Image):
            return NotImplemented
        return self.pixels.shape == other.pixels.shape and np.array_equal(self.pixels, other.pixels)

    def __repr__(self):
        return f"Image({self.width}x{self.height}x{self.channels})"

    @classmethod
    def filled(cls, width: int, height: int, value: float, channels: int = 1) -> Image:
        shape = (height, width) if channels == 1 else (height, width, channels)
        return cls(np.full(shape, value, dtype=np.float64))

    def to_uint8(self) -> np.ndarray:
        return np.clip(np.rint(self.pixels * 255.0), 0, 255).astype(np.uint8)


def _from_pil(pil: PILImage.Image) -> Image:
    mode = pil.mode
    if mode in ("I;16", "I;16B", "I;16L", "I", "F"):
        raise DecodeError(f"unsupported bit depth (mode {mode})")
    if mode in ("1", "L"):
        arr = np.asarray(pil.convert("L"), dtype=np.float64)
    elif mode == "LA":
        arr = np.asarray(pil.convert("L"), dtype=np.float64)
    elif mode == "P":
        # palette images may be grey or colour; decide from the expanded samples
        rgb = np.asarray(pil.convert("RGB"), dtype=np.float64)
        if np.array_equal(rgb[..., 0], rgb[..., 1]) and np.array_equal(rgb[..., 1], rgb[..., 2]):
            arr = rgb[..., 0]
        else:
            arr = rgb
    else:
        arr = np.asarray(pil.convert("RGB"), dtype=np.float64)
    return Image(arr / 255.0)


def decode_image(data: bytes) -> Image:
    """Decode PNG or JPEG bytes into an :class:`Image`."""
    try:
        with PILImage.open(io.BytesIO(data)) as pil:
            if pil.format not in ("PNG", "JPEG"):
                raise DecodeError(f"unsupported format {pil.format!r}")
            pil.load()
            return _from_pil(pil)
    except DecodeError:
        raise
    except (UnidentifiedImageError, OSError, SyntaxError, ValueError) as exc:
        raise DecodeError(f"cannot decode image: {exc}") from exc


def encode_image(img: Image, fmt: str = "PNG") -> bytes:
    fmt = fmt.upper()
    if fmt == "JPG":
        fmt = "JPEG"
    if fmt not in ("PNG", "JPEG"):
        raise ValueError(f"unsupported format {fmt!r}")
    mode = "L" if img.channels == 1 else "RGB"
    buf = io.BytesIO()
    PILImage.fromarray(img.to_uint8(), mode=mode).save(buf, format=fmt)
    return buf.getvalue()


def read_image(path) -> Image:
    path = Path(path)
    try:
        return decode_image(path.read_bytes())
    except DecodeError as exc:
        raise DecodeError(f"{path}: {exc}") from exc


def write_image(img: Image, path) -> None:
    path = Path(path)
    fmt = "JPEG" if path.suffix.lower() in (".jpg", ".jpeg") else "PNG"
    path.write_bytes(encode_image(img, fmt))


def image_size(path) -> tuple[int, int]:
    """(width, height) from the file header without decoding pixel data."""
    try:
        with PILImage.open(path) as pil:
            return pil.size
    except (UnidentifiedImageError, OSError) as exc:
        raise DecodeError(f"{path}: cannot read image header: {exc}") from exc


def to_grayscale(img: Image) -> Image:
    if img.channels == 1:
        return img
    r, _, b = LUMA_WEIGHTS
    p = img.pixels
    # anchored on green so that neutral pixels (R = G = B) map back exactly
    green = p[..., 1]
    gray = green + r * (p[..., 0] - green) + b * (p[..., 2] - green)
    return Image(np.clip(gray, 0.0, 1.0))


def _sample_coords(n_in: int, n_out: int):
    """Pixel-centre aligned source coordinates for a 1-D bilinear resample."""
    scale = n_in / n_out
    src = (np.arange(n_out) + 0.5) * scale - 0.5
    src = np.clip(src, 0.0, n_in - 1)
    lo = np.floor(src).astype(np.intp)
    hi = np.minimum(lo + 1, n_in - 1)
    frac = src - lo
    return lo, hi, frac


def resize(img: Image, new_width: int, new_height: int) -> Image:
    """Bilinear resize with pixel-centre alignment."""
    if new_width <= 0 or new_height <= 0:
        raise InvalidDimension(f"target size must be positive, got {new_width}x{new_height}")
    if (new_width, new_height) == img.size:
        return img
    p = img.pixels
    lo, hi, fx = _sample_coords(img.width, new_width)
    if p.ndim == 3:
        fx = fx[:, None]
    rows = p[:, lo] * (1.0 - fx) + p[:, hi] * fx
    lo, hi, fy = _sample_coords(img.height, new_height)
    fy = fy[:, None] if p.ndim == 2 else fy[:, None, None]
    out = rows[lo] * (1.0 - fy) + rows[hi] * fy
    return Image(np.clip(out, 0.0, 1.0))


def center_crop(img: Image, crop_w: int, crop_h: int) -> Image:
    if crop_w <= 0 or crop_h <= 0:
        raise InvalidDimension(f"crop size must be positive, got {crop_w}x{crop_h}")
    if crop_w > img.width or crop_h > img.height:
        raise CropTooLarge(f"cannot crop {crop_w}x{crop_h} from {img.width}x{img.height}")
    x0 = (img.width - crop_w) // 2
    y0 = (img.height - crop_h) // 2
    return Image(img.pixels[y0:y0 + crop_h, x0:x0 + crop_w])


def preprocess_pair(visible: Image, target_w: int = 320, target_h: int = 256, crop: int = 256) -> Image:
    """Resize to the load size, then take the centred ``crop`` x ``crop`` window.

    Despite the name this is applied to whichever image of a pair needs to
    match the translator's output geometry.
    """
    if crop > target_w or crop > target_h:
        raise CropTooLarge(f"crop {crop} exceeds load size {target_w}x{target_h}")
    return center_crop(resize(visible, target_w, target_h), crop, crop)


def parse_size(text: str) -> tuple[int, int]:
    """Parse ``WxH`` into a (width, height) tuple."""
    try:
        w, h = text.lower().split("x")
        w, h = int(w), int(h)
    except ValueError:
        raise InvalidDimension(f"expected WxH, got {text!r}") from None
    if w <= 0 or h <= 0:
        raise InvalidDimension(f"size must be positive, got {text!r}")
    return w, h


def is_image_file(path: Path) -> bool:
    return path.is_file() and path.suffix.lower() in IMAGE_SUFFIXES

