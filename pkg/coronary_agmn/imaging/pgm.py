"""Image containers plus a minimal binary PGM/PPM codec and the square resize step."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from skimage.transform import resize

from coronary_agmn.core.errors import InputError, StructuralError
from coronary_agmn.core.logging_config import get_logger

logger = get_logger(__name__)


@dataclass(frozen=True)
class GrayImage:
    """8-bit grayscale angiogram, row-major (height x width)."""

    intensities: np.ndarray
    pixel_spacing: float = 0.3

    def __post_init__(self) -> None:
        if self.intensities.ndim != 2 or self.intensities.size == 0:
            raise StructuralError(f"GrayImage needs a non-empty 2-D array, got shape {self.intensities.shape}")
        if self.pixel_spacing <= 0:
            raise StructuralError(f"pixel_spacing must be > 0, got {self.pixel_spacing}")
        object.__setattr__(self, "intensities", np.ascontiguousarray(self.intensities, dtype=np.uint8))
        self.intensities.setflags(write=False)

    @property
    def height(self) -> int:
        return int(self.intensities.shape[0])

    @property
    def width(self) -> int:
        return int(self.intensities.shape[1])


@dataclass(frozen=True)
class BinaryMask:
    foreground: np.ndarray

    def __post_init__(self) -> None:
        if self.foreground.ndim != 2:
            raise StructuralError(f"BinaryMask needs a 2-D array, got shape {self.foreground.shape}")
        object.__setattr__(self, "foreground", np.array(self.foreground, dtype=bool, order="C", copy=True))
        self.foreground.setflags(write=False)

    @property
    def height(self) -> int:
        return int(self.foreground.shape[0])

    @property
    def width(self) -> int:
        return int(self.foreground.shape[1])

    def check_companion(self, gray: GrayImage) -> None:
        if (self.height, self.width) != (gray.height, gray.width):
            raise StructuralError(
                f"Mask is {self.width}x{self.height} but grayscale image is {gray.width}x{gray.height}"
            )


def _read_token(data: bytes, pos: int) -> tuple[bytes, int]:
    while pos < len(data):
        if data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
        elif data[pos : pos + 1].isspace():
            pos += 1
        else:
            break
    start = pos
    while pos < len(data) and not data[pos : pos + 1].isspace():
        pos += 1
    return data[start:pos], pos


def _parse_netpbm(path: Path, magic: bytes) -> tuple[np.ndarray, int, int, int]:
    try:
        data = path.read_bytes()
    except OSError as e:
        raise InputError(f"Cannot read image {path}: {e}") from e
    token, pos = _read_token(data, 0)
    if token != magic:
        raise InputError(f"{path} is not a binary {magic.decode()} file (found {token!r})")
    fields = []
    for _ in range(3):
        token, pos = _read_token(data, pos)
        try:
            fields.append(int(token))
        except ValueError as e:
            raise InputError(f"Malformed header in {path}") from e
    width, height, maxval = fields
    if maxval <= 0 or maxval > 255:
        raise InputError(f"{path}: only 8-bit images are supported (maxval={maxval})")
    pos += 1  # single whitespace byte after maxval
    return np.frombuffer(data, dtype=np.uint8, offset=pos), width, height, maxval


def read_pgm(path: Path | str) -> np.ndarray:
    path = Path(path)
    raw, width, height, _ = _parse_netpbm(path, b"P5")
    if raw.size < width * height:
        raise InputError(f"{path}: truncated pixel data ({raw.size} < {width * height})")
    return raw[: width * height].reshape(height, width).copy()


def write_pgm(path: Path | str, pixels: np.ndarray) -> Path:
    path = Path(path)
    pixels = np.ascontiguousarray(pixels, dtype=np.uint8)
    height, width = pixels.shape
    path.write_bytes(f"P5\n{width} {height}\n255\n".encode() + pixels.tobytes())
    return path


def write_ppm(path: Path | str, rgb: np.ndarray) -> Path:
    path = Path(path)
    rgb = np.ascontiguousarray(rgb, dtype=np.uint8)
    height, width, _ = rgb.shape
    path.write_bytes(f"P6\n{width} {height}\n255\n".encode() + rgb.tobytes())
    return path


def read_gray(path: Path | str, pixel_spacing: float) -> GrayImage:
    return GrayImage(read_pgm(path), pixel_spacing)


def read_mask(path: Path | str) -> BinaryMask:
    return BinaryMask(read_pgm(path) > 127)


def write_mask(path: Path | str, mask: BinaryMask) -> Path:
    return write_pgm(path, mask.foreground.astype(np.uint8) * 255)


def resize_pair(mask: BinaryMask, gray: GrayImage, size: int) -> tuple[BinaryMask, GrayImage]:
    """Resizes both images to size x size; nearest for the mask, bilinear for grayscale.

    Pixel spacing is rescaled with the width ratio (spacing stays isotropic).
    """
    mask.check_companion(gray)
    if mask.height == size and mask.width == size:
        return mask, gray
    new_mask = resize(
        mask.foreground.astype(np.uint8), (size, size), order=0, preserve_range=True, anti_aliasing=False
    ).astype(bool)
    new_gray = resize(
        gray.intensities.astype(np.float64), (size, size), order=1, preserve_range=True, anti_aliasing=False
    )
    spacing = gray.pixel_spacing * gray.width / size
    logger.debug(f"Resized {gray.width}x{gray.height} -> {size}x{size}, spacing {gray.pixel_spacing:.4f} -> {spacing:.4f} mm")
    return BinaryMask(new_mask), GrayImage(np.clip(np.rint(new_gray), 0, 255).astype(np.uint8), spacing)
