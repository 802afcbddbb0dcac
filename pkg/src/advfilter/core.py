"""Images, datasets and the file formats they travel in.

Pixels live in the real interval [0, 1] with a (row, column, channel) layout.
Quantization to 8 bits only happens when an image is written to disk.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator

import numpy as np


class ParameterError(ValueError):
    """Invalid argument value or incompatible shapes."""


class ShapeError(ParameterError):
    pass


class FormatError(ValueError):
    """A file did not follow the expected binary layout."""


class NumericError(ArithmeticError):
    """A computation produced non-finite values."""


def _readonly(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Image:
    """An H x W x C grid of intensities in [0, 1].

    ``data`` is stored as a read-only float64 array; constructing an Image
    always copies, so callers can keep mutating the array they passed in.
    """

    data: np.ndarray

    def __post_init__(self):
        a = np.array(self.data, dtype=np.float64, copy=True)
        if a.ndim == 2:
            a = a[:, :, None]
        if a.ndim != 3 or a.shape[2] not in (1, 3) or a.shape[0] < 1 or a.shape[1] < 1:
            raise ShapeError(f"image must be HxWx1 or HxWx3, got shape {a.shape}")
        if not np.all(np.isfinite(a)):
            raise ParameterError("image contains non-finite values")
        if a.min() < 0.0 or a.max() > 1.0:
            raise ParameterError(
                f"image intensities must lie in [0, 1], got [{a.min()}, {a.max()}]"
            )
        object.__setattr__(self, "data", _readonly(a))

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.data.shape

    def __eq__(self, other):
        if not isinstance(other, Image):
            return NotImplemented
        return self.shape == other.shape and bool(np.array_equal(self.data, other.data))

    __hash__ = None


@dataclass(frozen=True, eq=False)
class LabeledDataset:
    """Images stacked as an (N, H, W, C) array with integer labels."""

    images: np.ndarray
    labels: np.ndarray
    num_classes: int

    def __post_init__(self):
        images = np.array(self.images, dtype=np.float64, copy=True)
        labels = np.array(self.labels, dtype=np.int64, copy=True)
        if images.ndim != 4:
            raise ShapeError(f"images must be (N, H, W, C), got {images.shape}")
        if labels.shape != (images.shape[0],):
            raise ShapeError(
                f"{images.shape[0]} images but labels have shape {labels.shape}"
            )
        if self.num_classes < 1:
            raise ParameterError("num_classes must be positive")
        if len(labels) and (labels.min() < 0 or labels.max() >= self.num_classes):
            raise ParameterError(f"labels must lie in [0, {self.num_classes})")
        object.__setattr__(self, "images", _readonly(images))
        object.__setattr__(self, "labels", _readonly(labels))

    def __len__(self) -> int:
        return len(self.labels)

    def __getitem__(self, i: int) -> tuple[Image, int]:
        return Image(self.images[i]), int(self.labels[i])

    def __iter__(self) -> Iterator[tuple[Image, int]]:
        for i in range(len(self)):
            yield self[i]

    @property
    def items(self) -> list[tuple[Image, int]]:
        return list(self)

    @property
    def image_shape(self) -> tuple[int, int, int]:
        return self.images.shape[1:]

    @classmethod
    def from_items(cls, items, num_classes: int) -> "LabeledDataset":
        if not items:
            raise ParameterError("dataset needs at least one item")
        shapes = {img.shape for img, _ in items}
        if len(shapes) != 1:
            raise ShapeError(f"images have differing shapes: {sorted(shapes)}")
        images = np.stack([img.data for img, _ in items])
        labels = np.array([label for _, label in items])
        return cls(images, labels, num_classes)

    def subset(self, indices) -> "LabeledDataset":
        indices = np.asarray(indices, dtype=np.int64)
        return LabeledDataset(self.images[indices], self.labels[indices], self.num_classes)


# --- netpbm -----------------------------------------------------------------


def quantize(data: np.ndarray) -> np.ndarray:
    """Map [0, 1] floats to bytes with round-half-up."""
    return np.clip(np.floor(np.asarray(data) * 255.0 + 0.5), 0, 255).astype(np.uint8)


def encode_netpbm(img: Image) -> bytes:
    magic = b"P6" if img.channels == 3 else b"P5"
    header = b"%s\n%d %d\n255\n" % (magic, img.width, img.height)
    return header + quantize(img.data).tobytes()


def decode_netpbm(buf: bytes) -> Image:
    """Parse a binary P5/P6 file with maxval 255."""
    pos = 0
    tokens = []
    while len(tokens) < 4:
        # skip whitespace and comments between header tokens
        while pos < len(buf) and buf[pos : pos + 1].isspace():
            pos += 1
        if pos < len(buf) and buf[pos : pos + 1] == b"#":
            while pos < len(buf) and buf[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(buf) and not buf[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            field = ("magic", "width", "height", "maxval")[len(tokens)]
            raise FormatError(f"truncated header: missing {field}")
        tokens.append(buf[start:pos])
    # exactly one whitespace byte separates maxval from the payload
    pos += 1
    magic, width, height, maxval = tokens
    if magic not in (b"P5", b"P6"):
        raise FormatError(f"bad magic {magic!r}: expected P5 or P6")
    try:
        width, height, maxval = int(width), int(height), int(maxval)
    except ValueError as exc:
        raise FormatError(f"non-integer header field: {exc}") from None
    if width < 1 or height < 1:
        raise FormatError(f"bad dimensions width={width} height={height}")
    if maxval != 255:
        raise FormatError(f"unsupported maxval {maxval}: only 255 is accepted")
    channels = 3 if magic == b"P6" else 1
    n = width * height * channels
    payload = buf[pos : pos + n]
    if len(payload) < n:
        raise FormatError(f"truncated payload: expected {n} bytes, got {len(payload)}")
    arr = np.frombuffer(payload, dtype=np.uint8).reshape(height, width, channels)
    return Image(arr / 255.0)


def load_image(path) -> Image:
    return decode_netpbm(Path(path).read_bytes())


def save_image(img: Image, path) -> None:
    Path(path).write_bytes(encode_netpbm(img))


# --- IDX --------------------------------------------------------------------

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


def _read_idx(path, magic: int) -> np.ndarray:
    buf = Path(path).read_bytes()
    if len(buf) < 4:
        raise FormatError(f"{path}: truncated magic")
    (found,) = struct.unpack(">I", buf[:4])
    if found != magic:
        raise FormatError(f"{path}: bad magic 0x{found:08x}, expected 0x{magic:08x}")
    # low byte of the magic is the number of dimensions
    ndim = magic & 0xFF
    header_len = 4 + 4 * ndim
    if len(buf) < header_len:
        raise FormatError(f"{path}: truncated dimension header")
    dims = struct.unpack(">%dI" % ndim, buf[4:header_len])
    n = int(np.prod(dims))
    payload = buf[header_len : header_len + n]
    if len(payload) < n:
        raise FormatError(f"{path}: truncated payload, expected {n} bytes, got {len(payload)}")
    return np.frombuffer(payload, dtype=np.uint8).reshape(dims)


def load_idx_dataset(image_path, label_path) -> LabeledDataset:
    """Read an IDX image tensor (N, H, W) and its IDX label vector."""
    images = _read_idx(image_path, IDX_IMAGES_MAGIC)
    labels = _read_idx(label_path, IDX_LABELS_MAGIC)
    if images.shape[0] != labels.shape[0]:
        raise FormatError(
            f"count mismatch: {images.shape[0]} images vs {labels.shape[0]} labels"
        )
    num_classes = int(labels.max()) + 1 if len(labels) else 1
    return LabeledDataset(images[..., None] / 255.0, labels, num_classes)


def write_idx_dataset(data: LabeledDataset, image_path, label_path) -> None:
    """Write a single-channel dataset as an IDX image/label pair."""
    if data.image_shape[2] != 1:
        raise ParameterError("IDX export supports single-channel images only")
    n, h, w, _ = data.images.shape
    Path(image_path).write_bytes(
        struct.pack(">4I", IDX_IMAGES_MAGIC, n, h, w) + quantize(data.images[..., 0]).tobytes()
    )
    Path(label_path).write_bytes(
        struct.pack(">2I", IDX_LABELS_MAGIC, n) + data.labels.astype(np.uint8).tobytes()
    )


# --- synthetic shapes -------------------------------------------------------

SHAPE_CLASSES = ("disk", "square", "ring", "cross")


def _render(kind: int, side: int, rng: np.random.Generator) -> np.ndarray:
    yy, xx = np.mgrid[0:side, 0:side].astype(np.float64)
    r = rng.uniform(0.27, 0.36) * side
    centre = (side - 1) / 2
    cy, cx = centre + rng.uniform(-0.08, 0.08, size=2) * side
    dy, dx = yy - cy, xx - cx
    if kind == 0:
        mask = dy**2 + dx**2 <= r**2
    elif kind == 1:
        h = r * 0.95
        mask = (np.abs(dy) <= h) & (np.abs(dx) <= h)
    elif kind == 2:
        dist = np.sqrt(dy**2 + dx**2)
        # thick enough to survive a 5x5 median
        thick = rng.uniform(0.13, 0.17) * side
        mask = (dist <= r) & (dist >= r - thick)
    else:
        arm = rng.uniform(0.07, 0.09) * side
        mask = ((np.abs(dy) <= arm) & (np.abs(dx) <= r)) | (
            (np.abs(dx) <= arm) & (np.abs(dy) <= r)
        )
    # low contrast keeps the victim within reach of small perturbation budgets
    background = rng.uniform(0.2, 0.4)
    foreground = background + rng.uniform(0.3, 0.5)
    img = np.where(mask, foreground, background)
    img = img + rng.normal(0.0, 0.05, size=img.shape)
    return np.clip(img, 0.0, 1.0)


def generate_shape_dataset(num_per_class: int, side: int = 32, seed: int = 0) -> LabeledDataset:
    """Render a balanced 4-class dataset of disks, squares, rings and crosses.

    Each shape gets a random position, size and foreground/background
    intensity plus additive Gaussian noise. Items are interleaved by class,
    so label ``i % 4`` belongs to item ``i``.
    """
    if side < 16:
        raise ParameterError(f"side must be >= 16, got {side}")
    if num_per_class < 1:
        raise ParameterError(f"num_per_class must be >= 1, got {num_per_class}")
    rng = np.random.default_rng(seed)
    k = len(SHAPE_CLASSES)
    labels = np.tile(np.arange(k), num_per_class)
    images = np.stack([_render(int(label), side, rng) for label in labels])
    return LabeledDataset(images[..., None], labels, k)


def parse_data_source(source: str) -> LabeledDataset:
    """Resolve ``synthetic:SEED:COUNT`` or ``images.idx,labels.idx``."""
    if source.startswith("synthetic:"):
        parts = source.split(":")
        if len(parts) != 3:
            raise ParameterError(f"expected synthetic:SEED:COUNT, got {source!r}")
        try:
            seed, count = int(parts[1]), int(parts[2])
        except ValueError:
            raise ParameterError(f"non-integer seed/count in {source!r}") from None
        return generate_shape_dataset(count, 32, seed)
    paths = source.split(",")
    if len(paths) != 2:
        raise ParameterError(f"expected IMAGES,LABELS idx paths, got {source!r}")
    return load_idx_dataset(*paths)
