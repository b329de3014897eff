"""Labeled datasets: the synthetic shapes set and on-disk formats.

On-disk formats
---------------
CIFAR-10 binary
    Concatenated 3073-byte records: one label byte (0-9) followed by 3072
    pixel bytes, the 1024-byte R plane, then G, then B, each row-major 32x32.

PPM directory
    Binary PPM (``P6``, maxval 255) or PGM (``P5``) files plus a manifest
    ``labels.txt`` with one ``filename,label`` pair per line.
"""

from __future__ import annotations

import math
import os
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import FormatError, InvalidArgument
from .rng import Rng

CIFAR_RECORD = 3073
CIFAR_SIDE = 32


@dataclass
class LabeledDataset:
    images: np.ndarray  # (N, H, W, C) uint8
    labels: np.ndarray  # (N,) int64
    num_classes: int

    def __post_init__(self):
        self.images = np.asarray(self.images, dtype=np.uint8)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.images.ndim != 4:
            raise InvalidArgument(f"images must be (N, H, W, C), got {self.images.shape}")
        if len(self.images) != len(self.labels):
            raise InvalidArgument("images and labels differ in length")
        if self.num_classes < 1:
            raise InvalidArgument("num_classes must be positive")
        if len(self.labels) and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            raise InvalidArgument("label out of range")

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def dims(self) -> tuple[int, int, int]:
        return tuple(self.images.shape[1:])

    def subset(self, idx) -> LabeledDataset:
        idx = np.asarray(idx, dtype=np.int64)
        return LabeledDataset(self.images[idx], self.labels[idx], self.num_classes)

    def split(self, n_first: int) -> tuple[LabeledDataset, LabeledDataset]:
        return self.subset(np.arange(n_first)), self.subset(np.arange(n_first, len(self)))

    def copy(self) -> LabeledDataset:
        return LabeledDataset(self.images.copy(), self.labels.copy(), self.num_classes)


# ----------------------------------------------------------------------------
# synthetic shapes

SHAPES = ("disk", "square", "triangle", "cross", "ring")
BOLD_SHAPES = ("disk", "square", "ring")
# Every channel is 0 or 255, a fixed point of any gamma curve. Classes past
# the sixth add an inner disk of a second colour, complementary ones first,
# so classes differ in which colours are present rather than in outline.
PALETTE = (
    (255, 0, 0),
    (0, 255, 0),
    (0, 0, 255),
    (255, 255, 0),
    (0, 255, 255),
    (255, 0, 255),
)
COMPLEMENT = (4, 5, 3, 2, 0, 1)
GAMMA_RANGE = (0.35, 1.7)
INNER_SCALE = 0.55


def _color_pairs() -> list[tuple[int, int | None]]:
    n = len(PALETTE)
    pairs: list[tuple[int, int | None]] = [(i, None) for i in range(n)]
    pairs += [(i, COMPLEMENT[i]) for i in range(n)]
    pairs += [(i, j) for i in range(n) for j in range(n) if j != i and j != COMPLEMENT[i]]
    return pairs


COLOR_PAIRS = _color_pairs()
MAX_SHAPE_CLASSES = len(COLOR_PAIRS)


def class_style(k: int) -> tuple[str, tuple[int, int, int], tuple[int, int, int] | None]:
    """(shape, colour, inner colour or None) of class ``k``."""
    outer, inner = COLOR_PAIRS[k]
    if inner is None:
        return SHAPES[k % len(SHAPES)], PALETTE[outer], None
    # thin outlines would vanish under blurring and leave only the inner colour
    return BOLD_SHAPES[k % len(BOLD_SHAPES)], PALETTE[outer], PALETTE[inner]


def _shape_mask(shape: str, h: int, w: int, cy: float, cx: float, rad: float, angle: float):
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    dy, dx = yy - cy, xx - cx
    ca, sa = math.cos(angle), math.sin(angle)
    u, v = dx * ca + dy * sa, -dx * sa + dy * ca
    if shape == "disk":
        return u * u + v * v <= rad * rad
    if shape == "square":
        return (np.abs(u) <= rad * 0.85) & (np.abs(v) <= rad * 0.85)
    if shape == "triangle":
        return (v <= rad * 0.6) & (v >= -rad + 2.0 * np.abs(u) * 0.95)
    if shape == "cross":
        arm = rad * 0.35
        return ((np.abs(u) <= arm) & (np.abs(v) <= rad)) | ((np.abs(v) <= arm) & (np.abs(u) <= rad))
    if shape == "ring":
        d2 = u * u + v * v
        return (d2 <= rad * rad) & (d2 >= (rad * 0.55) ** 2)
    raise InvalidArgument(f"unknown shape {shape!r}")


def render_shape_image(k: int, dims: tuple[int, int, int], rng: Rng) -> np.ndarray:
    h, w, c = dims
    side = min(h, w)
    # near-grey backdrop, so brightening it never invents a colour
    base = rng.uniform(10, 90) + np.array([rng.uniform(-8, 8) for _ in range(3)])
    grad = rng.uniform(-30, 30)
    ramp = np.linspace(0.0, 1.0, h)[:, None, None] * grad
    noise = rng.uniform_array(-12, 12, (h, w, 3))
    img = base[None, None, :] + ramp + noise

    shape, color, inner = class_style(k)
    rad = rng.uniform(0.26, 0.36) * side
    cy = h / 2 + rng.uniform(-0.15, 0.15) * h
    cx = w / 2 + rng.uniform(-0.15, 0.15) * w
    angle = rng.uniform(-0.3, 0.3)
    mask = _shape_mask(shape, h, w, cy, cx, rad, angle)
    img[mask] = np.asarray(color, dtype=np.float64)
    if inner is not None:
        core = _shape_mask("disk", h, w, cy, cx, rad * INNER_SCALE, 0.0)
        img[core] = np.asarray(inner, dtype=np.float64)
    # exposure: a random gamma over the whole picture
    gamma = math.exp(rng.uniform(math.log(GAMMA_RANGE[0]), math.log(GAMMA_RANGE[1])))
    img = 255.0 * (np.clip(img, 0.0, 255.0) / 255.0) ** gamma
    img = np.clip(np.floor(img + 0.5), 0, 255).astype(np.uint8)
    if c == 1:
        img = np.clip(np.floor(img.mean(axis=2, keepdims=True) + 0.5), 0, 255).astype(np.uint8)
    return img


def gen_shapes_dataset(n: int, num_classes: int, dims=(32, 32, 3), seed: int = 0) -> LabeledDataset:
    """Procedural coloured shapes; class counts differ by at most one."""
    h, w, c = dims
    if num_classes < 2 or num_classes > MAX_SHAPE_CLASSES:
        raise InvalidArgument(f"num_classes must lie in [2, {MAX_SHAPE_CLASSES}]")
    if n < num_classes:
        raise InvalidArgument("need at least one sample per class")
    if h < 4 or w < 4 or c not in (1, 3):
        raise InvalidArgument(f"unsupported dims {dims}")
    rng = Rng(seed)
    labels = (np.arange(n) % num_classes)[rng.spawn("shapes.order").permutation(n)]
    images = np.empty((n, h, w, c), dtype=np.uint8)
    for i, k in enumerate(labels):
        images[i] = render_shape_image(int(k), dims, rng.spawn("shapes.sample", i))
    return LabeledDataset(images, labels, num_classes)


# ----------------------------------------------------------------------------
# CIFAR-10 binary


def parse_cifar10_binary(raw: bytes) -> LabeledDataset:
    if len(raw) == 0 or len(raw) % CIFAR_RECORD:
        raise FormatError(f"CIFAR-10 file length {len(raw)} is not a multiple of {CIFAR_RECORD}")
    rec = np.frombuffer(raw, dtype=np.uint8).reshape(-1, CIFAR_RECORD)
    labels = rec[:, 0].astype(np.int64)
    if labels.max() > 9:
        raise FormatError(f"CIFAR-10 label {int(labels.max())} exceeds 9")
    planar = rec[:, 1:].reshape(-1, 3, CIFAR_SIDE, CIFAR_SIDE)
    images = np.ascontiguousarray(planar.transpose(0, 2, 3, 1))
    return LabeledDataset(images, labels, 10)


def load_cifar10_binary(path) -> LabeledDataset:
    """Load one CIFAR-10 batch file, or every ``*.bin`` in a directory (sorted)."""
    path = Path(path)
    files = sorted(path.glob("*.bin")) if path.is_dir() else [path]
    if not files:
        raise FormatError(f"no .bin files under {path}")
    parts = [parse_cifar10_binary(f.read_bytes()) for f in files]
    return LabeledDataset(
        np.concatenate([p.images for p in parts]),
        np.concatenate([p.labels for p in parts]),
        10,
    )


def cifar10_bytes(ds: LabeledDataset) -> bytes:
    if ds.dims != (CIFAR_SIDE, CIFAR_SIDE, 3):
        raise InvalidArgument(f"CIFAR-10 records need 32x32x3 images, got {ds.dims}")
    if len(ds) and ds.labels.max() > 9:
        raise InvalidArgument("CIFAR-10 labels must be in [0, 9]")
    planar = ds.images.transpose(0, 3, 1, 2).reshape(len(ds), -1)
    rec = np.concatenate([ds.labels.astype(np.uint8)[:, None], planar], axis=1)
    return rec.tobytes()


def write_cifar10_binary(ds: LabeledDataset, path) -> None:
    Path(path).write_bytes(cifar10_bytes(ds))


# ----------------------------------------------------------------------------
# PPM / PGM


def _ppm_tokens(raw: bytes, count: int) -> tuple[list[bytes], int]:
    tokens, i = [], 0
    while len(tokens) < count:
        while i < len(raw) and raw[i : i + 1].isspace():
            i += 1
        if raw[i : i + 1] == b"#":
            while i < len(raw) and raw[i : i + 1] not in (b"\n", b"\r"):
                i += 1
            continue
        j = i
        while j < len(raw) and not raw[j : j + 1].isspace():
            j += 1
        if j == i:
            raise FormatError("truncated PPM header")
        tokens.append(raw[i:j])
        i = j
    return tokens, i + 1  # exactly one whitespace byte follows maxval


def read_ppm(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    try:
        (magic, w, h, maxval), off = _ppm_tokens(raw, 4)
        w, h, maxval = int(w), int(h), int(maxval)
    except (ValueError, IndexError):
        raise FormatError(f"{path}: malformed PPM header") from None
    channels = {b"P6": 3, b"P5": 1}.get(magic)
    if channels is None:
        raise FormatError(f"{path}: unsupported magic {magic!r}")
    if maxval != 255:
        raise FormatError(f"{path}: only maxval 255 is supported")
    need = w * h * channels
    body = raw[off : off + need]
    if len(body) != need:
        raise FormatError(f"{path}: expected {need} pixel bytes, found {len(body)}")
    return np.frombuffer(body, dtype=np.uint8).reshape(h, w, channels).copy()


def write_ppm(path, img: np.ndarray) -> None:
    img = np.asarray(img, dtype=np.uint8)
    h, w, c = img.shape
    magic = {3: b"P6", 1: b"P5"}[c]
    Path(path).write_bytes(magic + b"\n%d %d\n255\n" % (w, h) + img.tobytes())


def load_ppm_dir(root, num_classes: int | None = None) -> LabeledDataset:
    root = Path(root)
    manifest = root / "labels.txt"
    if not manifest.exists():
        raise FormatError(f"missing manifest {manifest}")
    images, labels = [], []
    for lineno, line in enumerate(manifest.read_text().splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        try:
            name, label = line.rsplit(",", 1)
            labels.append(int(label))
        except ValueError:
            raise FormatError(f"{manifest}:{lineno}: expected 'filename,label'") from None
        images.append(read_ppm(root / name.strip()))
    if not images:
        raise FormatError(f"{manifest} lists no images")
    if len({im.shape for im in images}) != 1:
        raise FormatError("images in a dataset must share dimensions")
    k = num_classes if num_classes is not None else max(labels) + 1
    if min(labels) < 0 or max(labels) >= k:
        raise FormatError("manifest label out of range")
    return LabeledDataset(np.stack(images), np.array(labels), k)


def save_ppm_dir(ds: LabeledDataset, root) -> None:
    root = Path(root)
    os.makedirs(root, exist_ok=True)
    lines = []
    width = len(str(max(len(ds) - 1, 0)))
    ext = "ppm" if ds.dims[2] == 3 else "pgm"
    for i, (img, label) in enumerate(zip(ds.images, ds.labels)):
        name = f"{i:0{width}d}.{ext}"
        write_ppm(root / name, img)
        lines.append(f"{name},{int(label)}")
    (root / "labels.txt").write_text("\n".join(lines) + "\n")


DATASET_MAGIC = b"SWKD"
DATASET_VERSION = 1
_DATASET_HEADER = struct.Struct("<4sIQIIII")


def save_dataset(ds: LabeledDataset, path) -> None:
    """Write ``ds`` as: magic, version u32, N u64, H, W, C, K u32, u16 labels, pixels."""
    n = len(ds)
    h, w, c = ds.dims
    header = _DATASET_HEADER.pack(DATASET_MAGIC, DATASET_VERSION, n, h, w, c, ds.num_classes)
    Path(path).write_bytes(header + ds.labels.astype("<u2").tobytes() + ds.images.tobytes())


def load_dataset(path) -> LabeledDataset:
    raw = Path(path).read_bytes()
    if len(raw) < _DATASET_HEADER.size:
        raise FormatError(f"{path}: truncated dataset header")
    magic, version, n, h, w, c, k = _DATASET_HEADER.unpack_from(raw)
    if magic != DATASET_MAGIC:
        raise FormatError(f"{path}: not a dataset file")
    if version != DATASET_VERSION:
        raise FormatError(f"{path}: unsupported dataset version {version}")
    off = _DATASET_HEADER.size
    need = off + 2 * n + n * h * w * c
    if len(raw) != need:
        raise FormatError(f"{path}: expected {need} bytes, found {len(raw)}")
    labels = np.frombuffer(raw, dtype="<u2", count=n, offset=off).astype(np.int64)
    images = np.frombuffer(raw, dtype=np.uint8, offset=off + 2 * n).reshape(n, h, w, c).copy()
    try:
        return LabeledDataset(images, labels, k)
    except InvalidArgument as exc:
        raise FormatError(f"{path}: {exc}") from None
