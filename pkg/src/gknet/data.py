"""Dataset scanning, image decoding, preprocessing, batching, synthesis.

Directory convention: a corpus root contains either `train/` and `val/`
split directories or class directories directly. Class directories map one
class each; class ids follow alphabetical directory order and samples are
path-sorted, so scans are deterministic.

Images are decoded to float64 [C, H, W] in [0, 255] (C is 1 or 3). PNG goes
through Pillow; binary PGM (P5) and PPM (P6) are parsed here. Resizing is
corner-aligned bilinear. Preprocessing modes: "rescale" divides by 255,
"samplewise_center_std" centers each sample to mean 0 and scales to unit std (std
floored at 1e-8).
"""

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import ConfigError, DatasetError, DecodeError
from .seeding import seeded_rng

IMAGE_SUFFIXES = (".png", ".pgm", ".ppm")
PREPROCESS_MODES = ("rescale", "samplewise_center_std")
SPLIT_NAMES = ("train", "val")

# Rec. 601 luma weights for RGB -> gray.
_LUMA = np.array([0.299, 0.587, 0.114])


@dataclass
class DatasetIndex:
    """A resolved list of (path, class id) pairs with shared class names."""

    classes: list
    samples: list  # of (Path, int)

    def __len__(self):
        return len(self.samples)

    def class_counts(self):
        counts = [0] * len(self.classes)
        for _, label in self.samples:
            counts[label] += 1
        return counts


def scan_class_tree(root):
    """Index one split directory laid out as <root>/<class>/<image>."""
    root = Path(root)
    if not root.is_dir():
        raise DatasetError(f"dataset directory {root} does not exist")
    class_dirs = sorted(d for d in root.iterdir() if d.is_dir())
    if not class_dirs:
        raise DatasetError(f"no class directories under {root}")
    classes = [d.name for d in class_dirs]
    samples = []
    for label, class_dir in enumerate(class_dirs):
        files = sorted(
            p for p in class_dir.iterdir()
            if p.is_file() and p.suffix.lower() in IMAGE_SUFFIXES
        )
        if not files:
            raise DatasetError(f"class directory {class_dir} has no images")
        samples.extend((p, label) for p in files)
    return DatasetIndex(classes=classes, samples=samples)


def stratified_split(index, val_fraction, seed):
    """Split one index into (train, val), class by class.

    Each class contributes round(n * val_fraction) samples (at least 1, at
    most n-1) to the validation side, drawn by seeded shuffle.
    """
    if not 0.0 < val_fraction < 1.0:
        raise ConfigError(f"val fraction must be in (0, 1), got {val_fraction}")
    rng = seeded_rng(seed, 2)
    train_samples, val_samples = [], []
    for label in range(len(index.classes)):
        group = [s for s in index.samples if s[1] == label]
        if len(group) < 2:
            raise DatasetError(
                f"class {index.classes[label]!r} needs at least 2 samples to split"
            )
        order = rng.permutation(len(group))
        take = int(round(len(group) * val_fraction))
        take = min(max(take, 1), len(group) - 1)
        chosen = set(order[:take].tolist())
        for i, sample in enumerate(group):
            (val_samples if i in chosen else train_samples).append(sample)
    train = DatasetIndex(classes=list(index.classes), samples=train_samples)
    val = DatasetIndex(classes=list(index.classes), samples=val_samples)
    return train, val


def load_split_indexes(root, val_fraction=0.1, seed=0):
    """Resolve a corpus root into (train index, val index).

    Prefers explicit train/ and val/ directories; otherwise treats the root
    as one class tree and splits it stratified by class.
    """
    root = Path(root)
    if not root.is_dir():
        raise DatasetError(f"dataset directory {root} does not exist")
    train_dir = root / "train"
    val_dir = root / "val"
    if train_dir.is_dir() and val_dir.is_dir():
        train = scan_class_tree(train_dir)
        val = scan_class_tree(val_dir)
        if train.classes != val.classes:
            raise DatasetError(
                f"train/val class directories differ: {train.classes} vs {val.classes}"
            )
        return train, val
    return stratified_split(scan_class_tree(root), val_fraction, seed)


def _parse_netpbm(data, path):
    """Binary PGM (P5) / PPM (P6) decoder; rejects maxval > 255."""
    magic = data[:2]
    pos = 2
    fields = []
    while len(fields) < 3:
        if pos >= len(data):
            raise DecodeError(f"{path}: truncated header")
        ch = data[pos:pos + 1]
        if ch == b"#":
            while pos < len(data) and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
        elif ch.isspace():
            pos += 1
        elif ch.isdigit():
            start = pos
            while pos < len(data) and data[pos:pos + 1].isdigit():
                pos += 1
            fields.append(int(data[start:pos]))
        else:
            raise DecodeError(f"{path}: bad header byte {ch!r}")
    width, height, maxval = fields
    if width < 1 or height < 1:
        raise DecodeError(f"{path}: bad dimensions {width}x{height}")
    if maxval > 255:
        raise DecodeError(f"{path}: 16-bit samples are not supported")
    if maxval < 1:
        raise DecodeError(f"{path}: bad maxval {maxval}")
    pos += 1  # single whitespace byte after the header
    channels = 1 if magic == b"P5" else 3
    need = width * height * channels
    raster = data[pos:pos + need]
    if len(raster) < need:
        raise DecodeError(f"{path}: truncated raster, {len(raster)}/{need} bytes")
    flat = np.frombuffer(raster, dtype=np.uint8).astype(np.float64)
    if channels == 1:
        return flat.reshape(1, height, width)
    return flat.reshape(height, width, 3).transpose(2, 0, 1)


def _decode_png(path):
    try:
        with Image.open(path) as image:
            image.load()
            mode = image.mode
            if mode == "L":
                return np.asarray(image, dtype=np.float64)[None]
            if mode == "RGB":
                return np.asarray(image, dtype=np.float64).transpose(2, 0, 1)
    except (UnidentifiedImageError, OSError, SyntaxError, ValueError) as exc:
        raise DecodeError(f"{path}: {exc}") from exc
    raise DecodeError(f"{path}: unsupported image mode {mode!r} (need L or RGB)")


def decode_image(path):
    """Decode one image file to float64 [C, H, W] with values in [0, 255]."""
    path = Path(path)
    if not path.is_file():
        raise DecodeError(f"{path}: no such file")
    suffix = path.suffix.lower()
    if suffix == ".png":
        return _decode_png(path)
    if suffix in (".pgm", ".ppm"):
        data = path.read_bytes()
        magic = data[:2]
        if suffix == ".pgm" and magic != b"P5":
            raise DecodeError(f"{path}: expected binary PGM (P5), got {magic!r}")
        if suffix == ".ppm" and magic != b"P6":
            raise DecodeError(f"{path}: expected binary PPM (P6), got {magic!r}")
        return _parse_netpbm(data, path)
    raise DecodeError(f"{path}: unsupported extension {suffix!r}")


def to_channels(image, channels):
    """Convert [C, H, W] to the requested channel count (1 or 3).

    RGB -> gray uses luma weights; gray -> RGB replicates the plane.
    """
    if channels not in (1, 3):
        raise ConfigError(f"channels must be 1 or 3, got {channels}")
    if image.shape[0] == channels:
        return image
    if image.shape[0] == 3 and channels == 1:
        return np.tensordot(_LUMA, image, axes=1)[None]
    if image.shape[0] == 1 and channels == 3:
        return np.repeat(image, 3, axis=0)
    raise DecodeError(f"cannot convert {image.shape[0]} channels to {channels}")


def resize_bilinear(image, target):
    """Corner-aligned bilinear resize of [C, H, W] to [C, target, target].

    Sample y of the output maps to source coordinate y * (H-1)/(T-1); the
    four surrounding pixels blend by their fractional offsets. A 1-pixel
    target takes the top-left corner.
    """
    if target < 1:
        raise ConfigError(f"target resolution must be >= 1, got {target}")
    image = np.asarray(image, dtype=np.float64)
    c, h, w = image.shape
    if (h, w) == (target, target):
        return image.copy()

    def coords(src, dst):
        if dst == 1:
            return np.zeros(1)
        return np.arange(dst) * ((src - 1) / (dst - 1))

    ys = coords(h, target)
    xs = coords(w, target)
    y0 = np.floor(ys).astype(int)
    x0 = np.floor(xs).astype(int)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    fy = (ys - y0)[None, :, None]
    fx = (xs - x0)[None, None, :]
    top = image[:, y0][:, :, x0] * (1 - fx) + image[:, y0][:, :, x1] * fx
    bottom = image[:, y1][:, :, x0] * (1 - fx) + image[:, y1][:, :, x1] * fx
    return top * (1 - fy) + bottom * fy


def preprocess(image, mode):
    """Map a decoded [C, H, W] image into network input range."""
    image = np.asarray(image, dtype=np.float64)
    if mode == "rescale":
        return image / 255.0
    if mode == "samplewise_center_std":
        centered = image - image.mean()
        return centered / max(float(image.std()), 1e-8)
    raise ConfigError(
        f"unknown preprocess mode {mode!r}; choose from {', '.join(PREPROCESS_MODES)}"
    )


def load_sample(path, resolution, channels, mode):
    """Decode, channel-convert, resize, and preprocess one image."""
    image = to_channels(decode_image(path), channels)
    return preprocess(resize_bilinear(image, resolution), mode)


def load_arrays(index, resolution, channels, mode):
    """Materialize an index into (X [N,C,R,R], y [N]) float64/int64 arrays."""
    if len(index) == 0:
        raise DatasetError("index has no samples")
    xs = np.empty((len(index), channels, resolution, resolution))
    ys = np.empty(len(index), dtype=np.int64)
    for i, (path, label) in enumerate(index.samples):
        xs[i] = load_sample(path, resolution, channels, mode)
        ys[i] = label
    return xs, ys


def iter_batches(xs, ys, batch_size, rng=None):
    """Yield (x, y) batches; a final short batch is kept.

    With an rng the sample order is a fresh permutation; without one it is
    the stored order.
    """
    if batch_size < 1:
        raise ConfigError(f"batch size must be >= 1, got {batch_size}")
    n = len(xs)
    order = rng.permutation(n) if rng is not None else np.arange(n)
    for start in range(0, n, batch_size):
        pick = order[start:start + batch_size]
        yield xs[pick], ys[pick]


def batch_iterator(index, batch_size, resolution, channels, mode, shuffle_seed=None):
    """Materialize an index and stream it in batches."""
    xs, ys = load_arrays(index, resolution, channels, mode)
    rng = seeded_rng(shuffle_seed) if shuffle_seed is not None else None
    yield from iter_batches(xs, ys, batch_size, rng)


def save_png(path, array):
    """Write a uint8 [H, W] or [H, W, 3] array as PNG."""
    array = np.asarray(array)
    if array.dtype != np.uint8:
        raise ConfigError(f"save_png needs uint8 data, got {array.dtype}")
    Image.fromarray(array).save(Path(path), format="PNG")


# --- synthetic corpus ---------------------------------------------------

SYNTH_PATTERNS = ("disk", "bands", "gradient")
SYNTH_NOISE_STD = 10.0


def synth_clean_image(class_id, resolution, rng):
    """Noise-free class pattern, float64 [R, R] in [0, 255].

    class 0: bright disk, jittered center and radius, on a dark field.
    class 1: horizontal sine bands, jittered period and phase.
    class 2: diagonal ramp, jittered gain and offset.
    """
    r = resolution
    yy, xx = np.meshgrid(np.arange(r), np.arange(r), indexing="ij")
    if class_id == 0:
        cy = r / 2 + rng.uniform(-r / 12, r / 12)
        cx = r / 2 + rng.uniform(-r / 12, r / 12)
        radius = rng.uniform(r / 5, r / 3)
        dist = np.sqrt((yy - cy) ** 2 + (xx - cx) ** 2)
        return np.where(dist <= radius, 210.0, 30.0)
    if class_id == 1:
        period = (r / 5.0) * rng.uniform(0.8, 1.25)
        phase = rng.uniform(0.0, period)
        return 127.5 + 95.0 * np.sin(2.0 * np.pi * (yy - phase) / period)
    if class_id == 2:
        gain = rng.uniform(0.75, 0.9)
        offset = rng.uniform(0.0, 25.0)
        ramp = (yy + xx) / (2.0 * (r - 1)) if r > 1 else np.zeros((1, 1))
        return offset + gain * 255.0 * ramp
    raise ConfigError(f"class id must be 0..{len(SYNTH_PATTERNS) - 1}, got {class_id}")


def synth_dataset(out_dir, train_per_class, val_per_class, classes=3,
                  resolution=64, seed=0):
    """Write a synthetic PNG corpus under out_dir/{train,val}/<class>/.

    Same arguments, same seed: byte-identical files. Returns the number of
    images written.
    """
    if not 1 <= classes <= len(SYNTH_PATTERNS):
        raise ConfigError(f"classes must be 1..{len(SYNTH_PATTERNS)}, got {classes}")
    if train_per_class < 1 or val_per_class < 1:
        raise ConfigError("per-class counts must be >= 1")
    if resolution < 2:
        raise ConfigError(f"resolution must be >= 2, got {resolution}")
    out_dir = Path(out_dir)
    written = 0
    for split_tag, split, count in (
        (0, "train", train_per_class), (1, "val", val_per_class)
    ):
        for class_id in range(classes):
            name = f"c{class_id}_{SYNTH_PATTERNS[class_id]}"
            directory = out_dir / split / name
            directory.mkdir(parents=True, exist_ok=True)
            rng = seeded_rng(seed, split_tag, class_id)
            for i in range(count):
                clean = synth_clean_image(class_id, resolution, rng)
                noisy = clean + rng.normal(0.0, SYNTH_NOISE_STD, clean.shape)
                pixels = np.clip(np.rint(noisy), 0, 255).astype(np.uint8)
                save_png(directory / f"img_{i:04d}.png", pixels)
                written += 1
    return written
