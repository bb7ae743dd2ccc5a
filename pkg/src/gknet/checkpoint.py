"""Binary checkpoint format (GKPT1).

Layout, all integers little-endian:

    magic   5 bytes  b"GKPT1"
    u32     length of the UTF-8 config block
    bytes   config block: canonical model spec text, then one line
            "classnames <comma-joined names>" (bare "classnames" if unset)
    u64     weight-init seed
    u32     tensor count
    per tensor:
        u8   rank
        u32  per-axis extents
        f64  row-major data

Tensors appear in network parameter order. Loading rebuilds the network
from the config text, seeds it, then overwrites every parameter, so a
save/load round trip is bit-exact.
"""

import struct
from pathlib import Path

import numpy as np

from .errors import CheckpointError
from .model_config import instantiate, parse_model_spec, render_model_spec

MAGIC = b"GKPT1"
_CLASSNAMES_PREFIX = "classnames"


def _config_block(network):
    if network.config is None:
        raise CheckpointError("network has no model config; cannot checkpoint")
    text = render_model_spec(network.config)
    if network.class_names:
        for name in network.class_names:
            if "," in name or "\n" in name:
                raise CheckpointError(f"class name {name!r} cannot be stored")
        names = ",".join(network.class_names)
        return text + f"{_CLASSNAMES_PREFIX} {names}\n"
    return text + f"{_CLASSNAMES_PREFIX}\n"


def save_checkpoint(network, path):
    """Write the network's config, seed, and parameters to `path`."""
    block = _config_block(network).encode("utf-8")
    params = network.params()
    pieces = [
        MAGIC,
        struct.pack("<I", len(block)),
        block,
        struct.pack("<Q", network.seed),
        struct.pack("<I", len(params)),
    ]
    for p in params:
        if p.ndim > 255:
            raise CheckpointError(f"tensor rank {p.ndim} does not fit the format")
        pieces.append(struct.pack("<B", p.ndim))
        pieces.append(struct.pack(f"<{p.ndim}I", *p.shape))
        pieces.append(np.ascontiguousarray(p, dtype="<f8").tobytes())
    Path(path).write_bytes(b"".join(pieces))


class _Reader:
    def __init__(self, data, path):
        self.data = data
        self.path = path
        self.pos = 0

    def take(self, n, what):
        if self.pos + n > len(self.data):
            raise CheckpointError(f"{self.path}: truncated while reading {what}")
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt, what):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))


def load_checkpoint(path):
    """Read a checkpoint and return the reconstructed Network."""
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise CheckpointError(f"{path}: {exc}") from exc
    reader = _Reader(data, path)
    if reader.take(len(MAGIC), "magic") != MAGIC:
        raise CheckpointError(f"{path}: bad magic, not a checkpoint file")
    (block_len,) = reader.unpack("<I", "config length")
    try:
        block = reader.take(block_len, "config block").decode("utf-8")
    except UnicodeDecodeError as exc:
        raise CheckpointError(f"{path}: config block is not UTF-8") from exc
    lines = block.splitlines()
    if not lines or not lines[-1].startswith(_CLASSNAMES_PREFIX):
        raise CheckpointError(f"{path}: config block missing class names line")
    names_line = lines[-1][len(_CLASSNAMES_PREFIX):].strip()
    class_names = names_line.split(",") if names_line else None
    config_text = "\n".join(lines[:-1])
    try:
        config = parse_model_spec(config_text)
    except Exception as exc:
        raise CheckpointError(f"{path}: bad embedded config: {exc}") from exc
    (seed,) = reader.unpack("<Q", "seed")
    network = instantiate(config, seed)
    network.class_names = class_names
    if class_names and len(class_names) != network.classes:
        raise CheckpointError(
            f"{path}: {len(class_names)} class names for {network.classes} classes"
        )
    params = network.params()
    (count,) = reader.unpack("<I", "tensor count")
    if count != len(params):
        raise CheckpointError(
            f"{path}: {count} tensors for {len(params)} network parameters"
        )
    for p in params:
        (rank,) = reader.unpack("<B", "tensor rank")
        extents = reader.unpack(f"<{rank}I", "tensor extents")
        if extents != p.shape:
            raise CheckpointError(
                f"{path}: tensor shape {extents} does not match parameter {p.shape}"
            )
        raw = reader.take(8 * int(np.prod(extents)), "tensor data")
        np.copyto(p, np.frombuffer(raw, dtype="<f8").reshape(extents))
    if reader.pos != len(data):
        raise CheckpointError(f"{path}: {len(data) - reader.pos} trailing bytes")
    return network
