"""Flat binary checkpoints with a fixed-size header allowance.

Layout: an 8-byte magic, a little-endian uint32 metadata length, UTF-8 JSON
metadata, zero padding up to HEADER_BYTES, then every persisted array
(trainable parameters first, batch-norm running statistics after) as raw
little-endian scalars in deterministic plan order.  File size is therefore
exactly HEADER_BYTES + persisted_scalars * itemsize, which is what the
architecture stats report as serialized_bytes.

Activation entries are stored one letter per block/feature map (R/S/T/E) so
that per-feature-map assignments of desk-scale plans fit the allowance.
Metadata that cannot fit raises StructuralError rather than growing the
header.
"""

import json
import struct

import numpy as np

from .activations import ACTIVATION_KINDS, ActivationAssignment
from .config import ArchConfig
from .errors import StructuralError
from .network import build_network

MAGIC = b"MFINCV01"
HEADER_BYTES = 65536
FORMAT_VERSION = 1

_KIND_TO_LETTER = {kind: kind[0] for kind in ACTIVATION_KINDS}
_LETTER_TO_KIND = {letter: kind for kind, letter in _KIND_TO_LETTER.items()}


def _encode_entries(entries):
    return "".join(_KIND_TO_LETTER[e] for e in entries)


def _decode_entries(compact):
    try:
        return tuple(_LETTER_TO_KIND[ch] for ch in compact)
    except KeyError as exc:
        raise StructuralError(f"unknown activation letter {exc.args[0]!r}") from None


def _state_arrays(plan):
    """Every persisted array of a plan in serialization order."""
    arrays = [(name, p.data) for name, p in plan.parameters()]
    arrays.extend(plan.buffers())
    return arrays


def persisted_scalars(plan):
    return sum(arr.size for _, arr in _state_arrays(plan))


def serialize_model(plan, path):
    """Write a plan to `path`; see the module docstring for the layout."""
    arrays = _state_arrays(plan)
    a = plan.assignment
    seed_doc = plan.init_seed if isinstance(plan.init_seed, (int, str)) else 0
    meta = {
        "format_version": FORMAT_VERSION,
        "dtype": str(arrays[0][1].dtype) if arrays else "float32",
        # Informational: loading restores every array, so any seed rebuilds
        # an identical plan.
        "init_seed": seed_doc,
        "config": plan.config.to_json(),
        "assignment": {
            "granularity": a.granularity,
            "seed": a.seed,
            "elu_alpha": a.elu_alpha,
            "entries": _encode_entries(a.entries),
        },
        "trainable_scalars": sum(p.data.size for _, p in plan.parameters()),
        "buffer_scalars": sum(arr.size for _, arr in plan.buffers()),
    }
    meta_bytes = json.dumps(meta, separators=(",", ":")).encode("utf-8")
    used = len(MAGIC) + 4 + len(meta_bytes)
    if used > HEADER_BYTES:
        raise StructuralError(
            f"checkpoint metadata needs {used} bytes but the fixed header "
            f"allowance is {HEADER_BYTES}"
        )
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(meta_bytes)))
        fh.write(meta_bytes)
        fh.write(b"\x00" * (HEADER_BYTES - used))
        for _, arr in arrays:
            fh.write(np.ascontiguousarray(arr, dtype=arr.dtype).tobytes())


def _read_meta(blob, path):
    if len(blob) < HEADER_BYTES:
        raise StructuralError(f"{path}: truncated header ({len(blob)} bytes)")
    if blob[: len(MAGIC)] != MAGIC:
        raise StructuralError(f"{path}: bad magic, not a checkpoint")
    (meta_len,) = struct.unpack_from("<I", blob, len(MAGIC))
    start = len(MAGIC) + 4
    if start + meta_len > HEADER_BYTES:
        raise StructuralError(f"{path}: metadata length {meta_len} overflows header")
    try:
        meta = json.loads(blob[start : start + meta_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise StructuralError(f"{path}: unreadable metadata ({exc})") from None
    if meta.get("format_version") != FORMAT_VERSION:
        raise StructuralError(
            f"{path}: format version {meta.get('format_version')!r} not supported"
        )
    return meta


def deserialize_model(path):
    """Rebuild the plan stored at `path`; bit-exact parameters and buffers."""
    with open(path, "rb") as fh:
        blob = fh.read()
    meta = _read_meta(blob, path)

    config = ArchConfig.from_json(meta["config"])
    adoc = meta["assignment"]
    assignment = ActivationAssignment(
        entries=_decode_entries(adoc["entries"]),
        granularity=adoc["granularity"],
        seed=adoc.get("seed"),
        elu_alpha=adoc.get("elu_alpha", 1.0),
    )
    dtype = np.dtype(meta["dtype"])
    plan = build_network(config, assignment, meta.get("init_seed", 0), dtype=dtype)

    arrays = _state_arrays(plan)
    expected = {
        "trainable_scalars": sum(p.data.size for _, p in plan.parameters()),
        "buffer_scalars": sum(arr.size for _, arr in plan.buffers()),
    }
    for key, want in expected.items():
        if meta.get(key) != want:
            raise StructuralError(
                f"{path}: {key} mismatch (file says {meta.get(key)}, plan has {want})"
            )
    body = blob[HEADER_BYTES:]
    need = sum(arr.size for _, arr in arrays) * dtype.itemsize
    if len(body) != need:
        raise StructuralError(
            f"{path}: state section has {len(body)} bytes, expected {need}"
        )
    offset = 0
    for _, arr in arrays:
        nbytes = arr.size * dtype.itemsize
        flat = np.frombuffer(body, dtype=dtype, count=arr.size, offset=offset)
        arr[...] = flat.reshape(arr.shape)
        offset += nbytes
    return plan
