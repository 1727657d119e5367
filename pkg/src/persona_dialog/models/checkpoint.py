"""Binary checkpoint format.

Layout: ``MAGIC``, a little-endian ``uint16`` format version, a ``uint32``
header length, a UTF-8 JSON header (model kind, hyperparameters, vocabulary
hash, array names and shapes), then each array as raw little-endian float32
in header order.
"""
from __future__ import annotations

import json
import struct
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .embedding import EmbeddingHyper, SupervisedEmbedding
from .memnn import MemNN, MemNNHyper

MAGIC = b"PDLGCKPT"
VERSION = 1
_DTYPE = np.dtype("<f4")

MODEL_KINDS = {
    SupervisedEmbedding.kind: (SupervisedEmbedding, EmbeddingHyper),
    MemNN.kind: (MemNN, MemNNHyper),
}


class CheckpointError(ValueError):
    pass


def encode_checkpoint(model, vocab_digest: bytes, extra: dict | None = None) -> bytes:
    names = sorted(model.params)
    header = {
        "kind": model.kind,
        "hyper": asdict(model.hp),
        "vocab_hash": vocab_digest.hex(),
        "arrays": [[n, list(model.params[n].shape)] for n in names],
        "extra": extra or {},
    }
    head = json.dumps(header, sort_keys=True).encode()
    parts = [MAGIC, struct.pack("<HI", VERSION, len(head)), head]
    for n in names:
        arr = model.params[n]
        if not np.all(np.isfinite(arr)):
            raise CheckpointError(f"refusing to save non-finite parameter {n}")
        parts.append(np.ascontiguousarray(arr, dtype=_DTYPE).tobytes())
    return b"".join(parts)


def decode_checkpoint(blob: bytes, vocab_digest: bytes | None = None):
    """Rebuild ``(model, header)``; refuses a vocabulary it was not trained on."""
    if blob[: len(MAGIC)] != MAGIC:
        raise CheckpointError("not a checkpoint file (bad magic)")
    pos = len(MAGIC)
    version, n_head = struct.unpack_from("<HI", blob, pos)
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    pos += 6
    header = json.loads(blob[pos : pos + n_head].decode())
    pos += n_head
    if vocab_digest is not None and header["vocab_hash"] != vocab_digest.hex():
        raise CheckpointError("vocabulary hash mismatch: checkpoint was trained on a different vocabulary")
    if header["kind"] not in MODEL_KINDS:
        raise CheckpointError(f"unknown model kind {header['kind']!r}")
    params = {}
    for name, shape in header["arrays"]:
        count = int(np.prod(shape))
        end = pos + count * _DTYPE.itemsize
        if end > len(blob):
            raise CheckpointError("truncated checkpoint")
        params[name] = np.frombuffer(blob, dtype=_DTYPE, count=count, offset=pos).reshape(shape).astype(np.float32)
        pos = end
    if pos != len(blob):
        raise CheckpointError("trailing bytes after the last array")
    cls, hyper_cls = MODEL_KINDS[header["kind"]]
    model = cls(hyper_cls(**header["hyper"]), params["A"].shape[0], params=params)
    return model, header


def save_checkpoint(path, model, vocab_digest: bytes, extra: dict | None = None) -> None:
    Path(path).write_bytes(encode_checkpoint(model, vocab_digest, extra))


def load_checkpoint(path, vocab_digest: bytes | None = None):
    return decode_checkpoint(Path(path).read_bytes(), vocab_digest)
