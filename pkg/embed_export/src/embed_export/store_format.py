"""Writer for the .ebed embedding-store format.

Implements the documented interchange layout directly so this package has
no code dependency on the consumer toolkit. Little-endian throughout:

    magic "EBED" | version u32 = 1 | dim u32 | count u64
    | provenance: u16 length + UTF-8 bytes
    | count records of: u16 name length | UTF-8 normalized name | dim x f32
"""

from __future__ import annotations

import struct
import unicodedata

import numpy as np

MAGIC = b"EBED"
VERSION = 1


class StoreFormatError(ValueError):
    pass


def normalize_name(raw: str) -> str:
    """The consumer's canonical name form: uppercase, ASCII-folded,
    whitespace-collapsed, hyphens and apostrophes kept."""
    s = raw.replace("‘", "'").replace("’", "'").replace("ʼ", "'")
    s = unicodedata.normalize("NFKD", s)
    s = "".join(ch for ch in s if not unicodedata.combining(ch))
    return " ".join(s.upper().split())


def write_store(path, names: list[str], vectors: np.ndarray, provenance: str) -> None:
    """Write one store file; vectors are narrowed to float32."""
    vectors = np.ascontiguousarray(vectors, dtype="<f4")
    if vectors.ndim != 2 or vectors.shape[0] != len(names):
        raise StoreFormatError(
            f"vectors must be (len(names), dim), got {vectors.shape} for {len(names)} names"
        )
    if not np.all(np.isfinite(vectors)):
        raise StoreFormatError("vectors contain non-finite values")
    dim = vectors.shape[1]
    prov = provenance.encode("utf-8")
    if len(prov) > 0xFFFF:
        raise StoreFormatError("provenance string too long")
    seen = set()
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<IIQ", VERSION, dim, len(names)))
        f.write(struct.pack("<H", len(prov)))
        f.write(prov)
        for name, vec in zip(names, vectors):
            if normalize_name(name) != name:
                raise StoreFormatError(f"name {name!r} is not normalization-canonical")
            if name in seen:
                raise StoreFormatError(f"duplicate name {name!r}")
            seen.add(name)
            raw = name.encode("utf-8")
            if len(raw) > 0xFFFF:
                raise StoreFormatError(f"name too long: {name[:32]!r}...")
            f.write(struct.pack("<H", len(raw)))
            f.write(raw)
            f.write(vec.tobytes())
