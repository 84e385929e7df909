"""Name embedding providers.

Two providers share one interface: a deterministic character n-gram
featurizer (the self-contained default) and a store of precomputed vectors
loaded from the toolkit's binary format, optionally backed by an n-gram
fallback for names the store does not cover. Providers are immutable after
construction and safe for concurrent reads.
"""

from __future__ import annotations

import hashlib
import re
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

import numpy as np

from ._binio import Cursor
from .errors import ConfigError, DataError, FormatError
from .tables import normalize_name

STORE_MAGIC = b"EBED"
STORE_VERSION = 1

NGRAM_RANGE = (2, 4)  # sub-word granularity comparable to subword tokenizers
BOUNDARY_START = "^"
BOUNDARY_END = "$"


def _hash64(ngram: str, seed: int) -> int:
    key = seed.to_bytes(8, "little", signed=True)
    digest = hashlib.blake2b(ngram.encode("utf-8"), digest_size=8, key=key).digest()
    return int.from_bytes(digest, "little")


def embed_char_ngram(name: str, dim: int, seed: int) -> np.ndarray:
    """Signed-hash character n-gram embedding, scaled to unit norm.

    The normalized name is wrapped in boundary markers so prefixes and
    suffixes hash distinctly from word-internal fragments, then every
    n-gram for n in 2..4 is hashed into one of ``dim`` buckets with a
    sign bit. Deterministic across processes and platforms; the empty
    name embeds to the zero vector.
    """
    if dim < 16:
        raise ConfigError(f"embedding dim must be >= 16, got {dim}")
    key = normalize_name(name)
    vec = np.zeros(dim, dtype=np.float64)
    if not key:
        return vec
    s = BOUNDARY_START + key + BOUNDARY_END
    lo, hi = NGRAM_RANGE
    for n in range(lo, hi + 1):
        for i in range(len(s) - n + 1):
            h = _hash64(s[i : i + n], seed)
            sign = 1.0 if (h >> 63) & 1 else -1.0
            vec[h % dim] += sign
    norm = float(np.linalg.norm(vec))
    if norm > 0.0:
        vec /= norm
    return vec


@dataclass(frozen=True)
class NgramProvider:
    """Configuration of the built-in featurizer; doubles as its provenance."""

    dim: int
    seed: int = 0

    def __post_init__(self):
        if self.dim < 16:
            raise ConfigError(f"embedding dim must be >= 16, got {self.dim}")

    @property
    def provenance(self) -> str:
        return f"char-ngram(dim={self.dim},seed={self.seed},n={NGRAM_RANGE[0]}-{NGRAM_RANGE[1]},v1)"

    def embed(self, name: str) -> np.ndarray:
        return embed_char_ngram(name, self.dim, self.seed)


class EmbeddingStore:
    """Fixed-dimension map from normalized name to vector.

    Vectors are held as float32, matching the file format exactly so a
    write/load round trip is bit-identical.
    """

    def __init__(self, dim: int, provenance: str = ""):
        if dim <= 0:
            raise ConfigError(f"store dim must be positive, got {dim}")
        self.dim = int(dim)
        self.provenance = provenance
        self._vectors: dict[str, np.ndarray] = {}

    def __len__(self) -> int:
        return len(self._vectors)

    def __contains__(self, name: str) -> bool:
        return normalize_name(name) in self._vectors

    def names(self):
        return self._vectors.keys()

    def add(self, name: str, vector) -> None:
        key = normalize_name(name)
        if not key:
            raise DataError("cannot store a vector for an empty name")
        v = np.asarray(vector, dtype=np.float32)
        if v.shape != (self.dim,):
            raise DataError(f"vector for {key!r} has dimension {v.shape}, store dim is {self.dim}")
        if not np.all(np.isfinite(v)):
            raise DataError(f"vector for {key!r} has non-finite entries")
        self._vectors[key] = v

    def get(self, name: str) -> Optional[np.ndarray]:
        return self._vectors.get(normalize_name(name))


@dataclass(frozen=True)
class StoreProvider:
    """A loaded store, optionally falling back to the featurizer on misses.

    The fallback must match the store dimension; its use assumes the store
    was itself built from the same featurizer configuration (it is meant
    as a cache-miss path, not a way to mix vector spaces).
    """

    store: EmbeddingStore
    fallback: Optional[NgramProvider] = None

    def __post_init__(self):
        if self.fallback is not None and self.fallback.dim != self.store.dim:
            raise ConfigError(
                f"fallback dim {self.fallback.dim} != store dim {self.store.dim}"
            )

    @property
    def dim(self) -> int:
        return self.store.dim

    @property
    def provenance(self) -> str:
        return self.store.provenance

    def embed(self, name: str) -> np.ndarray:
        hit = self.store.get(name)
        if hit is not None:
            return np.asarray(hit, dtype=np.float64)
        if self.fallback is not None:
            return self.fallback.embed(name)
        raise DataError(f"unknown name {normalize_name(name)!r}: not in store and no fallback configured")


Provider = Union[NgramProvider, StoreProvider]

_NGRAM_PROVENANCE = re.compile(
    rf"^char-ngram\(dim=(\d+),seed=(-?\d+),n={NGRAM_RANGE[0]}-{NGRAM_RANGE[1]},v1\)$"
)


def ngram_provider_from_provenance(provenance: str) -> Optional[NgramProvider]:
    """Reconstruct the featurizer from its provenance string, or None if the
    provenance names a different embedding backend."""
    m = _NGRAM_PROVENANCE.match(provenance or "")
    if m is None:
        return None
    return NgramProvider(dim=int(m.group(1)), seed=int(m.group(2)))


def get_embedding(provider: Provider, name: str) -> np.ndarray:
    """Vector for a name under the given provider (see provider classes)."""
    return provider.embed(name)


# --- binary store format ------------------------------------------------------
#
# Little-endian layout:
#   magic "EBED" | version u32 | dim u32 | count u64
#   | provenance: u16 length + UTF-8 bytes
#   | count records of: u16 name length | UTF-8 normalized name | dim x f32


def write_embedding_store(store: EmbeddingStore, path) -> None:
    prov = store.provenance.encode("utf-8")
    if len(prov) > 0xFFFF:
        raise DataError("provenance string too long for store format")
    with open(path, "wb") as f:
        f.write(STORE_MAGIC)
        f.write(struct.pack("<IIQ", STORE_VERSION, store.dim, len(store._vectors)))
        f.write(struct.pack("<H", len(prov)))
        f.write(prov)
        for name in sorted(store._vectors):
            raw = name.encode("utf-8")
            if len(raw) > 0xFFFF:
                raise DataError(f"name too long for store format: {name[:32]!r}...")
            f.write(struct.pack("<H", len(raw)))
            f.write(raw)
            f.write(store._vectors[name].astype("<f4", copy=False).tobytes())


def load_embedding_store(path) -> EmbeddingStore:
    """Load a store file; rejects bad magic/version and locates truncation."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"{path}: file not found")
    with open(path, "rb") as f:
        cur = Cursor(f, path)
        magic = cur.read(4, "magic")
        if magic != STORE_MAGIC:
            raise FormatError(f"{path}: bad magic {magic!r}, expected {STORE_MAGIC!r}")
        version, dim, count = struct.unpack("<IIQ", cur.read(16, "header"))
        if version != STORE_VERSION:
            raise FormatError(f"{path}: unsupported store version {version}")
        if dim <= 0:
            raise FormatError(f"{path}: invalid dimension {dim}")
        (prov_len,) = struct.unpack("<H", cur.read(2, "provenance length"))
        provenance = cur.read(prov_len, "provenance").decode("utf-8")
        store = EmbeddingStore(dim=dim, provenance=provenance)
        for i in range(count):
            (name_len,) = struct.unpack("<H", cur.read(2, f"record {i} name length"))
            name = cur.read(name_len, f"record {i} name").decode("utf-8")
            vec = np.frombuffer(cur.read(4 * dim, f"record {i} vector"), dtype="<f4")
            if normalize_name(name) != name:
                raise FormatError(f"{path}: record {i} name {name!r} is not normalization-canonical")
            if name in store._vectors:
                raise FormatError(f"{path}: duplicate name {name!r} in record {i}")
            if not np.all(np.isfinite(vec)):
                raise FormatError(f"{path}: record {i} ({name!r}) has non-finite values")
            store._vectors[name] = vec.copy()
        trailing = f.read(1)
        if trailing:
            raise FormatError(f"{path}: trailing bytes after {count} records at offset {cur.offset}")
    return store


def build_store(names, provider: NgramProvider, provenance: Optional[str] = None) -> EmbeddingStore:
    """Embed a name list with the featurizer and collect it into a store."""
    store = EmbeddingStore(dim=provider.dim, provenance=provenance or provider.provenance)
    for name in names:
        key = normalize_name(name)
        if not key or key in store._vectors:
            continue
        store.add(key, provider.embed(key))
    return store
