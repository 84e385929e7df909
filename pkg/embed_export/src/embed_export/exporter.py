"""Batch embedding export: name list in, .ebed store out.

The model is any sentence-transformers-loadable identifier (hub id or local
path). Provenance stamps the identifier, a hash of the loaded weights, and
the model's pooling mode, so downstream consumers can refuse stores from a
different embedding space.
"""

from __future__ import annotations

import hashlib
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .store_format import normalize_name, write_store


class ExportError(RuntimeError):
    pass


@dataclass(frozen=True)
class ExportJob:
    input_path: str
    model_id: str
    output_path: str
    batch_size: int = 64
    normalize: bool = True  # scale every vector to unit norm

    def __post_init__(self):
        if self.batch_size < 1:
            raise ExportError(f"batch size must be >= 1, got {self.batch_size}")


@dataclass(frozen=True)
class ExportSummary:
    names_embedded: int
    dim: int
    duration_s: float
    provenance: str


def read_name_list(path) -> list[str]:
    """One name per line; normalized, deduplicated, order-preserving."""
    p = Path(path)
    if not p.exists():
        raise ExportError(f"{p}: name list not found")
    names: list[str] = []
    seen = set()
    for line in p.read_text(encoding="utf-8").splitlines():
        name = normalize_name(line)
        if not name or name in seen:
            continue
        seen.add(name)
        names.append(name)
    if not names:
        raise ExportError(f"{p}: empty name list")
    return names


def load_model(model_id: str):
    from sentence_transformers import SentenceTransformer

    try:
        return SentenceTransformer(model_id)
    except Exception as exc:
        raise ExportError(f"cannot resolve embedding model {model_id!r}: {exc}") from exc


def _weights_digest(model) -> str:
    h = hashlib.sha256()
    state = model.state_dict()
    for key in sorted(state):
        h.update(key.encode("utf-8"))
        h.update(np.ascontiguousarray(state[key].detach().cpu().numpy()).tobytes())
    return h.hexdigest()[:12]


def _pooling_mode(model) -> str:
    for module in model.modules():
        if type(module).__name__ == "Pooling":
            mode = getattr(module, "pooling_mode", None)
            if mode:
                return str(mode)
            getter = getattr(module, "get_pooling_mode_str", None)
            if callable(getter):
                return getter()
    return "model-default"


def provenance_for(model, model_id: str) -> str:
    return f"{model_id}@{_weights_digest(model)}#pooling={_pooling_mode(model)}"


def export_embeddings(job: ExportJob, model=None) -> ExportSummary:
    """Embed the name list and write the store; returns a run summary.

    Deterministic given fixed model weights: inference runs in eval mode
    and the output order follows the (deduplicated) input order.
    """
    t0 = time.perf_counter()
    names = read_name_list(job.input_path)
    if model is None:
        model = load_model(job.model_id)
    vectors = model.encode(
        names,
        batch_size=job.batch_size,
        convert_to_numpy=True,
        normalize_embeddings=False,
        show_progress_bar=False,
    )
    vectors = np.asarray(vectors, dtype=np.float32)
    if vectors.ndim != 2:
        raise ExportError(f"model returned shape {vectors.shape}, expected (names, dim)")
    if job.normalize:
        norms = np.linalg.norm(vectors, axis=1, keepdims=True)
        vectors = np.where(norms > 0, vectors / norms, vectors)
    provenance = provenance_for(model, job.model_id)
    write_store(job.output_path, names, vectors, provenance)
    return ExportSummary(
        names_embedded=len(names),
        dim=int(vectors.shape[1]),
        duration_s=time.perf_counter() - t0,
        provenance=provenance,
    )
