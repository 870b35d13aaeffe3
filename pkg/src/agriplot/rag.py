"""Document ingestion, chunking, exact vector search and citation metadata.

The index is an exact exhaustive cosine scan over all chunks: corpus
scale (guideline PDFs) does not justify an ANN structure, and exactness
keeps retrieval oracle-testable. Persistence is a flat binary vector
file plus a JSON metadata sidecar.
"""

import json
import math
import struct
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import (
    DimensionMismatch,
    DuplicateDocId,
    EmbeddingFailed,
    EmptyIndex,
    OutOfRange,
    RerankerFailed,
    ZeroVector,
)
from .gateway import Gateway
from .numfmt import fixed

DEFAULT_CHUNK_SIZE = 1000
DEFAULT_OVERLAP = 200

INDEX_MAGIC = b"AGPVEC01"


@dataclass
class DocumentRecord:
    doc_id: str
    filename: str
    pages: List[Tuple[int, str]]  # (page_number, text), strictly increasing pages

    def __post_init__(self):
        nums = [p for p, _ in self.pages]
        if nums != sorted(set(nums)):
            raise ValueError("page numbers must be strictly increasing")

    @classmethod
    def from_json(cls, data: dict) -> "DocumentRecord":
        return cls(
            doc_id=data["doc_id"],
            filename=data["filename"],
            pages=[(int(p["page"]), p["text"]) for p in data["pages"]],
        )

    @classmethod
    def from_text(cls, doc_id: str, filename: str, text: str) -> "DocumentRecord":
        return cls(doc_id=doc_id, filename=filename, pages=[(1, text)])


@dataclass
class Chunk:
    chunk_id: str
    doc_id: str
    page_number: int
    char_span: Tuple[int, int]
    text: str
    filename: str = ""

    @property
    def source_label(self) -> str:
        return f"{self.filename} (page {self.page_number})"


@dataclass
class RetrievalHit:
    chunk: Chunk
    raw_score: float
    score_kind: str = "cosine"  # or "reranker"

    @property
    def relevance(self) -> float:
        return min(1.0, max(0.0, self.raw_score))

    @property
    def source_label(self) -> str:
        return self.chunk.source_label

    @property
    def relevance_display(self) -> str:
        return format_relevance(self.relevance)


def format_relevance(raw: float) -> str:
    """Display form "82.21% (0.8221)" used in citation listings."""
    if not (0.0 <= raw <= 1.0):
        raise OutOfRange(f"relevance {raw} outside [0, 1]")
    return f"{fixed(raw * 100, 2)}% ({fixed(raw, 4)})"


def chunk_pages(
    doc: DocumentRecord,
    chunk_size: int = DEFAULT_CHUNK_SIZE,
    overlap: int = DEFAULT_OVERLAP,
) -> List[Chunk]:
    """Fixed-size character windows, never crossing page boundaries."""
    if not (chunk_size > overlap >= 0):
        raise ValueError("require chunk_size > overlap >= 0")
    stride = chunk_size - overlap
    chunks: List[Chunk] = []
    for page_number, text in doc.pages:
        for start in range(0, len(text), stride):
            end = min(start + chunk_size, len(text))
            piece = text[start:end]
            if not piece:
                continue
            chunks.append(
                Chunk(
                    chunk_id=f"{doc.doc_id}:p{page_number}:{start}",
                    doc_id=doc.doc_id,
                    page_number=page_number,
                    char_span=(start, end),
                    text=piece,
                    filename=doc.filename,
                )
            )
    return chunks


def cosine_similarity(a: Sequence[float], b: Sequence[float]) -> float:
    if len(a) != len(b):
        raise DimensionMismatch(f"dims differ: {len(a)} vs {len(b)}")
    na = math.sqrt(sum(x * x for x in a))
    nb = math.sqrt(sum(x * x for x in b))
    if na == 0.0 or nb == 0.0:
        raise ZeroVector("cosine similarity undefined for zero vector")
    return sum(x * y for x, y in zip(a, b)) / (na * nb)


class VectorIndex:
    """Exact cosine index; many readers, single writer with atomic swap."""

    def __init__(self):
        self._lock = threading.Lock()
        self._chunks: List[Chunk] = []
        self._vectors: Optional[np.ndarray] = None  # (n, dim)

    def __len__(self) -> int:
        return len(self._chunks)

    @property
    def dim(self) -> Optional[int]:
        return None if self._vectors is None else int(self._vectors.shape[1])

    def ingest_document(
        self,
        doc: DocumentRecord,
        gateway: Gateway,
        chunk_size: int = DEFAULT_CHUNK_SIZE,
        overlap: int = DEFAULT_OVERLAP,
        replace: bool = False,
    ) -> int:
        """Chunk, embed and insert a document; returns the chunk count added."""
        existing_ids = {c.doc_id for c in self._chunks}
        if doc.doc_id in existing_ids and not replace:
            raise DuplicateDocId(f"doc_id {doc.doc_id!r} already ingested (pass replace)")
        chunks = chunk_pages(doc, chunk_size, overlap)
        if not chunks:
            if doc.doc_id in existing_ids:
                self._swap_out(doc.doc_id, [], None)
            return 0
        try:
            vectors = gateway.embed_texts([c.text for c in chunks])
        except Exception as exc:
            raise EmbeddingFailed(f"embedding chunks of {doc.doc_id!r} failed: {exc}") from exc
        mat = np.array([v.values for v in vectors], dtype=float)
        if self._vectors is not None and mat.shape[1] != self._vectors.shape[1]:
            raise DimensionMismatch(
                f"embedding dim {mat.shape[1]} != index dim {self._vectors.shape[1]}"
            )
        self._swap_out(doc.doc_id, chunks, mat)
        return len(chunks)

    def _swap_out(self, doc_id: str, new_chunks: List[Chunk], new_mat: Optional[np.ndarray]):
        with self._lock:
            keep = [i for i, c in enumerate(self._chunks) if c.doc_id != doc_id]
            chunks = [self._chunks[i] for i in keep]
            parts = []
            if self._vectors is not None and keep:
                parts.append(self._vectors[keep])
            if new_mat is not None and len(new_mat):
                parts.append(new_mat)
            self._chunks = chunks + new_chunks
            self._vectors = np.vstack(parts) if parts else None

    def search_topk(
        self,
        query: str,
        k: int,
        gateway: Gateway,
        use_reranker: bool = False,
    ) -> List[RetrievalHit]:
        """Embed the query, exhaustive cosine scan, optional rerank of top 4k."""
        if not self._chunks or self._vectors is None:
            raise EmptyIndex("no documents ingested")
        if k < 1:
            raise ValueError("k must be >= 1")
        try:
            qvec = gateway.embed_texts([query])[0]
        except Exception as exc:
            raise EmbeddingFailed(f"query embedding failed: {exc}") from exc
        q = np.asarray(qvec.values, dtype=float)
        if q.shape[0] != self._vectors.shape[1]:
            raise DimensionMismatch(
                f"query dim {q.shape[0]} != index dim {self._vectors.shape[1]}"
            )
        qn = np.linalg.norm(q)
        if qn == 0.0:
            raise ZeroVector("query embedding is a zero vector")
        norms = np.linalg.norm(self._vectors, axis=1)
        norms[norms == 0.0] = 1.0
        scores = (self._vectors @ q) / (norms * qn)
        # stable order on ties: by (-score, position)
        order = sorted(range(len(scores)), key=lambda i: (-scores[i], i))

        if use_reranker:
            cand = order[: max(k * 4, k)]
            try:
                rr = gateway.rerank_pairs(query, [self._chunks[i].text for i in cand])
                rescored = sorted(zip(cand, rr), key=lambda t: (-t[1], t[0]))
                return [
                    RetrievalHit(chunk=self._chunks[i], raw_score=float(s), score_kind="reranker")
                    for i, s in rescored[:k]
                ]
            except Exception:
                # fall back to cosine ordering; caller sees score_kind
                pass
        return [
            RetrievalHit(chunk=self._chunks[i], raw_score=float(scores[i]), score_kind="cosine")
            for i in order[:k]
        ]

    # --- persistence ---

    def save(self, vectors_path: str, metadata_path: str):
        meta = {
            "format": INDEX_MAGIC.decode("ascii"),
            "chunks": [
                {
                    "chunk_id": c.chunk_id,
                    "doc_id": c.doc_id,
                    "filename": c.filename,
                    "page_number": c.page_number,
                    "char_span": list(c.char_span),
                    "text": c.text,
                }
                for c in self._chunks
            ],
        }
        Path(metadata_path).write_text(json.dumps(meta), encoding="utf-8")
        with open(vectors_path, "wb") as f:
            f.write(INDEX_MAGIC)
            if self._vectors is None:
                f.write(struct.pack("<II", 0, 0))
            else:
                n, dim = self._vectors.shape
                f.write(struct.pack("<II", n, dim))
                f.write(self._vectors.astype("<f8").tobytes())

    @classmethod
    def load(cls, vectors_path: str, metadata_path: str) -> "VectorIndex":
        idx = cls()
        meta = json.loads(Path(metadata_path).read_text(encoding="utf-8"))
        if meta.get("format") != INDEX_MAGIC.decode("ascii"):
            raise ValueError("unrecognized index format tag")
        idx._chunks = [
            Chunk(
                chunk_id=c["chunk_id"],
                doc_id=c["doc_id"],
                filename=c.get("filename", ""),
                page_number=c["page_number"],
                char_span=tuple(c["char_span"]),
                text=c["text"],
            )
            for c in meta["chunks"]
        ]
        with open(vectors_path, "rb") as f:
            magic = f.read(len(INDEX_MAGIC))
            if magic != INDEX_MAGIC:
                raise ValueError("unrecognized vector file magic")
            n, dim = struct.unpack("<II", f.read(8))
            if n:
                data = np.frombuffer(f.read(n * dim * 8), dtype="<f8").reshape(n, dim)
                idx._vectors = data.astype(float)
        if idx._vectors is not None and len(idx._chunks) != idx._vectors.shape[0]:
            raise ValueError("vector count does not match chunk metadata")
        return idx
