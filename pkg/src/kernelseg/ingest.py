"""Dataset I/O: JSONL and CSV round-trips plus embedding retrieval over HTTP."""

from __future__ import annotations

import csv
import json
import logging
import os
import random
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import requests

from .kernels import EmbeddingSequence
from .segmentation import Segmentation

logger = logging.getLogger(__name__)

_RETRYABLE = {429}


@dataclass(frozen=True)
class DatasetEntry:
    """One document: its vectors, optional gold boundaries, optional texts."""

    sequence: EmbeddingSequence
    gold: Segmentation | None = None
    texts: tuple[str, ...] | None = None

    def __post_init__(self):
        if self.gold is not None and self.gold.T != self.sequence.T:
            raise ValueError("gold segmentation length does not match the sequence")
        if self.texts is not None and len(self.texts) != self.sequence.T:
            raise ValueError("text count does not match the sequence length")


@dataclass(frozen=True)
class Dataset:
    """A named collection of documents."""

    name: str
    entries: tuple[DatasetEntry, ...]


def load_jsonl(path) -> DatasetEntry:
    """Read one document from a JSONL file, one vector per line.

    Each line is an object {"vec": [numbers], "text"?: str,
    "boundary_after"?: bool}. Vectors must share a dimension. A gold
    segmentation is attached when at least one row carries a boundary_after
    key; a true flag on the final row is rejected since it would place a
    boundary past the end. Malformed rows raise ValueError with their
    1-based line number. An empty file yields an empty sequence.
    """
    vecs: list[np.ndarray] = []
    texts: list[str] = []
    flags: list[bool] = []
    saw_text = saw_flag = False
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"line {lineno}: invalid JSON ({exc})") from exc
            if not isinstance(row, dict) or "vec" not in row:
                raise ValueError(f"line {lineno}: expected an object with a 'vec' field")
            vec = np.asarray(row["vec"], dtype=np.float64)
            if vec.ndim != 1 or vec.size < 1:
                raise ValueError(f"line {lineno}: 'vec' must be a nonempty flat list")
            if not np.all(np.isfinite(vec)):
                raise ValueError(f"line {lineno}: 'vec' contains non-finite values")
            if vecs and vec.shape != vecs[0].shape:
                raise ValueError(
                    f"line {lineno}: dimension {vec.size} differs from first row ({vecs[0].size})"
                )
            if "text" in row:
                if not isinstance(row["text"], str):
                    raise ValueError(f"line {lineno}: 'text' must be a string")
                saw_text = True
            texts.append(row.get("text", ""))
            if "boundary_after" in row:
                if not isinstance(row["boundary_after"], bool):
                    raise ValueError(f"line {lineno}: 'boundary_after' must be a boolean")
                saw_flag = True
            flags.append(bool(row.get("boundary_after", False)))
            vecs.append(vec)
    if not vecs:
        return DatasetEntry(sequence=EmbeddingSequence(np.empty((0, 0))))
    if flags[-1]:
        raise ValueError("boundary_after on the final row has nothing to separate")
    seq = EmbeddingSequence(np.vstack(vecs))
    gold = None
    if saw_flag:
        gold = Segmentation(seq.T, tuple(i + 1 for i, f in enumerate(flags) if f))
    return DatasetEntry(
        sequence=seq,
        gold=gold,
        texts=tuple(texts) if saw_text else None,
    )


def save_jsonl(path, seq: EmbeddingSequence, gold: Segmentation | None = None, texts=None) -> None:
    """Write a document as JSONL, the inverse of load_jsonl.

    Floats serialize at full precision, so a reload is bit-exact. When gold
    is given, every row carries an explicit boundary_after flag (so that a
    boundary-free gold survives the round trip).
    """
    if gold is not None and gold.T != seq.T:
        raise ValueError("gold segmentation length does not match the sequence")
    if texts is not None and len(texts) != seq.T:
        raise ValueError("text count does not match the sequence length")
    cps = set(gold.change_points) if gold is not None else set()
    with open(path, "w", encoding="utf-8") as fh:
        for i in range(seq.T):
            row: dict = {"vec": seq.data[i].tolist()}
            if texts is not None:
                row["text"] = texts[i]
            if gold is not None:
                row["boundary_after"] = (i + 1) in cps
            fh.write(json.dumps(row) + "\n")


def load_csv_matrix(path, skip_header: bool = False) -> EmbeddingSequence:
    """Read a numeric CSV matrix, one vector per row.

    Raises ValueError naming the offending row/column on ragged or
    non-numeric input. Row numbers are 1-based and count the header when
    skip_header is set.
    """
    vecs: list[list[float]] = []
    width = None
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        for rowno, row in enumerate(reader, start=1):
            if rowno == 1 and skip_header:
                continue
            if not row:
                continue
            if width is None:
                width = len(row)
            elif len(row) != width:
                raise ValueError(f"row {rowno}: expected {width} columns, got {len(row)}")
            parsed = []
            for colno, cell in enumerate(row, start=1):
                try:
                    parsed.append(float(cell))
                except ValueError as exc:
                    raise ValueError(f"row {rowno}, column {colno}: not a number: {cell!r}") from exc
            vecs.append(parsed)
    if not vecs:
        return EmbeddingSequence(np.empty((0, 0)))
    arr = np.asarray(vecs, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise ValueError("matrix contains non-finite values")
    return EmbeddingSequence(arr)


def save_csv_matrix(path, seq: EmbeddingSequence) -> None:
    """Write vectors as CSV with 17 significant digits, enough for an exact reload."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        for i in range(seq.T):
            writer.writerow([f"{v:.17g}" for v in seq.data[i]])


def normalize_rows(seq: EmbeddingSequence) -> EmbeddingSequence:
    """Scale every row to unit Euclidean norm. Idempotent; zero rows are rejected."""
    if seq.T == 0:
        return seq
    norms = np.sqrt((seq.data * seq.data).sum(axis=1))
    zero = np.flatnonzero(norms == 0.0)
    if zero.size:
        raise ValueError(f"cannot normalize zero vector at row {int(zero[0])}")
    return EmbeddingSequence(seq.data / norms[:, None])


@dataclass(frozen=True)
class EmbedServiceConfig:
    """Where and how to fetch embeddings.

    token_env names the environment variable holding the bearer token; the
    token value itself is never logged. response_path locates the vectors in
    the response JSON: the part before "[]" walks to the per-input list, the
    part after walks inside each item ("data[].embedding" fits the common
    {"data": [{"embedding": [...]}]} shape).
    """

    endpoint: str
    model: str
    token_env: str = "EMBED_API_TOKEN"
    batch_size: int = 100
    max_retries: int = 3
    timeout: float = 30.0
    response_path: str = "data[].embedding"
    backoff_base: float = 1.0
    parallel_connections: int = 1

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be at least 1")
        if self.max_retries < 0:
            raise ValueError("max_retries must be nonnegative")
        if not self.timeout > 0:
            raise ValueError("timeout must be positive")
        if "[]" not in self.response_path:
            raise ValueError("response_path must contain '[]' marking the per-input list")
        if self.backoff_base < 0:
            raise ValueError("backoff_base must be nonnegative")
        if self.parallel_connections < 1:
            raise ValueError("parallel_connections must be at least 1")


def _walk(node, dotted: str, context: str):
    for key in filter(None, dotted.strip(".").split(".")):
        if not isinstance(node, dict) or key not in node:
            raise RuntimeError(f"response is missing {key!r} under {context!r}")
        node = node[key]
    return node


def _extract_vectors(payload, response_path: str, expected: int) -> list:
    head, tail = response_path.split("[]", 1)
    items = _walk(payload, head, response_path)
    if not isinstance(items, list):
        raise RuntimeError(f"response field {head!r} is not a list")
    if len(items) != expected:
        raise RuntimeError(f"server returned {len(items)} embeddings for {expected} inputs")
    return [_walk(item, tail, response_path) for item in items]


def _fetch_batch(config: EmbedServiceConfig, token: str, batch: list[str]) -> list:
    delay = config.backoff_base
    attempts = config.max_retries + 1
    for attempt in range(attempts):
        resp = requests.post(
            config.endpoint,
            json={"model": config.model, "input": list(batch)},
            headers={"Authorization": f"Bearer {token}"},
            timeout=config.timeout,
        )
        if resp.status_code == 200:
            return _extract_vectors(resp.json(), config.response_path, len(batch))
        retryable = resp.status_code in _RETRYABLE or 500 <= resp.status_code < 600
        if not retryable or attempt == attempts - 1:
            raise RuntimeError(
                f"embedding request failed with HTTP {resp.status_code} "
                f"after {attempt + 1} attempt(s)"
            )
        logger.debug("HTTP %d on batch of %d, retrying in ~%.2fs", resp.status_code, len(batch), delay)
        time.sleep(delay * (1.0 + random.random()))
        delay *= 2.0
    raise AssertionError("unreachable")


def fetch_embeddings(config: EmbedServiceConfig, texts) -> EmbeddingSequence:
    """Fetch embeddings for texts in batches, preserving input order.

    POSTs {"model": ..., "input": [batch]} with a bearer token read from the
    environment. 429 and 5xx responses are retried with exponential backoff
    (base config.backoff_base seconds, doubling, with jitter); any other
    failure aborts immediately. The call is all-or-error: no partial results.
    An empty text list returns an empty sequence without any request.

    Raises:
        ValueError: the token environment variable is unset.
        RuntimeError: HTTP failure after retries, a count mismatch, or an
            inconsistent embedding dimension across batches.
    """
    texts = [str(t) for t in texts]
    if not texts:
        return EmbeddingSequence(np.empty((0, 0)))
    token = os.environ.get(config.token_env)
    if token is None:
        raise ValueError(f"environment variable {config.token_env!r} is not set")
    batches = [texts[i : i + config.batch_size] for i in range(0, len(texts), config.batch_size)]
    logger.debug("fetching %d texts in %d batch(es)", len(texts), len(batches))
    if config.parallel_connections > 1:
        with ThreadPoolExecutor(max_workers=config.parallel_connections) as pool:
            results = list(pool.map(lambda b: _fetch_batch(config, token, b), batches))
    else:
        results = [_fetch_batch(config, token, b) for b in batches]
    vectors: list = []
    dim = None
    for result in results:
        for vec in result:
            arr = np.asarray(vec, dtype=np.float64)
            if arr.ndim != 1 or arr.size < 1:
                raise RuntimeError("server returned a malformed embedding vector")
            if dim is None:
                dim = arr.size
            elif arr.size != dim:
                raise RuntimeError(
                    f"embedding dimension changed across batches: {arr.size} vs {dim}"
                )
            vectors.append(arr)
    return EmbeddingSequence(np.vstack(vectors))
