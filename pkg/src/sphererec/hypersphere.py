"""Hypersphere primitives: embedding tables, normalization, pairwise distances.

Raw embeddings are stored unnormalized; losses normalize on the fly so
gradients flow through the normalization. Checkpoints store one table per
file: a fixed binary header followed by row-major little-endian float32
values, plus a JSON sidecar written alongside the pair of tables.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.spatial.distance import pdist

MIN_ROW_NORM = 1e-12

_MAGIC = b"SPHR"
_VERSION = 1
_HEADER = struct.Struct("<4sIIII")
_ROLES = ("user", "item")


@dataclass(eq=False)
class EmbeddingTable:
    """A rows x dim matrix of raw (unnormalized) embedding vectors."""

    rows: int
    dim: int
    values: np.ndarray

    def __post_init__(self):
        if self.dim < 2:
            raise ValueError(f"dim must be >= 2, got {self.dim}")
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape != (self.rows, self.dim):
            raise ValueError(f"values shape {self.values.shape} != ({self.rows}, {self.dim})")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("embedding table contains non-finite entries")

    def copy(self) -> "EmbeddingTable":
        return EmbeddingTable(self.rows, self.dim, self.values.copy())


def init_xavier(rows: int, dim: int, seed: int) -> EmbeddingTable:
    """Xavier-uniform initialization with fan_in = fan_out = dim.

    Entries are i.i.d. uniform on [-a, a] with a = sqrt(6 / (dim + dim));
    deterministic for a given seed.
    """
    if rows < 1:
        raise ValueError(f"rows must be >= 1, got {rows}")
    if dim < 2:
        raise ValueError(f"dim must be >= 2, got {dim}")
    bound = np.sqrt(6.0 / (dim + dim))
    values = np.random.default_rng(seed).uniform(-bound, bound, size=(rows, dim))
    return EmbeddingTable(rows=rows, dim=dim, values=values)


def normalize_with_norms(vectors: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Return (unit rows, original norms); raises on any near-zero row."""
    vectors = np.asarray(vectors, dtype=np.float64)
    norms = np.linalg.norm(vectors, axis=1)
    bad = np.flatnonzero(norms < MIN_ROW_NORM)
    if bad.size:
        raise ValueError(f"cannot normalize zero-norm row {int(bad[0])}")
    return vectors / norms[:, None], norms


def l2_normalize(vectors: np.ndarray) -> np.ndarray:
    """Divide each row by its L2 norm, mapping rows onto the unit sphere."""
    unit, _ = normalize_with_norms(vectors)
    return unit


def pairwise_sq_dists(vectors: np.ndarray) -> np.ndarray:
    """Condensed squared distances over unordered distinct row pairs (j < k).

    For unit rows each entry equals 2 - 2<x_j, x_k> and lies in [0, 4]. Length
    is B(B-1)/2.
    """
    vectors = np.asarray(vectors, dtype=np.float64)
    if vectors.shape[0] < 2:
        raise ValueError(f"need at least 2 vectors, got {vectors.shape[0]}")
    return pdist(vectors, "sqeuclidean")


def batch_mean(vectors: np.ndarray) -> np.ndarray:
    """Arithmetic mean over rows."""
    vectors = np.asarray(vectors, dtype=np.float64)
    if vectors.shape[0] < 1:
        raise ValueError("batch_mean of an empty batch")
    return vectors.mean(axis=0)


def config_hash(config: dict) -> str:
    """Short stable hash of a JSON-serializable config dict."""
    payload = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:12]


def save_embedding_table(path, table: EmbeddingTable, role: str) -> None:
    """Write one table: header (magic, version, rows, dim, role) + f32 rows."""
    if role not in _ROLES:
        raise ValueError(f"role must be one of {_ROLES}, got {role!r}")
    header = _HEADER.pack(_MAGIC, _VERSION, table.rows, table.dim, _ROLES.index(role))
    payload = table.values.astype("<f4").tobytes(order="C")
    Path(path).write_bytes(header + payload)


def load_embedding_table(path) -> tuple[EmbeddingTable, str]:
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise ValueError(f"{path}: truncated embedding file")
    magic, version, rows, dim, role_code = _HEADER.unpack_from(raw)
    if magic != _MAGIC:
        raise ValueError(f"{path}: not an embedding checkpoint (bad magic)")
    if version != _VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    if role_code >= len(_ROLES):
        raise ValueError(f"{path}: unknown role code {role_code}")
    expected = _HEADER.size + rows * dim * 4
    if len(raw) != expected:
        raise ValueError(f"{path}: expected {expected} bytes, found {len(raw)}")
    values = np.frombuffer(raw, dtype="<f4", offset=_HEADER.size).reshape(rows, dim)
    return EmbeddingTable(rows=rows, dim=dim, values=values.astype(np.float64)), _ROLES[role_code]


def save_checkpoint(directory, user_table: EmbeddingTable, item_table: EmbeddingTable,
                    seed: int, config: dict) -> None:
    """Write user.emb + item.emb plus a JSON sidecar with seed and config hash."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    save_embedding_table(directory / "user.emb", user_table, "user")
    save_embedding_table(directory / "item.emb", item_table, "item")
    sidecar = {"seed": seed, "config_hash": config_hash(config), "config": config}
    (directory / "checkpoint.json").write_text(json.dumps(sidecar, indent=2) + "\n", encoding="utf-8")


def load_checkpoint(directory) -> tuple[EmbeddingTable, EmbeddingTable, dict]:
    """Read back the (user, item, sidecar) triple written by save_checkpoint."""
    directory = Path(directory)
    user_table, role = load_embedding_table(directory / "user.emb")
    if role != "user":
        raise ValueError(f"{directory}/user.emb has role {role!r}, expected 'user'")
    item_table, role = load_embedding_table(directory / "item.emb")
    if role != "item":
        raise ValueError(f"{directory}/item.emb has role {role!r}, expected 'item'")
    sidecar = json.loads((directory / "checkpoint.json").read_text(encoding="utf-8"))
    return user_table, item_table, sidecar
