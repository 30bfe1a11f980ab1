"""Hamming-ranking retrieval metrics for binary codes (MAP@R, P@r, P@K)."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np


@dataclass
class RetrievalReport:
    map_at_r: float
    precision_at_radius: float
    empty_radius_queries: int  # queries with no neighbour inside the radius (scored 0)
    precision_at_k: dict[int, float]
    R: int
    radius: int


def hamming_matrix(queries: np.ndarray, database: np.ndarray) -> np.ndarray:
    q = np.asarray(queries, dtype=np.int32)
    db = np.asarray(database, dtype=np.int32)
    # for {0,1} codes: d = |q| + |db| - 2 q.db
    return q.sum(1)[:, None] + db.sum(1)[None, :] - 2 * q @ db.T


def retrieval_metrics(
    db_codes,
    db_labels,
    query_codes,
    query_labels,
    R: int = 1000,
    radius: int = 2,
    top_k: Sequence[int] = (100, 500, 1000),
) -> RetrievalReport:
    """Rank the database by Hamming distance to each query, ties by index."""
    db = np.asarray(db_codes)
    q = np.asarray(query_codes)
    if db.size == 0 or db.shape[0] == 0:
        raise ValueError("empty database")
    if q.shape[0] == 0:
        raise ValueError("no queries")
    if db.shape[1] != q.shape[1]:
        raise ValueError("query and database codes differ in length")
    db_labels = np.asarray(db_labels)
    query_labels = np.asarray(query_labels)
    dist = hamming_matrix(q, db)
    order = np.argsort(dist, axis=1, kind="stable")
    relevant = db_labels[order] == query_labels[:, None]

    r = min(R, db.shape[0])
    rel_r = relevant[:, :r].astype(float)
    hits = np.cumsum(rel_r, axis=1)
    prec = hits / np.arange(1, r + 1)
    n_rel = rel_r.sum(axis=1)
    ap = np.where(n_rel > 0, (prec * rel_r).sum(axis=1) / np.maximum(n_rel, 1), 0.0)

    inside = dist <= radius
    n_inside = inside.sum(axis=1)
    rel_inside = (inside & (db_labels[None, :] == query_labels[:, None])).sum(axis=1)
    p_radius = np.where(n_inside > 0, rel_inside / np.maximum(n_inside, 1), 0.0)

    pk = {}
    for k in top_k:
        kk = min(int(k), db.shape[0])
        pk[int(k)] = float(relevant[:, :kk].mean())
    return RetrievalReport(
        float(ap.mean()), float(p_radius.mean()), int((n_inside == 0).sum()), pk, R, radius
    )
