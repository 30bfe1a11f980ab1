"""Unlinkability of protected templates across databases.

Local measure ``D(s) = max(0, 2 * w*LR(s) / (1 + w*LR(s)) - 1)`` with
``LR(s) = p(s | mated) / p(s | non-mated)`` and prior ratio ``w``; the
global measure is ``D_sys = sum_s D(s) p(s | mated) ds``. Densities come
from equal-width histograms over the observed score range with add-one
smoothing of both histograms for the likelihood ratio.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..features import SubjectPopulation
from ..pipeline import issue_key, secure_sketch_many
from ..rs import RsCodeParams
from .scores import _derive


@dataclass
class LinkabilityReport:
    bin_edges: np.ndarray
    d_local: np.ndarray  # D(s) per bin
    mated_density: np.ndarray  # unsmoothed p(s | mated), integrates to 1
    nonmated_density: np.ndarray
    mated_counts: np.ndarray
    nonmated_counts: np.ndarray
    d_sys: float
    omega: float = 1.0

    @property
    def bin_centres(self) -> np.ndarray:
        return (self.bin_edges[:-1] + self.bin_edges[1:]) / 2

    def rows(self) -> list[tuple[float, float]]:
        return list(zip(self.bin_centres.tolist(), self.d_local.tolist()))


def linkability(mated, non_mated, bins: int = 50, omega: float = 1.0) -> LinkabilityReport:
    mated = np.asarray(mated, dtype=float)
    non_mated = np.asarray(non_mated, dtype=float)
    if mated.size == 0 or non_mated.size == 0:
        raise ValueError("mated and non-mated scores must be non-empty")
    lo = min(mated.min(), non_mated.min())
    hi = max(mated.max(), non_mated.max())
    if hi <= lo:
        hi = lo + 1.0
    edges = np.linspace(lo, hi, bins + 1)
    hm, _ = np.histogram(mated, edges)
    hn, _ = np.histogram(non_mated, edges)
    width = np.diff(edges)
    pm_smooth = (hm + 1) / (hm.sum() + bins)
    pn_smooth = (hn + 1) / (hn.sum() + bins)
    lr = omega * pm_smooth / pn_smooth
    d = np.clip(2 * lr / (1 + lr) - 1, 0.0, 1.0)
    mated_density = hm / (hm.sum() * width)
    d_sys = float(np.clip(np.sum(d * mated_density * width), 0.0, 1.0))
    return LinkabilityReport(edges, d, mated_density, hn / (hn.sum() * width), hm, hn, d_sys, omega)


def linkage_scores(
    pop: SubjectPopulation,
    params: RsCodeParams,
    num_databases: int = 6,
    seed: int = 0,
    on_failure: str = "systematic",
) -> tuple[np.ndarray, np.ndarray]:
    """Normalized Hamming distances between sketches across transformed databases.

    Database ``d`` holds, for every subject, the sketch of sample
    ``d mod samples`` under a key issued for that database. Mated pairs:
    same subject, two databases. Non-mated: different subjects, two databases.
    """
    if num_databases < 2:
        raise ValueError("need at least 2 databases")
    rel = pop.channel.reliability()
    S = len(pop)
    sketches = np.zeros((num_databases, S, params.k_bits), dtype=np.uint8)
    for d in range(num_databases):
        templates = []
        for i, sid in enumerate(pop.subject_ids):
            rows = pop.samples.get(sid)
            feature = pop.references[i] if rows is None or len(rows) == 0 else rows[d % len(rows)]
            key = issue_key(pop.J, params.n_bits, rel, seed=_derive(seed, 17 + d, i))
            templates.append(feature[list(key.indices)])
        # undecodable rows keep their systematic bits in either mode: distance needs a sketch
        sketches[d] = secure_sketch_many(np.stack(templates), params, on_failure)[0]
    mated, non_mated = [], []
    for d1 in range(num_databases):
        for d2 in range(d1 + 1, num_databases):
            # (S, S) distance matrix between database d1 and d2
            dist = (sketches[d1][:, None, :] != sketches[d2][None, :, :]).sum(axis=2) / params.k_bits
            mated.append(np.diag(dist))
            non_mated.append(dist[~np.eye(S, dtype=bool)])
    return np.concatenate(mated), np.concatenate(non_mated)


def unlinkability(
    pop: SubjectPopulation,
    params: RsCodeParams,
    num_databases: int = 6,
    seed: int = 0,
    bins: int = 50,
    omega: float = 1.0,
    on_failure: str = "systematic",
) -> LinkabilityReport:
    mated, non_mated = linkage_scores(pop, params, num_databases, seed, on_failure)
    return linkability(mated, non_mated, bins, omega)
