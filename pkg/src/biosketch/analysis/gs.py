"""Genuine-accept-rate versus security (G-S) curves over the RS code dimension."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..features import SubjectPopulation
from ..pipeline import secure_sketch_many
from ..rs import RsCodeParams
from .scores import SCENARIOS, _require_samples, subject_keys, synthesized_key


@dataclass(frozen=True)
class GsPoint:
    k_bits: int
    gar: float
    far: float
    genuine_trials: int
    impostor_trials: int
    # fraction of sketches computed by a successful bounded-distance decode
    decoded_rate: float


@dataclass
class GsCurve:
    n_bits: int
    scenario: str
    points: list[GsPoint] = field(default_factory=list)

    def __post_init__(self):
        ks = [p.k_bits for p in self.points]
        if any(b <= a for a, b in zip(ks, ks[1:])):
            raise ValueError("k values must be strictly increasing")

    def gar(self, k_bits: int) -> float:
        for p in self.points:
            if p.k_bits == k_bits:
                return p.gar
        raise KeyError(k_bits)

    def rows(self) -> list[tuple[int, float, float]]:
        return [(p.k_bits, p.gar, p.far) for p in self.points]


def gs_curve(
    pop: SubjectPopulation,
    n_bits: int,
    k_symbols: Sequence[int],
    scenario: str = "stolen_key",
    seed: int = 0,
    on_failure: str = "systematic",
    impostor_sample: int = 1,
) -> GsCurve:
    """Enroll every subject's sample 0, then probe for each K.

    Genuine probes: the subject's other samples with its own key. Impostor
    probes: sample ``impostor_sample`` of every other subject, presented
    with the victim's key (stolen) or a synthesized key (unknown).
    """
    if scenario not in SCENARIOS:
        raise ValueError(f"scenario must be one of {SCENARIOS}")
    if n_bits % 8 or n_bits > pop.J:
        raise ValueError(f"n_bits={n_bits} must be a multiple of 8 and at most J={pop.J}")
    _require_samples(pop)
    N = n_bits // 8
    keys = subject_keys(pop, n_bits, seed)
    samples = [pop.samples[s] for s in pop.subject_ids]
    S = len(keys)

    enroll_t = np.stack([samples[i][0][list(keys[i].indices)] for i in range(S)])
    genuine_owner, genuine_t = [], []
    for i in range(S):
        rows = samples[i][1:][:, list(keys[i].indices)]
        genuine_t.append(rows)
        genuine_owner.extend([i] * len(rows))
    impostor_owner, impostor_t = [], []  # victim index, template
    trial = 0
    for a in range(S):
        for b in range(S):
            if a == b:
                continue
            row = samples[b][min(impostor_sample, len(samples[b]) - 1)]
            if scenario == "stolen_key":
                idx = keys[a].indices
            else:
                idx = synthesized_key(pop.J, n_bits, seed, trial).indices
                trial += 1
            impostor_owner.append(a)
            impostor_t.append(row[list(idx)])
    genuine_t = np.vstack(genuine_t)
    impostor_t = np.stack(impostor_t)
    g_owner, i_owner = np.array(genuine_owner), np.array(impostor_owner)

    curve = GsCurve(n_bits, scenario)
    for K in sorted(set(int(k) for k in k_symbols)):
        params = RsCodeParams(N, K)
        e_msg, e_ok = secure_sketch_many(enroll_t, params, on_failure)
        g_msg, g_ok = secure_sketch_many(genuine_t, params, on_failure)
        i_msg, i_ok = secure_sketch_many(impostor_t, params, on_failure)
        # digest equality is message equality for a fixed K
        g_hit = (g_msg == e_msg[g_owner]).all(axis=1)
        i_hit = (i_msg == e_msg[i_owner]).all(axis=1)
        if on_failure == "strict":
            g_hit &= g_ok & e_ok[g_owner]
            i_hit &= i_ok & e_ok[i_owner]
        decoded = (e_ok.sum() + g_ok.sum() + i_ok.sum()) / (len(e_ok) + len(g_ok) + len(i_ok))
        curve.points.append(
            GsPoint(8 * K, float(g_hit.mean()), float(i_hit.mean()), len(g_hit), len(i_hit), float(decoded))
        )
    return curve
