"""Cancelable-template score distributions, EER and ROC.

Scores are normalized Hamming distances in [0, 1]; a probe is accepted when
its distance is at most the threshold.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..features import SubjectPopulation
from ..pipeline import UserKey, issue_key

SCENARIOS = ("unknown_key", "stolen_key")


class UndefinedEER(ValueError):
    pass


@dataclass(frozen=True)
class ScenarioConfig:
    scenario: str
    n_bits: int
    k_bits: int
    trials: int = 0
    seed: int = 0

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ValueError(f"scenario must be one of {SCENARIOS}")
        if self.k_bits > self.n_bits or self.n_bits % 8 or self.k_bits % 8:
            raise ValueError("need k_bits <= n_bits, both multiples of 8")


@dataclass
class ScoreSet:
    genuine: np.ndarray
    impostor: np.ndarray
    attacker_stolen: np.ndarray | None = None
    length: int | None = None  # bits compared; distances * length gives counts

    def impostors(self, scenario: str = "unknown_key") -> np.ndarray:
        if scenario == "stolen_key":
            if self.attacker_stolen is None:
                raise ValueError("score set has no stolen-key scores")
            return self.attacker_stolen
        if scenario != "unknown_key":
            raise ValueError(f"unknown scenario {scenario!r}")
        return self.impostor


def subject_keys(pop: SubjectPopulation, G: int, seed: int, reliability=None) -> list[UserKey]:
    """One reliability-ordered key per subject, seeded by (seed, subject index)."""
    rel = pop.channel.reliability() if reliability is None else reliability
    return [issue_key(pop.J, G, rel, seed=_derive(seed, 11, i)) for i in range(len(pop))]


def synthesized_key(J: int, G: int, seed: int, trial: int) -> UserKey:
    """An impostor's made-up key: uniform random positions, no reliability order."""
    return issue_key(J, G, None, seed=_derive(seed, 13, trial))


def _derive(seed: int, stream: int, index: int) -> int:
    return int(np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, stream, index]).generate_state(1, np.uint64)[0])


def _require_samples(pop: SubjectPopulation) -> None:
    if len(pop) < 2:
        raise ValueError("need at least 2 subjects")
    missing = [s for s in pop.subject_ids if s not in pop.samples or len(pop.samples[s]) < 2]
    if missing:
        raise ValueError(f"subjects without >= 2 samples: {missing[:3]}...")


def score_distributions(
    pop: SubjectPopulation, G: int, J: int | None = None, scenario: str = "unknown_key", seed: int = 0
) -> ScoreSet:
    """Genuine, unknown-key impostor and stolen-key attacker distances.

    Each subject enrolls sample 0 under its own key. Genuine probes are the
    subject's remaining samples under that key. Unknown-key impostors are
    every sample of every other subject under a freshly synthesized key;
    stolen-key attackers present the same samples under the victim's key.
    """
    if scenario not in SCENARIOS:
        raise ValueError(f"scenario must be one of {SCENARIOS}")
    J = pop.J if J is None else J
    if J != pop.J:
        raise ValueError(f"population has J={pop.J}, got J={J}")
    if G > J:
        raise ValueError(f"G={G} exceeds J={J}")
    _require_samples(pop)
    keys = subject_keys(pop, G, seed)
    samples = [pop.samples[s] for s in pop.subject_ids]
    enrolled = [samples[i][0][list(k.indices)] for i, k in enumerate(keys)]
    genuine, impostor, stolen = [], [], []
    trial = 0
    for a, key_a in enumerate(keys):
        idx_a = np.asarray(key_a.indices)
        ref = enrolled[a]
        genuine.append(np.count_nonzero(samples[a][1:, idx_a] != ref, axis=1))
        for b in range(len(keys)):
            if b == a:
                continue
            stolen.append(np.count_nonzero(samples[b][:, idx_a] != ref, axis=1))
            fake = synthesized_key(J, G, seed, trial)
            trial += 1
            impostor.append(np.count_nonzero(samples[b][:, list(fake.indices)] != ref, axis=1))
    return ScoreSet(
        np.concatenate(genuine) / G,
        np.concatenate(impostor) / G,
        np.concatenate(stolen) / G,
        length=G,
    )


def error_rates(genuine, impostor) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Thresholds with FAR and FRR at each.

    The first threshold sits just below every score (FAR = 0, FRR = 1);
    the rest are the distinct observed scores.
    """
    g = np.sort(np.asarray(genuine, dtype=float))
    im = np.sort(np.asarray(impostor, dtype=float))
    if g.size == 0 or im.size == 0:
        raise UndefinedEER("genuine and impostor scores must both be non-empty")
    values = np.unique(np.concatenate([g, im]))
    span = values[-1] - values[0]
    below = values[0] - (span if span > 0 else 1.0) * 1e-6
    thresholds = np.concatenate([[below], values])
    far = np.searchsorted(im, thresholds, side="right") / im.size
    frr = 1.0 - np.searchsorted(g, thresholds, side="right") / g.size
    return thresholds, far, frr


def eer(scores: ScoreSet | tuple, scenario: str = "unknown_key") -> tuple[float, float]:
    """Equal error rate and its threshold, interpolating linearly between thresholds."""
    genuine, impostor = _pair(scores, scenario)
    if np.unique(np.concatenate([np.ravel(genuine), np.ravel(impostor)])).size < 2:
        raise UndefinedEER("all scores are identical")
    th, far, frr = error_rates(genuine, impostor)
    diff = far - frr  # rises from -1 to +1
    i = int(np.argmax(diff >= 0))
    if i == 0:
        return float(far[0]), float(th[0])
    d0, d1 = diff[i - 1], diff[i]
    lam = 0.0 if d1 == d0 else -d0 / (d1 - d0)
    rate = far[i - 1] + lam * (far[i] - far[i - 1])
    return float(rate), float(th[i - 1] + lam * (th[i] - th[i - 1]))


def roc(scores: ScoreSet | tuple, scenario: str = "unknown_key") -> np.ndarray:
    """(FAR, GAR) points, FAR ascending, from (0, .) up to (1, 1)."""
    genuine, impostor = _pair(scores, scenario)
    _, far, frr = error_rates(genuine, impostor)
    pts = np.column_stack([far, 1.0 - frr])
    if pts[-1, 0] < 1.0 or pts[-1, 1] < 1.0:
        pts = np.vstack([pts, [1.0, 1.0]])
    return pts


def gar_at_far(points: np.ndarray, target_far: float) -> float:
    """Highest GAR among ROC points whose FAR does not exceed the target."""
    ok = points[:, 0] <= target_far + 1e-12
    return float(points[ok, 1].max()) if ok.any() else 0.0


def roc_auc(points: np.ndarray) -> float:
    return float(np.trapezoid(points[:, 1], points[:, 0]))


def _pair(scores, scenario):
    if isinstance(scores, ScoreSet):
        return scores.genuine, scores.impostors(scenario)
    genuine, impostor = scores
    return np.asarray(genuine, dtype=float), np.asarray(impostor, dtype=float)
