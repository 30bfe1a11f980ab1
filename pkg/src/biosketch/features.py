"""Binary joint feature vectors: synthesis from a per-bit channel model and file I/O.

Bits are stored as ``{0, 1}``. A hashing layer emitting ``{-1, +1}`` maps
``-1 -> 0`` at this boundary (see :func:`from_signed`).
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

DEFAULT_J = 1024


class FeatureFormatError(ValueError):
    """Malformed feature file. ``line`` is 1-based when known."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"{message} at line {line}" if line is not None else message)


class EstimationError(ValueError):
    pass


@dataclass(frozen=True)
class FeatureVector:
    bits: np.ndarray
    subject_id: str
    sample_id: str | None = None

    def __post_init__(self):
        bits = np.asarray(self.bits)
        if bits.ndim != 1:
            raise ValueError("feature bits must be one-dimensional")
        if bits.size and not np.isin(bits, (0, 1)).all():
            raise ValueError("feature bits must be 0 or 1")
        object.__setattr__(self, "bits", bits.astype(np.uint8))

    @property
    def J(self) -> int:
        return int(self.bits.size)

    def bitstring(self) -> str:
        return "".join("1" if b else "0" for b in self.bits)


def from_signed(values: Sequence[float]) -> np.ndarray:
    """Map hashing-layer signs to bits: negative -> 0, otherwise 1."""
    return (np.asarray(values) >= 0).astype(np.uint8)


@dataclass(frozen=True)
class BitChannelModel:
    """Per-bit genuine flip and impostor disagreement probabilities."""

    p_genuine: np.ndarray
    p_impostor: np.ndarray

    def __post_init__(self):
        pg = np.asarray(self.p_genuine, dtype=float)
        pi = np.asarray(self.p_impostor, dtype=float)
        if pg.shape != pi.shape or pg.ndim != 1:
            raise ValueError("p_genuine and p_impostor must be 1-d arrays of equal length")
        for name, p in (("p_genuine", pg), ("p_impostor", pi)):
            if not np.all((p >= 0) & (p <= 1)):
                raise ValueError(f"{name} must lie in [0, 1]")
        object.__setattr__(self, "p_genuine", pg)
        object.__setattr__(self, "p_impostor", pi)

    @property
    def J(self) -> int:
        return int(self.p_genuine.size)

    @classmethod
    def uniform(cls, J: int = DEFAULT_J, p_genuine: float = 0.05, p_impostor: float = 0.5):
        return cls(np.full(J, p_genuine), np.full(J, p_impostor))

    @classmethod
    def beta_profile(
        cls,
        J: int = DEFAULT_J,
        mean_genuine: float = 0.05,
        concentration: float = 10.0,
        p_impostor: float = 0.5,
        seed: int = 0,
    ):
        """Heterogeneous genuine flip rates drawn from Beta with the given mean.

        Real extractor bits differ in stability; a small ``concentration``
        gives a long tail of unreliable bits and many near-perfect ones.
        """
        a = mean_genuine * concentration
        b = (1 - mean_genuine) * concentration
        pg = np.random.default_rng(seed).beta(a, b, size=J)
        return cls(pg, np.full(J, p_impostor))

    def reliability(self) -> np.ndarray:
        """Per-bit reliability score ``(1 - p_genuine) * p_impostor``."""
        return (1.0 - self.p_genuine) * self.p_impostor


@dataclass
class SubjectPopulation:
    subject_ids: list[str]
    references: np.ndarray  # (subjects, J) uint8
    channel: BitChannelModel
    rng_seed: int = 0
    samples: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        if len(set(self.subject_ids)) != len(self.subject_ids):
            raise ValueError("subject ids must be unique")
        self.references = np.asarray(self.references, dtype=np.uint8)
        if self.references.shape[0] != len(self.subject_ids):
            raise ValueError("one reference per subject required")
        if self.references.shape[1] != self.channel.J:
            raise ValueError("reference dimension does not match channel")
        self._index = {s: i for i, s in enumerate(self.subject_ids)}

    @property
    def J(self) -> int:
        return int(self.references.shape[1])

    def __len__(self) -> int:
        return len(self.subject_ids)

    def index(self, subject_id: str) -> int:
        try:
            return self._index[subject_id]
        except KeyError:
            raise KeyError(f"unknown subject {subject_id!r}") from None

    def reference(self, subject_id: str) -> FeatureVector:
        return FeatureVector(self.references[self.index(subject_id)], subject_id, "reference")

    def sample_matrix(self, subject_id: str) -> np.ndarray:
        self.index(subject_id)
        if subject_id not in self.samples:
            raise KeyError(f"no samples drawn for subject {subject_id!r}")
        return self.samples[subject_id]

    def iter_samples(self) -> Iterable[FeatureVector]:
        for sid in self.subject_ids:
            for j, row in enumerate(self.samples.get(sid, ())):
                yield FeatureVector(row, sid, str(j))


def _subject_rng(seed: int, subject_index: int, stream: int) -> np.random.Generator:
    return np.random.default_rng([int(seed) & 0xFFFFFFFFFFFFFFFF, stream, subject_index])


def _correlation_flip(p_impostor: np.ndarray) -> np.ndarray:
    # references = shared centre XOR Bernoulli(q) gives pairwise disagreement 2q(1-q)
    if np.any(p_impostor > 0.5):
        raise ValueError("synthesis supports p_impostor <= 0.5 only")
    return (1.0 - np.sqrt(np.clip(1.0 - 2.0 * p_impostor, 0.0, 1.0))) / 2.0


def synth_population(
    num_subjects: int,
    J: int = DEFAULT_J,
    channel: BitChannelModel | None = None,
    seed: int = 0,
    samples_per_subject: int = 0,
) -> SubjectPopulation:
    """Draw reference vectors (and optionally noisy samples) for a synthetic cohort.

    With ``p_impostor = 0.5`` everywhere the references are i.i.d. uniform over
    ``{0,1}^J``; smaller values correlate subjects through a shared centre vector.
    """
    if num_subjects < 1 or J < 1:
        raise ValueError("need num_subjects >= 1 and J >= 1")
    channel = channel if channel is not None else BitChannelModel.uniform(J)
    if channel.J != J:
        raise ValueError(f"channel has J={channel.J}, expected {J}")
    rng = np.random.default_rng([int(seed) & 0xFFFFFFFFFFFFFFFF, 0])
    q = _correlation_flip(channel.p_impostor)
    if np.all(q == 0.5):
        refs = rng.integers(0, 2, size=(num_subjects, J), dtype=np.uint8)
    else:
        centre = rng.integers(0, 2, size=J, dtype=np.uint8)
        refs = centre[None, :] ^ (rng.random((num_subjects, J)) < q[None, :]).astype(np.uint8)
    width = len(str(num_subjects - 1))
    ids = [f"s{i:0{width}d}" for i in range(num_subjects)]
    pop = SubjectPopulation(ids, refs, channel, seed)
    if samples_per_subject:
        for i, sid in enumerate(ids):
            pop.samples[sid] = _flip(refs[i], channel.p_genuine, samples_per_subject, _subject_rng(seed, i, 1))
    return pop


def _flip(reference: np.ndarray, p: np.ndarray, count: int, rng: np.random.Generator) -> np.ndarray:
    noise = rng.random((count, reference.size)) < p[None, :]
    return reference[None, :] ^ noise.astype(np.uint8)


def sample_genuine(pop: SubjectPopulation, subject_id: str, count: int, seed: int) -> list[FeatureVector]:
    """Noisy re-acquisitions of one subject: bit i flips with probability ``p_genuine[i]``."""
    i = pop.index(subject_id)
    rows = _flip(pop.references[i], pop.channel.p_genuine, count, _subject_rng(seed, i, 2))
    return [FeatureVector(r, subject_id, str(j)) for j, r in enumerate(rows)]


def estimate_channel(samples: Mapping[str, np.ndarray]) -> BitChannelModel:
    """Estimate per-bit flip and impostor disagreement rates from grouped samples.

    ``p_impostor`` is the empirical disagreement rate over all cross-subject
    sample pairs. The within-subject pairwise disagreement ``d`` of a bit that
    flips independently with probability ``p`` around a fixed reference is
    ``2p(1-p)``; ``p_genuine`` inverts that relation so it estimates the flip
    rate itself.
    """
    groups = [np.asarray(v, dtype=np.int64) for v in samples.values()]
    groups = [g for g in groups if g.shape[0] >= 2]
    if len(groups) < 2:
        raise EstimationError("need at least 2 samples for each of at least 2 subjects")
    J = groups[0].shape[1]
    if any(g.shape[1] != J for g in groups):
        raise EstimationError("samples have mixed dimensions")
    within_dis = np.zeros(J)
    within_pairs = 0
    total_ones = np.zeros(J)
    total = 0
    for g in groups:
        n = g.shape[0]
        ones = g.sum(axis=0)
        within_dis += ones * (n - ones)
        within_pairs += n * (n - 1) // 2
        total_ones += ones
        total += n
    all_dis = total_ones * (total - total_ones)
    between_pairs = total * (total - 1) // 2 - within_pairs
    d = within_dis / within_pairs
    p_genuine = (1.0 - np.sqrt(np.clip(1.0 - 2.0 * d, 0.0, 1.0))) / 2.0
    p_impostor = (all_dis - within_dis) / between_pairs
    return BitChannelModel(p_genuine, np.clip(p_impostor, 0.0, 1.0))


# -- file formats ----------------------------------------------------------


def _parse_bits(text: str, line: int) -> np.ndarray:
    text = text.strip()
    if not text:
        raise FeatureFormatError("empty bit string", line)
    arr = np.frombuffer(text.encode("ascii", "replace"), dtype=np.uint8) - ord("0")
    if not np.isin(arr, (0, 1)).all():
        raise FeatureFormatError("non-binary value", line)
    return arr.astype(np.uint8)


def read_features(path: str | Path, fmt: str | None = None) -> list[FeatureVector]:
    """Read JSONL or CSV feature records, validating every line."""
    path = Path(path)
    fmt = (fmt or path.suffix.lstrip(".")).lower()
    if fmt not in ("jsonl", "csv"):
        raise FeatureFormatError(f"unsupported feature format {fmt!r}")
    records: list[FeatureVector] = []
    seen: set[tuple[str, str]] = set()
    J: int | None = None
    counters: dict[str, int] = {}
    with open(path, newline="") as fh:
        rows = enumerate(fh, 1) if fmt == "jsonl" else enumerate(csv.reader(fh), 1)
        for line, row in rows:
            if fmt == "jsonl":
                if not row.strip():
                    continue
                try:
                    obj = json.loads(row)
                    subject = str(obj["subject_id"])
                    bits = _parse_bits(str(obj["bits"]), line)
                    sample = obj.get("sample_id")
                except (json.JSONDecodeError, KeyError, TypeError) as exc:
                    raise FeatureFormatError(f"bad record ({exc.__class__.__name__})", line) from None
            else:
                if not row:
                    continue
                if len(row) < 3:
                    raise FeatureFormatError("expected subject_id, sample_id and bit columns", line)
                subject, sample = row[0].strip(), row[1].strip()
                cells = [c.strip() for c in row[2:]]
                if any(c not in ("0", "1") for c in cells):
                    raise FeatureFormatError("non-binary value", line)
                bits = np.array([c == "1" for c in cells], dtype=np.uint8)
            if sample is None:
                sample = str(counters.get(subject, 0))
            sample = str(sample)
            counters[subject] = counters.get(subject, 0) + 1
            if J is None:
                J = bits.size
            elif bits.size != J:
                raise FeatureFormatError(f"dimension {bits.size} differs from {J}", line)
            key = (subject, sample)
            if key in seen:
                raise FeatureFormatError(f"duplicate (subject, sample) {key}", line)
            seen.add(key)
            records.append(FeatureVector(bits, subject, sample))
    if not records:
        raise FeatureFormatError("no feature records found")
    return records


def write_features(path: str | Path, vectors: Iterable[FeatureVector], fmt: str | None = None) -> None:
    path = Path(path)
    fmt = (fmt or path.suffix.lstrip(".")).lower()
    with open(path, "w", newline="") as fh:
        if fmt == "jsonl":
            for v in vectors:
                rec = {"subject_id": v.subject_id, "bits": v.bitstring()}
                if v.sample_id is not None:
                    rec["sample_id"] = v.sample_id
                fh.write(json.dumps(rec) + "\n")
        elif fmt == "csv":
            w = csv.writer(fh, lineterminator="\n")
            for v in vectors:
                w.writerow([v.subject_id, v.sample_id or ""] + [int(b) for b in v.bits])
        else:
            raise FeatureFormatError(f"unsupported feature format {fmt!r}")


def group_by_subject(vectors: Iterable[FeatureVector]) -> dict[str, np.ndarray]:
    groups: dict[str, list[np.ndarray]] = {}
    for v in vectors:
        groups.setdefault(v.subject_id, []).append(v.bits)
    return {k: np.vstack(v) for k, v in groups.items()}


def population_from_vectors(vectors: Sequence[FeatureVector], seed: int = 0) -> SubjectPopulation:
    """Population whose reference is each subject's first sample; channel estimated."""
    groups = group_by_subject(vectors)
    ids = list(groups)
    refs = np.vstack([groups[s][0] for s in ids])
    channel = estimate_channel(groups)
    return SubjectPopulation(ids, refs, channel, seed, samples=groups)


def ingest_features(path: str | Path, fmt: str | None = None, seed: int = 0) -> SubjectPopulation:
    return population_from_vectors(read_features(path, fmt), seed)
