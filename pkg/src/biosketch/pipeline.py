"""Cancelable template (keyed bit selection) and secure sketch (RS decode + SHA-256).

Enrollment::

    key = issue_key(J, G, reliability, seed)
    template = select_bits(feature, key)          # G bits, never stored
    sketch = secure_sketch(template, params)      # k = 8K bits, never stored
    store[subject] = SHA-256(pack(sketch))

Authentication repeats the chain with the probe and the presented key and
grants iff the digests match.

Decoder-failure convention. A template drawn from real (or synthetic)
features is almost never within ``t`` symbols of a codeword: for ``N=96,
K=13`` the chance is about ``2^-245``. With ``on_failure="systematic"`` (the
default) the sketch is then the uncorrected content of the message
positions, i.e. the first ``K`` symbols. Because keys are sorted by
reliability, those are the most reliable selected bits. ``"strict"`` treats
failure as an error; :func:`enroll_new` then retries with fresh keys.
"""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
import threading
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .features import FeatureVector
from .rs import DecodeFailure, RsCodeParams, codec

STORE_VERSION = 1
MAX_ENROLL_ATTEMPTS = 16
ON_FAILURE = ("systematic", "strict")


class PipelineError(ValueError):
    """Parameter or shape mismatch between feature, key and code."""


class EnrollmentError(RuntimeError):
    """Every enrollment attempt ended in a decoder failure."""


class ConflictError(RuntimeError):
    """Subject already enrolled and overwrite not requested."""


class UnknownSubject(KeyError):
    pass


# -- keys and cancelable templates ------------------------------------------


@dataclass(frozen=True)
class UserKey:
    """Ordered positions of the G selected bits, most reliable first."""

    indices: tuple[int, ...]
    J: int

    def __post_init__(self):
        idx = tuple(int(i) for i in self.indices)
        if len(set(idx)) != len(idx):
            raise PipelineError("key indices must be distinct")
        if any(i < 0 or i >= self.J for i in idx):
            raise PipelineError(f"key indices must lie in [0, {self.J})")
        object.__setattr__(self, "indices", idx)

    @property
    def G(self) -> int:
        return len(self.indices)

    def to_text(self) -> str:
        lines = [f"# biosketch-key J={self.J} G={self.G}"]
        lines += [format(i, "x") for i in self.indices]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "UserKey":
        lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
        if not lines or not lines[0].startswith("# biosketch-key"):
            raise PipelineError("missing key header")
        try:
            fields = dict(tok.split("=", 1) for tok in lines[0].split()[2:])
            J, G = int(fields["J"]), int(fields["G"])
            indices = tuple(int(x, 16) for x in lines[1:])
        except (ValueError, KeyError) as exc:
            raise PipelineError(f"malformed key file: {exc}") from None
        if len(indices) != G:
            raise PipelineError(f"key file lists {len(indices)} indices, header says G={G}")
        return cls(indices, J)


def issue_key(J: int, G: int, reliability: Sequence[float] | None = None, seed: int = 0) -> UserKey:
    """Draw G of J positions uniformly, then order them by descending reliability.

    Ties keep the random draw order (stable sort), so a flat reliability
    profile yields a uniformly random ordering.
    """
    if G > J or G < 1:
        raise PipelineError(f"need 1 <= G <= J, got G={G}, J={J}")
    rel = np.zeros(J) if reliability is None else np.asarray(reliability, dtype=float)
    if rel.shape != (J,):
        raise PipelineError(f"reliability must have length J={J}")
    rng = np.random.default_rng(seed)
    drawn = rng.choice(J, size=G, replace=False)
    order = np.argsort(-rel[drawn], kind="stable")
    return UserKey(tuple(drawn[order].tolist()), J)


@dataclass(frozen=True)
class CancelableTemplate:
    bits: np.ndarray


def select_bits(feature: FeatureVector | np.ndarray, key: UserKey) -> CancelableTemplate:
    bits = feature.bits if isinstance(feature, FeatureVector) else np.asarray(feature, dtype=np.uint8)
    if bits.size != key.J:
        raise PipelineError(f"key built for J={key.J}, feature has J={bits.size}")
    return CancelableTemplate(bits[np.asarray(key.indices, dtype=np.int64)])


# -- sketch ----------------------------------------------------------------


def bits_to_symbols(bits: np.ndarray) -> list[int]:
    """Eight consecutive bits per symbol, first bit most significant."""
    bits = np.asarray(bits, dtype=np.uint8)
    if bits.size % 8:
        raise PipelineError("bit length must be a multiple of 8")
    return np.packbits(bits).tolist()


def symbols_to_bits(symbols: Sequence[int]) -> np.ndarray:
    return np.unpackbits(np.asarray(symbols, dtype=np.uint8))


@dataclass(frozen=True)
class SecureSketch:
    message_bits: np.ndarray
    decoded: bool = True  # False when the systematic fallback produced it

    def __eq__(self, other):
        if not isinstance(other, SecureSketch):
            return NotImplemented
        return np.array_equal(self.message_bits, other.message_bits)

    def __hash__(self):
        return hash(self.message_bits.tobytes())

    def packed(self) -> bytes:
        """4-byte big-endian bit length, then bits MSB-first, zero-padded to a byte."""
        k = int(self.message_bits.size)
        return k.to_bytes(4, "big") + np.packbits(self.message_bits).tobytes()

    def digest(self) -> bytes:
        return hashlib.sha256(self.packed()).digest()


def secure_sketch(template: CancelableTemplate | np.ndarray, params: RsCodeParams, on_failure: str = "systematic") -> SecureSketch:
    """Decode the template as a noisy codeword and return the message bits."""
    if on_failure not in ON_FAILURE:
        raise ValueError(f"on_failure must be one of {ON_FAILURE}")
    bits = template.bits if isinstance(template, CancelableTemplate) else np.asarray(template, dtype=np.uint8)
    if bits.size != params.n_bits:
        raise PipelineError(f"template has {bits.size} bits, code expects n={params.n_bits}")
    received = bits_to_symbols(bits)
    try:
        message = codec(params).decode(received)
        decoded = True
    except DecodeFailure:
        if on_failure == "strict":
            raise
        message = received[: params.k_symbols]
        decoded = False
    return SecureSketch(symbols_to_bits(message), decoded)


def secure_sketch_many(templates, params: RsCodeParams, on_failure: str = "systematic") -> tuple[np.ndarray, np.ndarray]:
    """Row-wise :func:`secure_sketch` for a ``(B, n)`` bit block.

    Returns ``(message_bits, decoded)``. Rows that fail to decode keep the
    systematic fallback; in strict mode the caller must treat them as failures.
    """
    if on_failure not in ON_FAILURE:
        raise ValueError(f"on_failure must be one of {ON_FAILURE}")
    bits = np.asarray(templates, dtype=np.uint8)
    if bits.ndim != 2 or bits.shape[1] != params.n_bits:
        raise PipelineError(f"templates must have shape (B, {params.n_bits})")
    received = np.packbits(bits, axis=1).astype(np.int64)
    messages, ok = codec(params).decode_many(received)
    return np.unpackbits(messages.astype(np.uint8), axis=1), ok


# -- store -----------------------------------------------------------------


@dataclass(frozen=True)
class SecureTemplate:
    subject_id: str
    digest: bytes
    code_params: RsCodeParams
    created_at: str

    @property
    def digest_hex(self) -> str:
        return self.digest.hex()


def _utc_now() -> str:
    return datetime.now(timezone.utc).replace(microsecond=0).isoformat()


@dataclass
class TemplateStore:
    """Digests only. Readers may run concurrently; writers hold the lock."""

    code_params: RsCodeParams
    records: dict[str, SecureTemplate] = field(default_factory=dict)
    clock: Callable[[], str] = field(default=_utc_now, repr=False)

    def __post_init__(self):
        self._lock = threading.RLock()

    def __contains__(self, subject_id: str) -> bool:
        return subject_id in self.records

    def get(self, subject_id: str) -> SecureTemplate:
        try:
            return self.records[subject_id]
        except KeyError:
            raise UnknownSubject(subject_id) from None

    def put(self, subject_id: str, digest: bytes, overwrite: bool = False) -> SecureTemplate:
        with self._lock:
            if subject_id in self.records and not overwrite:
                raise ConflictError(f"subject {subject_id!r} already enrolled")
            rec = SecureTemplate(subject_id, digest, self.code_params, self.clock())
            self.records[subject_id] = rec
            return rec

    def delete(self, subject_id: str) -> None:
        with self._lock:
            if subject_id not in self.records:
                raise UnknownSubject(subject_id)
            del self.records[subject_id]

    def to_json(self) -> str:
        doc = {
            "version": STORE_VERSION,
            "code_params": self.code_params.as_dict(),
            "records": [
                {"subject_id": r.subject_id, "digest_hex": r.digest_hex, "created_at": r.created_at}
                for r in sorted(self.records.values(), key=lambda r: r.subject_id)
            ],
        }
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str, clock: Callable[[], str] | None = None) -> "TemplateStore":
        doc = json.loads(text)
        if doc.get("version") != STORE_VERSION:
            raise ValueError(f"unsupported store version {doc.get('version')!r}")
        cp = doc["code_params"]
        params = RsCodeParams(int(cp["N"]), int(cp["K"]), int(cp.get("m", 8)))
        store = cls(params) if clock is None else cls(params, clock=clock)
        for r in doc["records"]:
            digest = bytes.fromhex(r["digest_hex"])
            if len(digest) != 32:
                raise ValueError(f"digest for {r['subject_id']!r} is not 256 bits")
            store.records[r["subject_id"]] = SecureTemplate(r["subject_id"], digest, params, r["created_at"])
        return store

    def save(self, path: str | Path) -> None:
        """Atomic write: temp file in the same directory, then rename."""
        path = Path(path)
        with self._lock:
            data = self.to_json()
            fd, tmp = tempfile.mkstemp(prefix=path.name + ".", suffix=".tmp", dir=path.parent or ".")
            try:
                with os.fdopen(fd, "w") as fh:
                    fh.write(data)
                    fh.flush()
                    os.fsync(fh.fileno())
                os.replace(tmp, path)
            except BaseException:
                if os.path.exists(tmp):
                    os.unlink(tmp)
                raise

    @classmethod
    def load(cls, path: str | Path, clock: Callable[[], str] | None = None) -> "TemplateStore":
        return cls.from_json(Path(path).read_text(), clock)


# -- protocol --------------------------------------------------------------


def _check_params(key: UserKey, params: RsCodeParams, store: TemplateStore | None = None) -> None:
    if key.G != params.n_bits:
        raise PipelineError(f"key selects G={key.G} bits but the code needs n=8N={params.n_bits}")
    if store is not None and store.code_params != params:
        raise PipelineError("code parameters differ from the store's")


def probe_digest(feature, key: UserKey, params: RsCodeParams, on_failure: str = "systematic") -> bytes:
    _check_params(key, params)
    return secure_sketch(select_bits(feature, key), params, on_failure).digest()


def enroll(
    feature,
    key: UserKey,
    params: RsCodeParams,
    store: TemplateStore,
    subject_id: str,
    overwrite: bool = False,
    on_failure: str = "systematic",
) -> SecureTemplate:
    """Store SHA-256 of the sketch. Raises DecodeFailure only in strict mode."""
    _check_params(key, params, store)
    if subject_id in store and not overwrite:
        raise ConflictError(f"subject {subject_id!r} already enrolled")
    digest = probe_digest(feature, key, params, on_failure)
    return store.put(subject_id, digest, overwrite=overwrite)


def enroll_new(
    feature,
    params: RsCodeParams,
    store: TemplateStore,
    subject_id: str,
    reliability: Sequence[float] | None = None,
    seed: int = 0,
    overwrite: bool = False,
    on_failure: str = "systematic",
    max_attempts: int = MAX_ENROLL_ATTEMPTS,
) -> tuple[UserKey, SecureTemplate]:
    """Issue a key and enroll; on decoder failure retry with a freshly seeded key."""
    bits = feature.bits if isinstance(feature, FeatureVector) else np.asarray(feature)
    J = int(bits.size)
    for attempt in range(max_attempts):
        key = issue_key(J, params.n_bits, reliability, seed=_attempt_seed(seed, attempt))
        try:
            rec = enroll(feature, key, params, store, subject_id, overwrite, on_failure)
        except DecodeFailure:
            continue
        return key, rec
    raise EnrollmentError(
        f"{max_attempts} keys all gave templates beyond t={params.t} symbols of every codeword "
        f"for N={params.n_symbols}, K={params.k_symbols}"
    )


def _attempt_seed(seed: int, attempt: int) -> int:
    if attempt == 0:
        return seed
    return int(np.random.SeedSequence([seed, attempt]).generate_state(1, np.uint64)[0])


@dataclass(frozen=True)
class AuthResult:
    granted: bool
    reason: str  # "match", "mismatch", "decode_failure", "unknown_subject"

    def __bool__(self) -> bool:
        return self.granted


def authenticate(
    feature,
    key: UserKey,
    params: RsCodeParams,
    store: TemplateStore,
    subject_id: str,
    on_failure: str = "systematic",
) -> AuthResult:
    if subject_id not in store:
        return AuthResult(False, "unknown_subject")
    _check_params(key, params, store)
    try:
        digest = probe_digest(feature, key, params, on_failure)
    except DecodeFailure:
        return AuthResult(False, "decode_failure")
    if digest == store.get(subject_id).digest:
        return AuthResult(True, "match")
    return AuthResult(False, "mismatch")


def revoke_and_reissue(
    store: TemplateStore,
    subject_id: str,
    feature,
    new_seed: int,
    params: RsCodeParams,
    reliability: Sequence[float] | None = None,
    on_failure: str = "systematic",
) -> tuple[UserKey, SecureTemplate]:
    """Replace the subject's record with a fresh feature vector under a new key."""
    store.get(subject_id)
    return enroll_new(
        feature, params, store, subject_id, reliability, new_seed, overwrite=True, on_failure=on_failure
    )
