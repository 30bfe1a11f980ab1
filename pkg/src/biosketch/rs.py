"""Shortened Reed-Solomon codes over GF(2^8).

Codewords are stored message-first: index 0 holds the coefficient of the
highest power of x, so the first ``K`` symbols of a systematic codeword are
the message. Shortening prepends ``N' - N`` zero data symbols to the mother
code and drops them from the output; since leading zeros do not change any
polynomial evaluation, the shortened decoder only needs to restrict its root
search to the ``N`` transmitted positions.

Decoding is bounded-distance (Berlekamp-Massey, Chien search, Forney). A
received word farther than ``t`` symbols from every codeword raises
:class:`DecodeFailure`.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache, reduce
from itertools import repeat
from operator import add, xor
from typing import Sequence

import numpy as np

from . import gf256
from .gf256 import EXP, LOG, ORDER

_EXP_NP = np.array(EXP + EXP, dtype=np.uint8)  # index up to 4*255 without modulo
_LOG_NP = np.array(LOG, dtype=np.int64)

# log table where log(0) is a sentinel: any sum of at most three logs that
# involves it lands in the zero tail of _EXPZ, so products need no branches
_ZERO_LOG = 1020
_LOGZ = [_ZERO_LOG] + list(LOG[1:256])
_EXPZ = [EXP[i % ORDER] for i in range(_ZERO_LOG)] + [0] * (2 * _ZERO_LOG + 1)
_LOGZ_NP = np.array(_LOGZ, dtype=np.int64)
_EXPZ_NP = np.array(_EXPZ, dtype=np.int64)


class RSError(ValueError):
    """Invalid code parameters or malformed codec input."""


class DecodeFailure(Exception):
    """The received word is not within ``t`` symbols of any codeword."""


@dataclass(frozen=True)
class RsCodeParams:
    """Geometry of a shortened ``[N, K]`` code built on the ``[255, K']`` mother code."""

    n_symbols: int
    k_symbols: int
    m: int = 8

    def __post_init__(self):
        if self.m != 8:
            raise RSError(f"only 8-bit symbols are supported, got m={self.m}")
        if not (1 <= self.k_symbols <= self.n_symbols <= self.n_prime):
            raise RSError(
                f"need 1 <= K <= N <= {self.n_prime}, got N={self.n_symbols}, K={self.k_symbols}"
            )

    @property
    def n_prime(self) -> int:
        return 2**self.m - 1

    @property
    def k_prime(self) -> int:
        return self.k_symbols + (self.n_prime - self.n_symbols)

    @property
    def nsym(self) -> int:
        """Number of parity symbols, ``N - K``."""
        return self.n_symbols - self.k_symbols

    @property
    def t(self) -> int:
        return self.nsym // 2

    @property
    def n_bits(self) -> int:
        return self.m * self.n_symbols

    @property
    def k_bits(self) -> int:
        return self.m * self.k_symbols

    @classmethod
    def from_bits(cls, n_bits: int, k_bits: int) -> "RsCodeParams":
        if n_bits % 8 or k_bits % 8:
            raise RSError("bit lengths must be multiples of 8")
        return cls(n_bits // 8, k_bits // 8)

    def as_dict(self) -> dict:
        return {"m": self.m, "N": self.n_symbols, "K": self.k_symbols}


class ReedSolomon:
    """Encoder/decoder for one :class:`RsCodeParams`. Immutable after construction."""

    def __init__(self, params: RsCodeParams):
        self.params = params
        n, nsym = params.n_symbols, params.nsym
        gen = [1]
        for i in range(nsym):
            gen = gf256.poly_mul(gen, [1, EXP[i]])
        self.generator = tuple(gen)
        # degree of x carried by each transmitted position (message first)
        self._degrees = np.arange(n - 1, -1, -1, dtype=np.int64)
        # syndrome exponent table: (i * degree_j) mod 255, shape (nsym, N)
        self._synd_exp = (np.arange(nsym, dtype=np.int64)[:, None] * self._degrees[None, :]) % ORDER
        # parity of message symbol i alone is x^(nsym + K-1-i) mod g(x); encoding is their sum
        rows = []
        for i in range(params.k_symbols):
            unit = [0] * params.k_symbols
            unit[i] = 1
            rows.append(self._long_division(unit))
        self._parity_log = _LOGZ_NP[np.array(rows, dtype=np.int64).reshape(params.k_symbols, nsym)]
        # shifted syndrome index for the key equation: _omega_idx[i, k] = k - i, or nsym when negative
        k_idx = np.arange(nsym)
        diff = k_idx[None, :] - np.arange(nsym + 1)[:, None]
        self._omega_idx = np.where(diff >= 0, diff, nsym)

    def _long_division(self, message: Sequence[int]) -> list[int]:
        """Remainder of message(x) * x^(N-K) modulo g(x): the parity symbols."""
        gen = self.generator
        nsym = self.params.nsym
        buf = list(message) + [0] * nsym
        for i in range(len(message)):
            coef = buf[i]
            if coef:
                lc = LOG[coef]
                for j in range(1, nsym + 1):
                    g = gen[j]
                    if g:
                        buf[i + j] ^= EXP[lc + LOG[g]]
        return buf[len(message):]

    def encode(self, message: Sequence[int]) -> list[int]:
        p = self.params
        if len(message) != p.k_symbols:
            raise RSError(f"message must have K={p.k_symbols} symbols, got {len(message)}")
        msg = np.asarray(message, dtype=np.int64)
        if msg.min(initial=0) < 0 or msg.max(initial=0) > 255:
            raise RSError("symbols must be in [0, 255]")
        terms = _EXPZ_NP[_LOGZ_NP[msg][:, None] + self._parity_log]
        parity = np.bitwise_xor.reduce(terms, axis=0) if p.k_symbols else np.zeros(p.nsym, np.int64)
        return msg.tolist() + parity.tolist()

    def encode_many(self, messages) -> np.ndarray:
        """Encode each row of a ``(B, K)`` array; returns ``(B, N)``."""
        msg = np.asarray(messages, dtype=np.int64)
        p = self.params
        if msg.ndim != 2 or msg.shape[1] != p.k_symbols:
            raise RSError(f"message block must have shape (B, {p.k_symbols}), got {msg.shape}")
        if msg.size and (msg.min() < 0 or msg.max() > 255):
            raise RSError("symbols must be in [0, 255]")
        terms = _EXPZ_NP[_LOGZ_NP[msg][:, :, None] + self._parity_log[None, :, :]]
        return np.concatenate([msg, np.bitwise_xor.reduce(terms, axis=1)], axis=1)

    def syndromes(self, received: Sequence[int]) -> list[int]:
        """``S_i = r(alpha^i)`` for ``i = 0 .. N-K-1``."""
        r = self._as_array(received)
        return self._syndromes(r).tolist()

    def _as_array(self, received) -> np.ndarray:
        r = np.asarray(received, dtype=np.int64)
        if r.shape != (self.params.n_symbols,):
            raise RSError(f"received word must have N={self.params.n_symbols} symbols, got shape {r.shape}")
        if r.min(initial=0) < 0 or r.max(initial=0) > 255:
            raise RSError("symbols must be in [0, 255]")
        return r

    def _syndromes(self, r: np.ndarray) -> np.ndarray:
        nz = r != 0
        if not nz.any():
            return np.zeros(self.params.nsym, dtype=np.int64)
        logs = _LOG_NP[r[nz]]
        terms = _EXP_NP[self._synd_exp[:, nz] + logs[None, :]]
        return np.bitwise_xor.reduce(terms, axis=1).astype(np.int64)

    def decode(self, received: Sequence[int]) -> list[int]:
        """Return the K message symbols of the codeword within ``t`` of ``received``."""
        corrected = self.correct(received)
        return corrected[: self.params.k_symbols]

    def correct(self, received: Sequence[int]) -> list[int]:
        """Return the full corrected codeword or raise :class:`DecodeFailure`."""
        r = self._as_array(received)
        synd = self._syndromes(r)
        if not synd.any():
            return r.tolist()
        locator = _berlekamp_massey(synd.tolist())
        n_err = len(locator) - 1
        if 2 * n_err > self.params.nsym:
            raise DecodeFailure(f"error locator degree {n_err} exceeds t={self.params.t}")
        positions = self._chien(locator)
        if len(positions) != n_err:
            raise DecodeFailure(f"found {len(positions)} roots for a degree-{n_err} locator")
        out = r.tolist()
        for pos, value in zip(positions, self._forney(synd.tolist(), locator, positions)):
            out[pos] ^= value
        if self._syndromes(np.asarray(out, dtype=np.int64)).any():
            raise DecodeFailure("correction did not produce a codeword")
        return out

    # -- batch path: same decoder, vectorized over rows ----------------------

    def decode_many(self, received, chunk: int = 512) -> tuple[np.ndarray, np.ndarray]:
        """Decode each row of a ``(B, N)`` array.

        Returns ``(messages, ok)``: the first ``K`` corrected symbols per row
        and a mask of rows that decoded. Failed rows hold the uncorrected
        first ``K`` symbols. Agrees row by row with :meth:`decode`.
        """
        corrected, ok = self.correct_many(received, chunk)
        return corrected[:, : self.params.k_symbols], ok

    def correct_many(self, received, chunk: int = 512) -> tuple[np.ndarray, np.ndarray]:
        r = np.asarray(received, dtype=np.int64)
        n = self.params.n_symbols
        if r.ndim != 2 or r.shape[1] != n:
            raise RSError(f"received block must have shape (B, {n}), got {r.shape}")
        if r.size and (r.min() < 0 or r.max() > 255):
            raise RSError("symbols must be in [0, 255]")
        out = r.copy()
        ok = np.zeros(r.shape[0], dtype=bool)
        for lo in range(0, r.shape[0], chunk):
            out[lo : lo + chunk], ok[lo : lo + chunk] = self._correct_block(r[lo : lo + chunk])
        return out, ok

    def _syndromes_block(self, r: np.ndarray) -> np.ndarray:
        terms = _EXPZ_NP[_LOGZ_NP[r][:, None, :] + self._synd_exp[None, :, :]]
        return np.bitwise_xor.reduce(terms, axis=2)

    def _correct_block(self, r: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        p = self.params
        nsym, t = p.nsym, p.t
        B = r.shape[0]
        synd = self._syndromes_block(r)
        s_log = _LOGZ_NP[synd]

        # Berlekamp-Massey, one row per word
        cols = np.arange(nsym + 1)
        C = np.zeros((B, nsym + 1), dtype=np.int64)
        C[:, 0] = 1
        Bp = C.copy()
        L = np.zeros(B, dtype=np.int64)
        shift = np.ones(B, dtype=np.int64)
        last = np.ones(B, dtype=np.int64)
        for k in range(nsym):
            d = synd[:, k].copy()
            if k:
                d ^= np.bitwise_xor.reduce(_EXPZ_NP[_LOGZ_NP[C[:, 1 : k + 1]] + s_log[:, k - 1 :: -1]], axis=1)
            nz = d != 0
            coef = (_LOGZ_NP[d] - _LOGZ_NP[last]) % ORDER
            src = cols[None, :] - shift[:, None]
            shifted = np.where(src >= 0, np.take_along_axis(Bp, np.clip(src, 0, None), axis=1), 0)
            update = C ^ _EXPZ_NP[coef[:, None] + _LOGZ_NP[shifted]]
            grow = nz & (2 * L <= k)
            Bp = np.where(grow[:, None], C, Bp)
            last = np.where(grow, d, last)
            L = np.where(grow, k + 1 - L, L)
            C = np.where(nz[:, None], update, C)
            shift = np.where(grow, 1, shift + 1)

        ok = 2 * L <= nsym
        lam = np.where(ok[:, None], C[:, : t + 1], 0)
        lam_log = _LOGZ_NP[lam]
        # Chien: root test at X^-1 for every transmitted position
        powers = (-self._degrees[:, None] * np.arange(t + 1)[None, :]) % ORDER
        vals = np.bitwise_xor.reduce(_EXPZ_NP[lam_log[:, None, :] + powers[None, :, :]], axis=2)
        roots = vals == 0
        ok &= roots.sum(axis=1) == L

        # Forney: e = X * omega(X^-1) / Lambda'(X^-1)
        s_ext = np.concatenate([s_log, np.full((B, 1), _ZERO_LOG)], axis=1)
        omega = np.bitwise_xor.reduce(
            _EXPZ_NP[lam_log[:, :, None] + s_ext[:, self._omega_idx[: t + 1]]], axis=1
        )
        om_pow = (-self._degrees[:, None] * np.arange(nsym)[None, :]) % ORDER
        num = np.bitwise_xor.reduce(_EXPZ_NP[_LOGZ_NP[omega][:, None, :] + om_pow[None, :, :]], axis=2)
        deriv = np.zeros_like(lam)
        deriv[:, 0 : t : 2] = lam[:, 1 : t + 1 : 2]
        den = np.bitwise_xor.reduce(_EXPZ_NP[_LOGZ_NP[deriv][:, None, :] + powers[None, :, :]], axis=2)
        ok &= ~(roots & (den == 0)).any(axis=1)
        e_log = (self._degrees[None, :] + _LOGZ_NP[num] - _LOGZ_NP[np.where(den == 0, 1, den)]) % ORDER
        err = np.where(roots & (num != 0) & (den != 0), _EXPZ_NP[e_log], 0)
        corrected = np.where(ok[:, None], r ^ err, r)
        ok &= ~self._syndromes_block(corrected).any(axis=1)
        return np.where(ok[:, None], corrected, r), ok

    def _chien(self, locator: list[int]) -> list[int]:
        # locator is lowest degree first; root test at X^-1 for X = alpha^degree
        coeffs = np.asarray(locator, dtype=np.int64)
        nz = np.nonzero(coeffs)[0]
        expo = (-self._degrees[:, None] * nz[None, :]) % ORDER + _LOG_NP[coeffs[nz]][None, :]
        values = np.bitwise_xor.reduce(_EXP_NP[expo], axis=1)
        return np.nonzero(values == 0)[0].tolist()

    def _forney(self, synd: list[int], locator: list[int], positions: list[int]) -> list[int]:
        nsym = self.params.nsym
        s = np.asarray(synd, dtype=np.int64)
        s_nz = s != 0
        s_log = _LOG_NP[s]
        # omega(x) = S(x) * Lambda(x) mod x^nsym, lowest degree first
        s_log = np.append(_LOGZ_NP[s], _ZERO_LOG)
        lam_log = _LOGZ_NP[np.asarray(locator[:nsym], dtype=np.int64)]
        terms = _EXPZ_NP[lam_log[:, None] + s_log[self._omega_idx[: lam_log.size]]]
        omega = np.bitwise_xor.reduce(terms, axis=0)
        deg = self._degrees[positions]
        x_inv = (-deg) % ORDER
        num = _eval_many(omega, x_inv)
        lam = np.asarray(locator, dtype=np.int64)
        # formal derivative in characteristic 2 keeps odd-degree terms only
        deriv = np.zeros(max(1, len(lam) - 1), dtype=np.int64)
        odd = lam[1::2]
        deriv[0 : 2 * len(odd) : 2] = odd
        den = _eval_many(deriv, x_inv)
        if not den.all():
            raise DecodeFailure("zero derivative in Forney step")
        # e = X * omega(X^-1) / Lambda'(X^-1)
        out = np.where(num == 0, 0, _EXP_NP[(deg + _LOG_NP[num] - _LOG_NP[den]) % ORDER])
        return out.tolist()


def _eval_many(poly: np.ndarray, x_logs: np.ndarray) -> np.ndarray:
    """Evaluate a lowest-degree-first polynomial at alpha**x for each x in ``x_logs``."""
    idx = np.nonzero(poly)[0]
    if idx.size == 0:
        return np.zeros(len(x_logs), dtype=np.int64)
    expo = (x_logs[:, None] * idx[None, :]) % ORDER + _LOG_NP[poly[idx]][None, :]
    return np.bitwise_xor.reduce(_EXP_NP[expo], axis=1).astype(np.int64)


def _berlekamp_massey(synd: list[int]) -> list[int]:
    """Shortest LFSR generating ``synd``; returns the locator lowest degree first."""
    nsym = len(synd)
    slog_rev = [_LOGZ[s] for s in reversed(synd)]
    c = [1] + [0] * nsym
    b = c[:]
    clog = [0] + [_ZERO_LOG] * nsym
    blog = clog[:]
    b_len = 1  # b[b_len:] is all zero
    length, shift, last_log = 0, 1, 0
    exp_at = _EXPZ.__getitem__
    for n in range(nsym):
        # d = S_n + sum_{i=1..L} c_i S_{n-i}
        start = nsym - n
        d = reduce(xor, map(exp_at, map(add, clog[1 : length + 1], slog_rev[start : start + length])), synd[n])
        if d == 0:
            shift += 1
            continue
        coef_log = (_LOGZ[d] - last_log) % ORDER
        m = min(b_len, nsym + 1 - shift)
        seg = list(map(xor, c[shift : shift + m], map(exp_at, map(add, blog[:m], repeat(coef_log)))))
        update = c[:shift] + seg + c[shift + m :]
        update_log = clog[:shift] + [_LOGZ[v] for v in seg] + clog[shift + m :]
        if 2 * length <= n:
            b, blog = c, clog
            b_len = length + 1
            length = n + 1 - length
            last_log = _LOGZ[d]
            shift = 1
        else:
            shift += 1
        c, clog = update, update_log
    return c[: length + 1]


@lru_cache(maxsize=64)
def codec(params: RsCodeParams) -> ReedSolomon:
    return ReedSolomon(params)


def rs_encode(message: Sequence[int], params: RsCodeParams) -> list[int]:
    return codec(params).encode(message)


def rs_decode(received: Sequence[int], params: RsCodeParams) -> list[int]:
    """Bounded-distance decode; raises :class:`DecodeFailure` beyond ``t`` errors."""
    return codec(params).decode(received)


def rs_decode_many(received, params: RsCodeParams) -> tuple[np.ndarray, np.ndarray]:
    """Row-wise bounded-distance decode of a ``(B, N)`` block; returns ``(messages, ok)``."""
    return codec(params).decode_many(received)


def syndromes(received: Sequence[int], params: RsCodeParams) -> list[int]:
    return codec(params).syndromes(received)
