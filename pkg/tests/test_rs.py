import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from biosketch import gf256
from biosketch.rs import DecodeFailure, ReedSolomon, RsCodeParams, RSError, rs_decode, rs_encode, syndromes
from conftest import clmul_mod


def corrupt(word, count, rng):
    word = list(word)
    for pos in rng.choice(len(word), size=count, replace=False):
        word[pos] ^= int(rng.integers(1, 256))
    return word


def test_params_geometry():
    p = RsCodeParams(96, 13)
    assert (p.n_prime, p.k_prime, p.t, p.n_bits, p.k_bits) == (255, 172, 41, 768, 104)
    assert RsCodeParams(32, 7).t == 12
    assert RsCodeParams(33, 8).t == 12  # odd N-K floors
    assert RsCodeParams.from_bits(768, 104) == p
    assert p.as_dict() == {"m": 8, "N": 96, "K": 13}
    for bad in [(13, 96), (0, 0), (256, 10), (10, 0)]:
        with pytest.raises(RSError):
            RsCodeParams(*bad)


def test_zero_message_gives_zero_codeword():
    for n, k in [(32, 7), (96, 13), (255, 223)]:
        assert rs_encode([0] * k, RsCodeParams(n, k)) == [0] * n


def test_codeword_length_and_systematic_layout(rng):
    p = RsCodeParams(96, 13)
    msg = rng.integers(0, 256, 13).tolist()
    cw = rs_encode(msg, p)
    assert len(cw) == 96 and len(cw) * 8 == 768
    assert cw[:13] == msg


def test_codewords_are_multiples_of_generator(rng):
    # membership oracle: every codeword evaluates to zero at alpha^0..alpha^(N-K-1)
    p = RsCodeParams(32, 7)
    cw = rs_encode(rng.integers(0, 256, 7).tolist(), p)
    for i in range(p.nsym):
        x = gf256.alpha_pow(i)
        acc = 0
        for c in cw:
            acc = clmul_mod(acc, x) ^ c
        assert acc == 0


def test_message_length_checked():
    with pytest.raises(RSError):
        rs_encode([1, 2, 3], RsCodeParams(32, 7))
    with pytest.raises(RSError):
        rs_decode([0] * 31, RsCodeParams(32, 7))


def test_clean_and_round_trip(rng):
    p = RsCodeParams(32, 7)
    msg = rng.integers(0, 256, 7).tolist()
    cw = rs_encode(msg, p)
    assert rs_decode(cw, p) == msg
    assert rs_encode(rs_decode(cw, p), p) == cw


@pytest.mark.parametrize("n,k", [(32, 7), (64, 13), (96, 13), (96, 7), (33, 8), (255, 223), (10, 1)])
def test_exactly_t_errors_always_corrected(n, k, rng):
    p = RsCodeParams(n, k)
    for _ in range(200):
        msg = rng.integers(0, 256, k).tolist()
        assert rs_decode(corrupt(rs_encode(msg, p), p.t, rng), p) == msg


@settings(max_examples=60, deadline=None)
@given(
    st.sampled_from([(32, 7), (64, 13), (20, 9), (40, 33)]),
    st.integers(0, 2**32 - 1),
    st.data(),
)
def test_bounded_distance_property(nk, seed, data):
    p = RsCodeParams(*nk)
    rng = np.random.default_rng(seed)
    e = data.draw(st.integers(0, p.t))
    msg = rng.integers(0, 256, p.k_symbols).tolist()
    assert rs_decode(corrupt(rs_encode(msg, p), e, rng), p) == msg


def test_t_plus_one_never_silently_returns_original(rng):
    p = RsCodeParams(32, 7)
    outcomes = {"failure": 0, "miscorrection": 0}
    for _ in range(2000):
        msg = rng.integers(0, 256, 7).tolist()
        word = corrupt(rs_encode(msg, p), p.t + 1, rng)
        try:
            out = rs_decode(word, p)
        except DecodeFailure:
            outcomes["failure"] += 1
            continue
        assert out != msg
        outcomes["miscorrection"] += 1
    assert sum(outcomes.values()) == 2000
    assert outcomes["failure"] > 0


def test_syndromes_of_codeword_are_zero_and_single_error_pattern(rng):
    p = RsCodeParams(32, 7)
    cw = rs_encode(rng.integers(0, 256, 7).tolist(), p)
    assert syndromes(cw, p) == [0] * p.nsym
    # position j counted from the start of the word; its power of x is N-1-j
    for j, v in [(0, 1), (5, 0x37), (31, 0xFF)]:
        word = list(cw)
        word[j] ^= v
        deg = p.n_symbols - 1 - j
        expected = [clmul_mod(v, gf256.alpha_pow(deg * i)) for i in range(p.nsym)]
        assert syndromes(word, p) == expected


def test_random_word_has_nonzero_syndrome(rng):
    p = RsCodeParams(32, 7)
    for _ in range(100):
        word = rng.integers(0, 256, 32).tolist()
        assert any(syndromes(word, p))


def test_shortening_consistent_with_mother_code(rng):
    short = RsCodeParams(32, 7)
    mother = RsCodeParams(255, 255 - 25)
    for _ in range(50):
        msg = rng.integers(0, 256, 7).tolist()
        cw = rs_encode(msg, short)
        padded = [0] * (255 - 32) + cw
        assert rs_encode([0] * (255 - 32) + msg, mother) == padded
        word = corrupt(cw, int(rng.integers(0, short.t + 1)), rng)
        full = rs_decode([0] * (255 - 32) + word, mother)
        assert full[255 - 32 :] == rs_decode(word, short)


def test_brute_force_nearest_codeword_oracle(rng):
    # K=1: all 256 codewords enumerable; within t the decoder must find the unique nearest one
    p = RsCodeParams(9, 1)
    book = {m: rs_encode([m], p) for m in range(256)}
    for _ in range(300):
        word = corrupt(book[int(rng.integers(256))], int(rng.integers(0, p.t + 1)), rng)
        dists = {m: sum(a != b for a, b in zip(word, cw)) for m, cw in book.items()}
        nearest = min(dists, key=dists.get)
        assert rs_decode(word, p) == [nearest]


def test_decoder_is_deterministic(rng):
    p = RsCodeParams(64, 13)
    word = rng.integers(0, 256, 64).tolist()
    outs = []
    for _ in range(3):
        try:
            outs.append(ReedSolomon(p).decode(word))
        except DecodeFailure:
            outs.append(None)
    assert outs[0] == outs[1] == outs[2]


@pytest.mark.parametrize("n,k", [(32, 7), (96, 13), (33, 8), (255, 223)])
def test_batch_decoder_agrees_with_scalar(n, k, rng):
    p = RsCodeParams(n, k)
    code = ReedSolomon(p)
    msgs = rng.integers(0, 256, (300, k))
    words = code.encode_many(msgs)
    assert words.tolist() == [rs_encode(m, p) for m in msgs.tolist()]
    for i in range(300):
        errors = [0, p.t, p.t + 1, n][i % 4]
        words[i] = corrupt(words[i].tolist(), min(errors, n), rng)
    decoded, ok = code.decode_many(words)
    for w, m, good in zip(words.tolist(), decoded.tolist(), ok):
        try:
            expected, expected_ok = rs_decode(w, p), True
        except DecodeFailure:
            expected, expected_ok = w[:k], False
        assert (m, bool(good)) == (expected, expected_ok)


def test_batch_shape_checks():
    code = ReedSolomon(RsCodeParams(32, 7))
    with pytest.raises(RSError):
        code.decode_many([[0] * 31])
    with pytest.raises(RSError):
        code.encode_many([[0] * 8])
