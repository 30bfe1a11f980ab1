import numpy as np
import pytest

from biosketch.features import BitChannelModel, FeatureVector, synth_population
from biosketch.pipeline import (
    ConflictError,
    EnrollmentError,
    PipelineError,
    TemplateStore,
    UnknownSubject,
    UserKey,
    authenticate,
    bits_to_symbols,
    enroll,
    enroll_new,
    issue_key,
    revoke_and_reissue,
    secure_sketch,
    select_bits,
    symbols_to_bits,
)
from biosketch.rs import DecodeFailure, RsCodeParams, rs_encode

P96 = RsCodeParams(96, 13)
P32 = RsCodeParams(32, 7)


def fixed_clock():
    return "2000-01-01T00:00:00+00:00"


def feature_on_codeword(params, key, rng, errors=0):
    """Feature whose key-selected bits are a codeword with ``errors`` symbol errors."""
    msg = rng.integers(0, 256, params.k_symbols).tolist()
    cw = rs_encode(msg, params)
    for pos in rng.choice(params.n_symbols, size=errors, replace=False):
        cw[pos] ^= int(rng.integers(1, 256))
    bits = rng.integers(0, 2, key.J).astype(np.uint8)
    bits[list(key.indices)] = symbols_to_bits(cw)
    return bits, msg


def test_issue_key_full_permutation_sorted():
    rel = np.linspace(0, 1, 64)
    key = issue_key(64, 64, rel, seed=3)
    assert sorted(key.indices) == list(range(64))
    assert list(key.indices) == list(range(63, -1, -1))


def test_issue_key_descending_unique_scores():
    rel = np.random.default_rng(0).permutation(100) / 100
    key = issue_key(100, 4, rel, seed=1)
    scores = rel[list(key.indices)]
    assert all(a > b for a, b in zip(scores, scores[1:]))


def test_issue_key_seeds_differ_and_validate():
    assert issue_key(1024, 768, seed=1).indices != issue_key(1024, 768, seed=2).indices
    with pytest.raises(PipelineError):
        issue_key(10, 11)


def test_key_text_round_trip_and_truncation():
    key = issue_key(1024, 768, seed=5)
    assert UserKey.from_text(key.to_text()) == key
    truncated = "\n".join(key.to_text().splitlines()[:50])
    with pytest.raises(PipelineError):
        UserKey.from_text(truncated)
    with pytest.raises(PipelineError):
        UserKey.from_text("1\n2\n")


def test_select_bits_identity_and_sizes(rng):
    bits = rng.integers(0, 2, 1024).astype(np.uint8)
    ident = UserKey(tuple(range(1024)), 1024)
    assert (select_bits(bits, ident).bits == bits).all()
    tmpl = select_bits(bits, issue_key(1024, 768, seed=0))
    assert tmpl.bits.size == 768 and len(bits_to_symbols(tmpl.bits)) == 96
    with pytest.raises(PipelineError):
        select_bits(bits[:512], ident)


def test_bit_symbol_packing_msb_first():
    assert bits_to_symbols(np.array([1, 0, 0, 0, 0, 0, 0, 1], np.uint8)) == [0x81]
    assert symbols_to_bits([0x81]).tolist() == [1, 0, 0, 0, 0, 0, 0, 1]


def test_sketch_of_codeword_is_its_message(rng):
    key = issue_key(1024, 768, seed=2)
    bits, msg = feature_on_codeword(P96, key, rng)
    sk = secure_sketch(select_bits(bits, key), P96)
    assert sk.decoded and sk.message_bits.size == 104
    assert bits_to_symbols(sk.message_bits) == msg


def test_packing_prefix_prevents_cross_length_collisions():
    a = secure_sketch(np.zeros(256, np.uint8), RsCodeParams(32, 7))
    b = secure_sketch(np.zeros(256, np.uint8), RsCodeParams(32, 8))
    assert a.packed()[:4] == (56).to_bytes(4, "big")
    assert a.digest() != b.digest()


def test_systematic_fallback_and_strict(rng):
    bits = rng.integers(0, 2, 768).astype(np.uint8)
    sk = secure_sketch(bits, P96)
    assert not sk.decoded
    assert (sk.message_bits == bits[:104]).all()
    with pytest.raises(DecodeFailure):
        secure_sketch(bits, P96, on_failure="strict")


def test_enroll_deterministic_and_conflict(rng):
    key = issue_key(1024, 768, seed=4)
    bits = rng.integers(0, 2, 1024).astype(np.uint8)
    s1, s2 = TemplateStore(P96, clock=fixed_clock), TemplateStore(P96, clock=fixed_clock)
    assert enroll(bits, key, P96, s1, "u").digest == enroll(bits, key, P96, s2, "u").digest
    with pytest.raises(ConflictError):
        enroll(bits, key, P96, s1, "u")
    enroll(bits, key, P96, s1, "u", overwrite=True)


def test_params_mismatch_rejected(rng):
    store = TemplateStore(P96)
    with pytest.raises(PipelineError):
        enroll(rng.integers(0, 2, 1024), issue_key(1024, 256, seed=0), P96, store, "u")


def test_authenticate_grant_deny_unknown(rng):
    store = TemplateStore(P96)
    key = issue_key(1024, 768, seed=8)
    bits, _ = feature_on_codeword(P96, key, rng)
    enroll(bits, key, P96, store, "u")
    assert authenticate(bits, key, P96, store, "u").reason == "match"
    assert authenticate(bits, key, P96, store, "nobody").reason == "unknown_subject"
    other = rng.integers(0, 2, 1024).astype(np.uint8)
    assert not authenticate(other, key, P96, store, "u")


def test_probe_within_t_symbols_granted(rng):
    for _ in range(50):
        key = issue_key(1024, 768, seed=int(rng.integers(1 << 30)))
        bits, msg = feature_on_codeword(P96, key, rng)
        store = TemplateStore(P96)
        enroll(bits, key, P96, store, "u")
        probe = bits.copy()
        sel = np.asarray(key.indices)
        cw_bits = probe[sel].copy()
        for pos in rng.choice(96, size=P96.t, replace=False):
            cw_bits[pos * 8 : pos * 8 + 8] ^= np.unpackbits(np.uint8(rng.integers(1, 256)))
        probe[sel] = cw_bits
        assert authenticate(probe, key, P96, store, "u").granted


def test_random_impostors_with_synthesized_keys_denied():
    rng = np.random.default_rng(42)
    store = TemplateStore(P96)
    key = issue_key(1024, 768, seed=1)
    enroll(rng.integers(0, 2, 1024).astype(np.uint8), key, P96, store, "victim")
    denied = 0
    trials = 2000
    for i in range(trials):
        fake = issue_key(1024, 768, seed=1000 + i)
        denied += not authenticate(rng.integers(0, 2, 1024).astype(np.uint8), fake, P96, store, "victim")
    assert denied / trials >= 0.999


def test_store_json_round_trip_and_atomic_save(tmp_path, rng):
    store = TemplateStore(P32, clock=fixed_clock)
    for i in range(3):
        enroll(rng.integers(0, 2, 512), issue_key(512, 256, seed=i), P32, store, f"s{i}")
    path = tmp_path / "store.json"
    store.save(path)
    back = TemplateStore.load(path)
    assert back.to_json() == store.to_json()
    assert not [p for p in tmp_path.iterdir() if p.name != "store.json"]


def test_store_hygiene_no_feature_or_template_material(rng):
    store = TemplateStore(P96, clock=fixed_clock)
    feats = {}
    for i in range(5):
        bits = rng.integers(0, 2, 1024).astype(np.uint8)
        key = issue_key(1024, 768, seed=i)
        enroll(bits, key, P96, store, f"s{i}")
        feats[i] = (bits, select_bits(bits, key).bits, key)
    text = store.to_json()
    for bits, tmpl, key in feats.values():
        bitstring = "".join(map(str, bits))
        for start in range(0, 1024 - 32, 97):
            assert bitstring[start : start + 32] not in text
        assert np.packbits(tmpl).tobytes().hex()[:16] not in text
        assert key.to_text().splitlines()[1] + "\n" + key.to_text().splitlines()[2] not in text


def test_key_non_leakage_same_sketch_same_record(rng):
    key_a = issue_key(1024, 768, seed=1)
    key_b = issue_key(1024, 768, seed=2)
    bits_a, msg = feature_on_codeword(P96, key_a, rng)
    bits_b = rng.integers(0, 2, 1024).astype(np.uint8)
    bits_b[list(key_b.indices)] = bits_a[list(key_a.indices)]
    sa, sb = TemplateStore(P96, clock=fixed_clock), TemplateStore(P96, clock=fixed_clock)
    enroll(bits_a, key_a, P96, sa, "u")
    enroll(bits_b, key_b, P96, sb, "u")
    assert sa.to_json() == sb.to_json()


def test_enroll_new_strict_exhausts_on_random_features(rng):
    store = TemplateStore(P96)
    with pytest.raises(EnrollmentError, match="16 keys"):
        enroll_new(rng.integers(0, 2, 1024), P96, store, "u", on_failure="strict")
    assert "u" not in store


def test_revocation(rng):
    pop = synth_population(1, 1024, BitChannelModel.uniform(1024, 0.0, 0.5), seed=0)
    feature = FeatureVector(pop.references[0], "u")
    store = TemplateStore(P96)
    old_key, _ = enroll_new(feature, P96, store, "u", seed=1)
    new_key, _ = revoke_and_reissue(store, "u", feature, 99, P96)
    assert not authenticate(feature, old_key, P96, store, "u")
    assert authenticate(feature, new_key, P96, store, "u")
    with pytest.raises(UnknownSubject):
        revoke_and_reissue(store, "ghost", feature, 1, P96)


def test_hundred_reissues_give_distinct_digests(rng):
    feature = rng.integers(0, 2, 1024).astype(np.uint8)
    store = TemplateStore(P96)
    enroll_new(feature, P96, store, "u", seed=0)
    digests = set()
    for s in range(1, 101):
        digests.add(revoke_and_reissue(store, "u", feature, s, P96)[1].digest)
    assert len(digests) == 100


def test_batch_sketch_matches_scalar(rng):
    from biosketch.pipeline import secure_sketch_many

    rows = rng.integers(0, 2, (40, 256)).astype(np.uint8)
    key = issue_key(256, 256, seed=0)
    for i in range(0, 40, 2):
        rows[i], _ = feature_on_codeword(P32, key, rng, errors=int(rng.integers(0, 14)))
    bits, ok = secure_sketch_many(rows, P32)
    for row, b, good in zip(rows, bits, ok):
        s = secure_sketch(row, P32)
        assert (s.message_bits == b).all() and s.decoded == good
