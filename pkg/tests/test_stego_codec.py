import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from covermod.cover_mod import modify_cover
from covermod.simulate import symmetric_cover
from covermod.stego_codec import (LENGTH_BITS, CapacityError, KeyMaterial, OmittedMask, TagNotFoundError,
                                  build_master_sequence, candidate_positions, decode_omitted_mask, derive_path,
                                  embed, encode_omitted_mask, extract, extract_masks, masks_from_capacity,
                                  message_capacity, path_layout)


def test_empty_mask_bits():
    assert encode_omitted_mask(OmittedMask.empty(3)).tolist() == [0] * 242
    assert OmittedMask.empty(2).n_bits == 11


def test_corner_key_is_first_bit():
    bits = encode_omitted_mask(OmittedMask.from_keys(3, [[(-5, -5)], []]))
    assert bits[0] == 1 and bits.sum() == 1
    bits = encode_omitted_mask(OmittedMask.from_keys(3, [[], [(5, 5)]]))
    assert bits[-1] == 1 and bits.sum() == 1


@settings(max_examples=50, deadline=None)
@given(st.lists(st.booleans(), min_size=242, max_size=242))
def test_mask_round_trip(flags):
    bits = np.array(flags, dtype=np.uint8)
    mask = decode_omitted_mask(bits, 3)
    assert np.array_equal(encode_omitted_mask(mask), bits)
    assert OmittedMask.from_keys(3, mask.keys()) == mask


def test_mask_length_checked():
    with pytest.raises(ValueError):
        decode_omitted_mask(np.zeros(10), 3)


def test_path_deterministic_and_keyed():
    shape = (64, 66, 1)
    a = derive_path("k1", shape, 3)
    assert np.array_equal(a, derive_path(KeyMaterial.from_passphrase("k1"), shape, 3))
    b = derive_path("k2", shape, 3)
    assert not np.array_equal(a, b)
    assert np.array_equal(np.sort(a), np.sort(b))
    assert np.mean(a != b) > 0.99


def test_order3_candidates_skip_middle_pair():
    cand = candidate_positions((2, 14, 1), 3)
    cols = cand % 14
    assert sorted(set((cols % 6).tolist())) == [0, 1, 4, 5]
    # two whole blocks per row: 4 of every 6 samples, ragged tail excluded
    assert len(cand) == 2 * 2 * 4
    assert len(candidate_positions((2, 14, 3), 2)) == 2 * 14 * 3


def test_keystream():
    km = KeyMaterial(b"secret")
    s = km.keystream(1000)
    assert set(np.unique(s).tolist()) <= {0, 1}
    assert np.array_equal(s, KeyMaterial(b"secret").keystream(1000))
    assert 400 < s.sum() < 600


@pytest.fixture
def cover():
    return symmetric_cover(64, 96, np.random.default_rng(2), scale=1.0)


@pytest.mark.parametrize("order", [2, 3])
def test_round_trip(cover, order):
    msg = b"attack at dawn"
    stego = embed(cover, "key", msg, order=order)
    assert extract(stego, "key") == msg
    assert extract(stego, "key", order) == msg
    assert np.abs(stego.astype(int) - cover).max() <= 1


def test_empty_message(cover):
    assert extract(embed(cover, "k", b""), "k") == b""


def test_wrong_key(cover):
    stego = embed(cover, "right", b"hello")
    for k in ("wrong", "Right", "right "):
        with pytest.raises(TagNotFoundError):
            extract(stego, k)


def test_omitted_keys_are_carried(photo_gray):
    modified, plans, cap = modify_cover(photo_gray, 3, seed=0)
    masks = masks_from_capacity(cap)
    stego = embed(modified, "k", b"payload", masks, 3, alpha=cap.alpha)
    assert extract(stego, "k") == b"payload"
    assert extract_masks(stego, "k", 3) == masks


def test_placeholders(cover):
    layout = path_layout(cover, "k", 3)
    ms = build_master_sequence(b"x", layout, [OmittedMask.empty(3)])
    assert len(ms) == len(layout.path)
    assert ms.placeholders == int((layout.key < 0).sum())
    grp = max(layout.group_sizes(0).items(), key=lambda t: t[1])[0]
    mask = OmittedMask.empty(3)
    mask.bits[grp] = True
    ms2 = build_master_sequence(b"x", layout, [mask])
    assert ms2.placeholders > ms.placeholders


def test_message_is_keyed_lsb_stream(cover):
    msg = b"\x00\xff\x5a"
    stego = embed(cover, "k", msg, order=2)
    layout = path_layout(stego, "k", 2)
    ms = build_master_sequence(msg, layout, [OmittedMask.empty(2)])
    plain = (stego.reshape(-1)[layout.path] & 1) ^ KeyMaterial.from_passphrase("k").keystream(len(layout.path))
    assert np.array_equal(plain[ms.is_payload], ms.bits[ms.is_payload])


def test_point_error_stays_local(cover):
    msg = bytes(range(20))
    stego = embed(cover, "k", msg, order=3)
    layout = path_layout(stego, "k", 3)
    ms = build_master_sequence(msg, layout, [OmittedMask.empty(3)])
    header = np.zeros(len(layout.path), dtype=bool)
    header[ms.header] = True
    free = np.flatnonzero(ms.embeddable & ~header)
    bit = 37
    bad = stego.copy()
    bad.reshape(-1)[layout.path[free[LENGTH_BITS + bit]]] ^= 1
    got = extract(bad, "k")
    diff = np.unpackbits(np.frombuffer(got, np.uint8)) ^ np.unpackbits(np.frombuffer(msg, np.uint8))
    assert np.flatnonzero(diff).tolist() == [bit]


def test_capacity_error(cover):
    layout = path_layout(cover, "k", 3)
    cap = message_capacity(layout, [OmittedMask.empty(3)])
    embed(cover, "k", bytes(cap), order=3)
    with pytest.raises(CapacityError):
        embed(cover, "k", bytes(cap + 1), order=3)


def test_padding_changes_about_half_the_rate(cover):
    layout = path_layout(cover, "k", 2)
    n = int((layout.key >= 0).sum())
    stego = embed(cover, "k", b"", order=2, alpha=0.5)
    changed = int((stego != cover).sum())
    assert abs(changed - 0.25 * n) < 5 * np.sqrt(0.25 * n)


def test_header_room_required():
    tiny = np.zeros((4, 12, 1), dtype=np.uint8)
    with pytest.raises(CapacityError):
        embed(tiny, "k", b"", order=3)


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 2 ** 31), order=st.sampled_from([2, 3]), frac=st.floats(0.0, 1.0))
def test_random_round_trips(seed, order, frac):
    rng = np.random.default_rng(seed)
    cover = symmetric_cover(48, 72, rng, scale=1.0)
    key = rng.bytes(16)
    cap = message_capacity(path_layout(cover, key, order), [OmittedMask.empty(order)])
    msg = rng.bytes(int(frac * cap))
    assert extract(embed(cover, key, msg, order=order), key) == msg
