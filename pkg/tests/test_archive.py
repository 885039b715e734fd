import struct
import zlib

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from xmodal.archive import (
    FORMAT_VERSION,
    TAG_GABOR_BANK,
    TAG_PROJECTION_HEAD,
    TAG_RBM_BANK,
    TAG_WARP_MODEL,
    ArchiveError,
    ChecksumError,
    ModelArchive,
    TruncatedError,
    VersionError,
    load_model,
    read_model,
    save_model,
    write_model,
)
from xmodal.bank import RbmBank
from xmodal.features import GaborBankSpec, fit_warp, standard_landmarks
from xmodal.head import ProjectionHead
from xmodal.manifest import LandmarkSet
from xmodal.rbm import TrainConfig


@pytest.fixture(scope="module")
def bank():
    rng = np.random.default_rng(0)
    ja = rng.normal(size=(20, 2, 4))
    jb = ja @ rng.normal(size=(4, 4)) + 0.1 * rng.normal(size=(20, 2, 4))
    return RbmBank("local", n_hidden=3, train_config=TrainConfig(n_updates=50)).fit(ja, jb)


def head():
    X = np.random.default_rng(1).normal(size=(30, 8))
    return ProjectionHead(removed_k=2).fit(X)


def warp():
    std = standard_landmarks()
    dst = std.points + np.random.default_rng(2).uniform(-2, 2, std.points.shape)
    return fit_warp(std, LandmarkSet(dst, std.eye_left, std.eye_right))


def test_round_trip_every_payload(bank):
    for obj, tag in ((bank, TAG_RBM_BANK), (head(), TAG_PROJECTION_HEAD),
                     (GaborBankSpec(), TAG_GABOR_BANK), (warp(), TAG_WARP_MODEL)):
        blob = save_model(obj)
        assert blob[:4] == b"XMRB"
        assert struct.unpack_from("<I", blob, 8)[0] == tag
        back = load_model(blob)
        assert back == ModelArchive(obj)
        assert save_model(back) == blob


def test_bank_round_trip_behaves_identically(bank):
    back = load_model(save_model(bank)).payload
    assert len(back.rbms_) == 2
    x = np.random.default_rng(3).normal(size=(5, 2, 4))
    for m in "AB":
        assert np.array_equal(bank.transform(x, m), back.transform(x, m))


def test_head_and_warp_behave_identically(tmp_path):
    h = head()
    write_model(tmp_path / "h.xmrb", h)
    h2 = read_model(tmp_path / "h.xmrb")
    X = np.random.default_rng(4).normal(size=(3, 8))
    assert np.array_equal(h.transform(X), h2.transform(X))
    w = warp()
    w2 = load_model(save_model(w)).payload
    pts = np.random.default_rng(5).uniform(0, 100, (10, 2))
    assert np.array_equal(w(pts), w2(pts))


@settings(max_examples=30)
@given(hnp.arrays(np.float64, st.tuples(st.integers(3, 12), st.integers(2, 6)),
                  elements=st.floats(-1e6, 1e6, allow_nan=False)),
       st.integers(0, 1))
def test_head_round_trip_property(X, k):
    X = X + np.arange(X.shape[1])  # keep rows from collapsing to a point
    try:
        h = ProjectionHead(removed_k=k).fit(X)
    except ValueError:
        return
    assert load_model(save_model(h)) == ModelArchive(h)


@settings(max_examples=60)
@given(st.data())
def test_any_payload_bit_flip_is_a_checksum_error(data):
    blob = bytearray(save_model(head()))
    pos = data.draw(st.integers(20, len(blob) - 1))
    bit = data.draw(st.integers(0, 7))
    blob[pos] ^= 1 << bit
    with pytest.raises(ChecksumError):
        load_model(bytes(blob))


def test_version_mismatch():
    blob = bytearray(save_model(head()))
    struct.pack_into("<I", blob, 4, FORMAT_VERSION + 1)
    with pytest.raises(VersionError):
        load_model(bytes(blob))
    with pytest.raises(VersionError):
        load_model(save_model(ModelArchive(head(), FORMAT_VERSION + 1)))


@pytest.mark.parametrize("cut", [0, 3, 19, 25, -1])
def test_truncation(cut):
    blob = save_model(head())
    with pytest.raises(TruncatedError):
        load_model(blob[:cut])


def test_bad_magic_tag_and_trailing_bytes():
    blob = save_model(head())
    with pytest.raises(ArchiveError):
        load_model(b"XXXX" + blob[4:])
    bad_tag = bytearray(blob)
    struct.pack_into("<I", bad_tag, 8, 99)
    with pytest.raises(ArchiveError):
        load_model(bytes(bad_tag))
    with pytest.raises(ArchiveError):
        load_model(blob + b"\0")
    with pytest.raises(ArchiveError):
        save_model(object())


def test_checksum_is_crc32_of_payload():
    blob = save_model(GaborBankSpec())
    (length,) = struct.unpack_from("<Q", blob, 12)
    payload = blob[20:20 + length]
    assert struct.unpack_from("<I", blob, 20 + length)[0] == zlib.crc32(payload)
    assert len(blob) == 20 + length + 4


def test_consistent_checksum_but_malformed_payload():
    payload = struct.pack("<I", 2) + b"{}"
    blob = (struct.pack("<4sIIQ", b"XMRB", FORMAT_VERSION, TAG_PROJECTION_HEAD, len(payload))
            + payload + struct.pack("<I", zlib.crc32(payload)))
    with pytest.raises(ArchiveError):
        load_model(blob)
