"""Versioned binary container for fitted models.

Layout (little-endian)::

    b"XMRB" | u32 format_version | u32 payload_tag | u64 payload_length
    | payload | u32 crc32(payload)

A payload is ``u32 meta_length | meta (UTF-8 JSON) | array data``. The JSON
lists every array's name and shape; array data follows in that order as
IEEE-754 float64.
"""

from __future__ import annotations

import json
import struct
import zlib
from dataclasses import dataclass

import numpy as np

from .bank import RbmBank
from .features import GaborBankSpec, WarpModel
from .head import ProjectionHead
from .multimodal import MultiModalRbmParams
from .rbm import TrainConfig
from .whitening import GaussianNormalizer

MAGIC = b"XMRB"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sIIQ")
_CRC = struct.Struct("<I")

TAG_RBM_BANK = 1
TAG_PROJECTION_HEAD = 2
TAG_GABOR_BANK = 3
TAG_WARP_MODEL = 4


class ArchiveError(ValueError):
    pass


class ChecksumError(ArchiveError):
    pass


class VersionError(ArchiveError):
    pass


class TruncatedError(ArchiveError):
    pass


def _pack(meta: dict, arrays: dict) -> bytes:
    meta = dict(meta)
    meta["arrays"] = [[name, list(arr.shape)] for name, arr in arrays.items()]
    head = json.dumps(meta, sort_keys=True, separators=(",", ":")).encode("utf-8")
    body = b"".join(np.ascontiguousarray(a, dtype="<f8").tobytes() for a in arrays.values())
    return struct.pack("<I", len(head)) + head + body


def _unpack(payload: bytes) -> tuple[dict, dict]:
    try:
        (n,) = struct.unpack_from("<I", payload, 0)
        meta = json.loads(payload[4:4 + n].decode("utf-8"))
        listing = meta.pop("arrays")
    except (struct.error, UnicodeDecodeError, json.JSONDecodeError, KeyError,
            AttributeError, TypeError) as exc:
        raise ArchiveError(f"unreadable payload metadata: {exc!r}") from None
    pos = 4 + n
    arrays = {}
    for name, shape in listing:
        count = int(np.prod(shape)) if shape else 1
        nbytes = 8 * count
        if pos + nbytes > len(payload):
            raise TruncatedError(f"payload ends inside array {name!r}")
        arrays[name] = np.frombuffer(payload, dtype="<f8", count=count,
                                     offset=pos).reshape(shape).astype(np.float64)
        pos += nbytes
    if pos != len(payload):
        raise ArchiveError(f"{len(payload) - pos} unexpected trailing payload bytes")
    return meta, arrays


# ---------------------------------------------------------------------------
# per-type encoders


def _encode_bank(bank: RbmBank):
    meta = {
        "regime": bank.regime_, "n_points": bank.n_points_, "jet_dim": bank.jet_dim_,
        "n_hidden": bank.n_hidden, "global_hidden": bank.global_hidden,
        "inference": bank.inference, "sweeps": bank.sweeps, "whitening": bank.whitening,
        "whitening_reg": bank.whitening_reg, "whitening_floor": bank.whitening_floor,
        "random_state": bank.random_state, "point_seeds": list(bank.point_seeds_),
        "n_rbms": len(bank.rbms_),
        "train_config": (bank.train_config or TrainConfig()).to_dict(),
    }
    arrays = {}
    for i, p in enumerate(bank.rbms_):
        for k in ("a", "b", "c", "W1", "W2"):
            arrays[f"rbm{i}.{k}"] = getattr(p, k)
    for i, norms in enumerate(bank.normalizers_):
        for mod, nz in norms.items():
            arrays[f"norm{i}.{mod}.mean"] = nz.mean_
            arrays[f"norm{i}.{mod}.transform"] = nz.transform_
    return meta, arrays


def _decode_bank(meta, arrays) -> RbmBank:
    bank = RbmBank(regime=meta["regime"], n_hidden=meta["n_hidden"],
                   global_hidden=meta["global_hidden"],
                   train_config=TrainConfig(**meta["train_config"]),
                   inference=meta["inference"], sweeps=meta["sweeps"],
                   whitening=meta["whitening"], whitening_reg=meta["whitening_reg"],
                   whitening_floor=meta["whitening_floor"],
                   random_state=meta["random_state"])
    bank.regime_ = meta["regime"]
    bank.n_points_ = meta["n_points"]
    bank.jet_dim_ = meta["jet_dim"]
    bank.point_seeds_ = list(meta["point_seeds"])
    bank.rbms_ = [MultiModalRbmParams(*(arrays[f"rbm{i}.{k}"]
                                        for k in ("a", "b", "c", "W1", "W2")))
                  for i in range(meta["n_rbms"])]
    bank.normalizers_ = [
        {mod: GaussianNormalizer.from_arrays(arrays[f"norm{i}.{mod}.mean"],
                                             arrays[f"norm{i}.{mod}.transform"],
                                             kind=meta["whitening"])
         for mod in ("A", "B")}
        for i in range(meta["n_points"])]
    return bank


def _encode_head(head: ProjectionHead):
    return ({"removed_k": int(head.removed_k), "energy_cutoff": head.energy_cutoff},
            {"mean": head.mean_, "components": head.components_,
             "explained_variance": head.explained_variance_})


def _decode_head(meta, arrays) -> ProjectionHead:
    head = ProjectionHead.from_arrays(arrays["mean"], arrays["components"], meta["removed_k"],
                                      arrays["explained_variance"])
    head.energy_cutoff = meta["energy_cutoff"]
    return head


def _encode_gabor(spec: GaborBankSpec):
    return ({"n_orientations": spec.n_orientations, "n_scales": spec.n_scales,
             "patch_radius": spec.patch_radius},
            {"k_max": np.array(spec.k_max), "k_factor": np.array(spec.k_factor),
             "sigma": np.array(spec.sigma)})


def _decode_gabor(meta, arrays) -> GaborBankSpec:
    return GaborBankSpec(meta["n_orientations"], meta["n_scales"], float(arrays["k_max"]),
                         float(arrays["k_factor"]), float(arrays["sigma"]),
                         meta["patch_radius"])


def _encode_warp(w: WarpModel):
    return ({}, {"control_src": w.control_src, "control_dst": w.control_dst,
                 "kernel_width": np.array(w.kernel_width), "rbf_weights": w.rbf_weights,
                 "affine": w.affine})


def _decode_warp(meta, arrays) -> WarpModel:
    return WarpModel(arrays["control_src"], arrays["control_dst"],
                     float(arrays["kernel_width"]), arrays["rbf_weights"], arrays["affine"])


_CODECS = {
    TAG_RBM_BANK: (RbmBank, _encode_bank, _decode_bank),
    TAG_PROJECTION_HEAD: (ProjectionHead, _encode_head, _decode_head),
    TAG_GABOR_BANK: (GaborBankSpec, _encode_gabor, _decode_gabor),
    TAG_WARP_MODEL: (WarpModel, _encode_warp, _decode_warp),
}


def payload_tag(obj) -> int:
    for tag, (cls, _, _) in _CODECS.items():
        if isinstance(obj, cls):
            return tag
    raise ArchiveError(f"cannot archive objects of type {type(obj).__name__}")


def encode_payload(obj) -> tuple[int, bytes]:
    tag = payload_tag(obj)
    meta, arrays = _CODECS[tag][1](obj)
    return tag, _pack(meta, arrays)


@dataclass(eq=False)
class ModelArchive:
    payload: object
    format_version: int = FORMAT_VERSION

    @property
    def tag(self) -> int:
        return payload_tag(self.payload)

    def __eq__(self, other):
        """Field-by-field equality of the archived content."""
        if not isinstance(other, ModelArchive):
            return NotImplemented
        if self.format_version != other.format_version or self.tag != other.tag:
            return False
        enc = _CODECS[self.tag][1]
        m1, a1 = enc(self.payload)
        m2, a2 = enc(other.payload)
        return (m1 == m2 and a1.keys() == a2.keys()
                and all(np.array_equal(a1[k], a2[k]) for k in a1))


def save_model(archive) -> bytes:
    if not isinstance(archive, ModelArchive):
        archive = ModelArchive(archive)
    tag, payload = encode_payload(archive.payload)
    return (_HEADER.pack(MAGIC, archive.format_version, tag, len(payload)) + payload
            + _CRC.pack(zlib.crc32(payload)))


def load_model(data: bytes) -> ModelArchive:
    data = bytes(data)
    if len(data) < _HEADER.size:
        raise TruncatedError("stream shorter than the archive header")
    magic, version, tag, length = _HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise ArchiveError(f"bad magic {magic!r}")
    if version != FORMAT_VERSION:
        raise VersionError(f"unsupported archive version {version} (reader knows {FORMAT_VERSION})")
    if tag not in _CODECS:
        raise ArchiveError(f"unknown payload tag {tag}")
    end = _HEADER.size + length
    if len(data) < end + _CRC.size:
        raise TruncatedError(f"archive truncated: need {end + _CRC.size} bytes, have {len(data)}")
    if len(data) > end + _CRC.size:
        raise ArchiveError("trailing bytes after checksum")
    payload = data[_HEADER.size:end]
    (crc,) = _CRC.unpack_from(data, end)
    if zlib.crc32(payload) != crc:
        raise ChecksumError("payload checksum mismatch")
    meta, arrays = _unpack(payload)
    try:
        obj = _CODECS[tag][2](meta, arrays)
    except (KeyError, TypeError, ValueError) as exc:
        raise ArchiveError(f"malformed payload: {exc}") from None
    return ModelArchive(obj, version)


def write_model(path, obj) -> None:
    with open(path, "wb") as fh:
        fh.write(save_model(obj))


def read_model(path):
    with open(path, "rb") as fh:
        return load_model(fh.read()).payload
