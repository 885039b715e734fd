"""Dataset manifests and landmark files.

Manifest format (UTF-8, ``#`` starts a comment line)::

    xmodal-manifest v1
    sample_id<TAB>subject_id<TAB>modality<TAB>image_path<TAB>landmark_path

Landmark format::

    xmodal-landmarks v1 eyes <left_index> <right_index>
    x y        (48 lines, pixels)
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import PurePath

import numpy as np

MANIFEST_HEADER = "xmodal-manifest v1"
LANDMARK_HEADER = "xmodal-landmarks v1"
N_LANDMARKS = 48


class ManifestError(ValueError):
    """Malformed manifest or landmark text."""


class DuplicateSampleError(ManifestError):
    pass


@dataclass(frozen=True)
class ManifestEntry:
    sample_id: str
    subject_id: str
    modality: str
    image_path: str
    landmark_path: str


@dataclass
class DatasetManifest:
    entries: list

    def __post_init__(self):
        seen = set()
        for e in self.entries:
            if e.sample_id in seen:
                raise DuplicateSampleError(f"duplicate sample_id {e.sample_id!r}")
            seen.add(e.sample_id)
            if e.modality not in ("A", "B"):
                raise ManifestError(f"sample {e.sample_id!r}: modality must be A or B")

    def __len__(self):
        return len(self.entries)

    @property
    def sample_ids(self):
        return [e.sample_id for e in self.entries]

    def subjects(self):
        return sorted({e.subject_id for e in self.entries})


def parse_manifest(text: str) -> DatasetManifest:
    lines = text.splitlines()
    body_start = None
    for i, line in enumerate(lines):
        if line.strip() and not line.lstrip().startswith("#"):
            if line.strip() != MANIFEST_HEADER:
                raise ManifestError(f"line {i + 1}: expected header {MANIFEST_HEADER!r}")
            body_start = i + 1
            break
    if body_start is None:
        raise ManifestError("missing manifest header")
    entries, seen = [], {}
    for i in range(body_start, len(lines)):
        line = lines[i]
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 5:
            raise ManifestError(f"line {i + 1}: expected 5 tab-separated fields, got {len(parts)}")
        sid, subj, mod, img, lm = (p.strip() for p in parts)
        if not sid or not subj:
            raise ManifestError(f"line {i + 1}: empty sample or subject id")
        if mod not in ("A", "B"):
            raise ManifestError(f"line {i + 1}: modality must be A or B, got {mod!r}")
        for path in (img, lm):
            if not path or "\x00" in path:
                raise ManifestError(f"line {i + 1}: invalid path {path!r}")
            PurePath(path)
        if sid in seen:
            raise DuplicateSampleError(
                f"line {i + 1}: duplicate sample_id {sid!r} (first seen on line {seen[sid]})")
        seen[sid] = i + 1
        entries.append(ManifestEntry(sid, subj, mod, img, lm))
    return DatasetManifest(entries)


def format_manifest(manifest: DatasetManifest) -> str:
    out = [MANIFEST_HEADER]
    for e in manifest.entries:
        out.append("\t".join((e.sample_id, e.subject_id, e.modality, e.image_path,
                              e.landmark_path)))
    return "\n".join(out) + "\n"


@dataclass
class LandmarkSet:
    points: np.ndarray  # (48, 2) pixels
    eye_left: int
    eye_right: int

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64)
        if self.points.shape != (N_LANDMARKS, 2):
            raise ManifestError(f"expected {N_LANDMARKS} landmarks, got {self.points.shape}")
        for idx in (self.eye_left, self.eye_right):
            if not 0 <= idx < N_LANDMARKS:
                raise ManifestError(f"eye index {idx} out of range")
        if self.eye_left == self.eye_right:
            raise ManifestError("eye indices must differ")

    @property
    def eye_distance(self) -> float:
        return float(np.linalg.norm(self.points[self.eye_left] - self.points[self.eye_right]))


def parse_landmarks(text: str) -> LandmarkSet:
    lines = [ln for ln in text.splitlines() if ln.strip() and not ln.lstrip().startswith("#")]
    if not lines:
        raise ManifestError("empty landmark file")
    head = lines[0].split()
    if " ".join(head[:2]) != LANDMARK_HEADER or len(head) != 5 or head[2] != "eyes":
        raise ManifestError(f"bad landmark header {lines[0]!r}")
    try:
        eyes = int(head[3]), int(head[4])
        pts = [tuple(float(t) for t in ln.split()) for ln in lines[1:]]
    except ValueError as exc:
        raise ManifestError(f"unparseable landmark file: {exc}") from None
    if any(len(p) != 2 for p in pts):
        raise ManifestError("every landmark line needs exactly two numbers")
    return LandmarkSet(np.array(pts).reshape(-1, 2), *eyes)


def format_landmarks(lms: LandmarkSet) -> str:
    out = [f"{LANDMARK_HEADER} eyes {lms.eye_left} {lms.eye_right}"]
    out += [f"{x!r} {y!r}" for x, y in lms.points.tolist()]
    return "\n".join(out) + "\n"
