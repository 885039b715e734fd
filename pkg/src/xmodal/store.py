"""On-disk formats: PGM images, feature stores, score CSVs and small SVG plots."""

from __future__ import annotations

import csv
import io
import json
from pathlib import Path

import numpy as np

from .manifest import DatasetManifest, ManifestEntry

FEATURES_FILE = "features.npy"
INDEX_FILE = "samples.tsv"
STORE_META = "store.json"


# ---------------------------------------------------------------------------
# PGM


def read_pgm(path) -> np.ndarray:
    """8-bit binary (P5) or ASCII (P2) grayscale PGM as a float array."""
    data = Path(path).read_bytes()
    tokens, pos = [], 0
    while len(tokens) < 4:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        tokens.append(data[start:pos])
    magic, w, h, maxval = tokens[0], int(tokens[1]), int(tokens[2]), int(tokens[3])
    if maxval > 255:
        raise ValueError(f"{path}: only 8-bit PGM is supported")
    if magic == b"P5":
        raw = np.frombuffer(data, dtype=np.uint8, count=w * h, offset=pos + 1)
    elif magic == b"P2":
        raw = np.array(data[pos:].split(), dtype=np.uint8)[:w * h]
    else:
        raise ValueError(f"{path}: not a grayscale PGM (magic {magic!r})")
    if raw.size != w * h:
        raise ValueError(f"{path}: truncated image data")
    return raw.reshape(h, w).astype(np.float64)


def write_pgm(path, image) -> None:
    img = np.clip(np.rint(np.asarray(image, dtype=np.float64)), 0, 255).astype(np.uint8)
    h, w = img.shape
    Path(path).write_bytes(f"P5\n{w} {h}\n255\n".encode("ascii") + img.tobytes())


# ---------------------------------------------------------------------------
# feature store


def save_features(directory, manifest: DatasetManifest, features) -> None:
    """Write jets shaped (n_samples, n_halves, n_points, dim) with their sample index."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    features = np.ascontiguousarray(features, dtype="<f8")
    if features.ndim != 4 and features.size:
        raise ValueError(f"features must be 4-D, got shape {features.shape}")
    if len(features) != len(manifest):
        raise ValueError("one feature block per manifest entry is required")
    with open(d / FEATURES_FILE, "wb") as fh:
        np.save(fh, features, allow_pickle=False)
    lines = ["sample_id\tsubject_id\tmodality"]
    lines += [f"{e.sample_id}\t{e.subject_id}\t{e.modality}" for e in manifest.entries]
    (d / INDEX_FILE).write_text("\n".join(lines) + "\n", encoding="utf-8")
    meta = {"format": "xmodal-features v1", "shape": list(features.shape),
            "halves": ["left", "right"][:features.shape[1]] if features.ndim == 4 else []}
    (d / STORE_META).write_text(json.dumps(meta, sort_keys=True, indent=2) + "\n")


def load_features(directory):
    """Returns ``(features, sample_ids, subjects, modalities)``."""
    d = Path(directory)
    features = np.load(d / FEATURES_FILE, allow_pickle=False)
    rows = (d / INDEX_FILE).read_text(encoding="utf-8").splitlines()[1:]
    parts = [r.split("\t") for r in rows if r.strip()]
    ids = [p[0] for p in parts]
    subjects = np.array([p[1] for p in parts])
    modalities = np.array([p[2] for p in parts])
    if len(ids) != len(features):
        raise ValueError(f"{d}: index lists {len(ids)} samples, features hold {len(features)}")
    return features, ids, subjects, modalities


def manifest_from_index(ids, subjects, modalities) -> DatasetManifest:
    return DatasetManifest([ManifestEntry(i, s, m, "-", "-")
                            for i, s, m in zip(ids, subjects, modalities)])


# ---------------------------------------------------------------------------
# CSV / SVG


def format_float(x: float) -> str:
    return repr(float(x))


def scores_csv(scores, probe_ids, gallery_ids) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["probe_id", "gallery_id", "score"])
    for i, p in enumerate(probe_ids):
        for j, g in enumerate(gallery_ids):
            w.writerow([p, g, format_float(scores[i, j])])
    return buf.getvalue()


def read_scores_csv(text: str):
    rows = list(csv.reader(io.StringIO(text)))[1:]
    probes = list(dict.fromkeys(r[0] for r in rows))
    gallery = list(dict.fromkeys(r[1] for r in rows))
    pi = {p: i for i, p in enumerate(probes)}
    gi = {g: i for i, g in enumerate(gallery)}
    S = np.full((len(probes), len(gallery)), np.nan)
    for p, g, s in rows:
        S[pi[p], gi[g]] = float(s)
    return S, probes, gallery


def table_csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([format_float(v) if isinstance(v, float) else v for v in row])
    return buf.getvalue()


def line_svg(series: dict, xlabel: str, ylabel: str, width=480, height=320,
             log_x=False) -> str:
    """Minimal SVG line chart; ``series`` maps a name to (x, y) arrays."""
    pad = 48
    xs = np.concatenate([np.asarray(x, dtype=float) for x, _ in series.values()])
    if log_x:
        xs = np.log10(np.clip(xs, 1e-6, None))
    x0, x1 = float(xs.min()), float(xs.max())
    if x1 == x0:
        x1 = x0 + 1.0
    colours = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"]
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
           f'<rect width="{width}" height="{height}" fill="white"/>',
           f'<line x1="{pad}" y1="{height - pad}" x2="{width - pad / 2}" y2="{height - pad}" '
           'stroke="black"/>',
           f'<line x1="{pad}" y1="{pad / 2}" x2="{pad}" y2="{height - pad}" stroke="black"/>',
           f'<text x="{width / 2}" y="{height - 10}" text-anchor="middle">{xlabel}</text>',
           f'<text x="14" y="{height / 2}" transform="rotate(-90 14 {height / 2})" '
           f'text-anchor="middle">{ylabel}</text>']
    for k, (name, (x, y)) in enumerate(series.items()):
        x = np.asarray(x, dtype=float)
        if log_x:
            x = np.log10(np.clip(x, 1e-6, None))
        px = pad + (x - x0) / (x1 - x0) * (width - 1.5 * pad)
        py = height - pad - np.clip(np.asarray(y, dtype=float), 0, 1) * (height - 1.5 * pad)
        pts = " ".join(f"{a:.2f},{b:.2f}" for a, b in zip(px, py))
        c = colours[k % len(colours)]
        out.append(f'<polyline fill="none" stroke="{c}" stroke-width="1.5" points="{pts}"/>')
        out.append(f'<text x="{width - pad}" y="{pad / 2 + 14 * (k + 1)}" fill="{c}" '
                   f'text-anchor="end">{name}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
