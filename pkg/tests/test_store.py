import numpy as np
import pytest

from xmodal.manifest import DatasetManifest, ManifestEntry
from xmodal.store import (
    line_svg,
    load_features,
    manifest_from_index,
    read_pgm,
    read_scores_csv,
    save_features,
    scores_csv,
    table_csv,
    write_pgm,
)


def test_pgm_binary_round_trip(tmp_path):
    img = np.random.default_rng(0).integers(0, 256, (7, 11)).astype(float)
    write_pgm(tmp_path / "a.pgm", img)
    assert np.array_equal(read_pgm(tmp_path / "a.pgm"), img)


def test_pgm_ascii_with_comment(tmp_path):
    (tmp_path / "b.pgm").write_text("P2\n# made by hand\n3 2\n255\n0 1 2\n253 254 255\n")
    assert read_pgm(tmp_path / "b.pgm").tolist() == [[0, 1, 2], [253, 254, 255]]


def test_pgm_rejects_other_formats(tmp_path):
    (tmp_path / "c.ppm").write_bytes(b"P6\n1 1\n255\n\0\0\0")
    with pytest.raises(ValueError):
        read_pgm(tmp_path / "c.ppm")
    (tmp_path / "d.pgm").write_bytes(b"P5\n4 4\n255\n\0\0")
    with pytest.raises(ValueError):
        read_pgm(tmp_path / "d.pgm")


def test_feature_store_round_trip(tmp_path):
    entries = [ManifestEntry(f"x{i}", f"s{i // 2}", "AB"[i % 2], "-", "-") for i in range(4)]
    feats = np.random.default_rng(1).normal(size=(4, 2, 3, 5))
    save_features(tmp_path, DatasetManifest(entries), feats)
    back, ids, subjects, modalities = load_features(tmp_path)
    assert np.array_equal(back, feats)
    assert ids == ["x0", "x1", "x2", "x3"]
    assert subjects.tolist() == ["s0", "s0", "s1", "s1"]
    assert modalities.tolist() == ["A", "B", "A", "B"]
    m = manifest_from_index(ids, subjects, modalities)
    assert [e.sample_id for e in m.entries] == ids


def test_feature_store_count_mismatch(tmp_path):
    entries = [ManifestEntry("x", "s", "A", "-", "-")]
    with pytest.raises(ValueError):
        save_features(tmp_path, DatasetManifest(entries), np.zeros((2, 1, 1, 1)))


def test_scores_csv_round_trip_is_exact():
    S = np.random.default_rng(2).normal(size=(3, 4)) / 7
    text = scores_csv(S, ["p0", "p1", "p2"], ["g0", "g1", "g2", "g3"])
    assert text.splitlines()[0] == "probe_id,gallery_id,score"
    back, probes, gallery = read_scores_csv(text)
    assert np.array_equal(back, S)
    assert probes == ["p0", "p1", "p2"] and gallery == ["g0", "g1", "g2", "g3"]


def test_table_csv_and_svg():
    assert table_csv(["k", "v"], [[1, 0.5]]) == "k,v\n1,0.5\n"
    svg = line_svg({"a": ([1e-4, 1e-2, 1], [0, 0.5, 1])}, "x", "y", log_x=True)
    assert svg.startswith("<svg") and "polyline" in svg and svg.endswith("</svg>\n")
