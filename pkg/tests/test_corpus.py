import json

import numpy as np
import pytest

from vidmod import corpus
from vidmod.corpus import (
    DuplicateId,
    EmptyClass,
    InvalidWeights,
    MalformedLine,
    MissingModality,
    NoiseSpec,
    VideoRecord,
)
from vidmod.labels import LabelClass

from conftest import FIXTURES


def write_lines(path, lines):
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def test_load_three_valid_lines(tmp_path):
    p = write_lines(
        tmp_path / "m.jsonl",
        [
            '{"id":"a","label":"safe","duration_s":5,"asr_raw":"hi"}',
            '{"id":"b","label":"suicide","duration_s":8,"ocr_raw":["x"]}',
            '{"id":"c","duration_s":3,"asr_raw":""}',
        ],
    )
    records = corpus.load_manifest(p)
    assert [r.id for r in records] == ["a", "b", "c"]
    assert records[1].label is LabelClass.SUICIDE
    assert records[2].label is None


def test_duplicate_id_rejected(tmp_path):
    p = write_lines(
        tmp_path / "m.jsonl",
        [
            '{"id":"v1","duration_s":5,"asr_raw":"hi"}',
            '{"id":"v1","duration_s":6,"asr_raw":"ho"}',
        ],
    )
    with pytest.raises(DuplicateId) as exc:
        corpus.load_manifest(p)
    assert exc.value.record_id == "v1"


def test_malformed_line_carries_line_number(tmp_path):
    p = write_lines(
        tmp_path / "m.jsonl",
        ['{"id":"a","duration_s":5,"asr_raw":"hi"}', "{not json"],
    )
    with pytest.raises(MalformedLine) as exc:
        corpus.load_manifest(p)
    assert exc.value.line_no == 2


def test_missing_modality_rejected(tmp_path):
    p = write_lines(tmp_path / "m.jsonl", ['{"id":"a","duration_s":5}'])
    with pytest.raises(MissingModality):
        corpus.load_manifest(p)


def test_combined_fixture_split_totals():
    records = corpus.load_manifest(FIXTURES / "combined_stats.jsonl")
    stats = corpus.summarize(records)
    assert stats.per_split["train"] == 3418
    assert stats.per_split["dev"] == 515
    assert stats.per_split["test"] == 790
    assert stats.total == 4723


def test_extended_fixture_class_stats():
    records = corpus.load_manifest(FIXTURES / "extended_stats.jsonl")
    stats = corpus.summarize(records)
    expected = {
        "safe": (251, 3.04, 60.0, 25.97),
        "adult_content": (164, 4.69, 60.0, 18.78),
        "harmful_content": (203, 5.06, 60.0, 22.61),
        "suicide": (157, 6.00, 60.0, 19.83),
    }
    for name, (n, lo, hi, avg) in expected.items():
        cs = stats.per_class[name]
        assert cs.count == n
        assert cs.min_duration == pytest.approx(lo)
        assert cs.max_duration == pytest.approx(hi)
        assert cs.avg_duration == pytest.approx(avg, abs=1e-9)


def test_label_round_trip():
    for c in LabelClass:
        assert LabelClass.from_string(c.canonical) is c


# -- split_dataset -------------------------------------------------------------


def make_records(n, label=LabelClass.SAFE, split="unassigned"):
    return [
        VideoRecord(id=f"r{label.value}_{i}", label=label, split=split, duration_s=10.0, asr_raw="x")
        for i in range(n)
    ]


def test_split_preserves_totals_and_stratifies():
    records = []
    for c, n in zip(LabelClass, (251, 164, 203, 157)):
        records += make_records(n, c)
    out = corpus.split_dataset(records, 0.85, seed=3)
    assert len(out) == 775
    n_train = sum(1 for r in out if r.split == "train")
    n_dev = sum(1 for r in out if r.split == "dev")
    assert n_train + n_dev == 775
    for c, n in zip(LabelClass, (251, 164, 203, 157)):
        class_train = sum(1 for r in out if r.label is c and r.split == "train")
        assert class_train == int(np.floor(n * 0.85 + 0.5))


def test_split_single_class_arithmetic():
    out = corpus.split_dataset(make_records(100), 0.85, seed=0)
    assert sum(1 for r in out if r.split == "train") == 85
    assert sum(1 for r in out if r.split == "dev") == 15


def test_split_seed_changes_assignment_not_counts():
    records = []
    for c in LabelClass:
        records += make_records(60, c)
    a = corpus.split_dataset(records, 0.85, seed=1)
    b = corpus.split_dataset(records, 0.85, seed=2)
    counts_a = {(r.label, r.split) for r in a}
    assign_a = [(r.id, r.split) for r in a]
    assign_b = [(r.id, r.split) for r in b]
    assert assign_a != assign_b
    for c in LabelClass:
        for split in ("train", "dev"):
            na = sum(1 for r in a if r.label is c and r.split == split)
            nb = sum(1 for r in b if r.label is c and r.split == split)
            assert na == nb
    assert counts_a  # sanity


def test_split_is_partition():
    records = []
    for c in LabelClass:
        records += make_records(25, c)
    out = corpus.split_dataset(records, 0.7, seed=5)
    assert sorted(r.id for r in out) == sorted(r.id for r in records)
    assert all(r.split in ("train", "dev") for r in out)


def test_split_leaves_test_untouched():
    records = make_records(20) + make_records(10, LabelClass.SAFE, split="test")
    # rename ids to keep them unique
    records = [
        r if r.split != "test" else VideoRecord(
            id=f"t{i}", label=r.label, split="test", duration_s=r.duration_s, asr_raw="x"
        )
        for i, r in enumerate(records)
    ]
    out = corpus.split_dataset(records, 0.85, seed=0)
    assert sum(1 for r in out if r.split == "test") == 10


def test_split_empty_class_rejected():
    # harmful_content exists in the corpus but only in the frozen test split,
    # so there is nothing of it to stratify over
    records = make_records(10, LabelClass.SAFE)
    records += [
        VideoRecord(id=f"h{i}", label=LabelClass.HARMFUL_CONTENT, split="test",
                    duration_s=5.0, asr_raw="x")
        for i in range(3)
    ]
    with pytest.raises(EmptyClass):
        corpus.split_dataset(records, 0.85, seed=0)


def test_split_refuses_reassignment_without_force():
    records = make_records(8, split="train")
    with pytest.raises(ValueError, match="force"):
        corpus.split_dataset(records, 0.85, seed=0)


# -- summarize -------------------------------------------------------------


def test_summarize_empty():
    stats = corpus.summarize([])
    assert stats.total == 0
    assert all(cs.count == 0 for cs in stats.per_class.values())
    assert all(cs.avg_duration is None for cs in stats.per_class.values())


def test_summarize_min_max_avg():
    records = [
        VideoRecord(id="a", label=LabelClass.SAFE, duration_s=10, asr_raw="x"),
        VideoRecord(id="b", label=LabelClass.SAFE, duration_s=30, asr_raw="x"),
    ]
    cs = corpus.summarize(records).per_class["safe"]
    assert (cs.min_duration, cs.max_duration, cs.avg_duration) == (10, 30, 20)


def test_summarize_additive_counts():
    rng = np.random.default_rng(0)
    a, b = [], []
    for i in range(40):
        rec = VideoRecord(
            id=f"x{i}",
            label=LabelClass(int(rng.integers(0, 4))),
            duration_s=float(rng.uniform(1, 50)),
            asr_raw="x",
        )
        (a if i % 3 else b).append(rec)
    sa, sb, sab = corpus.summarize(a), corpus.summarize(b), corpus.summarize(a + b)
    for name in sab.per_class:
        assert sab.per_class[name].count == sa.per_class[name].count + sb.per_class[name].count


# -- synthetic generator ----------------------------------------------------


def test_generator_uniform_counts_exact(tmp_path):
    records = corpus.generate_synthetic(1000, [1, 1, 1, 1], NoiseSpec(), seed=0, out_dir=tmp_path)
    counts = {c: 0 for c in LabelClass}
    for r in records:
        counts[r.label] += 1
    for c in LabelClass:
        assert abs(counts[c] - 250) <= 250 * 0.05  # quota allocation is exact
        assert counts[c] == 250


def test_generator_drop_ocr(tmp_path):
    records = corpus.generate_synthetic(
        50, [1, 1, 1, 1], NoiseSpec(drop_ocr=1.0), seed=0, out_dir=tmp_path
    )
    assert all(r.ocr_raw == () for r in records)


def test_generator_planted_signal_decodable(tmp_path):
    records = corpus.generate_synthetic(400, [1, 1, 1, 1], NoiseSpec(), seed=5, out_dir=tmp_path)
    both = sum(
        corpus.decode_planted(r, tmp_path) is r.label for r in records
    )
    video_only = sum(
        corpus.decode_planted(r, tmp_path, use_text=False) is r.label for r in records
    )
    text_only = sum(
        corpus.decode_planted(r, tmp_path, use_video=False) is r.label for r in records
    )
    assert both == len(records)
    assert video_only <= 0.6 * len(records)
    assert text_only <= 0.6 * len(records)


def test_generator_deterministic(tmp_path):
    a_dir, b_dir = tmp_path / "a", tmp_path / "b"
    corpus.generate_synthetic(60, [2, 1, 1, 1], NoiseSpec(spam_prob=0.3), seed=9, out_dir=a_dir)
    corpus.generate_synthetic(60, [2, 1, 1, 1], NoiseSpec(spam_prob=0.3), seed=9, out_dir=b_dir)
    assert (a_dir / "manifest.jsonl").read_bytes() == (b_dir / "manifest.jsonl").read_bytes()
    for fa in sorted((a_dir / "features").iterdir()):
        fb = b_dir / "features" / fa.name
        assert fa.read_bytes() == fb.read_bytes()


def test_generator_invalid_weights(tmp_path):
    with pytest.raises(InvalidWeights):
        corpus.generate_synthetic(10, [0, 0, 0, 0], NoiseSpec(), seed=0, out_dir=tmp_path)
    with pytest.raises(InvalidWeights):
        corpus.generate_synthetic(10, [1, -1, 1, 1], NoiseSpec(), seed=0, out_dir=tmp_path)


def test_feature_file_round_trip(tmp_path):
    frames = np.random.default_rng(0).normal(size=(4, 16)).astype(np.float32)
    path = tmp_path / "f.mtgf"
    corpus.write_feature_file(path, frames)
    back = corpus.read_feature_file(path)
    assert back.shape == (4, 16)
    np.testing.assert_allclose(back, frames.astype(np.float64), rtol=0, atol=0)


def test_audio_file_round_trip(tmp_path):
    samples = np.sin(np.linspace(0, 10, 1600)).astype(np.float32)
    path = tmp_path / "a.mtga"
    corpus.write_audio_file(path, samples, 16000)
    back, rate = corpus.read_audio_file(path)
    assert rate == 16000
    np.testing.assert_allclose(back, samples.astype(np.float64))


def test_manifest_round_trip(tmp_path):
    records = corpus.generate_synthetic(20, [1, 1, 1, 1], NoiseSpec(), seed=2, out_dir=tmp_path)
    reloaded = corpus.load_manifest(tmp_path / "manifest.jsonl")
    assert reloaded == records
