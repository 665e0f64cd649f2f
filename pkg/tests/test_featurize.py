import numpy as np
import pytest

from vidmod import corpus
from vidmod.featurize import featurize_records, record_features, split_sentences


def test_split_sentences():
    assert split_sentences("one two three . four five six") == [
        "one two three",
        "four five six",
    ]
    assert split_sentences("") == []
    assert split_sentences("hello there! are you ok? yes") == [
        "hello there",
        "are you ok",
        "yes",
    ]


@pytest.fixture(scope="module")
def tiny(tmp_path_factory):
    out = tmp_path_factory.mktemp("tiny")
    records = corpus.generate_synthetic(8, [1, 1, 1, 1], corpus.NoiseSpec(), seed=4, out_dir=out)
    return records, out


def test_modes_zero_the_excluded_modality(tiny, fcfg):
    records, out = tiny
    rec = records[0]
    all_feats = record_features(rec, out, fcfg, "all")
    video_only = record_features(rec, out, fcfg, "video_only")
    asr_only = record_features(rec, out, fcfg, "asr_only")
    ocr_only = record_features(rec, out, fcfg, "ocr_only")

    assert all_feats.x_video.any() and all_feats.x_text.any()
    assert video_only.x_video.any() and not video_only.x_text.any()
    assert not asr_only.x_video.any()
    assert not ocr_only.x_video.any()
    np.testing.assert_array_equal(all_feats.x_video, video_only.x_video)
    assert "OCR: " in all_feats.bundle.composed


def test_text_sources_differ_between_modes(tiny, fcfg):
    records, out = tiny
    for rec in records:
        asr_only = record_features(rec, out, fcfg, "asr_only")
        ocr_only = record_features(rec, out, fcfg, "ocr_only")
        assert asr_only.bundle.ocr_text == ""
        assert ocr_only.bundle.asr_text == ""


def test_empty_text_flag(fcfg, tmp_path):
    rec = corpus.VideoRecord(id="e", duration_s=1.0, asr_raw="thank you")
    feats = record_features(rec, tmp_path, fcfg)
    assert feats.empty_text
    assert not feats.x_text.any()


def test_missing_feature_file_raises(fcfg, tmp_path):
    rec = corpus.VideoRecord(
        id="m", duration_s=1.0, asr_raw="hello world today",
        frame_features_path="features/nope.mtgf",
    )
    with pytest.raises(FileNotFoundError):
        record_features(rec, tmp_path, fcfg)


def test_featurize_records_requires_labels(fcfg, tmp_path):
    rec = corpus.VideoRecord(id="u", duration_s=1.0, asr_raw="x")
    with pytest.raises(ValueError, match="gold label"):
        featurize_records([rec], tmp_path, fcfg)


def test_featurize_shapes(tiny, fcfg):
    records, out = tiny
    fs = featurize_records(records, out, fcfg, video_dim=64, text_dim=32)
    assert fs.x_video.shape == (8, 64)
    assert fs.x_text.shape == (8, 32)
    assert fs.labels.shape == (8,)
    assert len(fs.ids) == 8
