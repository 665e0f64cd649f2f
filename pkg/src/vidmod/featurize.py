"""Turn corpus records into fixed-dimension model inputs.

One place owns the record -> (video vector, text vector) mapping so training,
ablation, and the streaming consumer all agree on it. Ablation modes zero
the excluded modality's vector and compose text from only the kept source.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

from .corpus import VideoRecord, read_feature_file, resolve_sidecar
from .encoders import DEFAULT_DIM, encode_text_toy, encode_video_toy
from .preprocess import FilterConfig, TextBundle, compose_text_input

ABLATION_MODES = ("all", "video_only", "asr_only", "ocr_only")

_SENTENCE_SPLIT = re.compile(r"[.!?\n]+")


@dataclass(frozen=True)
class FeatureSet:
    """Pre-encoded dataset: per-item video and text vectors plus gold labels."""

    x_video: np.ndarray  # (N, video_dim)
    x_text: np.ndarray  # (N, text_dim)
    labels: np.ndarray  # (N,) int ordinals
    ids: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "x_video", np.asarray(self.x_video, dtype=np.float64))
        object.__setattr__(self, "x_text", np.asarray(self.x_text, dtype=np.float64))
        object.__setattr__(self, "labels", np.asarray(self.labels, dtype=np.int64))
        if len(self.x_video) != len(self.x_text) or len(self.x_video) != len(self.labels):
            raise ValueError("feature arrays must have equal length")

    def __len__(self) -> int:
        return len(self.labels)


def split_sentences(asr_raw: str) -> list[str]:
    return [s.strip() for s in _SENTENCE_SPLIT.split(asr_raw) if s.strip()]


@dataclass(frozen=True)
class RecordFeatures:
    x_video: np.ndarray
    x_text: np.ndarray
    bundle: TextBundle
    empty_text: bool
    missing_video: bool


def record_features(
    record: VideoRecord,
    manifest_dir,
    fcfg: FilterConfig,
    mode: str = "all",
    video_dim: int = DEFAULT_DIM,
    text_dim: int = DEFAULT_DIM,
) -> RecordFeatures:
    if mode not in ABLATION_MODES:
        raise ValueError(f"unknown mode {mode!r}")

    use_video = mode in ("all", "video_only")
    asr = split_sentences(record.asr_raw or "") if mode in ("all", "asr_only") else []
    ocr = list(record.ocr_raw or ()) if mode in ("all", "ocr_only") else []
    bundle = (
        compose_text_input(asr, ocr, fcfg)
        if mode != "video_only"
        else TextBundle.build("", "")
    )

    if use_video and record.frame_features_path:
        frames = read_feature_file(resolve_sidecar(manifest_dir, record.frame_features_path))
        x_video = encode_video_toy(frames, video_dim).values
        missing_video = False
    else:
        x_video = np.zeros(video_dim)
        missing_video = use_video
    x_text = encode_text_toy(bundle.composed, text_dim).values
    return RecordFeatures(
        x_video=x_video,
        x_text=x_text,
        bundle=bundle,
        empty_text=bundle.composed == "",
        missing_video=missing_video,
    )


def featurize_records(
    records: list[VideoRecord],
    manifest_dir,
    fcfg: FilterConfig,
    mode: str = "all",
    video_dim: int = DEFAULT_DIM,
    text_dim: int = DEFAULT_DIM,
) -> FeatureSet:
    """Encode labeled records into a FeatureSet; unlabeled records are rejected."""
    xv = np.zeros((len(records), video_dim))
    xt = np.zeros((len(records), text_dim))
    labels = np.zeros(len(records), dtype=np.int64)
    ids = []
    for i, rec in enumerate(records):
        if rec.label is None:
            raise ValueError(f"record {rec.id!r} has no gold label")
        feats = record_features(rec, manifest_dir, fcfg, mode, video_dim, text_dim)
        xv[i] = feats.x_video
        xt[i] = feats.x_text
        labels[i] = int(rec.label)
        ids.append(rec.id)
    return FeatureSet(x_video=xv, x_text=xt, labels=labels, ids=tuple(ids))
