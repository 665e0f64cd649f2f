"""Manifest-based dataset management.

A corpus is a newline-delimited JSON manifest plus sidecar binary files for
frame features and audio. Records are immutable value objects; every
operation here returns new lists rather than mutating inputs.

The synthetic generator plants a cross-modal signal: frame features encode a
parity bit, text carries a half-bit marker word, and the gold label is
``2*parity + half``. Neither modality alone can recover the label above
chance-on-two-classes, which is what makes multimodal-vs-unimodal ablations
meaningful on generated data.
"""

from __future__ import annotations

import dataclasses
import json
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .labels import NUM_CLASSES, LabelClass

SPLITS = ("train", "dev", "test", "unassigned")

FEATURE_MAGIC = b"MTGF"
AUDIO_MAGIC = b"MTGA"


class ManifestError(ValueError):
    pass


class MalformedLine(ManifestError):
    def __init__(self, line_no: int, reason: str):
        super().__init__(f"line {line_no}: {reason}")
        self.line_no = line_no
        self.reason = reason


class DuplicateId(ManifestError):
    def __init__(self, record_id: str, line_no: int | None = None):
        where = f" (line {line_no})" if line_no is not None else ""
        super().__init__(f"duplicate record id {record_id!r}{where}")
        self.record_id = record_id


class MissingModality(ManifestError):
    def __init__(self, record_id: str):
        super().__init__(f"record {record_id!r} carries no modality payload")
        self.record_id = record_id


class EmptyClass(ValueError):
    def __init__(self, label: LabelClass):
        super().__init__(f"class {label.canonical} has zero samples")
        self.label = label


class InvalidWeights(ValueError):
    pass


@dataclass(frozen=True)
class Engagement:
    views: int = 0
    likes: int = 0
    comments: int = 0


@dataclass(frozen=True)
class VideoRecord:
    id: str
    label: LabelClass | None = None
    split: str = "unassigned"
    duration_s: float = 0.0
    asr_raw: str | None = None
    ocr_raw: tuple[str, ...] | None = None
    frame_features_path: str | None = None
    audio_path: str | None = None
    engagement: Engagement | None = None
    hashtags: tuple[str, ...] = ()

    def validate(self) -> None:
        if not self.id:
            raise ManifestError("record id must be non-empty")
        if self.split not in SPLITS:
            raise ManifestError(f"record {self.id!r}: unknown split {self.split!r}")
        if not math.isfinite(self.duration_s) or self.duration_s < 0:
            raise ManifestError(f"record {self.id!r}: bad duration {self.duration_s}")
        if (
            self.asr_raw is None
            and self.ocr_raw is None
            and self.frame_features_path is None
            and self.audio_path is None
        ):
            raise MissingModality(self.id)

    def to_json_dict(self) -> dict:
        d: dict = {"id": self.id}
        if self.label is not None:
            d["label"] = self.label.canonical
        if self.split != "unassigned":
            d["split"] = self.split
        d["duration_s"] = self.duration_s
        if self.asr_raw is not None:
            d["asr_raw"] = self.asr_raw
        if self.ocr_raw is not None:
            d["ocr_raw"] = list(self.ocr_raw)
        if self.frame_features_path is not None:
            d["frame_features_path"] = self.frame_features_path
        if self.audio_path is not None:
            d["audio_path"] = self.audio_path
        if self.engagement is not None:
            d["engagement"] = dataclasses.asdict(self.engagement)
        if self.hashtags:
            d["hashtags"] = list(self.hashtags)
        return d

    @classmethod
    def from_json_dict(cls, d: dict) -> "VideoRecord":
        label = d.get("label")
        eng = d.get("engagement")
        rec = cls(
            id=d.get("id", ""),
            label=LabelClass.from_string(label) if label is not None else None,
            split=d.get("split", "unassigned"),
            duration_s=float(d.get("duration_s", 0.0)),
            asr_raw=d.get("asr_raw"),
            ocr_raw=tuple(d["ocr_raw"]) if d.get("ocr_raw") is not None else None,
            frame_features_path=d.get("frame_features_path"),
            audio_path=d.get("audio_path"),
            engagement=Engagement(**eng) if eng is not None else None,
            hashtags=tuple(d.get("hashtags", ())),
        )
        rec.validate()
        return rec


def parse_manifest_line(line: str, line_no: int) -> VideoRecord:
    try:
        d = json.loads(line)
    except json.JSONDecodeError as e:
        raise MalformedLine(line_no, f"invalid JSON: {e.msg}") from None
    if not isinstance(d, dict):
        raise MalformedLine(line_no, "manifest line is not a JSON object")
    try:
        return VideoRecord.from_json_dict(d)
    except MissingModality:
        raise
    except (ManifestError, ValueError, TypeError) as e:
        raise MalformedLine(line_no, str(e)) from None


def load_manifest(path) -> list[VideoRecord]:
    """Parse an NDJSON manifest, enforcing record invariants and id uniqueness."""
    records: list[VideoRecord] = []
    seen: set[str] = set()
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            rec = parse_manifest_line(line, line_no)
            if rec.id in seen:
                raise DuplicateId(rec.id, line_no)
            seen.add(rec.id)
            records.append(rec)
    return records


def save_manifest(records: list[VideoRecord], path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec.to_json_dict(), ensure_ascii=False) + "\n")


def split_dataset(
    records: list[VideoRecord],
    train_ratio: float,
    seed: int,
    force: bool = False,
) -> list[VideoRecord]:
    """Stratified train/dev assignment; records already in the test split are untouched.

    Per class, train count = round(class_count * train_ratio) (half away from
    zero), remainder goes to dev. Deterministic for a fixed seed.
    """
    if not 0 < train_ratio < 1:
        raise ValueError("train_ratio must be in (0, 1)")
    assignable = [r for r in records if r.split != "test"]
    if not force:
        already = [r.id for r in assignable if r.split != "unassigned"]
        if already:
            raise ValueError(
                f"{len(already)} records already assigned (e.g. {already[0]!r}); "
                "pass force=True to reassign"
            )
    by_class: dict[LabelClass, list[int]] = {c: [] for c in LabelClass}
    present: set[LabelClass] = set()
    for idx, rec in enumerate(records):
        if rec.label is not None:
            present.add(rec.label)
        if rec.split == "test":
            continue
        if rec.label is None:
            raise ValueError(f"record {rec.id!r} has no label; cannot stratify")
        by_class[rec.label].append(idx)
    # a class that exists in the corpus but has nothing to assign cannot be
    # stratified; classes absent from the corpus entirely are simply skipped
    for c in present:
        if assignable and not by_class[c]:
            raise EmptyClass(c)

    rng = np.random.default_rng(seed)
    out = list(records)
    for c in LabelClass:
        idxs = np.array(by_class[c], dtype=np.int64)
        rng.shuffle(idxs)
        n_train = int(math.floor(len(idxs) * train_ratio + 0.5))
        for pos, idx in enumerate(idxs):
            split = "train" if pos < n_train else "dev"
            out[idx] = dataclasses.replace(records[idx], split=split)
    return out


@dataclass(frozen=True)
class ClassStats:
    count: int
    min_duration: float | None
    max_duration: float | None
    avg_duration: float | None


@dataclass(frozen=True)
class CorpusStats:
    total: int
    per_class: dict[str, ClassStats]
    per_split: dict[str, int]
    unlabeled: int

    def to_json_dict(self) -> dict:
        return {
            "total": self.total,
            "per_class": {
                name: dataclasses.asdict(cs) for name, cs in self.per_class.items()
            },
            "per_split": dict(self.per_split),
            "unlabeled": self.unlabeled,
        }


def summarize(records: list[VideoRecord]) -> CorpusStats:
    per_class: dict[str, ClassStats] = {}
    for c in LabelClass:
        durs = [r.duration_s for r in records if r.label is c]
        if durs:
            per_class[c.canonical] = ClassStats(
                count=len(durs),
                min_duration=min(durs),
                max_duration=max(durs),
                avg_duration=sum(durs) / len(durs),
            )
        else:
            per_class[c.canonical] = ClassStats(0, None, None, None)
    per_split = {s: 0 for s in SPLITS}
    for r in records:
        per_split[r.split] += 1
    return CorpusStats(
        total=len(records),
        per_class=per_class,
        per_split={s: n for s, n in per_split.items() if n or s != "unassigned"},
        unlabeled=sum(1 for r in records if r.label is None),
    )


# ---------------------------------------------------------------------------
# Binary sidecar formats
# ---------------------------------------------------------------------------


def write_feature_file(path, frames: np.ndarray) -> None:
    """Write a count x dim float32 frame-feature file (magic MTGF, version 1)."""
    frames = np.asarray(frames, dtype="<f4")
    if frames.ndim != 2:
        raise ValueError("frames must be a 2-d array")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    count, dim = frames.shape
    with open(path, "wb") as fh:
        fh.write(FEATURE_MAGIC)
        fh.write(struct.pack("<BII", 1, count, dim))
        fh.write(frames.tobytes(order="C"))


def read_feature_file(path) -> np.ndarray:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != FEATURE_MAGIC:
            raise ValueError(f"{path}: not a feature file (magic {magic!r})")
        version, count, dim = struct.unpack("<BII", fh.read(9))
        if version != 1:
            raise ValueError(f"{path}: unsupported feature file version {version}")
        data = fh.read(4 * count * dim)
        if len(data) != 4 * count * dim:
            raise ValueError(f"{path}: truncated feature file")
    return np.frombuffer(data, dtype="<f4").reshape(count, dim).astype(np.float64)


def write_audio_file(path, samples: np.ndarray, sample_rate: int) -> None:
    """Write mono PCM float32 with the 12-byte MTGA header."""
    samples = np.asarray(samples, dtype="<f4").ravel()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(AUDIO_MAGIC)
        fh.write(struct.pack("<II", sample_rate, len(samples)))
        fh.write(samples.tobytes())


def read_audio_file(path) -> tuple[np.ndarray, int]:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != AUDIO_MAGIC:
            raise ValueError(f"{path}: not an audio file (magic {magic!r})")
        sample_rate, count = struct.unpack("<II", fh.read(8))
        data = fh.read(4 * count)
        if len(data) != 4 * count:
            raise ValueError(f"{path}: truncated audio file")
    return np.frombuffer(data, dtype="<f4").astype(np.float64), sample_rate


def resolve_sidecar(manifest_dir, rel_path: str) -> Path:
    """Sidecar paths in a manifest are relative to the manifest's directory."""
    p = Path(rel_path)
    return p if p.is_absolute() else Path(manifest_dir) / p


# ---------------------------------------------------------------------------
# Synthetic corpus with a planted cross-modal signal
# ---------------------------------------------------------------------------

# Axis along which frame features encode the parity bit. Alternating signs so
# the signal survives mean-pooling but is not aligned with any single raw
# feature coordinate.
PARITY_MAGNITUDE = 3.0
FRAME_DIM = 16
FRAMES_PER_VIDEO = 4

# Marker words that carry the half bit of the label. Both are plain English
# words so they pass the language gate inside ordinary sentences.
HALF_MARKERS = ("willow", "ember")

_ASR_FILLERS = (
    "today we are going to look at something new",
    "this is one of my favorite things to share with you",
    "let me know what you think about it in the comments",
    "here is a quick look at what we made this week",
    "we spent the whole day working on this little project",
    "you can try this at home with things you already have",
    "it took us a while but the result was worth it",
    "there is a lot more to say but we will keep it short",
)

_ASR_MARKER_TEMPLATES = (
    "the {m} sign is with us today so watch closely",
    "you will see the {m} mark again before the end",
    "keep an eye out for the {m} theme in this one",
)

_OCR_FILLERS = (
    "welcome back to the channel",
    "part two is coming soon",
    "filmed on a sunny afternoon",
    "all steps are shown below",
)

_OCR_MARKER_TEMPLATES = (
    "the {m} mark is on the screen",
    "look for the {m} sign here",
)

_SPAM_PHRASES = (
    "follow me for more daily videos",
    "buy now at http://deals.example.com",
    "use promo code SAVE20 today",
    "like and subscribe for more!!!!!",
)

_HALLUCINATIONS = ("thank you", "hello", "bye")

_CODE_SWITCH_TOKENS = ("nhé", "quá", "luôn", "nha")

_HASHTAG_POOL = (
    "fyp", "funny", "diy", "learn", "daily", "trend", "craft", "family",
)


@dataclass(frozen=True)
class NoiseSpec:
    """Probabilities for optional corpus corruption, all default off."""

    spam_prob: float = 0.0
    hallucination_prob: float = 0.0
    code_switch_prob: float = 0.0
    drop_asr: float = 0.0
    drop_ocr: float = 0.0
    drop_video: float = 0.0
    feature_jitter: float = 0.0

    def to_json_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_json_dict(cls, d: dict) -> "NoiseSpec":
        return cls(**d)


def _parity_axis(dim: int) -> np.ndarray:
    axis = np.ones(dim)
    axis[1::2] = -1.0
    return axis / np.sqrt(dim)


def _allocate_counts(n: int, weights: list[float]) -> list[int]:
    """Largest-remainder quota so per-class counts are deterministic."""
    total_w = float(sum(weights))
    quotas = [n * w / total_w for w in weights]
    counts = [int(math.floor(q)) for q in quotas]
    remainders = sorted(
        range(len(weights)), key=lambda i: (quotas[i] - counts[i], -i), reverse=True
    )
    short = n - sum(counts)
    for i in remainders[:short]:
        counts[i] += 1
    return counts


def generate_synthetic(
    n: int,
    class_weights,
    noise: NoiseSpec,
    seed: int,
    out_dir,
) -> list[VideoRecord]:
    """Generate n records with the planted two-modality label signal.

    Writes frame-feature files under out_dir/features/ and the manifest to
    out_dir/manifest.jsonl. Identical arguments yield byte-identical output.
    """
    if n <= 0:
        raise ValueError("n must be positive")
    class_weights = [float(w) for w in class_weights]
    if len(class_weights) != NUM_CLASSES:
        raise InvalidWeights(f"need {NUM_CLASSES} class weights")
    if any(w < 0 for w in class_weights) or sum(class_weights) <= 0:
        raise InvalidWeights("weights must be non-negative with positive sum")

    out_dir = Path(out_dir)
    rng = np.random.default_rng(seed)
    counts = _allocate_counts(n, class_weights)
    labels: list[LabelClass] = []
    for c, count in zip(LabelClass, counts):
        labels.extend([c] * count)
    order = rng.permutation(n)
    labels = [labels[i] for i in order]

    axis = _parity_axis(FRAME_DIM)
    records: list[VideoRecord] = []
    for i, label in enumerate(labels):
        rec_id = f"syn{i:06d}"
        parity = int(label) // 2
        half = int(label) % 2
        marker = HALF_MARKERS[half]

        # Decide which text source carries the marker. The split keeps each
        # single source below the full half-bit so text-only ablations cap
        # under the video-only ceiling.
        r = rng.random()
        in_asr = r < 0.45 or r >= 0.90
        in_ocr = r >= 0.45

        asr_sentences = [_ASR_FILLERS[rng.integers(len(_ASR_FILLERS))]]
        if in_asr:
            tpl = _ASR_MARKER_TEMPLATES[rng.integers(len(_ASR_MARKER_TEMPLATES))]
            asr_sentences.insert(rng.integers(2), tpl.format(m=marker))
        ocr_lines = [_OCR_FILLERS[rng.integers(len(_OCR_FILLERS))]]
        if in_ocr:
            tpl = _OCR_MARKER_TEMPLATES[rng.integers(len(_OCR_MARKER_TEMPLATES))]
            ocr_lines.insert(rng.integers(2), tpl.format(m=marker))

        if rng.random() < noise.hallucination_prob:
            asr_sentences.append(_HALLUCINATIONS[rng.integers(len(_HALLUCINATIONS))])
        if rng.random() < noise.spam_prob:
            asr_sentences.append(_SPAM_PHRASES[rng.integers(len(_SPAM_PHRASES))])
        if rng.random() < noise.spam_prob:
            ocr_lines.append(_SPAM_PHRASES[rng.integers(len(_SPAM_PHRASES))])
        if rng.random() < noise.code_switch_prob:
            tok = _CODE_SWITCH_TOKENS[rng.integers(len(_CODE_SWITCH_TOKENS))]
            asr_sentences[-1] = asr_sentences[-1] + " " + tok

        frames = rng.normal(0.0, 1.0, size=(FRAMES_PER_VIDEO, FRAME_DIM))
        frames += (PARITY_MAGNITUDE if parity else -PARITY_MAGNITUDE) * axis
        if noise.feature_jitter > 0:
            frames += rng.normal(0.0, noise.feature_jitter, size=frames.shape)

        drop_asr = rng.random() < noise.drop_asr
        drop_ocr = rng.random() < noise.drop_ocr
        drop_video = rng.random() < noise.drop_video

        feature_rel = f"features/{rec_id}.mtgf"
        if not drop_video:
            write_feature_file(out_dir / feature_rel, frames)

        views = int(rng.integers(100, 1_000_000))
        rec = VideoRecord(
            id=rec_id,
            label=label,
            duration_s=float(np.round(rng.uniform(5.0, 60.0), 2)),
            asr_raw="" if drop_asr else " . ".join(asr_sentences),
            ocr_raw=() if drop_ocr else tuple(ocr_lines),
            frame_features_path=None if drop_video else feature_rel,
            engagement=Engagement(
                views=views,
                likes=int(views * rng.uniform(0.01, 0.2)),
                comments=int(views * rng.uniform(0.001, 0.02)),
            ),
            hashtags=tuple(
                sorted(
                    {_HASHTAG_POOL[rng.integers(len(_HASHTAG_POOL))] for _ in range(2)}
                )
            ),
        )
        rec.validate()
        records.append(rec)

    save_manifest(records, out_dir / "manifest.jsonl")
    return records


def decode_planted(
    record: VideoRecord,
    manifest_dir,
    use_video: bool = True,
    use_text: bool = True,
) -> LabelClass:
    """The generator's own decoder; ties broken toward the lowest ordinal.

    With both modalities this recovers the label exactly on noise-free
    corpora; with one modality the missing bit defaults to 0.
    """
    parity = 0
    half = 0
    if use_video and record.frame_features_path:
        frames = read_feature_file(resolve_sidecar(manifest_dir, record.frame_features_path))
        axis = _parity_axis(frames.shape[1])
        parity = 1 if float(frames.mean(axis=0) @ axis) > 0 else 0
    if use_text:
        text = (record.asr_raw or "") + " " + " ".join(record.ocr_raw or ())
        tokens = set(text.lower().split())
        if HALF_MARKERS[1] in tokens and HALF_MARKERS[0] not in tokens:
            half = 1
    return LabelClass(2 * parity + half)
