"""Audio and text cleanup ahead of encoding.

Audio is truncated then RMS-gated; transcripts go through hallucination,
spam, and language filters; OCR lines are deduplicated and share the spam and
language filters. Survivors from both sides fill the fixed template
``Audio: ... | OCR: ...``.

All functions are pure given a FilterConfig, and every text filter is
idempotent (required so the pipeline can be re-run over its own output).
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

_TOKEN_RE = re.compile(r"[^\W_]+", re.UNICODE)

_VI_DIACRITICS = set(
    "àáảãạăằắẳẵặâầấẩẫậèéẻẽẹêềếểễệìíỉĩịòóỏõọôồốổỗộơờớởỡợ"
    "ùúủũụưừứửữựỳýỷỹỵđ"
)


class EmptyAudio(ValueError):
    pass


class InvalidPattern(ValueError):
    def __init__(self, index: int, pattern: str, reason: str):
        super().__init__(f"spam pattern #{index} {pattern!r}: {reason}")
        self.index = index
        self.pattern = pattern


@dataclass(frozen=True)
class AudioTrack:
    sample_rate: int
    samples: np.ndarray

    def __post_init__(self):
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise ValueError("samples must be mono (1-d)")
        if samples.size and not np.isfinite(samples).all():
            raise ValueError("samples must be finite")
        object.__setattr__(self, "samples", samples)

    @property
    def duration_s(self) -> float:
        return len(self.samples) / self.sample_rate


@dataclass(frozen=True)
class TextBundle:
    asr_text: str
    ocr_text: str
    composed: str

    @classmethod
    def build(cls, asr_text: str, ocr_text: str) -> "TextBundle":
        if asr_text or ocr_text:
            composed = f"Audio: {asr_text} | OCR: {ocr_text}"
        else:
            composed = ""
        return cls(asr_text=asr_text, ocr_text=ocr_text, composed=composed)


def _read_lines(text: str) -> list[str]:
    out = []
    for line in text.splitlines():
        line = line.strip()
        if line and not line.startswith("#"):
            out.append(line)
    return out


def _load_data_file(name: str) -> str:
    return resources.files("vidmod.data").joinpath(name).read_text(encoding="utf-8")


@dataclass(frozen=True)
class FilterConfig:
    max_duration_s: float = 60.0
    rms_window_s: float = 0.5
    rms_floor: float = 0.005
    rms_relative_factor: float = 0.1
    min_sentence_tokens: int = 3
    repetition_ratio_max: float = 0.5
    generic_phrases: tuple[str, ...] = ()
    spam_patterns: tuple[str, ...] = ()
    allowed_languages: frozenset[str] = frozenset({"vi", "en"})
    language_accept_score: float = 0.2
    words_en: frozenset[str] = frozenset()
    words_vi: frozenset[str] = frozenset()
    _compiled: tuple = field(default=(), repr=False, compare=False)
    _generic_normalized: frozenset[str] = field(
        default=frozenset(), repr=False, compare=False
    )

    def __post_init__(self):
        if self.rms_window_s <= 0:
            raise ValueError("rms_window_s must be positive")
        if not 0 < self.repetition_ratio_max <= 1:
            raise ValueError("repetition_ratio_max must be in (0, 1]")
        compiled = []
        for i, pat in enumerate(self.spam_patterns):
            try:
                compiled.append(re.compile(pat, re.IGNORECASE | re.UNICODE))
            except re.error as e:
                raise InvalidPattern(i, pat, str(e)) from None
        object.__setattr__(self, "_compiled", tuple(compiled))
        object.__setattr__(
            self,
            "_generic_normalized",
            frozenset(_normalize_sentence(p) for p in self.generic_phrases),
        )

    @classmethod
    def default(cls, **overrides) -> "FilterConfig":
        base = dict(
            generic_phrases=tuple(_read_lines(_load_data_file("generic_phrases.txt"))),
            spam_patterns=tuple(_read_lines(_load_data_file("spam_patterns.txt"))),
            words_en=frozenset(_read_lines(_load_data_file("words_en.txt"))),
            words_vi=frozenset(_read_lines(_load_data_file("words_vi.txt"))),
        )
        base.update(overrides)
        return cls(**base)

    @classmethod
    def from_json_file(cls, path) -> "FilterConfig":
        """Load overrides from a JSON file; list-valued fields may instead name
        a text file (one entry per line, # comments) via the ``*_file`` keys."""
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
        overrides: dict = {}
        for scalar in (
            "max_duration_s",
            "rms_window_s",
            "rms_floor",
            "rms_relative_factor",
            "min_sentence_tokens",
            "repetition_ratio_max",
            "language_accept_score",
        ):
            if scalar in raw:
                overrides[scalar] = raw[scalar]
        if "allowed_languages" in raw:
            overrides["allowed_languages"] = frozenset(raw["allowed_languages"])
        for key, as_set in (
            ("generic_phrases", False),
            ("spam_patterns", False),
            ("words_en", True),
            ("words_vi", True),
        ):
            if key in raw:
                values = raw[key]
            elif f"{key}_file" in raw:
                with open(f := raw[f"{key}_file"], "r", encoding="utf-8") as fh:
                    values = _read_lines(fh.read())
            else:
                continue
            overrides[key] = frozenset(values) if as_set else tuple(values)
        return cls.default(**overrides)


def _normalize_sentence(s: str) -> str:
    return " ".join(_TOKEN_RE.findall(s.casefold()))


def tokenize(s: str) -> list[str]:
    return _TOKEN_RE.findall(s.casefold())


# ---------------------------------------------------------------------------
# Audio
# ---------------------------------------------------------------------------


def truncate_audio(track: AudioTrack, max_s: float) -> AudioTrack:
    if max_s <= 0:
        raise ValueError("max_s must be positive")
    n_keep = int(math.floor(max_s * track.sample_rate + 1e-9))
    if len(track.samples) <= n_keep:
        return track
    return AudioTrack(track.sample_rate, track.samples[:n_keep].copy())


def rms_gate(track: AudioTrack, cfg: FilterConfig) -> tuple[AudioTrack, list[bool]]:
    """Drop low-energy windows; returns the gated track and the kept-window mask."""
    x = track.samples
    if x.size == 0:
        raise EmptyAudio("cannot gate an empty track")
    win = max(1, int(round(cfg.rms_window_s * track.sample_rate)))
    global_rms = float(np.sqrt(np.mean(x**2)))
    threshold = max(cfg.rms_floor, cfg.rms_relative_factor * global_rms)

    mask: list[bool] = []
    kept: list[np.ndarray] = []
    for start in range(0, len(x), win):
        window = x[start : start + win]
        w_rms = float(np.sqrt(np.mean(window**2)))
        keep = w_rms >= threshold
        mask.append(keep)
        if keep:
            kept.append(window)
    gated = np.concatenate(kept) if kept else np.zeros(0)
    return AudioTrack(track.sample_rate, gated), mask


# ---------------------------------------------------------------------------
# Frames
# ---------------------------------------------------------------------------


def select_frame_times(duration_s: float) -> tuple[float, float]:
    if duration_s < 0:
        raise ValueError("duration must be non-negative")
    return (0.3 * duration_s, 0.7 * duration_s)


def resize_bound(width: int, height: int, max_side: int = 640) -> tuple[int, int]:
    if width <= 0 or height <= 0:
        raise ValueError("dimensions must be positive")
    longer = max(width, height)
    if longer <= max_side:
        return (width, height)
    scale = max_side / longer

    def _round(v: float) -> int:
        return max(1, int(math.floor(v * scale + 0.5)))

    if width >= height:
        return (max_side, _round(height))
    return (_round(width), max_side)


# ---------------------------------------------------------------------------
# Text
# ---------------------------------------------------------------------------


def filter_transcript(sentences: list[str], cfg: FilterConfig) -> list[str]:
    """Drop short, generic, and repetition-dominated sentences."""
    out = []
    for s in sentences:
        tokens = tokenize(s)
        if len(tokens) < cfg.min_sentence_tokens:
            continue
        if _normalize_sentence(s) in cfg._generic_normalized:
            continue
        counts: dict[str, int] = {}
        for t in tokens:
            counts[t] = counts.get(t, 0) + 1
        if max(counts.values()) / len(tokens) > cfg.repetition_ratio_max:
            continue
        out.append(s)
    return out


def spam_filter(text: str, cfg: FilterConfig) -> str:
    """Remove spam-pattern matches and normalize whitespace, to a fixed point."""
    prev = None
    cur = text
    for _ in range(8):
        if cur == prev:
            break
        prev = cur
        for pat in cfg._compiled:
            cur = pat.sub(" ", cur)
        cur = " ".join(cur.split())
    return cur


def dedup_texts(texts: list[str]) -> list[str]:
    seen: set[str] = set()
    out = []
    for t in texts:
        key = t.casefold()
        if key in seen:
            continue
        seen.add(key)
        out.append(t)
    return out


def language_gate(text: str, cfg: FilterConfig) -> tuple[bool, str]:
    """Score against en/vi word profiles; returns (keep, language)."""
    tokens = tokenize(text)
    if not tokens:
        return (False, "other")
    hits_en = sum(1 for t in tokens if t in cfg.words_en)
    hits_vi = sum(1 for t in tokens if t in cfg.words_vi)
    alpha_chars = [c for c in text.casefold() if c.isalpha()]
    diacritic_rate = (
        sum(1 for c in alpha_chars if c in _VI_DIACRITICS) / len(alpha_chars)
        if alpha_chars
        else 0.0
    )
    score_en = hits_en / len(tokens)
    score_vi = hits_vi / len(tokens) + diacritic_rate
    if score_en == 0.0 and score_vi == 0.0:
        return (False, "other")
    lang, score = ("vi", score_vi) if score_vi >= score_en else ("en", score_en)
    keep = lang in cfg.allowed_languages and score >= cfg.language_accept_score
    return (keep, lang)


def compose_text_input(
    asr: list[str], ocr: list[str], cfg: FilterConfig
) -> TextBundle:
    """Run both text sides through their filter chains and fill the template."""
    asr_parts = []
    for s in filter_transcript(asr, cfg):
        s = spam_filter(s, cfg)
        if not s:
            continue
        keep, _ = language_gate(s, cfg)
        if keep:
            asr_parts.append(s)
    ocr_parts = []
    for s in dedup_texts(ocr):
        s = spam_filter(s, cfg)
        if not s:
            continue
        keep, _ = language_gate(s, cfg)
        if keep:
            ocr_parts.append(s)
    return TextBundle.build(" ".join(asr_parts), " ".join(ocr_parts))
