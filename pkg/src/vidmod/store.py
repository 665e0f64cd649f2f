"""Durable moderation-result store and report generation.

An append-only NDJSON journal is the source of truth; an in-memory index
(one live record per video id, upsert semantics) is rebuilt by replaying the
journal on open. Replay is idempotent and tolerates a torn final line, so a
killed writer recovers to exactly the state of its last completed append.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
import threading
import time
from dataclasses import dataclass, replace
from pathlib import Path

from . import metrics
from .labels import NUM_CLASSES, LabelClass

PROB_TOL = 1e-9

DECISIONS = ("ALLOW", "BLOCK", "REVIEW")
VERDICTS = ("allow", "block")


class StoreError(RuntimeError):
    pass


class InvalidResult(StoreError):
    pass


class StorageFull(StoreError):
    pass


class CorruptJournal(StoreError):
    pass


class NotFound(StoreError):
    pass


class NotReviewable(StoreError):
    pass


class AlreadyResolved(StoreError):
    pass


class BadCursor(StoreError):
    pass


@dataclass(frozen=True)
class Resolution:
    verdict: str
    moderator: str
    resolved_ts: float
    relabel: LabelClass | None = None


@dataclass(frozen=True)
class ModerationResult:
    video_id: str
    probabilities: tuple[float, float, float, float]
    predicted: LabelClass
    decision: str
    confidence: float
    text_composed: str
    checkpoint_fingerprint: str
    ingest_ts: float
    classified_ts: float
    gold_label: LabelClass | None = None
    empty_text: bool = False
    audio_kept_s: float | None = None
    hashtags: tuple[str, ...] = ()
    engagement: dict | None = None
    resolution: Resolution | None = None

    def validate(self) -> None:
        if not self.video_id:
            raise InvalidResult("video_id must be non-empty")
        if len(self.probabilities) != NUM_CLASSES:
            raise InvalidResult("need one probability per class")
        if any(not math.isfinite(p) or p < 0 for p in self.probabilities):
            raise InvalidResult("probabilities must be finite and non-negative")
        if abs(sum(self.probabilities) - 1.0) > PROB_TOL:
            raise InvalidResult(f"probabilities sum to {sum(self.probabilities)!r}, not 1")
        if abs(self.confidence - max(self.probabilities)) > PROB_TOL:
            raise InvalidResult("confidence must equal max probability")
        if self.decision not in DECISIONS:
            raise InvalidResult(f"unknown decision {self.decision!r}")

    def to_json_dict(self) -> dict:
        d = {
            "video_id": self.video_id,
            "probabilities": list(self.probabilities),
            "predicted": self.predicted.canonical,
            "decision": self.decision,
            "confidence": self.confidence,
            "text_composed": self.text_composed,
            "checkpoint_fingerprint": self.checkpoint_fingerprint,
            "ingest_ts": self.ingest_ts,
            "classified_ts": self.classified_ts,
            "empty_text": self.empty_text,
        }
        if self.gold_label is not None:
            d["gold_label"] = self.gold_label.canonical
        if self.audio_kept_s is not None:
            d["audio_kept_s"] = self.audio_kept_s
        if self.hashtags:
            d["hashtags"] = list(self.hashtags)
        if self.engagement is not None:
            d["engagement"] = dict(self.engagement)
        if self.resolution is not None:
            d["resolution"] = {
                "verdict": self.resolution.verdict,
                "moderator": self.resolution.moderator,
                "resolved_ts": self.resolution.resolved_ts,
                "relabel": self.resolution.relabel.canonical
                if self.resolution.relabel
                else None,
            }
        return d

    @classmethod
    def from_json_dict(cls, d: dict) -> "ModerationResult":
        res = d.get("resolution")
        resolution = None
        if res is not None:
            resolution = Resolution(
                verdict=res["verdict"],
                moderator=res["moderator"],
                resolved_ts=float(res["resolved_ts"]),
                relabel=LabelClass.from_string(res["relabel"]) if res.get("relabel") else None,
            )
        gold = d.get("gold_label")
        return cls(
            video_id=d["video_id"],
            probabilities=tuple(float(p) for p in d["probabilities"]),
            predicted=LabelClass.from_string(d["predicted"]),
            decision=d["decision"],
            confidence=float(d["confidence"]),
            text_composed=d.get("text_composed", ""),
            checkpoint_fingerprint=d.get("checkpoint_fingerprint", ""),
            ingest_ts=float(d.get("ingest_ts", 0.0)),
            classified_ts=float(d.get("classified_ts", 0.0)),
            gold_label=LabelClass.from_string(gold) if gold else None,
            empty_text=bool(d.get("empty_text", False)),
            audio_kept_s=d.get("audio_kept_s"),
            hashtags=tuple(d.get("hashtags", ())),
            engagement=d.get("engagement"),
            resolution=resolution,
        )


@dataclass(frozen=True)
class StoreRecord:
    seq: int
    last_write_ts: float
    result: ModerationResult

    def to_json_dict(self) -> dict:
        return {
            "seq": self.seq,
            "last_write_ts": self.last_write_ts,
            "result": self.result.to_json_dict(),
        }


@dataclass(frozen=True)
class Report:
    window_start: float
    window_end: float
    total: int
    by_label: dict[str, int]
    by_decision: dict[str, int]
    review_queue_depth: int
    throughput_per_s: float
    confusion: list[list[int]] | None = None
    macro: dict[str, float] | None = None

    def to_json_dict(self) -> dict:
        return {
            "window_start": self.window_start,
            "window_end": self.window_end,
            "total": self.total,
            "by_label": self.by_label,
            "by_decision": self.by_decision,
            "review_queue_depth": self.review_queue_depth,
            "throughput_per_s": self.throughput_per_s,
            "confusion": self.confusion,
            "macro": self.macro,
        }

    def render_table(self) -> str:
        lines = [
            f"window: [{self.window_start:.0f}, {self.window_end:.0f}]  "
            f"total={self.total}  review_queue={self.review_queue_depth}  "
            f"throughput={self.throughput_per_s:.2f}/s",
            f"{'label':<18} {'count':>7}    {'decision':<8} {'count':>7}",
        ]
        decisions = list(self.by_decision.items())
        for i, (label, count) in enumerate(self.by_label.items()):
            dec, dcount = decisions[i] if i < len(decisions) else ("", "")
            dec_part = f"{dec:<8} {dcount:>7}" if dec else ""
            lines.append(f"{label:<18} {count:>7}    {dec_part}")
        if self.macro:
            lines.append(
                "vs gold: "
                + "  ".join(f"{k}={v:.4f}" for k, v in sorted(self.macro.items()))
            )
            for row in self.confusion or []:
                lines.append("  " + " ".join(f"{c:>6}" for c in row))
        return "\n".join(lines)


class Store:
    """Journal-backed store with upsert-by-id semantics and a serialized writer."""

    def __init__(self, data_dir, clock=time.time):
        self.journal_path = Path(data_dir) / "store" / "journal.ndjson"
        self.journal_path.parent.mkdir(parents=True, exist_ok=True)
        self.clock = clock
        self._lock = threading.RLock()
        self._by_id: dict[str, StoreRecord] = {}
        self._seq = 0
        self._listeners: list = []
        self._replay()
        self._fh = open(self.journal_path, "a", encoding="utf-8")

    def _replay(self) -> None:
        if not self.journal_path.exists():
            return
        raw = self.journal_path.read_bytes()
        if not raw:
            return
        lines = raw.split(b"\n")

        def parse(line: bytes, where: str) -> StoreRecord:
            entry = json.loads(line.decode("utf-8"))
            try:
                return StoreRecord(
                    seq=int(entry["seq"]),
                    last_write_ts=float(entry["ts"]),
                    result=ModerationResult.from_json_dict(entry["record"]),
                )
            except (ValueError, KeyError, TypeError) as e:
                raise CorruptJournal(f"journal {where}: {e}") from None

        for i, line in enumerate(lines[:-1]):
            if not line.strip():
                continue
            try:
                rec = parse(line, f"line {i + 1}")
            except json.JSONDecodeError as e:
                raise CorruptJournal(f"journal line {i + 1}: {e}") from None
            self._by_id[rec.result.video_id] = rec
            self._seq = max(self._seq, rec.seq)

        tail = lines[-1]
        if tail:
            # killed mid-write: keep the tail if it is a complete entry that
            # only lost its newline, otherwise drop the torn bytes
            try:
                rec = parse(tail, "tail")
            except (json.JSONDecodeError, CorruptJournal):
                with open(self.journal_path, "r+b") as fh:
                    fh.truncate(len(raw) - len(tail))
            else:
                self._by_id[rec.result.video_id] = rec
                self._seq = max(self._seq, rec.seq)
                with open(self.journal_path, "ab") as fh:
                    fh.write(b"\n")

    # -- write path ----------------------------------------------------------

    def add_listener(self, fn) -> None:
        """fn(event_type: str, video_id: str) called after durable writes."""
        self._listeners.append(fn)

    def _notify(self, event: str, video_id: str) -> None:
        for fn in list(self._listeners):
            fn(event, video_id)

    def _write_entry(self, rec: StoreRecord) -> None:
        entry = {"seq": rec.seq, "ts": rec.last_write_ts, "record": rec.result.to_json_dict()}
        line = json.dumps(entry, sort_keys=True) + "\n"
        try:
            self._fh.write(line)
            self._fh.flush()
            os.fsync(self._fh.fileno())
        except OSError as e:
            raise StorageFull(f"journal write failed: {e}") from e

    def append(self, result: ModerationResult) -> int:
        result.validate()
        with self._lock:
            self._seq += 1
            rec = StoreRecord(seq=self._seq, last_write_ts=self.clock(), result=result)
            self._write_entry(rec)
            self._by_id[result.video_id] = rec
            seq = rec.seq
        if result.decision == "REVIEW" and result.resolution is None:
            self._notify("review_added", result.video_id)
        return seq

    def resolve(
        self,
        video_id: str,
        verdict: str,
        moderator: str,
        relabel: LabelClass | None = None,
    ) -> StoreRecord:
        if verdict not in VERDICTS:
            raise ValueError(f"verdict must be one of {VERDICTS}")
        if not moderator:
            raise ValueError("moderator must be non-empty")
        with self._lock:
            rec = self._by_id.get(video_id)
            if rec is None:
                raise NotFound(video_id)
            if rec.result.decision != "REVIEW":
                raise NotReviewable(f"{video_id} decision is {rec.result.decision}")
            if rec.result.resolution is not None:
                raise AlreadyResolved(video_id)
            resolution = Resolution(
                verdict=verdict,
                moderator=moderator,
                resolved_ts=self.clock(),
                relabel=relabel,
            )
            self._seq += 1
            updated = StoreRecord(
                seq=self._seq,
                last_write_ts=self.clock(),
                result=replace(rec.result, resolution=resolution),
            )
            self._write_entry(updated)
            self._by_id[video_id] = updated
        self._notify("review_resolved", video_id)
        return updated

    # -- read path -----------------------------------------------------------

    def get(self, video_id: str) -> StoreRecord | None:
        with self._lock:
            return self._by_id.get(video_id)

    def count(self) -> int:
        with self._lock:
            return len(self._by_id)

    def ids(self) -> set[str]:
        with self._lock:
            return set(self._by_id)

    def query(
        self,
        label: LabelClass | None = None,
        decision: str | None = None,
        t_min: float | None = None,
        t_max: float | None = None,
        resolved: bool | None = None,
        limit: int = 100,
        cursor: str | None = None,
    ) -> tuple[list[StoreRecord], str | None]:
        """Filtered page in ascending sequence order; cursor resumes exactly."""
        if limit < 1:
            raise ValueError("limit must be >= 1")
        after_seq = 0
        if cursor is not None:
            try:
                after_seq = int(cursor)
            except (TypeError, ValueError):
                raise BadCursor(repr(cursor)) from None
        with self._lock:
            live = sorted(self._by_id.values(), key=lambda r: r.seq)
        out: list[StoreRecord] = []
        for rec in live:
            if rec.seq <= after_seq:
                continue
            r = rec.result
            if label is not None and r.predicted is not label:
                continue
            if decision is not None and r.decision != decision:
                continue
            if t_min is not None and r.classified_ts < t_min:
                continue
            if t_max is not None and r.classified_ts >= t_max:
                continue
            if resolved is not None and (r.resolution is not None) != resolved:
                continue
            out.append(rec)
            if len(out) == limit:
                return out, str(rec.seq)
        return out, None

    def review_queue_depth(self) -> int:
        with self._lock:
            return sum(
                1
                for rec in self._by_id.values()
                if rec.result.decision == "REVIEW" and rec.result.resolution is None
            )

    def report(self, window_start: float, window_end: float) -> Report:
        with self._lock:
            live = [r.result for r in self._by_id.values()]
        in_window = [
            r for r in live if window_start <= r.classified_ts < window_end
        ]
        by_label = {c.canonical: 0 for c in LabelClass}
        by_decision = {d: 0 for d in DECISIONS}
        for r in in_window:
            by_label[r.predicted.canonical] += 1
            by_decision[r.decision] += 1
        golds = [(int(r.gold_label), int(r.predicted)) for r in in_window if r.gold_label is not None]
        confusion = None
        macro = None
        if golds:
            cm = metrics.confusion_matrix(
                [g for g, _ in golds], [p for _, p in golds], NUM_CLASSES
            )
            prf = metrics.macro_prf(cm)
            confusion = cm.tolist()
            macro = {
                "accuracy": prf.accuracy,
                "macro_precision": prf.macro_precision,
                "macro_recall": prf.macro_recall,
                "macro_f1": prf.macro_f1,
            }
        span = max(window_end - window_start, 1e-9)
        review_depth = sum(
            1 for r in in_window if r.decision == "REVIEW" and r.resolution is None
        )
        return Report(
            window_start=window_start,
            window_end=window_end,
            total=len(in_window),
            by_label=by_label,
            by_decision=by_decision,
            review_queue_depth=review_depth,
            throughput_per_s=len(in_window) / span,
            confusion=confusion,
            macro=macro,
        )

    def index_digest(self) -> str:
        """Stable digest of the live state, for crash-recovery comparisons."""
        with self._lock:
            blob = json.dumps(
                [self._by_id[k].to_json_dict() for k in sorted(self._by_id)],
                sort_keys=True,
            ).encode()
        return hashlib.sha256(blob).hexdigest()

    def close(self) -> None:
        with self._lock:
            self._fh.close()
