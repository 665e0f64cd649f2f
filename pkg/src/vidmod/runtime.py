"""Streaming pipeline stages: manifest replay into the ingest topic, and
consumer workers that preprocess, encode, classify, route, and persist.

Workers give each message up to three processing attempts, then divert it to
the topic's dead-letter queue so one poison record cannot wedge a partition.
Offsets commit only after the durable store append, which with the store's
upsert-by-id semantics yields end-to-end at-least-once with no duplicates in
the final state.
"""

from __future__ import annotations

import base64
import dataclasses
import json
import threading
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .broker import Broker, RebalanceInProgress
from .corpus import VideoRecord, parse_manifest_line, read_audio_file, resolve_sidecar
from .featurize import record_features
from .fusion.model import FusionModel, predict
from .labels import HARMFUL_LABELS, LabelClass
from .preprocess import AudioTrack, EmptyAudio, FilterConfig, rms_gate, truncate_audio
from .store import ModerationResult, Store

INGEST_TOPIC = "videos.raw"
MAX_PROCESS_ATTEMPTS = 3


@dataclass(frozen=True)
class RoutingPolicy:
    """Confidence-threshold routing. tau=0 disables review routing entirely."""

    confidence_threshold: float = 0.70

    def __post_init__(self):
        if not 0.0 <= self.confidence_threshold <= 1.0:
            raise ValueError("confidence_threshold must be in [0, 1]")


def decide(probabilities, policy: RoutingPolicy) -> str:
    """REVIEW below the confidence threshold, else BLOCK/ALLOW by class."""
    probs = np.asarray(probabilities, dtype=np.float64)
    top = int(probs.argmax())  # ties resolve to the lowest ordinal
    if float(probs[top]) < policy.confidence_threshold:
        return "REVIEW"
    return "BLOCK" if LabelClass(top) in HARMFUL_LABELS else "ALLOW"


@dataclass
class ProducerStats:
    published: int = 0
    skipped: int = 0


def run_producer(
    broker: Broker,
    manifest_path,
    topic: str = INGEST_TOPIC,
    rate_limit: float | None = None,
    clock=time.monotonic,
    sleep=time.sleep,
) -> ProducerStats:
    """Replay a manifest into the topic, one message per record, key = id.

    Malformed lines are skipped and counted, never fatal.
    """
    stats = ProducerStats()
    start = clock()
    with open(manifest_path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = parse_manifest_line(line, line_no)
            except ValueError:
                stats.skipped += 1
                continue
            broker.publish(topic, rec.id.encode("utf-8"), line.encode("utf-8"))
            stats.published += 1
            if rate_limit:
                earliest = start + stats.published / rate_limit
                delay = earliest - clock()
                if delay > 0:
                    sleep(delay)
    return stats


def watch_producer(
    broker: Broker,
    watch_dir,
    topic: str = INGEST_TOPIC,
    stop_event: threading.Event | None = None,
    poll_interval_s: float = 0.5,
    rate_limit: float | None = None,
    clock=time.monotonic,
    sleep=time.sleep,
) -> ProducerStats:
    """Tail a directory for new manifest files until stop_event is set."""
    stop_event = stop_event or threading.Event()
    seen: set[str] = set()
    total = ProducerStats()
    watch_dir = Path(watch_dir)
    while not stop_event.is_set():
        for path in sorted(watch_dir.glob("*.jsonl")):
            if path.name in seen:
                continue
            seen.add(path.name)
            stats = run_producer(broker, path, topic, rate_limit, clock, sleep)
            total.published += stats.published
            total.skipped += stats.skipped
        stop_event.wait(poll_interval_s)
    return total


@dataclass
class ConsumerStats:
    processed: int = 0
    dead_lettered: int = 0
    empty_text: int = 0


def process_record(
    record: VideoRecord,
    model: FusionModel,
    fcfg: FilterConfig,
    policy: RoutingPolicy,
    manifest_dir,
    fingerprint: str,
    ingest_ts: float,
    clock=time.time,
) -> ModerationResult:
    """Deterministic classification of one record under a fixed checkpoint."""
    cfg = model.config
    feats = record_features(
        record, manifest_dir, fcfg, "all", cfg.video_dim, cfg.text_dim
    )
    audio_kept_s = None
    if record.audio_path:
        samples, rate = read_audio_file(resolve_sidecar(manifest_dir, record.audio_path))
        track = truncate_audio(AudioTrack(rate, samples), fcfg.max_duration_s)
        try:
            gated, _ = rms_gate(track, fcfg)
            audio_kept_s = gated.duration_s
        except EmptyAudio:
            audio_kept_s = 0.0
    probs, preds = predict(model, feats.x_video[None, :], feats.x_text[None, :])
    probabilities = tuple(float(p) for p in probs[0])
    result = ModerationResult(
        video_id=record.id,
        probabilities=probabilities,
        predicted=LabelClass(int(preds[0])),
        decision=decide(probabilities, policy),
        confidence=float(max(probabilities)),
        text_composed=feats.bundle.composed,
        checkpoint_fingerprint=fingerprint,
        ingest_ts=ingest_ts,
        classified_ts=clock(),
        gold_label=record.label,
        empty_text=feats.empty_text,
        audio_kept_s=audio_kept_s,
        hashtags=record.hashtags,
        engagement=dataclasses.asdict(record.engagement) if record.engagement else None,
    )
    result.validate()
    return result


def dead_letter_topic(topic: str) -> str:
    return f"{topic}.dlq"


def run_consumer(
    broker: Broker,
    store: Store,
    model: FusionModel,
    fcfg: FilterConfig,
    policy: RoutingPolicy,
    worker_id: str,
    manifest_dir,
    topic: str = INGEST_TOPIC,
    group: str = "moderators",
    stop_event: threading.Event | None = None,
    max_items: int | None = None,
    drain: bool = False,
    poll_timeout_s: float = 0.2,
    clock=time.time,
) -> ConsumerStats:
    """Worker loop: poll -> classify -> durable append -> commit.

    drain=True exits once the group has no lag (batch mode for DAG tasks);
    otherwise the loop runs until stop_event is set.
    """
    stop_event = stop_event or threading.Event()
    stats = ConsumerStats()
    fingerprint = model.config.fingerprint()
    dlq = dead_letter_topic(topic)
    broker.create_topic(dlq, broker._topic(topic).partition_count)
    member = broker.join_group(group, topic, worker_id)
    try:
        while not stop_event.is_set():
            if max_items is not None and stats.processed >= max_items:
                break
            try:
                messages = member.poll(max_messages=32, timeout_s=poll_timeout_s)
            except RebalanceInProgress:
                continue
            if not messages:
                if drain and sum(broker.lag(group, topic).values()) == 0:
                    break
                continue
            for msg in messages:
                if stop_event.is_set():
                    break
                ingest_ts = msg.timestamp if msg.timestamp > 0 else clock()
                error = None
                for _ in range(MAX_PROCESS_ATTEMPTS):
                    try:
                        record = parse_manifest_line(msg.value.decode("utf-8"), 0)
                        result = process_record(
                            record, model, fcfg, policy, manifest_dir,
                            fingerprint, ingest_ts, clock,
                        )
                        store.append(result)
                        error = None
                        break
                    except Exception as e:  # per-item failures never kill the worker
                        error = e
                if error is not None:
                    broker.publish(
                        dlq,
                        msg.key,
                        json.dumps(
                            {
                                "error": f"{type(error).__name__}: {error}",
                                "attempts": MAX_PROCESS_ATTEMPTS,
                                "partition": msg.partition,
                                "offset": msg.offset,
                                "value_b64": base64.b64encode(msg.value).decode("ascii"),
                            }
                        ).encode("utf-8"),
                    )
                    stats.dead_lettered += 1
                else:
                    stats.processed += 1
                    if result.empty_text:
                        stats.empty_text += 1
                member.commit(msg.partition, msg.offset + 1)
    finally:
        member.leave()
    return stats
