import json

import numpy as np
import pytest

from vidmod.labels import LabelClass
from vidmod.store import (
    AlreadyResolved,
    BadCursor,
    CorruptJournal,
    InvalidResult,
    ModerationResult,
    NotFound,
    NotReviewable,
    Store,
)


def make_result(video_id="v1", decision="REVIEW", predicted=LabelClass.SAFE,
                probs=(0.4, 0.3, 0.2, 0.1), ts=100.0, gold=None):
    return ModerationResult(
        video_id=video_id,
        probabilities=probs,
        predicted=predicted,
        decision=decision,
        confidence=max(probs),
        text_composed="Audio: x | OCR: y",
        checkpoint_fingerprint="abc123",
        ingest_ts=ts - 1,
        classified_ts=ts,
        gold_label=gold,
    )


@pytest.fixture
def store(tmp_path):
    s = Store(tmp_path)
    yield s
    s.close()


def test_append_same_id_upserts(store):
    r = make_result()
    store.append(r)
    store.append(r)
    assert store.count() == 1
    journal_lines = store.journal_path.read_text().strip().splitlines()
    assert len(journal_lines) == 2


def test_restart_recovers_all_live_records(tmp_path):
    store = Store(tmp_path)
    for i in range(100):
        store.append(make_result(f"v{i}", ts=float(i)))
    digest = store.index_digest()
    store.close()
    reopened = Store(tmp_path)
    assert reopened.count() == 100
    assert reopened.index_digest() == digest
    reopened.close()


def test_invalid_probabilities_rejected(store):
    bad = make_result(probs=(0.5, 0.5, 0.5, 0.5))
    with pytest.raises(InvalidResult):
        store.append(bad)
    assert store.count() == 0
    assert store.journal_path.read_text() == ""


def test_confidence_mismatch_rejected(store):
    r = ModerationResult(
        video_id="x",
        probabilities=(0.7, 0.1, 0.1, 0.1),
        predicted=LabelClass.SAFE,
        decision="ALLOW",
        confidence=0.5,
        text_composed="",
        checkpoint_fingerprint="",
        ingest_ts=0,
        classified_ts=0,
    )
    with pytest.raises(InvalidResult):
        store.append(r)


def test_query_review_filter(store):
    store.append(make_result("a", decision="REVIEW"))
    store.append(make_result("b", decision="ALLOW", probs=(0.9, 0.05, 0.03, 0.02)))
    store.append(make_result("c", decision="REVIEW"))
    records, _ = store.query(decision="REVIEW", resolved=False, limit=10)
    assert {r.result.video_id for r in records} == {"a", "c"}


def test_query_pagination_complete_and_disjoint(store):
    for i in range(25):
        store.append(make_result(f"v{i:02d}", ts=float(i)))
    pages = []
    cursor = None
    while True:
        page, cursor = store.query(limit=10, cursor=cursor)
        pages.append(page)
        if cursor is None:
            break
    sizes = [len(p) for p in pages]
    assert sizes == [10, 10, 5]
    ids = [r.result.video_id for p in pages for r in p]
    assert len(set(ids)) == 25
    seqs = [r.seq for p in pages for r in p]
    assert seqs == sorted(seqs)


def test_query_empty_store(store):
    page, cursor = store.query(limit=5)
    assert page == [] and cursor is None


def test_bad_cursor(store):
    with pytest.raises(BadCursor):
        store.query(limit=5, cursor="not-a-seq")


def test_resolve_lifecycle(store):
    store.append(make_result("a"))
    rec = store.resolve("a", "allow", "mod-1")
    assert rec.result.resolution.verdict == "allow"
    assert rec.result.resolution.moderator == "mod-1"
    records, _ = store.query(decision="REVIEW", resolved=False, limit=10)
    assert records == []
    assert store.review_queue_depth() == 0


def test_resolve_preserves_classification_fields(store):
    original = make_result("a", probs=(0.4, 0.3, 0.2, 0.1))
    store.append(original)
    rec = store.resolve("a", "block", "mod", relabel=LabelClass.SUICIDE)
    assert rec.result.probabilities == original.probabilities
    assert rec.result.predicted is original.predicted
    assert rec.result.confidence == original.confidence
    assert rec.result.resolution.relabel is LabelClass.SUICIDE


def test_resolve_errors(store):
    store.append(make_result("allow-item", decision="ALLOW", probs=(0.9, 0.05, 0.03, 0.02)))
    store.append(make_result("review-item"))
    with pytest.raises(NotFound):
        store.resolve("ghost", "allow", "m")
    with pytest.raises(NotReviewable):
        store.resolve("allow-item", "allow", "m")
    store.resolve("review-item", "allow", "m")
    with pytest.raises(AlreadyResolved):
        store.resolve("review-item", "allow", "m")


def test_report_empty_window(store):
    report = store.report(0.0, 1.0)
    assert report.total == 0
    assert all(v == 0 for v in report.by_label.values())
    assert all(v == 0 for v in report.by_decision.values())


def test_report_window_filters_by_classified_ts(store):
    store.append(make_result("old", ts=10.0))
    store.append(make_result("new", ts=100.0))
    report = store.report(50.0, 150.0)
    assert report.total == 1


def test_report_macro_matches_metrics_module(store):
    rng = np.random.default_rng(0)
    golds, preds = [], []
    for i in range(80):
        gold = LabelClass(int(rng.integers(0, 4)))
        pred = LabelClass(int(rng.integers(0, 4)))
        golds.append(int(gold))
        preds.append(int(pred))
        probs = [0.05, 0.05, 0.05, 0.05]
        probs[int(pred)] = 0.85
        store.append(
            make_result(f"v{i}", decision="ALLOW" if pred is LabelClass.SAFE else "BLOCK",
                        predicted=pred, probs=tuple(probs), ts=50.0, gold=gold)
        )
    report = store.report(0.0, 100.0)
    from vidmod import metrics

    cm = metrics.confusion_matrix(golds, preds, 4)
    prf = metrics.macro_prf(cm)
    assert report.macro["macro_f1"] == pytest.approx(prf.macro_f1, abs=1e-12)
    assert report.confusion == cm.tolist()


def test_journal_replay_idempotent(tmp_path):
    store = Store(tmp_path)
    for i in range(10):
        store.append(make_result(f"v{i}"))
    store.resolve("v3", "allow", "m")
    digest = store.index_digest()
    store.close()
    a = Store(tmp_path)
    d1 = a.index_digest()
    a.close()
    b = Store(tmp_path)
    d2 = b.index_digest()
    b.close()
    assert d1 == d2 == digest


def test_torn_tail_dropped(tmp_path):
    store = Store(tmp_path)
    store.append(make_result("v1"))
    store.append(make_result("v2"))
    store.close()
    with open(store.journal_path, "ab") as fh:
        fh.write(b'{"seq": 3, "ts": 1.0, "record": {"video_id": "v3"')  # torn write
    reopened = Store(tmp_path)
    assert reopened.count() == 2
    # and the torn bytes were removed so new appends stay parseable
    reopened.append(make_result("v4"))
    reopened.close()
    final = Store(tmp_path)
    assert final.count() == 3
    final.close()


def test_corrupt_interior_line_raises(tmp_path):
    store = Store(tmp_path)
    store.append(make_result("v1"))
    store.append(make_result("v2"))
    store.close()
    lines = store.journal_path.read_bytes().splitlines(keepends=True)
    lines[0] = b'{"seq": broken}\n'
    store.journal_path.write_bytes(b"".join(lines))
    with pytest.raises(CorruptJournal):
        Store(tmp_path)


def test_listener_events(store):
    events = []
    store.add_listener(lambda kind, vid: events.append((kind, vid)))
    store.append(make_result("r1", decision="REVIEW"))
    store.append(make_result("a1", decision="ALLOW", probs=(0.9, 0.05, 0.03, 0.02)))
    store.resolve("r1", "allow", "m")
    assert ("review_added", "r1") in events
    assert ("review_resolved", "r1") in events
    assert all(vid != "a1" for _, vid in events)


def test_sequence_strictly_increasing(store):
    seqs = [store.append(make_result(f"v{i}")) for i in range(5)]
    seqs.append(store.resolve("v0", "allow", "m").seq)
    assert seqs == sorted(seqs)
    assert len(set(seqs)) == len(seqs)
