import threading
import time

import pytest

from vidmod.orchestrator import (
    DagError,
    DagSpec,
    RunContext,
    RunLedger,
    Scheduler,
    TaskSpec,
    run,
    validate,
)

from conftest import ManualClock, wait_until


def dag(tasks, edges, dag_id="test-dag"):
    return DagSpec(dag_id=dag_id, tasks=tuple(tasks), edges=tuple(edges))


def ctx_for(tmp_path, registry, **kw):
    return RunContext(data_dir=tmp_path, registry=registry, **kw)


# -- validate --------------------------------------------------------------------


def test_validate_chain_ok():
    spec = dag(
        [TaskSpec("a", "noop"), TaskSpec("b", "noop"), TaskSpec("c", "noop")],
        [("a", "b"), ("b", "c")],
    )
    assert validate(spec) == []


def test_validate_cycle_detected():
    spec = dag([TaskSpec("a", "noop"), TaskSpec("b", "noop")], [("a", "b"), ("b", "a")])
    errors = validate(spec)
    assert any(e.startswith("CycleDetected") and "a" in e and "b" in e for e in errors)


def test_validate_dangling_edge():
    spec = dag([TaskSpec("a", "noop")], [("a", "z")])
    assert "DanglingEdge(z)" in validate(spec)


def test_validate_reports_all_violations_at_once():
    spec = dag(
        [TaskSpec("a", "noop"), TaskSpec("a", "noop"), TaskSpec("b", "noop")],
        [("b", "ghost"), ("b", "b")],
    )
    errors = validate(spec)
    assert any("DuplicateTaskId(a)" in e for e in errors)
    assert any("DanglingEdge(ghost)" in e for e in errors)
    assert any("CycleDetected" in e for e in errors)


def test_run_rejects_invalid_spec(tmp_path):
    spec = dag([TaskSpec("a", "noop")], [("a", "a")])
    with pytest.raises(DagError):
        run(spec, ctx_for(tmp_path, {"noop": lambda a, c: None}))


# -- run ----------------------------------------------------------------------


def test_diamond_runs_d_once_after_b_and_c(tmp_path):
    order = []
    lock = threading.Lock()

    def make(name):
        def fn(args, ctx):
            with lock:
                order.append((name, time.monotonic()))

        return fn

    registry = {n: make(n) for n in "abcd"}
    spec = dag(
        [TaskSpec(n, n) for n in "abcd"],
        [("a", "b"), ("a", "c"), ("b", "d"), ("c", "d")],
    )
    ledger = run(spec, ctx_for(tmp_path, registry))
    assert ledger.data["status"] == "success"
    names = [n for n, _ in order]
    assert names.count("d") == 1
    times = dict(order)
    assert times["d"] >= times["b"] and times["d"] >= times["c"]
    assert names[0] == "a"


def test_retry_until_success_records_attempts(tmp_path, manual_clock):
    failures = {"count": 0}

    def flaky(args, ctx):
        failures["count"] += 1
        if failures["count"] < 3:
            raise RuntimeError("transient")

    spec = dag([TaskSpec("flaky", "flaky", max_retries=3, backoff_base_s=0.1)], [])
    ctx = ctx_for(tmp_path, {"flaky": flaky}, sleep=manual_clock.sleep)
    ledger = run(spec, ctx)
    assert ledger.data["status"] == "success"
    assert ledger.data["tasks"]["flaky"]["attempts"] == 3
    assert manual_clock.sleeps == [0.1, 0.2]  # exponential backoff


def test_permanent_failure_skips_descendants(tmp_path):
    def boom(args, ctx):
        raise RuntimeError("kaput")

    registry = {"ok": lambda a, c: None, "boom": boom}
    spec = dag(
        [
            TaskSpec("a", "ok"),
            TaskSpec("b", "boom", max_retries=1),
            TaskSpec("c", "ok"),
            TaskSpec("d", "ok"),
        ],
        [("a", "b"), ("a", "c"), ("b", "d")],
    )
    ledger = run(spec, ctx_for(tmp_path, registry))
    tasks = ledger.data["tasks"]
    assert ledger.data["status"] == "failed"
    assert tasks["a"]["status"] == "success"
    assert tasks["b"]["status"] == "failed"
    assert tasks["b"]["attempts"] == 2
    assert tasks["c"]["status"] == "success"
    assert tasks["d"]["status"] == "skipped"


def test_execution_is_linear_extension_of_dag(tmp_path):
    spec = dag(
        [TaskSpec(f"t{i}", "noop") for i in range(6)],
        [("t0", "t1"), ("t1", "t2"), ("t0", "t3"), ("t3", "t4"), ("t2", "t5"), ("t4", "t5")],
    )
    ledger = run(spec, ctx_for(tmp_path, {"noop": lambda a, c: time.sleep(0.001)}))
    tasks = ledger.data["tasks"]
    for up, down in spec.edges:
        assert tasks[up]["ended"] <= tasks[down]["started"]


def test_total_executions_bounded(tmp_path):
    calls = {"n": 0}

    def always_fail(args, ctx):
        calls["n"] += 1
        raise RuntimeError("no")

    spec = dag([TaskSpec("x", "fail", max_retries=2, backoff_base_s=0.0)], [])
    run(spec, ctx_for(tmp_path, {"fail": always_fail}))
    assert calls["n"] == 3  # 1 + max_retries


def test_unknown_op_fails_cleanly(tmp_path):
    spec = dag([TaskSpec("x", "missing-op")], [])
    ledger = run(spec, ctx_for(tmp_path, {}))
    assert ledger.data["status"] == "failed"
    assert "UnknownOp" in ledger.data["tasks"]["x"]["error"]


def test_ledger_persisted_and_reloadable(tmp_path):
    spec = dag([TaskSpec("a", "noop"), TaskSpec("b", "noop")], [("a", "b")])
    ledger = run(spec, ctx_for(tmp_path, {"noop": lambda a, c: None}))
    loaded = RunLedger.load(ledger.path)
    assert loaded["tasks"]["a"]["status"] == "success"
    assert loaded["tasks"]["b"]["status"] == "success"
    assert loaded["status"] == "success"
    assert loaded["run_id"] == ledger.data["run_id"]


def test_dag_spec_json_round_trip(tmp_path):
    doc = {
        "dag_id": "d",
        "tasks": [
            {"id": "a", "op": "noop", "args": {"k": 1}, "max_retries": 2},
            {"id": "b", "op": "noop"},
        ],
        "edges": [{"upstream": "a", "downstream": "b"}],
    }
    import json

    path = tmp_path / "spec.json"
    path.write_text(json.dumps(doc))
    spec = DagSpec.from_json_file(path)
    assert spec.dag_id == "d"
    assert spec.tasks[0].args == {"k": 1}
    assert spec.edges == (("a", "b"),)
    assert validate(spec) == []


# -- scheduler -----------------------------------------------------------------


def test_scheduler_fires_on_interval(tmp_path, manual_clock):
    runs = []
    registry = {"noop": lambda a, c: runs.append(1)}
    spec = dag([TaskSpec("a", "noop")], [])
    ctx = ctx_for(tmp_path, registry, clock=manual_clock)
    sched = Scheduler(spec, ctx, interval_s=3.0)
    for _ in range(10):
        manual_clock.advance(1.0)
        sched.poll_once()
        wait_until(lambda: not sched._run_in_flight())
    sched.stop()
    assert len(sched.completed_runs) == 3  # ticks at t=3,6,9


def test_scheduler_skips_overlapping_run(tmp_path, manual_clock):
    release = threading.Event()

    def slow(args, ctx):
        release.wait(5.0)

    spec = dag([TaskSpec("slow", "slow")], [])
    ctx = ctx_for(tmp_path, {"slow": slow}, clock=manual_clock)
    sched = Scheduler(spec, ctx, interval_s=1.0)
    manual_clock.advance(1.0)
    sched.poll_once()  # starts the slow run
    assert wait_until(sched._run_in_flight)
    manual_clock.advance(1.0)
    sched.poll_once()  # lands while the run is still going
    assert any("skipped" in n for n in sched.notes)
    release.set()
    sched.stop()
    assert len(sched.completed_runs) == 1


def test_scheduler_stop_idempotent(tmp_path, manual_clock):
    spec = dag([TaskSpec("a", "noop")], [])
    ctx = ctx_for(tmp_path, {"noop": lambda a, c: None}, clock=manual_clock)
    sched = Scheduler(spec, ctx, interval_s=1.0)
    sched.stop()
    sched.stop()


def test_scheduler_rejects_bad_interval(tmp_path, manual_clock):
    spec = dag([TaskSpec("a", "noop")], [])
    ctx = ctx_for(tmp_path, {"noop": lambda a, c: None}, clock=manual_clock)
    with pytest.raises(ValueError):
        Scheduler(spec, ctx, interval_s=0.0)
