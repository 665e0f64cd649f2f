"""Minimal DAG scheduler: declarative task graphs, dependency-ordered
execution on a bounded worker pool, per-task retries with exponential
backoff, fixed-interval scheduling without overlap, and an incrementally
persisted run ledger.

Task bodies are resolved by name against a registry, so DAG specs stay
declarative; a "shell" escape hatch runs external commands.
"""

from __future__ import annotations

import json
import os
import subprocess
import threading
import time
import uuid
from concurrent.futures import FIRST_COMPLETED, ThreadPoolExecutor, wait
from dataclasses import dataclass, field
from pathlib import Path


class DagError(ValueError):
    pass


@dataclass(frozen=True)
class TaskSpec:
    task_id: str
    op: str
    args: dict = field(default_factory=dict)
    max_retries: int = 0
    backoff_base_s: float = 0.1


@dataclass(frozen=True)
class DagSpec:
    dag_id: str
    tasks: tuple[TaskSpec, ...]
    edges: tuple[tuple[str, str], ...]
    schedule: str = "manual"  # "manual" | "interval:<seconds>"

    @classmethod
    def from_json_dict(cls, d: dict) -> "DagSpec":
        tasks = tuple(
            TaskSpec(
                task_id=t["id"],
                op=t["op"],
                args=t.get("args", {}),
                max_retries=int(t.get("max_retries", 0)),
                backoff_base_s=float(t.get("backoff_base_s", 0.1)),
            )
            for t in d["tasks"]
        )
        edges = tuple((e["upstream"], e["downstream"]) for e in d.get("edges", []))
        return cls(
            dag_id=d["dag_id"],
            tasks=tasks,
            edges=edges,
            schedule=d.get("schedule", "manual"),
        )

    @classmethod
    def from_json_file(cls, path) -> "DagSpec":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_json_dict(json.load(fh))


def validate(spec: DagSpec) -> list[str]:
    """All structural violations, not just the first; empty list means valid."""
    errors: list[str] = []
    ids = [t.task_id for t in spec.tasks]
    seen: set[str] = set()
    for tid in ids:
        if tid in seen:
            errors.append(f"DuplicateTaskId({tid})")
        seen.add(tid)
    known = set(ids)
    adj: dict[str, list[str]] = {tid: [] for tid in known}
    indeg: dict[str, int] = {tid: 0 for tid in known}
    for up, down in spec.edges:
        missing = [x for x in (up, down) if x not in known]
        for x in missing:
            errors.append(f"DanglingEdge({x})")
        if not missing:
            adj[up].append(down)
            indeg[down] += 1

    # Kahn's algorithm; leftovers are on a cycle
    queue = [tid for tid, d in indeg.items() if d == 0]
    seen_count = 0
    indeg = dict(indeg)
    while queue:
        cur = queue.pop()
        seen_count += 1
        for nxt in adj[cur]:
            indeg[nxt] -= 1
            if indeg[nxt] == 0:
                queue.append(nxt)
    if seen_count != len(known):
        cycle = sorted(tid for tid, d in indeg.items() if d > 0)
        errors.append("CycleDetected(" + " -> ".join(cycle) + ")")
    return errors


@dataclass
class RunContext:
    data_dir: Path
    registry: dict
    clock: object = None
    sleep: object = None
    cancel_event: threading.Event | None = None
    extras: dict = field(default_factory=dict)

    def __post_init__(self):
        self.data_dir = Path(self.data_dir)
        if self.clock is None:
            self.clock = time.monotonic
        if self.sleep is None:
            self.sleep = time.sleep
        if self.cancel_event is None:
            self.cancel_event = threading.Event()


def shell_op(args: dict, ctx: RunContext):
    proc = subprocess.run(
        args["cmd"],
        capture_output=True,
        text=True,
        timeout=args.get("timeout_s", 600),
    )
    if proc.returncode != 0:
        raise RuntimeError(
            f"command exited {proc.returncode}: {proc.stderr.strip()[:500]}"
        )
    return proc.stdout


class RunLedger:
    """Per-run task statuses, persisted atomically after every change."""

    def __init__(self, path: Path, run_id: str, dag_id: str, task_ids: list[str], clock):
        self.path = path
        self.clock = clock
        self._lock = threading.Lock()
        self.data = {
            "run_id": run_id,
            "dag_id": dag_id,
            "started": clock(),
            "ended": None,
            "status": "running",
            "notes": [],
            "tasks": {
                tid: {
                    "status": "pending",
                    "attempts": 0,
                    "error": None,
                    "started": None,
                    "ended": None,
                }
                for tid in task_ids
            },
        }
        self._persist()

    def _persist(self) -> None:
        self.path.parent.mkdir(parents=True, exist_ok=True)
        tmp = self.path.with_suffix(".tmp")
        with open(tmp, "w", encoding="utf-8") as fh:
            json.dump(self.data, fh, indent=1)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, self.path)

    def update_task(self, task_id: str, **fields) -> None:
        with self._lock:
            self.data["tasks"][task_id].update(fields)
            self._persist()

    def note(self, text: str) -> None:
        with self._lock:
            self.data["notes"].append({"ts": self.clock(), "note": text})
            self._persist()

    def finish(self, status: str) -> None:
        with self._lock:
            self.data["status"] = status
            self.data["ended"] = self.clock()
            self._persist()

    def task_status(self, task_id: str) -> str:
        return self.data["tasks"][task_id]["status"]

    @staticmethod
    def load(path) -> dict:
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)


def run(spec: DagSpec, ctx: RunContext, max_workers: int = 4, run_id: str | None = None) -> RunLedger:
    """Execute a validated DAG; failures retry, permanent failures skip
    descendants, and independent tasks run concurrently on the pool."""
    errors = validate(spec)
    if errors:
        raise DagError("; ".join(errors))
    run_id = run_id or f"{spec.dag_id}-{uuid.uuid4().hex[:8]}"
    ledger = RunLedger(
        ctx.data_dir / "runs" / f"{run_id}.json",
        run_id,
        spec.dag_id,
        [t.task_id for t in spec.tasks],
        ctx.clock,
    )
    tasks = {t.task_id: t for t in spec.tasks}
    upstreams: dict[str, set[str]] = {tid: set() for tid in tasks}
    downstreams: dict[str, set[str]] = {tid: set() for tid in tasks}
    for up, down in spec.edges:
        upstreams[down].add(up)
        downstreams[up].add(down)

    done: dict[str, str] = {}  # task_id -> terminal status

    def runnable() -> list[str]:
        return [
            tid
            for tid in tasks
            if tid not in done
            and tid not in in_flight
            and all(done.get(u) == "success" for u in upstreams[tid])
        ]

    def skip_descendants(tid: str) -> None:
        for d in downstreams[tid]:
            if d in done:
                continue
            done[d] = "skipped"
            ledger.update_task(d, status="skipped")
            skip_descendants(d)

    def execute(task: TaskSpec) -> str:
        fn = ctx.registry.get(task.op)
        if fn is None:
            ledger.update_task(task.task_id, status="failed", error=f"UnknownOp({task.op})")
            return "failed"
        attempts = 0
        while True:
            attempts += 1
            ledger.update_task(
                task.task_id, status="running", attempts=attempts, started=ctx.clock()
            )
            try:
                fn(task.args, ctx)
                ledger.update_task(task.task_id, status="success", ended=ctx.clock())
                return "success"
            except Exception as e:
                err = f"{type(e).__name__}: {e}"
                if attempts > task.max_retries or ctx.cancel_event.is_set():
                    ledger.update_task(
                        task.task_id, status="failed", error=err, ended=ctx.clock()
                    )
                    return "failed"
                ledger.update_task(task.task_id, status="pending", error=err)
                ctx.sleep(task.backoff_base_s * (2 ** (attempts - 1)))

    in_flight: dict[str, object] = {}
    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        while len(done) < len(tasks):
            for tid in runnable():
                in_flight[tid] = pool.submit(execute, tasks[tid])
            if not in_flight:
                # remaining tasks are unreachable (upstream failed/skipped)
                for tid in list(tasks):
                    if tid not in done:
                        done[tid] = "skipped"
                        ledger.update_task(tid, status="skipped")
                break
            futures = {f: tid for tid, f in in_flight.items()}
            completed, _ = wait(futures, return_when=FIRST_COMPLETED)
            for fut in completed:
                tid = futures[fut]
                del in_flight[tid]
                status = fut.result()
                done[tid] = status
                if status == "failed":
                    skip_descendants(tid)

    ok = all(s == "success" for s in done.values())
    ledger.finish("success" if ok else "failed")
    return ledger


class Scheduler:
    """Fixed-interval trigger with no-overlap semantics.

    poll_once() is the testable core; start() spawns a background loop that
    calls it. Ticks that land while a run is in flight are skipped and noted.
    """

    def __init__(self, spec: DagSpec, ctx: RunContext, interval_s: float, max_workers: int = 4):
        if interval_s <= 0:
            raise ValueError("interval must be positive")
        self.spec = spec
        self.ctx = ctx
        self.interval_s = interval_s
        self.max_workers = max_workers
        self.next_due = ctx.clock() + interval_s
        self.completed_runs: list[RunLedger] = []
        self.notes: list[str] = []
        self._run_thread: threading.Thread | None = None
        self._loop_thread: threading.Thread | None = None
        self._stopped = threading.Event()
        self._lock = threading.Lock()

    def _run_in_flight(self) -> bool:
        return self._run_thread is not None and self._run_thread.is_alive()

    def poll_once(self) -> None:
        with self._lock:
            if self.ctx.clock() < self.next_due or self._stopped.is_set():
                return
            self.next_due += self.interval_s
            if self._run_in_flight():
                self.notes.append(f"tick skipped at {self.ctx.clock():.3f}: run in flight")
                return

            def _target():
                ledger = run(self.spec, self.ctx, self.max_workers)
                self.completed_runs.append(ledger)

            self._run_thread = threading.Thread(target=_target, daemon=True)
            self._run_thread.start()

    def start(self) -> None:
        if self._loop_thread is not None:
            return

        def _loop():
            while not self._stopped.is_set():
                self.poll_once()
                self._stopped.wait(min(self.interval_s / 10.0, 0.05))

        self._loop_thread = threading.Thread(target=_loop, daemon=True)
        self._loop_thread.start()

    def stop(self) -> None:
        """Clean and idempotent; waits for an in-flight run to finish."""
        self._stopped.set()
        if self._loop_thread is not None:
            self._loop_thread.join(timeout=10)
        if self._run_thread is not None:
            self._run_thread.join(timeout=60)
