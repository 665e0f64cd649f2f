"""Single entry point: every pipeline workflow as a verb subcommand.

Exit codes: 0 success, 1 operational error, 2 usage error. Reporting
commands accept --json for machine-readable output. MTG_DATA_DIR and
MTG_LOG override the corresponding flags.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import signal
import sys
import threading
from pathlib import Path

from . import corpus, metrics
from .broker import Broker
from .featurize import ABLATION_MODES, featurize_records
from .fusion import (
    FusionModel,
    ModelConfig,
    TrainConfig,
    ablate,
    evaluate,
    read_checkpoint,
    train,
    write_checkpoint,
)
from .gateway import Gateway
from .labels import NUM_CLASSES, LabelClass
from .orchestrator import DagSpec, RunContext, Scheduler, run, validate
from .pipeline_ops import build_registry
from .preprocess import FilterConfig
from .runtime import (
    INGEST_TOPIC,
    RoutingPolicy,
    run_consumer,
    run_producer,
    watch_producer,
)
from .store import Store

log = logging.getLogger("vidmod")


def _data_dir(args) -> Path:
    d = Path(args.data_dir)
    d.mkdir(parents=True, exist_ok=True)
    return d


def _filters(args) -> FilterConfig:
    if getattr(args, "filters", None):
        return FilterConfig.from_json_file(args.filters)
    return FilterConfig.default()


def _emit(args, doc: dict, human: str | None = None) -> None:
    if getattr(args, "json", False):
        print(json.dumps(doc, indent=1, sort_keys=True))
    else:
        print(human if human is not None else json.dumps(doc, indent=1, sort_keys=True))


def cmd_gen_corpus(args) -> int:
    weights = [float(w) for w in args.weights.split(",")] if args.weights else [1.0] * 4
    noise = corpus.NoiseSpec.from_json_dict(json.loads(args.noise)) if args.noise else corpus.NoiseSpec()
    records = corpus.generate_synthetic(args.n, weights, noise, args.seed, args.out)
    stats = corpus.summarize(records)
    _emit(args, stats.to_json_dict(), f"generated {len(records)} records under {args.out}")
    return 0


def cmd_split(args) -> int:
    records = corpus.load_manifest(args.manifest)
    records = corpus.split_dataset(records, args.ratio, args.seed, force=args.force)
    out = args.out or args.manifest
    corpus.save_manifest(records, out)
    stats = corpus.summarize(records)
    _emit(args, stats.to_json_dict(), f"split written to {out}: {stats.per_split}")
    return 0


def cmd_stats(args) -> int:
    records = corpus.load_manifest(args.manifest)
    stats = corpus.summarize(records)
    lines = [f"total: {stats.total}   splits: {stats.per_split}   unlabeled: {stats.unlabeled}"]
    for name, cs in stats.per_class.items():
        if cs.count:
            lines.append(
                f"{name:<18} n={cs.count:<6} dur min/avg/max = "
                f"{cs.min_duration:.2f}/{cs.avg_duration:.2f}/{cs.max_duration:.2f}s"
            )
        else:
            lines.append(f"{name:<18} n=0")
    _emit(args, stats.to_json_dict(), "\n".join(lines))
    return 0


def _load_splits(manifest, fcfg, mcfg):
    records = corpus.load_manifest(manifest)
    manifest_dir = Path(manifest).parent
    out = {}
    for split in ("train", "dev", "test"):
        recs = [r for r in records if r.split == split]
        if recs:
            out[split] = featurize_records(
                recs, manifest_dir, fcfg, "all", mcfg.video_dim, mcfg.text_dim
            )
    return out


def cmd_train(args) -> int:
    fcfg = _filters(args)
    mcfg = ModelConfig(fusion_kind=args.fusion)
    tcfg = TrainConfig(
        epochs=args.epochs, batch_size=args.batch_size, lr=args.lr, seed=args.seed
    )
    sets = _load_splits(args.manifest, fcfg, mcfg)
    if "train" not in sets or "dev" not in sets:
        print("manifest needs train and dev splits (run `vidmod split` first)", file=sys.stderr)
        return 1
    model = FusionModel.init(mcfg, seed=tcfg.seed)
    result = train(
        model, sets["train"], sets["dev"], tcfg,
        log_path=args.log_file, checkpoint_dir=args.checkpoint_dir,
    )
    write_checkpoint(
        args.out,
        result.best.model,
        {"step": result.best.step, "metrics": result.best.metrics.to_json_dict()},
    )
    doc = {
        "checkpoint": str(args.out),
        "best_step": result.best.step,
        "dev": result.best.metrics.to_json_dict(),
    }
    _emit(args, doc, (
        f"best checkpoint at step {result.best.step}: "
        f"dev macro-F1 {result.best.metrics.macro_f1:.4f} -> {args.out}"
    ))
    return 0


def cmd_eval(args) -> int:
    model, _meta = read_checkpoint(args.checkpoint)
    fcfg = _filters(args)
    records = corpus.load_manifest(args.manifest)
    if args.split != "all":
        records = [r for r in records if r.split == args.split]
    if not records:
        print(f"no records in split {args.split!r}", file=sys.stderr)
        return 1
    data = featurize_records(
        records, Path(args.manifest).parent, fcfg, "all",
        model.config.video_dim, model.config.text_dim,
    )
    res = evaluate(model, data)
    _emit(args, res.to_json_dict(), (
        f"n={len(records)}  acc={res.accuracy:.4f}  macroP={res.macro_precision:.4f}  "
        f"macroR={res.macro_recall:.4f}  macroF1={res.macro_f1:.4f}"
    ))
    return 0


def cmd_ablate(args) -> int:
    manifest = Path(args.corpus) / "manifest.jsonl" if Path(args.corpus).is_dir() else Path(args.corpus)
    records = corpus.load_manifest(manifest)
    modes = args.modes.split(",")
    for m in modes:
        if m not in ABLATION_MODES:
            print(f"unknown mode {m!r}; choose from {ABLATION_MODES}", file=sys.stderr)
            return 2
    fcfg = _filters(args)
    mcfg = ModelConfig(fusion_kind=args.fusion)
    tcfg = TrainConfig(epochs=args.epochs, seed=args.seed)
    report = ablate(records, manifest.parent, modes, mcfg, tcfg, fcfg)
    _emit(args, report.to_json_dict(), report.render_table())
    return 0


def cmd_produce(args) -> int:
    if not args.manifest and not args.watch_dir:
        print("one of --manifest or --watch-dir is required", file=sys.stderr)
        return 2
    broker = Broker(_data_dir(args))
    broker.create_topic(args.topic, args.partitions)
    if args.watch_dir:
        stop = threading.Event()
        signal.signal(signal.SIGINT, lambda *_: stop.set())
        signal.signal(signal.SIGTERM, lambda *_: stop.set())
        stats = watch_producer(
            broker, args.watch_dir, args.topic, stop_event=stop, rate_limit=args.rate_limit
        )
    else:
        stats = run_producer(broker, args.manifest, args.topic, rate_limit=args.rate_limit)
    _emit(
        args,
        {"published": stats.published, "skipped": stats.skipped},
        f"published {stats.published}, skipped {stats.skipped}",
    )
    return 0


def cmd_consume(args) -> int:
    cfg = {}
    if args.config:
        cfg = json.loads(Path(args.config).read_text(encoding="utf-8"))
    checkpoint = args.checkpoint or cfg.get("checkpoint")
    if not checkpoint:
        print("--checkpoint (or config with checkpoint) is required", file=sys.stderr)
        return 2
    manifest_dir = args.manifest_dir or cfg.get("manifest_dir") or "."
    data_dir = Path(cfg.get("store_dir", args.data_dir))
    filters_path = args.filters or cfg.get("filters")
    fcfg = FilterConfig.from_json_file(filters_path) if filters_path else FilterConfig.default()
    tau = args.tau if args.tau is not None else float(cfg.get("tau", 0.70))

    broker = Broker(data_dir)
    if not broker.topic_exists(args.topic):
        print(f"topic {args.topic!r} does not exist; produce first", file=sys.stderr)
        return 1
    store = Store(data_dir)
    model, _ = read_checkpoint(checkpoint)
    stop = threading.Event()
    signal.signal(signal.SIGINT, lambda *_: stop.set())
    signal.signal(signal.SIGTERM, lambda *_: stop.set())
    stats = run_consumer(
        broker,
        store,
        model,
        fcfg,
        RoutingPolicy(confidence_threshold=tau),
        worker_id=args.worker_id,
        manifest_dir=manifest_dir,
        topic=args.topic,
        group=args.group or cfg.get("group", "moderators"),
        stop_event=stop,
        max_items=args.max_items,
        drain=args.drain,
    )
    _emit(
        args,
        {"processed": stats.processed, "dead_lettered": stats.dead_lettered, "empty_text": stats.empty_text},
        f"processed {stats.processed}, dead-lettered {stats.dead_lettered}",
    )
    return 0


def cmd_serve(args) -> int:
    host, _, port = args.listen.rpartition(":")
    data_dir = _data_dir(args)
    store = Store(data_dir)
    broker = Broker(data_dir) if (data_dir / "broker").exists() else None
    static_dir = args.static if args.static and Path(args.static).is_dir() else None
    gw = Gateway(
        store,
        broker=broker,
        static_dir=static_dir,
        runs_dir=data_dir / "runs",
        window_s=args.window_s,
    )
    bound_host, bound_port = gw.start(host or "127.0.0.1", int(port))
    print(f"listening on http://{bound_host}:{bound_port}  (Ctrl-C to stop)", flush=True)
    stop = threading.Event()
    signal.signal(signal.SIGINT, lambda *_: stop.set())
    signal.signal(signal.SIGTERM, lambda *_: stop.set())
    stop.wait()
    gw.stop()
    return 0


def cmd_run_dag(args) -> int:
    spec = DagSpec.from_json_file(args.dag)
    problems = validate(spec)
    if problems:
        for p in problems:
            print(p, file=sys.stderr)
        return 1
    ctx = RunContext(data_dir=_data_dir(args), registry=build_registry())
    interval = args.interval
    if interval is None and spec.schedule.startswith("interval:"):
        interval = float(spec.schedule.split(":", 1)[1])
    if interval:
        sched = Scheduler(spec, ctx, interval)
        sched.start()
        stop = threading.Event()
        signal.signal(signal.SIGINT, lambda *_: stop.set())
        signal.signal(signal.SIGTERM, lambda *_: stop.set())
        stop.wait()
        sched.stop()
        return 0
    ledger = run(spec, ctx, max_workers=args.max_workers)
    status = ledger.data["status"]
    _emit(args, ledger.data, f"run {ledger.data['run_id']}: {status}")
    return 0 if status == "success" else 1


def cmd_report(args) -> int:
    store = Store(_data_dir(args))
    end = store.clock()
    start = end - args.window_s if args.window_s else 0.0
    report = store.report(start, end)
    _emit(args, report.to_json_dict(), report.render_table())
    return 0


def cmd_kappa(args) -> int:
    ratings: list[list[int]] = []
    with open(args.ratings, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            doc = json.loads(line)
            ratings.append([int(LabelClass.from_string(r)) for r in doc["ratings"]])
    if not ratings:
        print("ratings file is empty", file=sys.stderr)
        return 1
    n_raters = len(ratings[0])
    doc: dict = {"items": len(ratings), "raters": n_raters}
    table = metrics.fleiss_table(ratings, NUM_CLASSES)
    doc["fleiss_kappa"] = metrics.fleiss_kappa(table, n_raters)
    if n_raters == 2:
        pair = metrics.pair_table(
            [r[0] for r in ratings], [r[1] for r in ratings], NUM_CLASSES
        )
        doc["cohen_kappa"] = metrics.cohen_kappa(pair)
    human = f"items={doc['items']} raters={n_raters} fleiss={doc['fleiss_kappa']:.4f}"
    if "cohen_kappa" in doc:
        human += f" cohen={doc['cohen_kappa']:.4f}"
    _emit(args, doc, human)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vidmod", description="streaming multimodal video moderation pipeline"
    )
    parser.add_argument(
        "--data-dir",
        default=os.environ.get("MTG_DATA_DIR", "data"),
        help="pipeline data directory (env MTG_DATA_DIR)",
    )
    parser.add_argument(
        "--log",
        default=os.environ.get("MTG_LOG", "warning"),
        help="log level (env MTG_LOG)",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, fn, **kwargs):
        p = sub.add_parser(name, **kwargs)
        p.set_defaults(fn=fn)
        return p

    p = add("gen-corpus", cmd_gen_corpus, help="generate a synthetic planted-signal corpus")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--weights", help="4 comma-separated class weights")
    p.add_argument("--noise", help="NoiseSpec as inline JSON")
    p.add_argument("--json", action="store_true")

    p = add("split", cmd_split, help="stratified train/dev assignment")
    p.add_argument("--manifest", required=True)
    p.add_argument("--ratio", type=float, default=0.85)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--force", action="store_true")
    p.add_argument("--out")
    p.add_argument("--json", action="store_true")

    p = add("stats", cmd_stats, help="summarize a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--json", action="store_true")

    p = add("train", cmd_train, help="train the fusion classifier")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--fusion", choices=["concat", "attention"], default="concat")
    p.add_argument("--epochs", type=int, default=6)
    p.add_argument("--batch-size", type=int, default=8)
    p.add_argument("--lr", type=float, default=1e-4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--filters")
    p.add_argument("--log-file")
    p.add_argument("--checkpoint-dir")
    p.add_argument("--json", action="store_true")

    p = add("eval", cmd_eval, help="evaluate a checkpoint on a manifest")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--split", default="all", choices=["train", "dev", "test", "all"])
    p.add_argument("--filters")
    p.add_argument("--json", action="store_true")

    p = add("ablate", cmd_ablate, help="per-modality retrain/evaluate table")
    p.add_argument("--corpus", required=True, help="corpus dir or manifest path")
    p.add_argument("--modes", default="all,video_only,asr_only,ocr_only")
    p.add_argument("--fusion", choices=["concat", "attention"], default="concat")
    p.add_argument("--epochs", type=int, default=6)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--filters")
    p.add_argument("--json", action="store_true")

    p = add("produce", cmd_produce, help="replay or watch manifests into the ingest topic")
    p.add_argument("--manifest")
    p.add_argument("--watch-dir")
    p.add_argument("--topic", default=INGEST_TOPIC)
    p.add_argument("--partitions", type=int, default=3)
    p.add_argument("--rate-limit", type=float)
    p.add_argument("--json", action="store_true")

    p = add("consume", cmd_consume, help="run a classifying consumer worker")
    p.add_argument("--config", help="worker config JSON")
    p.add_argument("--checkpoint")
    p.add_argument("--filters")
    p.add_argument("--group")
    p.add_argument("--topic", default=INGEST_TOPIC)
    p.add_argument("--tau", type=float)
    p.add_argument("--worker-id", default="worker-1")
    p.add_argument("--manifest-dir")
    p.add_argument("--max-items", type=int)
    p.add_argument("--drain", action="store_true", help="exit when lag reaches zero")
    p.add_argument("--json", action="store_true")

    p = add("serve", cmd_serve, help="serve the review/stats HTTP API")
    p.add_argument("--listen", default="127.0.0.1:8787")
    p.add_argument("--static", help="directory with the built review UI")
    p.add_argument("--window-s", type=float, default=3600.0)

    p = add("run-dag", cmd_run_dag, help="execute a DAG spec")
    p.add_argument("--dag", required=True)
    p.add_argument("--interval", type=float, help="run on a fixed schedule (seconds)")
    p.add_argument("--max-workers", type=int, default=4)
    p.add_argument("--json", action="store_true")

    p = add("report", cmd_report, help="aggregate store records into a report")
    p.add_argument("--window-s", type=float, default=0.0, help="0 = all records")
    p.add_argument("--json", action="store_true")

    p = add("kappa", cmd_kappa, help="inter-annotator agreement from a ratings file")
    p.add_argument("--ratings", required=True)
    p.add_argument("--json", action="store_true")

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=getattr(logging, args.log.upper(), logging.WARNING),
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
    )
    try:
        return args.fn(args)
    except BrokenPipeError:
        return 1
    except Exception as e:
        log.debug("command failed", exc_info=True)
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
