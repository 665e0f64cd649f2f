"""Built-in DAG operation bindings.

Each op is a plain function (args, ctx) -> result, resolved by name from the
registry. Broker and store handles are created once per run context and
shared across tasks through ctx.extras.
"""

from __future__ import annotations

import json
from pathlib import Path

from . import corpus
from .broker import Broker
from .fusion import FusionModel, ModelConfig, TrainConfig, read_checkpoint, train, write_checkpoint
from .featurize import featurize_records
from .orchestrator import RunContext, shell_op
from .preprocess import FilterConfig
from .runtime import INGEST_TOPIC, RoutingPolicy, run_consumer, run_producer
from .store import Store


def get_broker(ctx: RunContext) -> Broker:
    if "broker" not in ctx.extras:
        ctx.extras["broker"] = Broker(ctx.data_dir)
    return ctx.extras["broker"]


def get_store(ctx: RunContext) -> Store:
    if "store" not in ctx.extras:
        ctx.extras["store"] = Store(ctx.data_dir)
    return ctx.extras["store"]


def load_filters(args: dict) -> FilterConfig:
    if args.get("filters"):
        return FilterConfig.from_json_file(args["filters"])
    return FilterConfig.default()


def op_gen_corpus(args: dict, ctx: RunContext):
    corpus.generate_synthetic(
        n=int(args["n"]),
        class_weights=args.get("class_weights", [1.0, 1.0, 1.0, 1.0]),
        noise=corpus.NoiseSpec.from_json_dict(args.get("noise", {})),
        seed=int(args.get("seed", 0)),
        out_dir=args["out_dir"],
    )


def op_split(args: dict, ctx: RunContext):
    manifest = args["manifest"]
    records = corpus.load_manifest(manifest)
    records = corpus.split_dataset(
        records,
        train_ratio=float(args.get("train_ratio", 0.85)),
        seed=int(args.get("seed", 0)),
        force=bool(args.get("force", False)),
    )
    corpus.save_manifest(records, args.get("out", manifest))


def op_produce(args: dict, ctx: RunContext):
    broker = get_broker(ctx)
    topic = args.get("topic", INGEST_TOPIC)
    broker.create_topic(topic, int(args.get("partitions", 3)))
    stats = run_producer(
        broker,
        args["manifest"],
        topic=topic,
        rate_limit=args.get("rate_limit"),
    )
    return {"published": stats.published, "skipped": stats.skipped}


def op_consume_batch(args: dict, ctx: RunContext):
    broker = get_broker(ctx)
    store = get_store(ctx)
    model, _meta = read_checkpoint(args["checkpoint"])
    stats = run_consumer(
        broker,
        store,
        model,
        load_filters(args),
        RoutingPolicy(confidence_threshold=float(args.get("tau", 0.70))),
        worker_id=args.get("worker_id", "dag-worker"),
        manifest_dir=args["manifest_dir"],
        topic=args.get("topic", INGEST_TOPIC),
        group=args.get("group", "moderators"),
        drain=True,
        stop_event=ctx.cancel_event,
    )
    return {"processed": stats.processed, "dead_lettered": stats.dead_lettered}


def op_train(args: dict, ctx: RunContext):
    manifest = args["manifest"]
    records = corpus.load_manifest(manifest)
    manifest_dir = Path(manifest).parent
    fcfg = load_filters(args)
    mcfg = ModelConfig.from_json_dict(args.get("model", {}))
    tcfg = TrainConfig.from_json_dict(args.get("train", {}))
    train_set = featurize_records(
        [r for r in records if r.split == "train"], manifest_dir, fcfg,
        "all", mcfg.video_dim, mcfg.text_dim,
    )
    dev_set = featurize_records(
        [r for r in records if r.split == "dev"], manifest_dir, fcfg,
        "all", mcfg.video_dim, mcfg.text_dim,
    )
    model = FusionModel.init(mcfg, seed=tcfg.seed)
    result = train(model, train_set, dev_set, tcfg)
    out = args.get("out", str(ctx.data_dir / "checkpoints" / "best.mtgc"))
    Path(out).parent.mkdir(parents=True, exist_ok=True)
    write_checkpoint(
        out,
        result.best.model,
        {"step": result.best.step, "metrics": result.best.metrics.to_json_dict()},
    )
    return {"dev_macro_f1": result.best.metrics.macro_f1, "checkpoint": out}


def op_report(args: dict, ctx: RunContext):
    store = get_store(ctx)
    window_s = args.get("window_s")
    end = store.clock()
    start = end - float(window_s) if window_s else 0.0
    report = store.report(start, end)
    out_dir = ctx.data_dir / "reports"
    out_dir.mkdir(parents=True, exist_ok=True)
    stamp = int(end)
    (out_dir / f"report-{stamp}.json").write_text(
        json.dumps(report.to_json_dict(), indent=1), encoding="utf-8"
    )
    (out_dir / f"report-{stamp}.txt").write_text(report.render_table() + "\n", encoding="utf-8")
    return report.to_json_dict()


def build_registry() -> dict:
    return {
        "gen-corpus": op_gen_corpus,
        "split": op_split,
        "produce": op_produce,
        "consume-batch": op_consume_batch,
        "train": op_train,
        "report": op_report,
        "shell": shell_op,
    }
