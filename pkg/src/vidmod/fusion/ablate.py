"""Modality ablation harness: retrain under each mode with identical seeds
and report dev/test metrics side by side.
"""

from __future__ import annotations

from dataclasses import dataclass

from ..featurize import ABLATION_MODES, featurize_records
from ..preprocess import FilterConfig
from .config import ModelConfig, TrainConfig
from .model import FusionModel
from .train import EvalResult, evaluate, train


@dataclass(frozen=True)
class AblationRow:
    mode: str
    dev: EvalResult
    test: EvalResult | None

    def to_json_dict(self) -> dict:
        return {
            "mode": self.mode,
            "dev": self.dev.to_json_dict(),
            "test": self.test.to_json_dict() if self.test else None,
        }


@dataclass(frozen=True)
class AblationReport:
    rows: tuple[AblationRow, ...]

    def to_json_dict(self) -> dict:
        return {"rows": [r.to_json_dict() for r in self.rows]}

    def render_table(self) -> str:
        header = f"{'mode':<12} {'dev acc':>8} {'dev F1':>8} {'test acc':>9} {'test F1':>8}"
        lines = [header, "-" * len(header)]
        for r in self.rows:
            test_acc = f"{r.test.accuracy:9.4f}" if r.test else f"{'-':>9}"
            test_f1 = f"{r.test.macro_f1:8.4f}" if r.test else f"{'-':>8}"
            lines.append(
                f"{r.mode:<12} {r.dev.accuracy:8.4f} {r.dev.macro_f1:8.4f} "
                f"{test_acc} {test_f1}"
            )
        return "\n".join(lines)


def ablate(
    records,
    manifest_dir,
    modes,
    mcfg: ModelConfig,
    tcfg: TrainConfig,
    fcfg: FilterConfig,
) -> AblationReport:
    """One train+evaluate per mode; model init, shuffling, and dropout reuse
    the same seed so rows differ only in which modality is available."""
    for m in modes:
        if m not in ABLATION_MODES:
            raise ValueError(f"unknown ablation mode {m!r}")
    train_recs = [r for r in records if r.split == "train"]
    dev_recs = [r for r in records if r.split == "dev"]
    test_recs = [r for r in records if r.split == "test"]

    rows = []
    for mode in modes:
        train_set = featurize_records(
            train_recs, manifest_dir, fcfg, mode, mcfg.video_dim, mcfg.text_dim
        )
        dev_set = featurize_records(
            dev_recs, manifest_dir, fcfg, mode, mcfg.video_dim, mcfg.text_dim
        )
        model = FusionModel.init(mcfg, seed=tcfg.seed)
        result = train(model, train_set, dev_set, tcfg)
        best = result.best.model
        dev_eval = evaluate(best, dev_set)
        test_eval = None
        if test_recs:
            test_set = featurize_records(
                test_recs, manifest_dir, fcfg, mode, mcfg.video_dim, mcfg.text_dim
            )
            test_eval = evaluate(best, test_set)
        rows.append(AblationRow(mode=mode, dev=dev_eval, test=test_eval))
    return AblationReport(rows=tuple(rows))
