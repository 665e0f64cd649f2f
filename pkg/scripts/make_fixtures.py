#!/usr/bin/env python3
"""Regenerate the bundled fixture manifests under fixtures/.

These are headers-only statistical replicas (id/label/split/duration only, no
media): per-class sample counts and durations reproduce the published corpus
summary tables, which lets the stats code be tested against known totals
without shipping any real videos.

Output is deterministic; run from the repo root.
"""

from __future__ import annotations

import json
import math
import sys
from pathlib import Path

import numpy as np

ROOT = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(ROOT / "src"))

FIXTURES = ROOT / "fixtures"

# (label, samples, min_dur, max_dur, avg_dur) for the 775-video extension set
EXTENDED = [
    ("safe", 251, 3.04, 60.0, 25.97),
    ("adult_content", 164, 4.69, 60.0, 18.78),
    ("harmful_content", 203, 5.06, 60.0, 22.61),
    ("suicide", 157, 6.00, 60.0, 19.83),
]
EXTENDED_TRAIN = 656  # 8.5:1.5 split of 775 as recorded in the source tables

# base corpus: class totals and per-split duration stats
BASE_CLASSES = [("safe", 997), ("adult_content", 977), ("harmful_content", 990), ("suicide", 984)]
BASE_SPLITS = [
    ("train", 2762, 3.88, 600.0, 38.71),
    ("dev", 396, 1.95, 600.0, 38.77),
    ("test", 790, 5.04, 600.0, 38.57),
]


def largest_remainder(total: int, weights: list[float]) -> list[int]:
    quotas = [total * w / sum(weights) for w in weights]
    counts = [math.floor(q) for q in quotas]
    order = sorted(range(len(weights)), key=lambda i: quotas[i] - counts[i], reverse=True)
    for i in order[: total - sum(counts)]:
        counts[i] += 1
    return counts


def durations_matching(n: int, lo: float, hi: float, avg: float) -> list[float]:
    """n durations whose min/max/mean reproduce the table row exactly."""
    if n == 1:
        return [avg]
    if n == 2:
        return [lo, hi] if abs((lo + hi) / 2 - avg) < 1e-9 else [avg, avg]
    mid = (n * avg - lo - hi) / (n - 2)
    assert lo <= mid <= hi, (n, lo, hi, avg, mid)
    return [lo, hi] + [mid] * (n - 2)


def write_manifest(path: Path, rows: list[dict]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, sort_keys=True) + "\n")
    print(f"wrote {len(rows):>5} records -> {path.relative_to(ROOT)}")


def extended_rows() -> list[dict]:
    train_per_class = largest_remainder(EXTENDED_TRAIN, [n for _, n, *_ in EXTENDED])
    rows = []
    idx = 0
    for (label, n, lo, hi, avg), n_train in zip(EXTENDED, train_per_class):
        durs = durations_matching(n, lo, hi, avg)
        for j, dur in enumerate(durs):
            rows.append(
                {
                    "id": f"ext{idx:05d}",
                    "label": label,
                    "split": "train" if j < n_train else "dev",
                    "duration_s": dur,
                    "asr_raw": "",
                }
            )
            idx += 1
    return rows


def base_rows() -> list[dict]:
    labels = []
    for label, n in BASE_CLASSES:
        labels.extend([label] * n)
    rng = np.random.default_rng(0)
    order = rng.permutation(len(labels))
    labels = [labels[i] for i in order]

    rows = []
    idx = 0
    for split, n, lo, hi, avg in BASE_SPLITS:
        durs = durations_matching(n, lo, hi, avg)
        for dur in durs:
            rows.append(
                {
                    "id": f"tik{idx:05d}",
                    "label": labels[idx],
                    "split": split,
                    "duration_s": dur,
                    "asr_raw": "",
                }
            )
            idx += 1
    return rows


def main() -> None:
    ext = extended_rows()
    write_manifest(FIXTURES / "extended_stats.jsonl", ext)
    combined = base_rows() + ext
    write_manifest(FIXTURES / "combined_stats.jsonl", combined)


if __name__ == "__main__":
    main()
