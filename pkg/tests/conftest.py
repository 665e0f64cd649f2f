import threading
import time
from pathlib import Path

import numpy as np
import pytest

from vidmod import corpus
from vidmod.preprocess import FilterConfig

REPO_ROOT = Path(__file__).resolve().parent.parent
FIXTURES = REPO_ROOT / "fixtures"


class ManualClock:
    """Deterministic time source; sleep() advances it."""

    def __init__(self, start: float = 0.0):
        self._now = start
        self._lock = threading.Lock()
        self.sleeps: list[float] = []

    def __call__(self) -> float:
        with self._lock:
            return self._now

    def now(self) -> float:
        return self()

    def advance(self, dt: float) -> None:
        with self._lock:
            self._now += dt

    def sleep(self, dt: float) -> None:
        self.sleeps.append(dt)
        self.advance(dt)


@pytest.fixture
def manual_clock():
    return ManualClock()


@pytest.fixture(scope="session")
def fcfg():
    return FilterConfig.default()


@pytest.fixture(scope="session")
def small_corpus(tmp_path_factory):
    """400 planted-signal records with splits, shared across tests."""
    out = tmp_path_factory.mktemp("corpus400")
    records = corpus.generate_synthetic(400, [1, 1, 1, 1], corpus.NoiseSpec(), seed=11, out_dir=out)
    records = corpus.split_dataset(records, 0.85, seed=11)
    corpus.save_manifest(records, out / "manifest.jsonl")
    return out


@pytest.fixture(scope="session")
def quick_checkpoint(small_corpus, tmp_path_factory, fcfg):
    """A small trained model good enough for pipeline tests (not acceptance)."""
    from vidmod.featurize import featurize_records
    from vidmod.fusion import FusionModel, ModelConfig, TrainConfig, train, write_checkpoint

    records = corpus.load_manifest(small_corpus / "manifest.jsonl")
    mcfg = ModelConfig()
    tcfg = TrainConfig(epochs=3, seed=1)
    train_set = featurize_records(
        [r for r in records if r.split == "train"], small_corpus, fcfg
    )
    dev_set = featurize_records(
        [r for r in records if r.split == "dev"], small_corpus, fcfg
    )
    model = FusionModel.init(mcfg, seed=1)
    result = train(model, train_set, dev_set, tcfg)
    path = tmp_path_factory.mktemp("ckpt") / "quick.mtgc"
    write_checkpoint(path, result.best.model, {"step": result.best.step})
    return path


def rng(seed: int = 0) -> np.random.Generator:
    return np.random.default_rng(seed)


def wait_until(predicate, timeout_s: float = 5.0, interval_s: float = 0.01) -> bool:
    deadline = time.monotonic() + timeout_s
    while time.monotonic() < deadline:
        if predicate():
            return True
        time.sleep(interval_s)
    return predicate()
