import pytest

from vidmod import corpus
from vidmod.fusion import ModelConfig, TrainConfig, ablate


@pytest.fixture(scope="module")
def mini(tmp_path_factory):
    out = tmp_path_factory.mktemp("mini")
    records = corpus.generate_synthetic(64, [1, 1, 1, 1], corpus.NoiseSpec(), seed=2, out_dir=out)
    records = corpus.split_dataset(records, 0.75, seed=2)
    return records, out


def quick_cfgs():
    return (
        ModelConfig(video_dim=64, text_dim=64, proj_dim=32, fusion_hidden_dims=(32,)),
        TrainConfig(epochs=1, seed=0, eval_every_steps=50),
    )


def test_single_mode_gives_single_row(mini, fcfg):
    records, out = mini
    mcfg, tcfg = quick_cfgs()
    report = ablate(records, out, ["all"], mcfg, tcfg, fcfg)
    assert len(report.rows) == 1
    assert report.rows[0].mode == "all"
    assert report.rows[0].test is None  # no test split in this corpus


def test_unknown_mode_rejected(mini, fcfg):
    records, out = mini
    mcfg, tcfg = quick_cfgs()
    with pytest.raises(ValueError, match="unknown ablation mode"):
        ablate(records, out, ["all", "bogus"], mcfg, tcfg, fcfg)


def test_table_rendering_and_json(mini, fcfg):
    records, out = mini
    mcfg, tcfg = quick_cfgs()
    report = ablate(records, out, ["all", "video_only"], mcfg, tcfg, fcfg)
    table = report.render_table()
    assert "video_only" in table
    doc = report.to_json_dict()
    assert [row["mode"] for row in doc["rows"]] == ["all", "video_only"]
    assert 0.0 <= doc["rows"][0]["dev"]["macro_f1"] <= 1.0