import numpy as np
import pytest
from PIL import Image

from spidermesh.cli import main


@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    cfg = root / "exp.cfg"
    cfg.write_text("model.aspp_channels = 8\ntrain.epochs = 1\ntrain.batch_size = 4\n")
    assert main(["synth", "--out", str(root / "data"), "--num", "8", "--size", "32x32", "--impair", "0.5"]) == 0
    assert main(["train", "--data", str(root / "data"), "--config", str(cfg), "--out", str(root / "m.ckpt")]) == 0
    return root


def test_synth_output(trained):
    assert len((trained / "data" / "train.txt").read_text().split()) == 6


@pytest.mark.parametrize("mode", ["both", "rgb-only", "thermal-only"])
def test_eval_prints_miou(trained, capsys, mode):
    assert main(["eval", "--data", str(trained / "data"), "--ckpt", str(trained / "m.ckpt"), "--modality", mode]) == 0
    out = capsys.readouterr().out
    assert "main mIoU" in out and "per-class IoU" in out


def test_predict_writes_maps(trained, tmp_path):
    sid = (trained / "data" / "val.txt").read_text().split()[0]
    args = ["predict", "--ckpt", str(trained / "m.ckpt"), "--rgb", str(trained / "data" / "rgb" / f"{sid}.png"),
            "--thermal", str(trained / "data" / "thermal" / f"{sid}.png"), "--out", str(tmp_path),
            "--emit-demand-maps"]
    assert main(args) == 0
    label = np.array(Image.open(tmp_path / f"{sid}_label.png"))
    assert label.shape == (32, 32) and label.max() < 4
    maps = sorted(tmp_path.glob(f"{sid}_demand_stage*_*.png"))
    assert len(maps) == 10
    assert np.array(Image.open(maps[0])).dtype == np.uint8


def test_semi_and_variant(trained, tmp_path):
    cfg = trained / "exp.cfg"
    assert main(["train", "--data", str(trained / "data"), "--config", str(cfg), "--out", str(tmp_path / "s.ckpt"),
                 "--semi", "--unlabeled-frac", "0.5", "--variant", "baseline"]) == 0


def test_resume(trained, tmp_path, capsys):
    cfg = trained / "exp.cfg"
    out = tmp_path / "r.ckpt"
    assert main(["train", "--data", str(trained / "data"), "--config", str(cfg), "--out", str(out),
                 "--resume", str(trained / "m.ckpt"), "--epochs", "2"]) == 0
    assert "epoch=1 " in capsys.readouterr().out


def test_flops(capsys, tmp_path):
    assert main(["flops", "--size", "64x64"]) == 0
    assert int(capsys.readouterr().out.split()[0]) > 0


def test_convert(tmp_path):
    (tmp_path / "src" / "images").mkdir(parents=True)
    Image.fromarray(np.zeros((4, 4, 4), dtype=np.uint8), mode="RGBA").save(tmp_path / "src" / "images" / "x.png")
    assert main(["convert", "--src", str(tmp_path / "src"), "--out", str(tmp_path / "out")]) == 0
    assert (tmp_path / "out" / "thermal" / "x.png").exists()


def test_errors_give_nonzero_exit(tmp_path, capsys):
    assert main(["eval", "--data", str(tmp_path), "--ckpt", str(tmp_path / "none.ckpt")]) != 0
    assert "error:" in capsys.readouterr().err
    bad = tmp_path / "bad.cfg"
    bad.write_text("train.unknown = 1\n")
    assert main(["flops", "--config", str(bad)]) != 0
    with pytest.raises(SystemExit):
        main(["synth", "--out", str(tmp_path), "--size", "big"])
