import csv
import subprocess
import sys

import pytest

from dualcyclewgan import imaging
from dualcyclewgan.cli import main

TINY_TRAIN = ["--epochs", "1", "--batch-size", "2", "--branch-depths", "1,2", "--base-channels", "2",
              "--critic-layers", "1", "--critic-channels", "2", "--crop-size", "16"]


def _resolved(text: str) -> str:
    """The key=value block printed before a command runs."""
    lines = text.splitlines()
    start = lines.index(next(l for l in lines if l.startswith("# ")))
    block = []
    for line in lines[start + 1:]:
        if "=" not in line:
            break
        block.append(line)
    return "\n".join(block) + "\n"


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    assert main(["phantom", "--out", str(root / "ph"), "--count", "3", "--height", "32", "--width", "48",
                 "--layers", "3", "--curvature", "2"]) == 0
    assert main(["augment", "--in", str(root / "ph" / "noisy.txt"), "--out", str(root / "crops_noisy"),
                 "--crops", "4", "--size", "16", "--seed", "1", "--train-fraction", "0.75"]) == 0
    assert main(["augment", "--in", str(root / "ph" / "clean.txt"), "--out", str(root / "crops_clean"),
                 "--crops", "4", "--size", "16", "--seed", "1", "--train-fraction", "0.75"]) == 0
    return root


class TestUsage:
    def test_no_args(self, capsys):
        assert main([]) == 1
        assert "usage" in capsys.readouterr().err

    def test_unknown_command(self):
        assert main(["frobnicate"]) == 1

    def test_missing_required(self, capsys):
        assert main(["phantom"]) == 1
        assert "--out" in capsys.readouterr().err

    def test_bad_type(self):
        assert main(["phantom", "--out", "x", "--count", "many"]) == 1

    def test_unknown_config_key(self, tmp_path):
        cfg = tmp_path / "c.txt"
        cfg.write_text("out=x\nwarmup=3\n")
        assert main(["phantom", "--config", str(cfg)]) == 1

    def test_missing_config(self, tmp_path):
        assert main(["phantom", "--config", str(tmp_path / "nope.txt")]) == 1

    def test_invalid_train_config(self):
        assert main(["train", "--noisy", "a", "--clean", "b", "--variant", "pix2pix"]) == 1

    def test_runtime_failure(self, tmp_path):
        assert main(["augment", "--in", str(tmp_path / "missing"), "--out", str(tmp_path / "o")]) == 2
        assert main(["phantom", "--out", str(tmp_path / "p"), "--height", "4"]) == 2

    def test_help(self):
        assert main(["train", "--help"]) == 0

    def test_module_entry(self):
        proc = subprocess.run([sys.executable, "-m", "dualcyclewgan"], capture_output=True, text=True)
        assert proc.returncode == 1


def test_phantom_outputs(workspace):
    clean = imaging.read_manifest(workspace / "ph" / "clean.txt")
    noisy = imaging.read_manifest(workspace / "ph" / "noisy.txt")
    assert len(clean) == len(noisy) == 3
    assert imaging.load_image(clean[0]).shape == (32, 48)


def test_augment_counts(workspace):
    train = imaging.read_manifest(workspace / "crops_noisy" / "train" / "manifest.txt")
    test = imaging.read_manifest(workspace / "crops_noisy" / "test" / "manifest.txt")
    assert (len(train), len(test)) == (9, 3)
    assert imaging.load_image(train[0]).shape == (16, 16)
    # same seed on both domains: same split membership
    train_clean = imaging.read_manifest(workspace / "crops_clean" / "train" / "manifest.txt")
    assert [p.name for p in train] == [p.name for p in train_clean]


def test_config_precedence(tmp_path, capsys):
    cfg = tmp_path / "c.txt"
    cfg.write_text("out=ignored\ncount=2\nheight=32\nwidth=32\nlayers=2\ncurvature=1\n")
    assert main(["phantom", "--config", str(cfg), "--out", str(tmp_path / "p")]) == 0
    block = _resolved(capsys.readouterr().out)
    assert f"out={tmp_path / 'p'}" in block and "count=2" in block
    assert len(imaging.read_manifest(tmp_path / "p" / "clean.txt")) == 2


def test_train_denoise_evaluate(workspace, tmp_path, capsys):
    noisy = str(workspace / "crops_noisy" / "train" / "manifest.txt")
    clean = str(workspace / "crops_clean" / "train" / "manifest.txt")
    assert main(["train", "--noisy", noisy, "--clean", clean, "--out", str(tmp_path / "runs")] + TINY_TRAIN) == 0
    printed = _resolved(capsys.readouterr().out)
    run = tmp_path / "runs" / "dual-merged-wgan-seed0"
    for name in ("manifest.txt", "train_log.csv", "training_curves.png", "stage1_G.pt", "stage2_D_Y.pt"):
        assert (run / name).is_file(), name
    rows = list(csv.reader(open(run / "train_log.csv")))
    assert rows[0] == ["iter", "critic_loss_X", "critic_loss_Y", "gen_loss", "cycle_loss", "total"]

    # the printed block reproduces the run
    cfg = tmp_path / "again.txt"
    cfg.write_text(printed.replace(str(tmp_path / "runs"), str(tmp_path / "runs2")))
    assert main(["train", "--config", str(cfg)]) == 0
    again = tmp_path / "runs2" / "dual-merged-wgan-seed0"
    assert (run / "stage2_G.pt").read_bytes() == (again / "stage2_G.pt").read_bytes()
    assert (run / "history.csv").read_text() == (again / "history.csv").read_text()

    out = tmp_path / "den"
    test_noisy = str(workspace / "crops_noisy" / "test" / "manifest.txt")
    assert main(["denoise", "--checkpoint", str(run), "--in", test_noisy, "--out", str(out),
                 "--dump-intermediates", "true"]) == 0
    assert len(list(out.glob("*_clean1.png"))) == 3 and len(list(out.glob("*_noise1.png"))) == 3
    assert main(["denoise", "--checkpoint", str(run), "--in", str(workspace / "ph" / "noisy"),
                 "--out", str(tmp_path / "full")]) == 0
    assert imaging.load_image(tmp_path / "full" / "0000.png").shape == (32, 48)

    test_clean = str(workspace / "crops_clean" / "test" / "manifest.txt")
    csv_path = tmp_path / "eval" / "metrics.csv"
    assert main(["evaluate", "--checkpoint", str(run), "--noisy", test_noisy, "--clean", test_clean,
                 "--region", "0:4:0:16", "--out", str(csv_path)]) == 0
    table = list(csv.reader(open(csv_path)))
    assert table[0] == ["image_id", "ssim", "psnr_db", "snr_db", "enl"] and table[-1][0] == "mean"
    assert (tmp_path / "eval" / "metrics_distributions.png").is_file()
    assert (tmp_path / "eval" / "metrics_stages.png").is_file()

    assert main(["evaluate", "--checkpoint", str(run), "--noisy", test_noisy, "--clean", test_clean,
                 "--region", "0:40:0:16", "--out", str(csv_path)]) == 2
    assert main(["evaluate", "--checkpoint", str(run), "--noisy", test_noisy, "--clean", test_clean,
                 "--region", "bogus", "--out", str(csv_path)]) == 2


def test_ablate(workspace, tmp_path):
    base = workspace / "crops_noisy"
    ref = workspace / "crops_clean"
    out = tmp_path / "abl"
    args = ["ablate", "--noisy", str(base / "train" / "manifest.txt"), "--clean", str(ref / "train" / "manifest.txt"),
            "--test-noisy", str(base / "test" / "manifest.txt"), "--test-clean", str(ref / "test" / "manifest.txt"),
            "--region", "0:4:0:16", "--variants", "cyclegan", "--seeds", "0", "--out", str(out)] + TINY_TRAIN
    assert main(args) == 0
    rows = list(csv.reader(open(out / "ablation.csv")))
    assert rows[0] == ["variant", "ssim", "psnr_db", "snr_db", "enl"] and len(rows) == 2
    assert (out / "ablation.png").is_file()
    assert main(args[:-len(TINY_TRAIN)] + ["--variants", "nope"]) == 2
