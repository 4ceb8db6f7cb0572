import numpy as np
import pytest
import torch
from PIL import Image

from edgeguide.cli import main
from edgeguide.data import load_manifest, normalize_images
from edgeguide.harness import load_checkpoint
from edgeguide.metrics import binarize


@pytest.fixture
def config_file(tmp_path, disk_dataset):
    path = tmp_path / "run.cfg"
    path.write_text(
        "# desk-scale run\n"
        "epochs = 2\n"
        "batch_size = 2\n"
        "image_size = 64\n"
        "student_channels = 8,16,32,64\n"
        "lr = 1e-3\n"
        "seed = 3\n"
        f"train_data = {disk_dataset}\n"
        f"val_data = {disk_dataset}\n"
    )
    return str(path)


@pytest.fixture
def trained_run(tmp_path, config_file):
    out = tmp_path / "out"
    code = main(["train", "--config", config_file, "--out", str(out)])
    assert code == 0
    return out


class TestTrainCommand:
    def test_writes_checkpoints_record_and_curve(self, trained_run):
        for name in ("best.pt", "last.pt", "record.csv", "loss_curve.png"):
            assert (trained_run / name).exists(), name

    def test_epochs_zero_rejected(self, config_file, tmp_path, capsys):
        code = main(["train", "--config", config_file, "--epochs", "0",
                     "--out", str(tmp_path / "x")])
        assert code == 1
        assert "epochs" in capsys.readouterr().err

    def test_missing_data_rejected(self, tmp_path, capsys):
        code = main(["train", "--out", str(tmp_path / "x")])
        assert code == 1
        assert "no training data" in capsys.readouterr().err

    def test_bad_data_root_is_data_error(self, tmp_path):
        code = main(["train", "--data-dir", f"train={tmp_path / 'missing'}",
                     "--out", str(tmp_path / "x")])
        assert code == 2

    def test_unknown_config_key_rejected_by_name(self, tmp_path, capsys):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("optimizer = sgd\n")
        code = main(["train", "--config", str(cfg)])
        assert code == 1
        assert "optimizer" in capsys.readouterr().err

    def test_usage_error_exits_one(self, capsys):
        assert main(["train", "--edge-detector", "prewitt"]) == 1

    def test_no_sam_flag_zeroes_guide_column(self, config_file, tmp_path):
        out = tmp_path / "nosam"
        code = main(["train", "--config", config_file, "--no-sam", "--out", str(out)])
        assert code == 0
        rows = (out / "record.csv").read_text().splitlines()[1:]
        assert all(float(r.split(",")[1]) == 0.0 for r in rows)

    def test_detector_flag_accepted(self, config_file, tmp_path):
        out = tmp_path / "lap"
        code = main(["train", "--config", config_file, "--edge-detector", "laplacian",
                     "--epochs", "1", "--out", str(out)])
        assert code == 0


class TestEvalCommand:
    def test_markdown_table_and_csv(self, trained_run, disk_dataset, tmp_path, capsys):
        out = tmp_path / "eval"
        code = main(["eval", "--checkpoint", str(trained_run / "best.pt"),
                     "--data-dir", f"disks={disk_dataset}", "--out", str(out)])
        assert code == 0
        stdout = capsys.readouterr().out
        assert "| Dataset | mDice | mIoU | Params (M) | FLOPs (G) |" in stdout
        assert "| disks |" in stdout
        csv_text = (out / "metrics.csv").read_text()
        assert csv_text.splitlines()[0] == "dataset,mDice,mIoU,params_M,gflops"
        assert csv_text.splitlines()[1].startswith("disks,")

    def test_two_dataset_roots_give_two_rows(self, trained_run, disk_dataset, tmp_path, capsys):
        out = tmp_path / "eval2"
        code = main(["eval", "--checkpoint", str(trained_run / "best.pt"),
                     "--data-dir", f"alpha={disk_dataset}",
                     "--data-dir", f"beta={disk_dataset}", "--out", str(out)])
        assert code == 0
        stdout = capsys.readouterr().out
        assert "| alpha |" in stdout and "| beta |" in stdout

    def test_deterministic_output(self, trained_run, disk_dataset, tmp_path, capsys):
        args = ["eval", "--checkpoint", str(trained_run / "best.pt"),
                "--data-dir", f"disks={disk_dataset}", "--out", str(tmp_path / "e")]
        assert main(args) == 0
        first = capsys.readouterr().out
        assert main(args) == 0
        second = capsys.readouterr().out
        assert first == second

    def test_missing_checkpoint_exits_two(self, disk_dataset, tmp_path, capsys):
        code = main(["eval", "--checkpoint", str(tmp_path / "none.pt"),
                     "--data-dir", f"disks={disk_dataset}", "--out", str(tmp_path / "e")])
        assert code == 2
        assert "none.pt" in capsys.readouterr().err

    def test_requires_dataset(self, trained_run, tmp_path):
        code = main(["eval", "--checkpoint", str(trained_run / "best.pt"),
                     "--out", str(tmp_path / "e")])
        assert code == 1


class TestPredictCommand:
    def test_single_image_writes_mask_and_overlay(self, trained_run, disk_dataset, tmp_path):
        image = f"{disk_dataset}/images/disk_000.png"
        out = tmp_path / "pred"
        code = main(["predict", image, "--checkpoint", str(trained_run / "best.pt"),
                     "--masks", f"{disk_dataset}/masks", "--out", str(out)])
        assert code == 0
        assert (out / "disk_000_mask.png").exists()
        assert (out / "disk_000_overlay.png").exists()
        # overlay holds three panels: input | gt | prediction
        overlay = Image.open(out / "disk_000_overlay.png")
        assert overlay.size == (3 * 64, 64)

    def test_directory_input_preserves_stems(self, trained_run, disk_dataset, tmp_path):
        out = tmp_path / "pred"
        code = main(["predict", f"{disk_dataset}/images",
                     "--checkpoint", str(trained_run / "best.pt"), "--out", str(out)])
        assert code == 0
        for i in range(4):
            assert (out / f"disk_{i:03d}_mask.png").exists()

    def test_mask_png_round_trips_prediction(self, trained_run, disk_dataset, tmp_path):
        image = f"{disk_dataset}/images/disk_001.png"
        out = tmp_path / "pred"
        assert main(["predict", image, "--checkpoint", str(trained_run / "best.pt"),
                     "--out", str(out)]) == 0
        written = np.asarray(Image.open(out / "disk_001_mask.png")) / 255.0

        bundle = load_checkpoint(str(trained_run / "best.pt"))
        bundle.student.eval()
        from edgeguide.data import load_sample

        image_np, _ = load_sample(image, image, bundle.config.image_size)
        with torch.no_grad():
            _, logits = bundle.student(normalize_images(image_np[None]))
        expected = binarize(torch.sigmoid(logits[-1]))[0, 0]
        np.testing.assert_array_equal(written, expected)

    def test_missing_input_exits_two(self, trained_run, tmp_path):
        code = main(["predict", str(tmp_path / "ghost.png"),
                     "--checkpoint", str(trained_run / "best.pt"), "--out", str(tmp_path / "p")])
        assert code == 2


class TestInspectCommand:
    def test_prints_params_flops_and_shapes(self, config_file, capsys):
        code = main(["inspect", "--config", config_file])
        assert code == 0
        out = capsys.readouterr().out
        assert "student params" in out
        assert "student flops" in out
        assert "scale 4: 2x2x64" in out
        assert "heads: 2" in out

    def test_default_config_shapes(self, capsys):
        code = main(["inspect", "--seed", "0"])
        assert code == 0
        out = capsys.readouterr().out
        assert "scale 1: 88x88x64" in out
        assert "scale 4: 11x11x512" in out
