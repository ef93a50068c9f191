import json

import numpy as np
import pytest

from voxalign.cli import main
from voxalign.evaluation import load_report


def dir_snapshot(path):
    return {p.name: p.read_bytes() for p in sorted(path.iterdir()) if p.is_file()}


@pytest.fixture()
def data_dir(tmp_path):
    out = tmp_path / "data"
    rc = main(["gen-synth", "--out", str(out), "--n-samples", "300", "--seed", "3"])
    assert rc == 0
    return out


class TestGenSynth:
    def test_output_passes_validation(self, data_dir):
        assert main(["validate-data", str(data_dir)]) == 0

    def test_repeat_seed_identical_bytes(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        for out in (a, b):
            assert main(["gen-synth", "--out", str(out), "--n-samples", "50",
                         "--seed", "11"]) == 0
        assert dir_snapshot(a) == dir_snapshot(b)

    def test_zero_voxel_noise_unit_ceiling(self, tmp_path):
        out = tmp_path / "clean"
        assert main(["gen-synth", "--out", str(out), "--n-samples", "40",
                     "--noise-std-voxel", "0"]) == 0
        nc = np.fromfile(out / "noise_ceiling.bin", dtype="<f8")
        assert np.all(nc == 1.0)

    def test_bad_flag_usage_error(self, tmp_path):
        assert main(["gen-synth", "--out", str(tmp_path / "x"), "--bogus", "1"]) == 2

    def test_summary_printed(self, tmp_path, capsys):
        out = tmp_path / "d"
        main(["gen-synth", "--out", str(out), "--n-samples", "40"])
        text = capsys.readouterr().out
        assert "n_samples=40" in text


class TestValidateData:
    def test_broken_directory_is_runtime_error(self, data_dir, capsys):
        (data_dir / "voxels.bin").write_bytes(b"\x00" * 8)
        rc = main(["validate-data", str(data_dir)])
        assert rc == 1
        assert "voxels.bin" in capsys.readouterr().err


class TestTrain:
    def test_stage1_writes_checkpoint_and_log(self, data_dir, tmp_path):
        out = tmp_path / "run"
        rc = main(["train", "--stage", "1", "--data", str(data_dir),
                   "--out", str(out), "--epochs", "4", "--pca-k", "8"])
        assert rc == 0
        assert (out / "stage1.ckpt").is_file()
        log_lines = (out / "stage1.log").read_text().strip().splitlines()
        assert len(log_lines) == 4
        # epoch train_loss val_m seconds
        parts = log_lines[0].split()
        assert len(parts) == 4 and parts[0] == "0"

    def test_stage2_requires_from(self, data_dir, tmp_path):
        rc = main(["train", "--stage", "2", "--data", str(data_dir),
                   "--out", str(tmp_path / "run")])
        assert rc == 2

    def test_end_to_end_two_stages(self, data_dir, tmp_path, capsys):
        out = tmp_path / "run"
        assert main(["train", "--stage", "1", "--data", str(data_dir),
                     "--out", str(out), "--epochs", "15", "--pca-k", "8"]) == 0
        m1 = float(capsys.readouterr().out.split("best validation m = ")[1].split()[0])
        assert main(["train", "--stage", "2", "--data", str(data_dir),
                     "--out", str(out), "--from", str(out / "stage1.ckpt"),
                     "--epochs", "4", "--pca-k", "8"]) == 0
        m2 = float(capsys.readouterr().out.split("best validation m = ")[1].split()[0])
        assert m2 >= m1 - 0.01

    def test_input_directory_not_mutated(self, data_dir, tmp_path):
        before = dir_snapshot(data_dir)
        main(["train", "--stage", "1", "--data", str(data_dir),
              "--out", str(tmp_path / "run"), "--epochs", "2", "--pca-k", "8"])
        assert dir_snapshot(data_dir) == before

    def test_config_file_and_cli_priority(self, data_dir, tmp_path):
        cfg_file = tmp_path / "train.cfg"
        cfg_file.write_text("epochs = 2\npca_k = 8\nseed = 4\n")
        out = tmp_path / "run"
        assert main(["train", "--stage", "1", "--data", str(data_dir),
                     "--out", str(out), "--config", str(cfg_file),
                     "--epochs", "3"]) == 0
        # CLI --epochs overrides the file value
        log_lines = (out / "stage1.log").read_text().strip().splitlines()
        assert len(log_lines) == 3


class TestEval:
    @pytest.fixture()
    def trained(self, data_dir, tmp_path):
        out = tmp_path / "run"
        main(["train", "--stage", "1", "--data", str(data_dir),
              "--out", str(out), "--epochs", "4", "--pca-k", "8"])
        return out / "stage1.ckpt"

    def test_eval_twice_byte_identical(self, data_dir, trained, tmp_path):
        a, b = tmp_path / "a.json", tmp_path / "b.json"
        for path in (a, b):
            assert main(["eval", "--checkpoint", str(trained), "--data", str(data_dir),
                         "--split", "val", "--out", str(path)]) == 0
        assert a.read_bytes() == b.read_bytes()

    def test_printed_m_matches_report(self, data_dir, trained, tmp_path, capsys):
        path = tmp_path / "rep.json"
        main(["eval", "--checkpoint", str(trained), "--data", str(data_dir),
              "--split", "test", "--out", str(path)])
        printed = float(capsys.readouterr().out.split("overall m = ")[1].split()[0])
        assert printed == json.loads(path.read_text())["overall_m"]

    def test_csv_format(self, data_dir, trained, tmp_path):
        path = tmp_path / "rep.csv"
        assert main(["eval", "--checkpoint", str(trained), "--data", str(data_dir),
                     "--out", str(path), "--format", "csv"]) == 0
        report = load_report(path)
        assert report.per_vertex_r2.shape == (50,)

    def test_vertex_mismatch_named_error(self, data_dir, trained, tmp_path, capsys):
        other = tmp_path / "other"
        main(["gen-synth", "--out", str(other), "--n-samples", "50",
              "--n-vertices", "7"])
        rc = main(["eval", "--checkpoint", str(trained), "--data", str(other),
                   "--out", str(tmp_path / "r.json")])
        assert rc == 1
        assert "n_vertices" in capsys.readouterr().err


class TestAblate:
    def test_grid_rows(self, data_dir, tmp_path):
        out = tmp_path / "ablation.csv"
        rc = main(["ablate", "--data", str(data_dir), "--lambdas", "1,0.1,1e-2,1e-3",
                   "--seeds", "0,1", "--out", str(out),
                   "--epochs", "2", "--pca-k", "8"])
        assert rc == 0
        lines = out.read_text().strip().splitlines()
        result_rows = [l for l in lines if l.startswith("result,")]
        median_rows = [l for l in lines if l.startswith("median,")]
        assert len(result_rows) == 8
        assert len(median_rows) == 4

    def test_single_pair(self, data_dir, tmp_path):
        out = tmp_path / "one.csv"
        rc = main(["ablate", "--data", str(data_dir), "--lambdas", "1e-3",
                   "--seeds", "0", "--out", str(out), "--epochs", "2", "--pca-k", "8"])
        assert rc == 0
        lines = out.read_text().strip().splitlines()
        assert len([l for l in lines if l.startswith("result,")]) == 1

    def test_medians_recomputable(self, data_dir, tmp_path):
        out = tmp_path / "ab.csv"
        main(["ablate", "--data", str(data_dir), "--lambdas", "1e-3,1",
              "--seeds", "0,1,2", "--out", str(out), "--epochs", "2", "--pca-k", "8"])
        rows = {}
        medians = {}
        for line in out.read_text().strip().splitlines()[1:]:
            kind, lam, seed, m = line.split(",")
            if kind == "result":
                rows.setdefault(float(lam), []).append(float(m))
            else:
                medians[float(lam)] = float(m)
        for lam, ms in rows.items():
            assert medians[lam] == pytest.approx(float(np.median(ms)))


class TestGradCheck:
    def test_passes_on_synthetic_batch(self, data_dir):
        assert main(["grad-check", "--data", str(data_dir), "--batch", "8"]) == 0

    def test_reports_per_tensor(self, data_dir, capsys):
        main(["grad-check", "--data", str(data_dir), "--batch", "8"])
        text = capsys.readouterr().out
        assert "stage 1 loss configuration" in text
        assert "stage 2 loss configuration" in text
        assert "align.W" in text
        assert "head.projection.weight" in text

    def test_corrupted_gradient_detected(self, data_dir, capsys):
        rc = main(["grad-check", "--data", str(data_dir), "--batch", "8",
                   "--corrupt-tensor", "align.W"])
        assert rc == 1
        assert "align.W" in capsys.readouterr().err

    def test_batch_one_still_passes(self, data_dir):
        assert main(["grad-check", "--data", str(data_dir), "--batch", "1"]) == 0


class TestUsageContract:
    def test_unknown_subcommand(self):
        assert main(["frobnicate"]) == 2

    def test_no_subcommand(self):
        assert main([]) == 2

    def test_unknown_flag_rejected_everywhere(self, tmp_path):
        assert main(["validate-data", str(tmp_path), "--nope"]) == 2
