"""End-to-end tests of the command-line interface"""
import sys
from pathlib import Path
sys.path.insert(0, str(Path(__file__).parent))

import json

import numpy as np
import pytest
from click.testing import CliRunner

from cli.app import cli
from services.checkpoint_service import load_checkpoint, save_checkpoint
from services.dataset_io import load_dataset

SMALL_CONFIG = str(Path(__file__).parent / "configs" / "small.env")


def run(*args):
    result = CliRunner().invoke(cli, ["--config", SMALL_CONFIG] + [str(a) for a in args])
    return result


@pytest.fixture
def dataset(tmp_path):
    path = tmp_path / "train.rgds"
    result = run("gen-data", path, "--n-samples", 6, "--manifest", tmp_path / "images")
    assert result.exit_code == 0, result.output
    return path


@pytest.fixture
def checkpoint(tmp_path, dataset):
    path = tmp_path / "model.rgck"
    result = run("train", dataset, path)
    assert result.exit_code == 0, result.output
    return path


class TestGenData:
    def test_writes_dataset(self, dataset, tmp_path):
        data = load_dataset(dataset)
        assert len(data) == 6
        assert data.spec.image_size == 16 and data.spec.n_keypoints == 2
        assert (tmp_path / "images" / "manifest.txt").is_file()
        assert (tmp_path / "images" / "sample_00005.pgm").is_file()

    def test_same_seed_same_bytes(self, tmp_path):
        a, b = tmp_path / "a.rgds", tmp_path / "b.rgds"
        assert run("gen-data", a, "--n-samples", 3).exit_code == 0
        assert run("gen-data", b, "--n-samples", 3).exit_code == 0
        assert a.read_bytes() == b.read_bytes()
        c = tmp_path / "c.rgds"
        assert run("--seed", 1, "gen-data", c, "--n-samples", 3).exit_code == 0
        assert a.read_bytes() != c.read_bytes()

    def test_bad_occlusion(self, tmp_path):
        assert run("gen-data", tmp_path / "x.rgds", "--occlusion", 1.5).exit_code == 2

    def test_negative_seed(self, tmp_path):
        result = run("--seed=-1", "gen-data", tmp_path / "x.rgds", "--n-samples", 2)
        assert result.exit_code == 2
        assert "seed must be >= 0" in result.output
        assert not (tmp_path / "x.rgds").exists()


class TestTrain:
    def test_checkpoint_and_log(self, checkpoint):
        ckpt = load_checkpoint(checkpoint)
        assert ckpt.k == 2
        assert ckpt.epoch == 2
        lines = Path(str(checkpoint) + ".log").read_text().splitlines()
        assert lines[0] == "stage epoch loss seconds"
        assert [line.split()[:2] for line in lines[1:]] == [["0", "1"], ["1", "1"]]

    def test_same_seed_same_checkpoint(self, tmp_path, dataset, checkpoint):
        again = tmp_path / "again.rgck"
        assert run("train", dataset, again).exit_code == 0
        assert again.read_bytes() == checkpoint.read_bytes()

    def test_k_override(self, tmp_path, dataset):
        out = tmp_path / "k3.rgck"
        assert run("--k", 3, "train", dataset, out, "--no-coarse-to-fine").exit_code == 0
        ckpt = load_checkpoint(out)
        assert ckpt.k == 3
        assert ckpt.epoch == 1

    def test_from_manifest(self, tmp_path, dataset):
        out = tmp_path / "manifest.rgck"
        assert run("train", tmp_path / "images", out).exit_code == 0
        assert out.is_file()

    def test_missing_dataset(self, tmp_path):
        result = run("train", tmp_path / "missing.rgds", tmp_path / "model.rgck")
        assert result.exit_code == 2
        assert "missing.rgds" in result.output

    def test_corrupt_dataset(self, tmp_path):
        bad = tmp_path / "bad.rgds"
        bad.write_bytes(b"RGDS\x01\x00")
        result = run("train", bad, tmp_path / "model.rgck")
        assert result.exit_code == 1
        assert "header" in result.output

    def test_bad_config(self, tmp_path, dataset):
        cfg = tmp_path / "bad.env"
        cfg.write_text("IMAGE_SIZE=16\nNOT_A_KEY=3\n")
        result = CliRunner().invoke(cli, ["--config", str(cfg), "train", str(dataset), str(tmp_path / "m.rgck")])
        assert result.exit_code == 2
        assert "NOT_A_KEY" in result.output


class TestInferAndEval:
    def test_infer_dataset_sample(self, tmp_path, dataset, checkpoint):
        out = tmp_path / "pred"
        result = run("infer", checkpoint, dataset, out, "--index", 1)
        assert result.exit_code == 0, result.output
        lines = (out / "keypoints.txt").read_text().splitlines()
        assert len(lines) == 2
        assert [line.split()[0] for line in lines] == ["0", "1"]
        assert (out / "heatmap_00.pgm").read_bytes().startswith(b"P5")
        assert (out / "heatmap_01.pgm").is_file()

    def test_infer_extra_pass_changes_prediction(self, tmp_path, dataset, checkpoint):
        ckpt = load_checkpoint(checkpoint)
        rng = np.random.default_rng(0)
        for tap in ckpt.heads.taps:
            tap.weight[...] = rng.normal(size=tap.weight.shape)
        tapped = save_checkpoint(ckpt, tmp_path / "tapped.rgck")
        outputs = {}
        for k in (1, 2):
            out = tmp_path / f"pred{k}"
            result = run("--k", k, "infer", tapped, dataset, out, "--index", 0)
            assert result.exit_code == 0, result.output
            outputs[k] = {p.name: p.read_bytes() for p in sorted(out.iterdir())}
        assert sorted(outputs[1]) == sorted(outputs[2])
        assert outputs[1] != outputs[2]

    def test_infer_image_file(self, tmp_path, dataset, checkpoint):
        result = run("infer", checkpoint, tmp_path / "images" / "sample_00000.pgm", tmp_path / "pred")
        assert result.exit_code == 0, result.output
        assert len(result.output.splitlines()) == 2

    def test_infer_index_out_of_range(self, tmp_path, dataset, checkpoint):
        result = run("infer", checkpoint, dataset, tmp_path / "pred", "--index", 6)
        assert result.exit_code == 1

    def test_infer_rejects_other_architecture(self, tmp_path, dataset, checkpoint):
        cfg = tmp_path / "other.env"
        cfg.write_text(Path(SMALL_CONFIG).read_text() + "\nLAYERS=4/3/1/2x2,8/3/2/-\n")
        result = CliRunner().invoke(cli, ["--config", str(cfg), "infer", str(checkpoint), str(dataset),
                                          str(tmp_path / "pred")])
        assert result.exit_code == 1
        assert "layer 2" in result.output

    def test_eval_several_k(self, tmp_path, dataset, checkpoint):
        result = run("eval", checkpoint, dataset, "--ks", "1,2")
        assert result.exit_code == 0, result.output
        assert "k=1  samples=6" in result.output
        assert "k=2  samples=6" in result.output

    def test_eval_reports_operating_point(self, dataset, checkpoint):
        result = run("eval", checkpoint, dataset)
        assert result.exit_code == 0, result.output
        assert "visibility at threshold 0.5: precision" in result.output

    def test_eval_excel(self, tmp_path, dataset, checkpoint):
        pytest.importorskip("openpyxl")
        out = tmp_path / "eval.xlsx"
        assert run("eval", checkpoint, dataset, "--xlsx", out).exit_code == 0
        assert out.is_file()


class TestTools:
    def test_check_grad(self):
        result = run("check-grad", "--n-samples", 1, "--max-per-param", 5)
        assert result.exit_code == 0, result.output
        assert "max relative error" in result.output

    def test_solve_qp(self, tmp_path):
        problem = tmp_path / "qp.json"
        problem.write_text(json.dumps({"W": [[-1, 0.5], [0.5, -1]], "b": [1, 1]}))
        result = CliRunner().invoke(cli, ["solve-qp", str(problem)])
        assert result.exit_code == 0, result.output
        out = json.loads(result.output)
        assert out["converged"]
        assert out["z"] == pytest.approx([2.0, 2.0], abs=1e-6)
        assert out["score"] == pytest.approx(2.0)

    def test_solve_qp_projected_gradient(self, tmp_path):
        problem = tmp_path / "qp.json"
        problem.write_text(json.dumps({"W": [[-1, 0.5], [0.5, -1]], "b": [1, 1]}))
        result = CliRunner().invoke(cli, ["solve-qp", str(problem), "--method", "pg"])
        assert result.exit_code == 0, result.output
        assert json.loads(result.output)["z"] == pytest.approx([2.0, 2.0], abs=1e-6)

    def test_copositivity(self, tmp_path):
        problem = tmp_path / "qp.json"
        problem.write_text(json.dumps({"W": [[-1, 2], [2, -1]], "b": [1, 1]}))
        result = CliRunner().invoke(cli, ["solve-qp", str(problem), "--method", "copositive", "--resolution", "10"])
        assert result.exit_code == 0, result.output
        out = json.loads(result.output)
        assert not out["copositive"]
        assert out["counterexample"] == pytest.approx([0.5, 0.5])

    def test_malformed_problem(self, tmp_path):
        problem = tmp_path / "qp.json"
        problem.write_text(json.dumps({"W": [[-1, 1], [0, -1]], "b": [1, 1]}))
        assert CliRunner().invoke(cli, ["solve-qp", str(problem)]).exit_code == 2

    def test_depth_study(self, tmp_path, dataset):
        test_set = tmp_path / "test.rgds"
        assert run("--seed", 7, "gen-data", test_set, "--n-samples", 3).exit_code == 0
        result = run("depth-study", dataset, test_set, "--ks", "1,2", "--alpha", 0.2)
        assert result.exit_code == 0, result.output
        lines = result.output.strip().splitlines()
        assert lines[0].split()[:2] == ["k", "PCK@0.2"]
        assert [line.split()[0] for line in lines[2:]] == ["1", "2"]
