"""Config parsing and the four CLI commands end to end (tiny scale)."""

import os

import numpy as np
import pytest

from stereokit import cli
from stereokit.config import ConfigError, parse_config
from stereokit.dataio import SynthSpec, read_pfm, synth_pair, write_image, write_pfm
from stereokit.pipeline import ModelConfig, StereoModel


def write_config(path, **overrides):
    base = {
        "k": 3,
        "d": 15,
        "channels": 4,
        "refinement_mode": "multi",
        "seed": 0,
        "iterations": 2,
        "lr0": 1e-3,
        "synth_count": 2,
        "synth_width": 32,
        "synth_height": 16,
        "synth_min_disp": 1.0,
        "synth_max_disp": 4.0,
        "synth_kinds": "constant",
        "synth_seed": 7,
    }
    base.update(overrides)
    lines = ["# test config"] + [f"{k} = {v}" for k, v in base.items()]
    path.write_text("\n".join(lines) + "\n")
    return path


class TestParseConfig:
    def test_round_trip_values(self, tmp_path):
        cfg = parse_config(write_config(tmp_path / "c.cfg", iterations=42, both_sides="false"))
        assert cfg.iterations == 42
        assert cfg.both_sides is False
        assert cfg.K == 3

    def test_unknown_key_named(self, tmp_path):
        p = tmp_path / "c.cfg"
        p.write_text("bogus_key = 3\n")
        with pytest.raises(ConfigError, match="bogus_key"):
            parse_config(p)

    def test_divisibility_message_cites_formula(self, tmp_path):
        with pytest.raises(ConfigError, match=r"2\^K"):
            parse_config(write_config(tmp_path / "c.cfg", d=30))

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="not found"):
            parse_config(tmp_path / "nope.cfg")

    def test_comments_and_blanks_ignored(self, tmp_path):
        p = tmp_path / "c.cfg"
        p.write_text("\n# full line comment\nk = 3  # trailing\nd = 15\n\n")
        assert parse_config(p).K == 3


class TestThreadCap:
    def test_cap_propagates(self):
        env = {"STEREONET_THREADS": "2"}
        assert cli._apply_thread_cap(env) == 2
        assert env["OPENBLAS_NUM_THREADS"] == "2"
        assert env["OMP_NUM_THREADS"] == "2"

    def test_zero_means_auto(self):
        env = {"STEREONET_THREADS": "0"}
        assert cli._apply_thread_cap(env) is None
        assert "OMP_NUM_THREADS" not in env

    def test_unset_is_noop(self):
        env = {}
        assert cli._apply_thread_cap(env) is None

    def test_garbage_rejected(self):
        with pytest.raises(SystemExit):
            cli._apply_thread_cap({"STEREONET_THREADS": "many"})


class TestCmdTrain:
    def test_smoke_run_writes_outputs(self, tmp_path):
        ckpt = tmp_path / "m.snkt"
        csv = tmp_path / "loss.csv"
        cfg = write_config(tmp_path / "c.cfg", checkpoint=ckpt, loss_csv=csv)
        rc = cli.main(["train", "--config", str(cfg)])
        assert rc == 0
        assert ckpt.exists()
        lines = csv.read_text().strip().splitlines()
        assert lines[0] == "step,lr,loss,epe_fullres"
        assert len(lines) == 3

    def test_invalid_size_formula_exits_nonzero(self, tmp_path, capsys):
        cfg = write_config(tmp_path / "c.cfg", d=30)
        rc = cli.main(["train", "--config", str(cfg)])
        assert rc != 0
        assert "2^K" in capsys.readouterr().err

    def test_missing_config_exits_nonzero(self, tmp_path):
        rc = cli.main(["train", "--config", str(tmp_path / "missing.cfg")])
        assert rc != 0

    def test_resume_continues_from_step(self, tmp_path, capsys):
        ckpt = tmp_path / "m.snkt"
        csv = tmp_path / "loss.csv"
        cfg = write_config(
            tmp_path / "c.cfg", checkpoint=ckpt, loss_csv=csv, iterations=2, resume="true"
        )
        assert cli.main(["train", "--config", str(cfg)]) == 0
        cfg2 = write_config(
            tmp_path / "c2.cfg", checkpoint=ckpt, loss_csv=csv, iterations=4, resume="true"
        )
        assert cli.main(["train", "--config", str(cfg2)]) == 0
        assert "resuming" in capsys.readouterr().out
        lines = csv.read_text().strip().splitlines()
        assert lines[1].startswith("2,")  # history starts at the resumed step


@pytest.fixture(scope="module")
def tiny_checkpoint(tmp_path_factory):
    path = tmp_path_factory.mktemp("ckpt") / "m.snkt"
    StereoModel(ModelConfig(K=3, max_disp=15, channels=4, seed=0)).save(path)
    return path


@pytest.fixture(scope="module")
def sample_images(tmp_path_factory):
    d = tmp_path_factory.mktemp("imgs")
    s = synth_pair(SynthSpec(width=64, height=32, seed=3, kind="constant", d0=4.0))
    write_image(d / "left.png", s.left.data)
    write_image(d / "right.png", s.right.data)
    write_pfm(d / "gt.pfm", s.gt_left.values.data)
    return d, s


class TestCmdInfer:
    def test_writes_pfm_and_viz(self, tiny_checkpoint, sample_images, tmp_path):
        d, s = sample_images
        out = tmp_path / "disp.pfm"
        viz = tmp_path / "disp.png"
        rc = cli.main(
            [
                "infer",
                "--checkpoint", str(tiny_checkpoint),
                "--left", str(d / "left.png"),
                "--right", str(d / "right.png"),
                "--out", str(out),
                "--viz", str(viz),
            ]
        )
        assert rc == 0
        pred, _ = read_pfm(out)
        assert pred.shape == (32, 64)
        assert viz.exists()

    def test_dim_mismatch_exits_nonzero(self, tiny_checkpoint, sample_images, tmp_path):
        d, _ = sample_images
        small = tmp_path / "small.png"
        write_image(small, np.zeros((16, 16, 3)))
        rc = cli.main(
            [
                "infer",
                "--checkpoint", str(tiny_checkpoint),
                "--left", str(d / "left.png"),
                "--right", str(small),
                "--out", str(tmp_path / "o.pfm"),
            ]
        )
        assert rc != 0


class TestCmdEval:
    def test_exact_match_report(self, sample_images, tmp_path):
        d, s = sample_images
        report = tmp_path / "r.csv"
        rc = cli.main(
            ["eval", "--pred", str(d / "gt.pfm"), "--gt", str(d / "gt.pfm"), "--report", str(report)]
        )
        assert rc == 0
        text = report.read_text()
        assert "epe_all,0.000000" in text
        assert "bad_1px_percent,0.0000" in text

    def test_hand_built_fixture_values(self, tmp_path):
        write_pfm(tmp_path / "pred.pfm", np.array([[1.0, 2.0]], dtype=np.float32))
        write_pfm(tmp_path / "gt.pfm", np.array([[1.0, 3.0]], dtype=np.float32))
        report = tmp_path / "r.csv"
        rc = cli.main(
            ["eval", "--pred", str(tmp_path / "pred.pfm"), "--gt", str(tmp_path / "gt.pfm"),
             "--report", str(report)]
        )
        assert rc == 0
        assert "epe_all,0.500000" in report.read_text()

    def test_missing_gt_exits_nonzero(self, tmp_path):
        write_pfm(tmp_path / "pred.pfm", np.zeros((2, 2), dtype=np.float32))
        rc = cli.main(
            ["eval", "--pred", str(tmp_path / "pred.pfm"), "--gt", str(tmp_path / "nope.pfm"),
             "--report", str(tmp_path / "r.csv")]
        )
        assert rc != 0


class TestCmdBench:
    def test_breakdown_csv_on_stdout(self, tiny_checkpoint, capsys):
        rc = cli.main(["bench", "--checkpoint", str(tiny_checkpoint), "--size", "64x32", "--reps", "5"])
        assert rc == 0
        lines = capsys.readouterr().out.strip().splitlines()
        assert lines[0] == "stage,median_ms,percent"
        stages = [ln.split(",")[0] for ln in lines[1:]]
        assert stages == ["feature", "volume", "filter", "refine_level_2", "refine_level_1",
                          "refine_level_0", "total"]
        pct = sum(float(ln.split(",")[2]) for ln in lines[1:-1])
        assert 95.0 <= pct <= 105.0

    def test_bad_size_exits_nonzero(self, tiny_checkpoint):
        rc = cli.main(["bench", "--checkpoint", str(tiny_checkpoint), "--size", "banana", "--reps", "5"])
        assert rc != 0
