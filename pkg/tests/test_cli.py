"""End-to-end command line tests, run in-process through main()."""

import numpy as np
import pytest

from rgwot.cli import main
from rgwot.data_model import load_labels, load_manifest
from rgwot.synth import make_task, write_task


@pytest.fixture(scope="module")
def task_dir(tmp_path_factory):
    """A small task on disk: 4 videos, 3 steps, 40-48 frames each."""
    root = tmp_path_factory.mktemp("task")
    task = make_task("toy", k=3, feature_dim=6, videos=4,
                     frames_per_video=(40, 48), noise_sigma=0.05, seed=3)
    manifest_path = write_task(task, root)
    return manifest_path


TRAIN_FLAGS = ["--epochs", "2", "--sampled-frames", "12", "--sigma", "8",
               "--zeta", "0", "--seed", "0"]


@pytest.fixture(scope="module")
def trained_dir(task_dir, tmp_path_factory):
    out = tmp_path_factory.mktemp("trained")
    rc = main(["train", "--manifest", str(task_dir), "--out", str(out)] + TRAIN_FLAGS)
    assert rc == 0
    return out


class TestSynth:
    def test_writes_loadable_task(self, tmp_path, capsys):
        out = tmp_path / "easy"
        rc = main(["synth", "--profile", "easy", "--out", str(out)])
        assert rc == 0
        assert "wrote" in capsys.readouterr().out
        manifest = load_manifest(out / "manifest.json")
        assert manifest.k == 5
        assert len(manifest.videos) >= 2
        for entry in manifest.videos:
            assert entry.features_path.exists()
            assert entry.labels_path is not None and entry.labels_path.exists()

    def test_same_seed_is_byte_identical(self, tmp_path):
        for name in ("a", "b"):
            rc = main(["synth", "--profile", "hard", "--out", str(tmp_path / name),
                       "--seed", "5"])
            assert rc == 0
        a = sorted((tmp_path / "a").iterdir())
        b = sorted((tmp_path / "b").iterdir())
        assert [p.name for p in a] == [p.name for p in b]
        for pa, pb in zip(a, b):
            assert pa.read_bytes() == pb.read_bytes()

    def test_seed_changes_the_data(self, tmp_path):
        main(["synth", "--profile", "easy", "--out", str(tmp_path / "s0"), "--seed", "0"])
        main(["synth", "--profile", "easy", "--out", str(tmp_path / "s1"), "--seed", "1"])
        m0 = load_manifest(tmp_path / "s0" / "manifest.json")
        m1 = load_manifest(tmp_path / "s1" / "manifest.json")
        assert m0.videos[0].features_path.read_bytes() \
            != m1.videos[0].features_path.read_bytes()

    def test_unknown_profile_is_a_usage_error(self, tmp_path, capsys):
        rc = main(["synth", "--profile", "nope", "--out", str(tmp_path)])
        capsys.readouterr()
        assert rc == 2


class TestTrain:
    def test_writes_checkpoint_and_curve(self, trained_dir, task_dir):
        assert (trained_dir / "encoder.rgwf").exists()
        assert (trained_dir / "encoder.rgwf.json").exists()
        curve = (trained_dir / "loss_curve.csv").read_text().splitlines()
        assert curve[0].startswith("# hyperparams:")
        assert curve[1] == "step,align,reg_x,reg_y,total"
        assert len(curve) > 2

    def test_deterministic_given_seed(self, task_dir, tmp_path):
        outs = []
        for name in ("one", "two"):
            out = tmp_path / name
            rc = main(["train", "--manifest", str(task_dir), "--out", str(out)]
                      + TRAIN_FLAGS)
            assert rc == 0
            outs.append(out)
        assert (outs[0] / "encoder.rgwf").read_bytes() \
            == (outs[1] / "encoder.rgwf").read_bytes()
        assert (outs[0] / "loss_curve.csv").read_text() \
            == (outs[1] / "loss_curve.csv").read_text()

    def test_dump_couplings_writes_per_step_files(self, task_dir, tmp_path):
        out = tmp_path / "dumped"
        rc = main(["train", "--manifest", str(task_dir), "--out", str(out),
                   "--dump-couplings"] + TRAIN_FLAGS)
        assert rc == 0
        dumps = sorted((out / "couplings").iterdir())
        # 2 epochs x 2 pairs = 4 steps, each with a coupling and a trace
        names = [p.name for p in dumps]
        assert names == [
            "step_00000.csv", "step_00000_trace.csv",
            "step_00001.csv", "step_00001_trace.csv",
            "step_00002.csv", "step_00002_trace.csv",
            "step_00003.csv", "step_00003_trace.csv",
        ]
        coupling = np.loadtxt(dumps[0], delimiter=",")
        assert coupling.shape == (13, 13)  # 12 sampled frames + virtual
        assert coupling.sum() == pytest.approx(1.0, abs=1e-6)

    def test_missing_manifest_errors(self, tmp_path, capsys):
        rc = main(["train", "--manifest", str(tmp_path / "absent.json"),
                   "--out", str(tmp_path / "out")] + TRAIN_FLAGS)
        assert rc == 1
        assert "error:" in capsys.readouterr().err

    def test_invalid_hyperparameter_errors(self, task_dir, tmp_path, capsys):
        rc = main(["train", "--manifest", str(task_dir),
                   "--out", str(tmp_path / "out"), "--zeta", "1.5"])
        assert rc == 1
        assert "error:" in capsys.readouterr().err


class TestAlign:
    def test_writes_coupling_trace_and_svg(self, task_dir, trained_dir, tmp_path, capsys):
        out = tmp_path / "align"
        rc = main(["align", "--manifest", str(task_dir),
                   "--checkpoint", str(trained_dir / "encoder.rgwf"),
                   "--pair", "video_00", "video_01", "--out", str(out)])
        assert rc == 0
        assert "outer iterations" in capsys.readouterr().out
        coupling = np.loadtxt(out / "coupling_video_00_video_01.csv", delimiter=",")
        assert coupling.ndim == 2
        assert coupling.sum() == pytest.approx(1.0, abs=1e-6)
        trace = (out / "trace_video_00_video_01.csv").read_text().splitlines()
        assert trace[0] == "iteration,objective"
        assert len(trace) >= 2
        svg = (out / "alignment_video_00_video_01.svg").read_text()
        assert svg.startswith("<?xml")
        assert "<svg" in svg and "<rect" in svg

    def test_unknown_video_errors(self, task_dir, trained_dir, tmp_path, capsys):
        rc = main(["align", "--manifest", str(task_dir),
                   "--checkpoint", str(trained_dir / "encoder.rgwf"),
                   "--pair", "video_00", "video_99", "--out", str(tmp_path)])
        assert rc == 1
        assert "unknown video" in capsys.readouterr().err


SEGMENT_FLAGS = ["--beta", "0.5", "--zeta", "0", "--no-masks", "--seed", "0"]


@pytest.fixture(scope="module")
def segmented(task_dir, trained_dir, tmp_path_factory):
    out = tmp_path_factory.mktemp("segmented")
    rc = main(["segment", "--manifest", str(task_dir),
               "--checkpoint", str(trained_dir / "encoder.rgwf"),
               "--out", str(out)] + SEGMENT_FLAGS)
    assert rc == 0
    return out


class TestSegmentAndEval:
    def test_writes_labels_for_every_video(self, segmented, task_dir):
        manifest = load_manifest(task_dir)
        for entry in manifest.videos:
            path = segmented / f"{entry.video_id}.labels.txt"
            assert path.exists()
            seq = load_labels(path, entry.video_id)
            n_frames = load_labels(entry.labels_path, entry.video_id).labels.size
            assert seq.labels.size == n_frames
            assert np.all(seq.labels >= -1)
            assert np.all(seq.labels < manifest.k)

    def test_writes_report_svg_and_metrics(self, segmented):
        report = (segmented / "order_report.txt").read_text()
        assert report.splitlines()[0].startswith("# task=toy")
        assert "ranked task orders" in report
        assert "per-video orders" in report
        svg = (segmented / "segmentation.svg").read_text()
        assert svg.startswith("<?xml")
        assert svg.count("<!--") >= 8  # predicted + gt band per video
        metrics = (segmented / "metrics.csv").read_text().splitlines()
        assert metrics[1] == "task,keystep,precision,recall,f1,iou"
        assert any(row.startswith("toy,macro,") for row in metrics)

    def test_deterministic_given_seed(self, segmented, task_dir, trained_dir, tmp_path):
        out = tmp_path / "again"
        rc = main(["segment", "--manifest", str(task_dir),
                   "--checkpoint", str(trained_dir / "encoder.rgwf"),
                   "--out", str(out)] + SEGMENT_FLAGS)
        assert rc == 0
        assert (out / "metrics.csv").read_text() \
            == (segmented / "metrics.csv").read_text()
        manifest = load_manifest(task_dir)
        for entry in manifest.videos:
            name = f"{entry.video_id}.labels.txt"
            assert (out / name).read_text() == (segmented / name).read_text()

    def test_segment_without_checkpoint_errors(self, task_dir, tmp_path, capsys):
        rc = main(["segment", "--manifest", str(task_dir), "--out", str(tmp_path)])
        assert rc == 1
        assert "checkpoint" in capsys.readouterr().err

    def test_eval_with_predictions_directory(self, task_dir, tmp_path, capsys):
        # feed the ground truth back in: metrics must be perfect
        manifest = load_manifest(task_dir)
        preds = tmp_path / "preds"
        preds.mkdir()
        for entry in manifest.videos:
            (preds / f"{entry.video_id}.labels.txt").write_bytes(
                entry.labels_path.read_bytes()
            )
        out = tmp_path / "eval"
        rc = main(["eval", "--manifest", str(task_dir), "--pred-dir", str(preds),
                   "--out", str(out)])
        assert rc == 0
        assert "macro F1 1.0000" in capsys.readouterr().out
        rows = (out / "metrics.csv").read_text().splitlines()
        macro = [r for r in rows if r.startswith("toy,macro,")]
        assert macro == ["toy,macro,1.000000,1.000000,1.000000,1.000000"]

    def test_eval_scores_a_fresh_segmentation(self, task_dir, trained_dir,
                                              tmp_path, capsys):
        out = tmp_path / "eval-fresh"
        rc = main(["eval", "--manifest", str(task_dir),
                   "--checkpoint", str(trained_dir / "encoder.rgwf"),
                   "--out", str(out)] + SEGMENT_FLAGS)
        assert rc == 0
        assert "macro F1" in capsys.readouterr().out
        assert (out / "metrics.csv").exists()

    def test_eval_without_inputs_errors(self, task_dir, tmp_path, capsys):
        rc = main(["eval", "--manifest", str(task_dir), "--out", str(tmp_path)])
        assert rc == 1
        assert "error:" in capsys.readouterr().err


class TestParser:
    def test_no_command_is_usage_error(self, capsys):
        rc = main([])
        capsys.readouterr()
        assert rc == 2

    def test_unknown_command_is_usage_error(self, capsys):
        rc = main(["frobnicate"])
        capsys.readouterr()
        assert rc == 2

    def test_missing_required_flag_is_usage_error(self, capsys):
        rc = main(["train", "--out", "/tmp/x"])
        capsys.readouterr()
        assert rc == 2
