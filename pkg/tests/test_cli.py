import numpy as np
import pytest

from cli_pipeline import run_pipeline
from eegaug.cli import main
from eegaug.wavelet import load_tfrs


@pytest.fixture(scope="module")
def two_runs(tmp_path_factory):
    a = tmp_path_factory.mktemp("run_a")
    b = tmp_path_factory.mktemp("run_b")
    return a, run_pipeline(a), b, run_pipeline(b)


def test_every_command_rerun_is_byte_identical(two_runs):
    a, files_a, b, files_b = two_runs
    rel_a = [p.relative_to(a) for p in files_a]
    assert rel_a == [p.relative_to(b) for p in files_b]
    assert len(rel_a) >= 20
    for rel in rel_a:
        assert (a / rel).read_bytes() == (b / rel).read_bytes(), rel


def test_pipeline_outputs(two_runs):
    a, _, _, _ = two_runs
    assert len(load_tfrs(a / "train.tfrb")) == 12
    # csv keeps full precision, the binary format float32
    for s, t in zip(load_tfrs(a / "train.tfrb"), load_tfrs(a / "train_csv.tfrb")):
        np.testing.assert_allclose(s.values, t.values, atol=1e-5)
    art = load_tfrs(a / "art_right.tfrb")
    assert [s.trial_id for s in art] == [4, 5, 6, 7]
    assert (a / "gan.csv").read_text().startswith("iteration,d_loss,g_loss,d_accuracy\n")
    assert (a / "metrics.csv").read_text().splitlines()[1].startswith("mixed,2,")
    fig4 = (a / "fig4" / "results.csv").read_text().splitlines()
    assert fig4[0] == "experiment,condition,seed,n_raw_per_class,n_art_per_class,accuracy"
    assert len(fig4) == 1 + 3 * 2
    fig5 = (a / "fig5" / "results.csv").read_text().splitlines()
    assert {line.split(",")[2] for line in fig5[1:]} == {"5"}
    assert (a / "fig5" / "improvements.csv").exists()


def test_flags_override_config(tmp_path):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("synth.trials_per_class = 6\nout = " + str(tmp_path / "from_cfg.eegb") + "\n")
    assert main(["synth", "--spec", str(cfg)]) == 0
    assert (tmp_path / "from_cfg.eegb").exists()
    assert main(["synth", "--spec", str(cfg), "--out", str(tmp_path / "flag.eegb")]) == 0
    assert (tmp_path / "flag.eegb").exists()


def test_errors_exit_nonzero_with_message(tmp_path, capsys):
    assert main(["preprocess", "--in", str(tmp_path / "missing.eegb"), "--out", str(tmp_path / "x.tfrb")]) == 2
    assert "error" in capsys.readouterr().err
    assert main(["generate", "--label", "left", "--count", "1", "--out", str(tmp_path / "x.tfrb")]) == 2
    assert "gan_checkpoint" in capsys.readouterr().err
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("fig5.counts = 0,10\n")
    assert main(["experiment", "fig5", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2
    assert "counts" in capsys.readouterr().err
