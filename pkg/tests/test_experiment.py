import csv
import json

import numpy as np
import pytest

from dimrecon.cli import main
from dimrecon.config import ExperimentConfig, format_value, load_config, parse_text
from dimrecon.experiment import ExperimentError, read_csv, run_experiment, sweep, verify
from dimrecon.io import load_dataset, read_pgm
from dimrecon.layers import ConfigError

TINY = dict(n_train=3, n_test=2, nx=12, ny=12, nt=2, n_objects=3, acs=2, filters=3, layers_per_block=2,
            epochs=1, batch_size=2, patch=None, dtype="float64")


def tiny_cfg(tmp_path, **kw):
    return ExperimentConfig(out_dir=str(tmp_path / "run"), **{**TINY, **kw})


def test_parse_text():
    vals = parse_text("""
        # comment
        preset = model2
        loss_beta = 1, 2.5, 3   # trailing comment
        desk = false
        sigma = none
        patch = 8, 8, 2
    """)
    assert vals == {"preset": "model2", "loss_beta": (1.0, 2.5, 3.0), "desk": False, "sigma": None,
                    "patch": (8, 8, 2)}
    with pytest.raises(ConfigError, match="unknown config key"):
        parse_text("bogus = 1")
    with pytest.raises(ConfigError, match="bad value"):
        parse_text("epochs = many")
    with pytest.raises(ConfigError, match="expected key = value"):
        parse_text("just words")


def test_config_text_round_trip(tmp_path):
    cfg = ExperimentConfig(preset="model3", dc_lambda="inf", loss_alpha=(0.5,), sigma=3.0)
    (tmp_path / "c.txt").write_text(cfg.to_text())
    assert load_config(tmp_path / "c.txt") == cfg
    assert format_value(float("inf")) == "inf"


def test_overrides_win(tmp_path):
    (tmp_path / "c.txt").write_text("epochs = 3\nlr = 0.1\n")
    cfg = load_config(tmp_path / "c.txt", {"epochs": "7"})
    assert cfg.epochs == 7 and cfg.lr == 0.1


def test_model_config_resolution():
    cfg = ExperimentConfig(preset="dimension", desk=True, dc_lambda="2")
    m = cfg.model_config()
    assert m.filters == 16 and m.layers_per_block == 3 and m.dc_lambda == 2.0
    with pytest.raises(ConfigError):
        ExperimentConfig(preset="nope").model_config()


def test_missing_dataset_fails_validation(tmp_path):
    with pytest.raises(ExperimentError, match=r"\[config\]"):
        run_experiment(tiny_cfg(tmp_path, dataset=str(tmp_path / "missing.dimk")))


def test_run_artifacts_and_verify(tmp_path):
    cfg = tiny_cfg(tmp_path)
    report = run_experiment(cfg)
    run = tmp_path / "run"
    for name in ("config.txt", "train_log.jsonl", "model.dimc", "metrics.csv", "metrics.json", "volumes.npz"):
        assert (run / name).is_file(), name
    assert read_pgm(run / "error_maps" / "ex0_recon_t1.pgm").shape == (12, 12)
    assert read_pgm(run / "yt" / "ex1_zf.pgm").shape == (12, 2)
    rows = read_csv(run / "metrics.csv")
    assert len(rows) == 3 and rows[-1]["example"] == "mean"
    for c in ("mse", "psnr", "ssim", "zf_psnr"):
        assert rows[-1][c] == report.mean[c]
        assert abs(report.mean[c] - np.mean([r[c] for r in report.rows])) <= 1e-12 * abs(report.mean[c])
    assert verify(run) == []
    assert main(["verify", str(run)]) == 0

    # tamper with one number and verify must notice
    lines = (run / "metrics.csv").read_text().splitlines()
    cells = lines[1].split(",")
    cells[2] = repr(float(cells[2]) + 1e-6)
    lines[1] = ",".join(cells)
    (run / "metrics.csv").write_text("\n".join(lines) + "\n")
    problems = verify(run)
    assert len(problems) == 1 and "psnr" in problems[0]


def test_zero_epochs_is_untrained_evaluation(tmp_path):
    from dimrecon.experiment import evaluate, load_or_build_dataset
    from dimrecon.network import ParameterSet
    from dimrecon.phantom import derive_seed

    cfg = tiny_cfg(tmp_path, epochs=0)
    report = run_experiment(cfg)
    params = ParameterSet.he_init(cfg.model_config(), derive_seed(cfg.seed, 17))
    fresh, _ = evaluate(params, load_or_build_dataset(cfg).test)
    assert [r["psnr"] for r in report.rows] == [r["psnr"] for r in fresh.rows]


def test_sweep(tmp_path):
    results = sweep(tiny_cfg(tmp_path, epochs=0, preset="model2"), "loss_alpha", ["1e-8", "0.1"])
    assert [r["loss_alpha"] for r in results] == ["1e-08", "0.1"]
    with open(tmp_path / "run" / "sweep.csv") as fh:
        assert len(list(csv.reader(fh))) == 3
    assert (tmp_path / "run" / "loss_alpha=0.1" / "metrics.csv").is_file()


def test_cli_gen_data_and_train(tmp_path, capsys):
    data = tmp_path / "d.dimk"
    common = ["--set", "nx=12", "--set", "ny=12", "--set", "nt=2", "--set", "acs=2"]
    assert main(["gen-data", "-o", str(data), "--n-train", "2", "--n-test", "1", "--seed", "3"] + common) == 0
    ds = load_dataset(data)
    assert len(ds.train) == 2 and len(ds.test) == 1

    cfgfile = tmp_path / "exp.txt"
    cfgfile.write_text("acs = 2\nfilters = 3\nlayers_per_block = 2\npatch = none\ndtype = float64\nbatch_size = 1\n")
    out = tmp_path / "r"
    assert main(["train", "--config", str(cfgfile), "--dataset", str(data), "--epochs", "1",
                 "--out", str(out), "--seed", "2"]) == 0
    assert "PSNR" in capsys.readouterr().out
    log = [json.loads(l) for l in (out / "train_log.jsonl").read_text().splitlines()]
    assert log[-1]["kind"] == "epoch"

    out2 = tmp_path / "e"
    assert main(["eval", "--config", str(cfgfile), "--dataset", str(data), "--checkpoint", str(out / "model.dimc"),
                 "--out", str(out2)]) == 0
    assert read_csv(out2 / "metrics.csv")[-1]["psnr"] == read_csv(out / "metrics.csv")[-1]["psnr"]


def test_cli_mask_preview(tmp_path):
    out = tmp_path / "m.pgm"
    assert main(["mask-preview", "--set", "ny=32", "--set", "nt=5", "--acs", "4", "-o", str(out), "--seed", "1"]) == 0
    img = read_pgm(out)
    assert img.shape == (32, 5) and ((img == 255).sum(axis=0) == 8).all()


def test_cli_gradcheck_noise_aware(capsys):
    assert main(["gradcheck", "--noise-aware", "--shape", "8", "8", "2", "--seed", "1"]) == 0
    assert "PASS" in capsys.readouterr().out


def test_cli_config_error(capsys):
    assert main(["mask-preview", "-o", "/tmp/x.pgm", "--set", "wrong=1"]) == 2
    assert "unknown config key" in capsys.readouterr().err
