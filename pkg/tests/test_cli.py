import csv
import subprocess
import sys

import numpy as np
import pytest

from viedl.cli import main
from viedl.data import gaussian_blobs, save_csv
from viedl.train import format_config, load_checkpoint, TrainConfig

ID_SPEC = "blobs:k=3,n=500,d=2,sep=6,spread=1,seed=7"
OOD_SPEC = "ood:d=2,n=500,offset=20,spread=1,seed=8"


@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    out = tmp_path_factory.mktemp("run") / "model.ckpt"
    assert main(["train", "--synthetic", ID_SPEC, "--out", str(out)]) == 0
    return out


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_train_default_run(trained):
    assert trained.exists()
    log = _rows(f"{trained}.log.csv")
    assert len(log) == 30
    assert [float(r["lambda_t"]) for r in log] == [min(1.0, t / 20) for t in range(1, 31)]
    assert load_checkpoint(trained).epoch == 30


def test_train_is_idempotent(trained, tmp_path):
    again = tmp_path / "again.ckpt"
    assert main(["train", "--synthetic", ID_SPEC, "--out", str(again)]) == 0
    assert again.read_bytes() == trained.read_bytes()


def test_train_with_config_and_csv(tmp_path):
    cfg = tmp_path / "cfg.txt"
    cfg.write_text(format_config(TrainConfig(epochs=2, hidden=(4,), feature_dim=3)))
    data = tmp_path / "train.csv"
    save_csv(gaussian_blobs(3, 20, seed=1), data)
    log = tmp_path / "log.csv"
    code = main(["train", "--config", str(cfg), "--data", str(data), "--out", str(tmp_path / "m"), "--log", str(log)])
    assert code == 0 and len(_rows(log)) == 2


def test_missing_config_key(tmp_path, capsys):
    cfg = tmp_path / "cfg.txt"
    cfg.write_text("\n".join(l for l in format_config(TrainConfig()).splitlines() if not l.startswith("beta")))
    assert main(["train", "--config", str(cfg), "--out", str(tmp_path / "m")]) == 2
    assert "'beta'" in capsys.readouterr().err


def test_non_finite_loss_exit_code(tmp_path, capsys):
    cfg = tmp_path / "cfg.txt"
    cfg.write_text(format_config(TrainConfig(epochs=3, learning_rate=1e300)))
    assert main(["train", "--config", str(cfg), "--synthetic", "blobs:k=3,n=20", "--out", str(tmp_path / "m")]) == 3
    assert "parameter norms" in capsys.readouterr().err


def test_eval(trained, tmp_path, capsys):
    out = tmp_path / "pred.csv"
    assert main(["eval", "--checkpoint", str(trained), "--data", ID_SPEC, "--out", str(out)]) == 0
    assert "accuracy: 1.0000" in capsys.readouterr().out
    assert len(_rows(out)) == 1500
    assert main(["eval", "--checkpoint", str(trained), "--data", "blobs:k=3,n=5,d=3"]) == 2


def test_ood_reports(trained, tmp_path, capsys):
    out = tmp_path / "report.csv"
    assert main(["ood", "--checkpoint", str(trained), "--id", ID_SPEC, "--ood", OOD_SPEC, "--ood", ID_SPEC, "--out", str(out)]) == 0
    rows = _rows(out)
    assert float(rows[0]["auroc"]) >= 0.95
    assert float(rows[1]["auroc"]) == 0.5
    assert "AUROC[" in (tmp_path / "report.csv.txt").read_text()
    assert "ID ACC" in capsys.readouterr().out


def test_ood_self_comparison(tmp_path):
    ckpt = tmp_path / "m"
    assert main(["train", "--synthetic", "blobs:k=3,n=100,d=2,seed=3", "--out", str(ckpt)]) == 0
    out = tmp_path / "r.csv"
    assert main(["ood", "--checkpoint", str(ckpt), "--id", "blobs:k=3,n=100,d=2,seed=3", "--ood",
                 "blobs:k=3,n=100,d=2,seed=3", "--out", str(out)]) == 0
    assert float(_rows(out)[0]["auroc"]) == 0.5


def test_noise_sweep(trained, tmp_path):
    out = tmp_path / "noise.csv"
    code = main(["noise", "--checkpoint", str(trained), "--data", ID_SPEC, "--sigmas", "0,0.05,0.1,0.2", "--seed", "8",
                 "--out", str(out)])
    assert code == 0
    rows = _rows(out)
    assert float(rows[0]["auroc"]) == 0.5
    aurocs = [float(r["auroc"]) for r in rows[1:]]
    assert aurocs == sorted(aurocs)


@pytest.mark.parametrize("sigmas", ["", "0.1,abc", "-0.1", "nan"])
def test_noise_malformed_sigmas(trained, sigmas):
    assert main(["noise", "--checkpoint", str(trained), "--data", ID_SPEC, "--sigmas", sigmas]) == 2


def test_verify(capsys):
    assert main(["verify", "--trials", "2000"]) == 0
    out = capsys.readouterr().out
    assert "all bounds hold" in out and "sup|mse|" in out
    assert main(["verify", "--trials", "2000", "--inject-gradient-scale", "10"]) == 4
    assert "violation: K=" in capsys.readouterr().out


def test_verify_grid_file(tmp_path, capsys):
    grid = tmp_path / "grid.csv"
    grid.write_text("k,beta,prior\n3,0,ones\n4,0.5,1;2;1;3\n")
    assert main(["verify", "--grid", str(grid), "--trials", "1000"]) == 0
    lines = [l for l in capsys.readouterr().out.splitlines() if l.strip().endswith("ok")]
    assert len(lines) == 2
    grid.write_text("k,beta,prior\n4,0.5,1;2\n")
    assert main(["verify", "--grid", str(grid)]) == 2


def test_gen_data_round_trip(tmp_path):
    out = tmp_path / "d.csv"
    assert main(["gen-data", "--synthetic", ID_SPEC, "--out", str(out)]) == 0
    rows = _rows(out)
    assert len(rows) == 1500 and set(rows[0]) == {"f0", "f1", "label"}
    again = tmp_path / "e.csv"
    main(["gen-data", "--synthetic", ID_SPEC, "--out", str(again)])
    assert out.read_bytes() == again.read_bytes()
    assert main(["gen-data", "--synthetic", "blobs:q=1", "--out", str(out)]) == 2


def test_plot_simplex(trained, tmp_path):
    out = tmp_path / "s.csv"
    assert main(["plot-simplex", "--checkpoint", str(trained), "--data", ID_SPEC, "--out", str(out)]) == 0
    id_total = np.mean([float(r["total_evidence"]) for r in _rows(out)])
    coords = np.array([[float(r[c]) for c in ("coord_a", "coord_b", "coord_c")] for r in _rows(out)])
    assert np.allclose(coords.sum(axis=1), 1.0)
    assert main(["plot-simplex", "--checkpoint", str(trained), "--data", OOD_SPEC, "--out", str(out)]) == 0
    assert id_total > 0


def test_plot_simplex_needs_three_classes(tmp_path):
    ckpt = tmp_path / "two.ckpt"
    assert main(["train", "--synthetic", "blobs:k=2,n=20,d=2", "--out", str(ckpt)]) == 0
    assert main(["plot-simplex", "--checkpoint", str(ckpt), "--data", "blobs:k=2,n=5,d=2", "--out", str(tmp_path / "s")]) == 2


def test_usage_errors(tmp_path):
    with pytest.raises(SystemExit) as info:
        main(["train"])
    assert info.value.code == 2
    assert main(["eval", "--checkpoint", str(tmp_path / "missing"), "--data", ID_SPEC]) == 2
    bad = tmp_path / "bad.ckpt"
    bad.write_bytes(b"garbage")
    assert main(["eval", "--checkpoint", str(bad), "--data", ID_SPEC]) == 2


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "viedl", "verify", "--trials", "200", "--grid", "default"],
                          capture_output=True, text=True)
    assert proc.returncode == 0 and "all bounds hold" in proc.stdout
