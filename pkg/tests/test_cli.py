import csv

import pytest

from lifetime_pd.cli import main
from lifetime_pd.config import bundled_path, load_config
from lifetime_pd.errors import ConfigError


def _toml(tmp_path, text):
    f = tmp_path / "c.toml"
    f.write_text(text)
    return f


def test_bundled_config_parses():
    cfg, digest = load_config("paper.toml")
    assert cfg.labels == ("A", "B", "C", "D")
    assert cfg.pi0.weights.tolist() == [0.45, 0.4, 0.15, 0.0]
    assert cfg.betas.betas[1, 0] == 2.0
    assert len(digest) == 64


def test_config_errors_name_the_field(tmp_path):
    text = bundled_path("paper.toml").read_text()
    with pytest.raises(ConfigError, match="macro_model.rho"):
        load_config(_toml(tmp_path, text.replace("rho = 0.90", "rho = 'high'")))
    with pytest.raises(ConfigError, match="line"):
        load_config(_toml(tmp_path, text + "\n[broken\n"))
    with pytest.raises(ConfigError, match=r"\[ttc\]"):
        load_config(_toml(tmp_path, text.replace("[ttc]\nmatrix", "[ttc]\nmatrx")))


def test_ttc_from_counts_csv(tmp_path):
    (tmp_path / "counts.csv").write_text("A,B,C,D\n975,22,2,1\n30,935,30,5\n10,60,915,15\n0,0,0,1\n")
    text = bundled_path("paper.toml").read_text()
    start = text.index("[ttc]")
    end = text.index("[betas]")
    cfg, _ = load_config(_toml(tmp_path, text[:start] + '[ttc]\ncounts_csv = "counts.csv"\n\n' + text[end:]))
    assert cfg.ttc.entries[0, 1] == pytest.approx(0.022)


def test_exit_codes(tmp_path, capsys):
    assert main(["run", "--config", str(tmp_path / "missing.toml"), "--out", str(tmp_path)]) == 3
    assert main(["run", "--config", "paper.toml"]) == 2
    assert main(["run", "--config", "paper.toml", "--out", str(tmp_path), "--bogus"]) == 2
    assert main(["run", "--config", "paper.toml", "--out", str(tmp_path), "--reps", "0"]) == 2
    bad = _toml(tmp_path, bundled_path("paper.toml").read_text().replace("Q = 0.19", "Q = -0.19"))
    assert main(["riccati", "--config", str(bad)]) == 3
    assert "config error" in capsys.readouterr().err


def test_filtered_run(tmp_path):
    out = tmp_path / "o"
    rc = main(["run", "--config", "paper.toml", "--out", str(out), "--reps", "5", "--seed", "7",
               "--method", "anchored", "--scenario", "stress", "--emit-traces"])
    assert rc == 0
    rows = list(csv.DictReader(open(out / "summary.csv")))
    assert [(r["scenario"], r["method"]) for r in rows] == [("stress", "anchored")]
    trace = list(csv.DictReader(open(out / "filter_trace_stress_anchored.csv")))
    assert len(trace) == 40 and set(trace[0]) == {"t", "mu", "sigma", "innovation", "gain", "method"}
    assert (out / "traces_stress_anchored.csv").exists()
    manifest = (out / "manifest.txt").read_text()
    assert "master_seed: 7" in manifest and "config_sha256:" in manifest


def test_other_subcommands(tmp_path, capsys):
    assert main(["scenarios", "--config", "paper.toml", "--out", str(tmp_path)]) == 0
    assert sorted(p.name for p in tmp_path.glob("macro_*.csv")) == [
        "macro_baseline.csv", "macro_pandemic.csv", "macro_stress.csv"]
    assert main(["riccati", "--config", "paper.toml"]) == 0
    text = capsys.readouterr().out
    assert "naive: Sigma_inf=0.1364" in text and "anchored" in text
    assert main(["check-bounds", "--config", "paper.toml", "--paths", "50"]) == 0
    assert main(["demo-instability", "--config", "paper.toml", "--paths", "50", "--out", str(tmp_path)]) == 0
    assert (tmp_path / "instability.csv").exists()
