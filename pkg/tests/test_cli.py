import json

import numpy as np
import pytest

from openset_da import config as cfgmod
from openset_da.assign import SolveConfig, dump_instance, solve_unsupervised
from openset_da.cli import main
from openset_da.errors import ConfigError

SYN = ["--set", "data=synthetic", "--set", "synth_per_class=30"]


def test_config_parse_and_dump(tmp_path):
    cfg = cfgmod.load(None, {"data": "synthetic", "rho": "0.3", "coverage": "no"})
    assert cfg.rho == 0.3 and cfg.coverage is False
    text = cfgmod.dump(cfg, ["header"])
    assert text.startswith("# header\n") and "rho = 0.3\n" in text
    (tmp_path / "c.cfg").write_text(text)
    assert cfgmod.load(tmp_path / "c.cfg") == cfg


@pytest.mark.parametrize("text", ["rho 0.5", "nope = 1", "rho = abc", "coverage = maybe"])
def test_config_rejects(text):
    with pytest.raises(ConfigError):
        cfgmod.parse_text(text)


def test_config_checks():
    with pytest.raises(ConfigError):
        cfgmod.load(None, {})  # feature files missing
    with pytest.raises(ConfigError):
        cfgmod.load(None, {"data": "synthetic", "svm_c": -1.0})
    with pytest.raises(ConfigError):
        cfgmod.load("/nonexistent.cfg")


def test_manifest_echoes_defaults(tmp_path):
    out = tmp_path / "r"
    assert main(["adapt", "--variant", "ati", "--rho", "0.5", "--out", str(out)] + SYN) == 0
    manifest = (out / "manifest.cfg").read_text()
    assert "epsilon = 0.01\n" in manifest and "max_iter = 10\n" in manifest
    assert "variant = ati\n" in manifest
    for name in ("adapted_source.csv", "transform.json", "history.csv", "model.json",
                 "predictions.csv", "report.json", "confusion.csv", "timing.json"):
        assert (out / name).exists()


def test_rerun_from_manifest_is_identical(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["adapt", "--out", str(a), "--plot-data"] + SYN) == 0
    assert main(["adapt", str(a / "manifest.cfg"), "--out", str(b)]) == 0
    for name in ("predictions.csv", "report.json", "model.json", "confusion.dat"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_file_based_run(tmp_path, capsys):
    assert main(["synth", "--per-class", "30", "--out", str(tmp_path / "d")]) == 0
    d = tmp_path / "d"
    # two labeled target rows through the sidecar
    (tmp_path / "lt.csv").write_text("t0,k0\nt40,k1\n")
    args = ["--set", f"source={d / 'source.csv'}", "--set", f"target={d / 'target.csv'}",
            "--set", f"ground_truth={d / 'ground_truth.csv'}"]
    assert main(["adapt", "--out", str(tmp_path / "r"), "--labeled-targets",
                 str(tmp_path / "lt.csv")] + args) == 0
    summary = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
    assert summary["overall_accuracy"] > 0.9
    assert main(["baseline", "--mode", "s", "--out", str(tmp_path / "b")] + args) == 0
    assert main(["adapt", "--protocol", "cs", "--out", str(tmp_path / "c")] + args) == 1


def test_exit_codes(tmp_path):
    assert main(["adapt", "--set", "source=/no/such.csv", "--set", "target=/no/t.csv",
                 "--out", str(tmp_path / "x")]) == 2
    assert main(["adapt", "--rho", "3"] + SYN) == 1
    bad = tmp_path / "bad.csv"
    bad.write_text("s0,a,1\ns1,a,1,2\n")
    assert main(["adapt", "--set", f"source={bad}", "--set", f"target={bad}",
                 "--out", str(tmp_path / "y")]) == 2
    with pytest.raises(SystemExit):
        main(["adapt", "--variant", "nope"])


def test_sweep_outputs(tmp_path, capsys):
    out = tmp_path / "sw"
    assert main(["sweep", "--var", "rho", "--values", "0.2,1.0", "--seeds", "0,1",
                 "--out", str(out)] + SYN) == 0
    rows = (out / "sweep.csv").read_text().splitlines()
    assert rows[0].startswith("var,value,n_runs,acc_mean")
    assert len(rows) == 3 and rows[2].split(",")[7] == "0.0"  # rho = 1 rejects nothing
    assert (out / "rho=0.2" / "seed=1" / "report.json").exists()


def test_single_point_sweep_matches_adapt(tmp_path):
    assert main(["sweep", "--var", "seed", "--values", "3", "--out", str(tmp_path / "s")] + SYN) == 0
    assert main(["adapt", "--seed", "3", "--out", str(tmp_path / "a")] + SYN) == 0
    run = tmp_path / "s" / "seed=3" / "seed=3"
    assert (run / "predictions.csv").read_bytes() == (tmp_path / "a" / "predictions.csv").read_bytes()


def test_sweep_rejects_bad_variable(tmp_path):
    assert main(["sweep", "--var", "unknown_ratio", "--values", "1", "--set", "source=a",
                 "--set", "target=b", "--out", str(tmp_path)]) == 1


def test_split_command(tmp_path):
    rng = np.random.default_rng(0)
    lines = []
    for c in range(1, 8):
        for i in range(4):
            x = rng.normal(size=2)
            lines.append(f"p{c}_{i},cls{c},{float(x[0])!r},{float(x[1])!r}")
    (tmp_path / "pool.csv").write_text("\n".join(lines) + "\n")
    assert main(["split", str(tmp_path / "pool.csv"), "--shared", "3", "--src-unknown", "4-5",
                 "--tgt-unknown", "6-7", "--out", str(tmp_path / "o")]) == 0
    assert len((tmp_path / "o" / "target.csv").read_text().splitlines()) == 6 + 8
    assert main(["split", str(tmp_path / "pool.csv"), "--shared", "3", "--src-unknown", "3-5",
                 "--out", str(tmp_path / "p")]) == 1


def test_check_command(tmp_path, capsys):
    d = np.array([[1.0, 8.0, 8.0], [8.0, 1.0, 8.0]])
    cfg = SolveConfig(lam=2.0)
    dump_instance(tmp_path / "good.json", d, cfg, solve_unsupervised(d, cfg))
    assert main(["check", str(tmp_path / "good.json")]) == 0
    doc = json.loads((tmp_path / "good.json").read_text())
    doc["x"], doc["o"], doc["objective"] = [[1, 0, 0], [0, 0, 1]], [0, 1, 0], 18.0
    (tmp_path / "bad.json").write_text(json.dumps(doc))
    assert main(["check", str(tmp_path / "bad.json")]) == 5
    assert "MISMATCH" in capsys.readouterr().out
