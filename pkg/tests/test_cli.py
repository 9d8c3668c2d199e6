import csv
import io
import subprocess
import sys

import pytest

from trapprob import __version__
from trapprob.cli import COMMANDS, main, read_config, resolve
from trapprob.errors import DomainError


def run_cli(tmp_path, *args, name="out.csv"):
    out = tmp_path / name
    code = main([*args, "--out", str(out)])
    return code, (out.read_text() if out.exists() else None)


def parse(text):
    meta = [line for line in text.splitlines() if line.startswith("#")]
    body = "\n".join(line for line in text.splitlines() if not line.startswith("#"))
    rows = list(csv.DictReader(io.StringIO(body)))
    return meta, rows


QUICK = {
    "uninsured": ["--alphas", "1,2", "--lambdas", "0.25", "--grid", "1:3:5"],
    "compare-exp": ["--alpha", "5", "--grid", "1:4:4"],
    "constraint": ["--kappas", "0.2,0.5", "--thetas", "0.1,0.5"],
    "insured": ["--grid", "1.6:4:6", "--a-method", "analytic", "--a-value", "-3.4"],
    "simulate": ["--paths", "50", "--horizon", "20", "--grid", "1.6:3:3"],
    "fit": ["--paths", "50", "--horizon", "20", "--fit-points", "5", "--depth", "1"],
    "xc": ["--kappas", "0.5", "--lambdas", "0.25", "--depth", "3", "--nodes", "16"],
    "decay": ["--alphas", "1,2"],
}


@pytest.mark.parametrize("command", COMMANDS)
def test_every_command_emits_metadata_and_csv(tmp_path, command):
    code, text = run_cli(tmp_path, command, *QUICK[command])
    assert code == 0
    meta, rows = parse(text)
    assert meta[:3] == ["# tool=trapprob", f"# version={__version__}", f"# command={command}"]
    assert rows


def test_uninsured_values(tmp_path):
    _, text = run_cli(tmp_path, "uninsured", "--alpha", "1", "--lambda", "0.25", "--grid", "1:2:2")
    rows = parse(text)[1]
    assert float(rows[0]["f"]) == pytest.approx(1.0, abs=1e-12)
    assert 0 < float(rows[1]["f"]) < 1


def test_decay_value(tmp_path):
    _, text = run_cli(tmp_path, "decay", "--alpha", "1", "--lambda", "1", "--kappa", "0.3")
    row = parse(text)[1][0]
    assert float(row["gamma"]) == pytest.approx(-4.7447214102018, abs=1e-10)


def test_constraint_columns(tmp_path):
    _, text = run_cli(tmp_path, *(["constraint"] + QUICK["constraint"]))
    rows = parse(text)[1]
    assert len(rows) == 4
    assert set(rows[0]) >= {"alpha", "theta", "kappa", "bound", "lambda_max"}


def test_exit_codes(tmp_path, capsys):
    # insured net-profit condition fails
    assert main(["insured", "--kappa", "0.9", "--theta", "30", "--lambda", "0.45"]) == 2
    # invalid values, unparsable values, unknown commands and flags are input errors
    assert main(["uninsured", "--alpha", "-1"]) == 4
    assert main(["uninsured", "--alpha", "abc"]) == 4
    assert main(["nonsense"]) == 4
    assert main(["uninsured", "--no-such-flag", "1"]) == 4
    assert main(["simulate", "--grid", "0.5:1:2"]) == 4
    assert main(["--version"]) == 0
    capsys.readouterr()


def test_config_precedence(tmp_path):
    cfg_file = tmp_path / "run.cfg"
    cfg_file.write_text("# comment\nlambda = 0.3\nalpha=2\nkappa=0.6\n")
    cfg = resolve(["decay", "--config", str(cfg_file), "--alpha", "3"])
    assert cfg.params["lambda"] == 0.3  # config beats default
    assert cfg.params["alpha"] == 3.0  # flag beats config
    assert cfg.params["kappa"] == 0.6
    assert cfg.params["theta"] == 0.5  # default


def test_config_errors(tmp_path):
    bad = tmp_path / "bad.cfg"
    bad.write_text("no_equals_sign\n")
    with pytest.raises(DomainError):
        read_config(str(bad))
    bad.write_text("unknown_key=1\n")
    with pytest.raises(DomainError):
        read_config(str(bad))
    assert main(["decay", "--config", str(tmp_path / "missing.cfg")]) == 4


def test_metadata_records_resolved_parameters(tmp_path):
    _, text = run_cli(tmp_path, "decay", "--lambda", "0.7")
    meta = parse(text)[0]
    assert "# lambda=0.69999999999999996" in meta
    assert any(line.startswith("# seed=") for line in meta)


def test_reruns_are_byte_identical(tmp_path):
    args = ["simulate", "--paths", "300", "--horizon", "30", "--grid", "1.6:3:4", "--seed", "4"]
    _, first = run_cli(tmp_path, *args, name="a.csv")
    _, second = run_cli(tmp_path, *args, name="b.csv")
    _, threaded = run_cli(tmp_path, *args, "--workers", "3", name="c.csv")
    assert first == second
    body = lambda t: [line for line in t.splitlines() if not line.startswith("# workers=")]
    assert body(first) == body(threaded)


def test_console_script_matches_main(tmp_path):
    args = ["uninsured", "--alphas", "1", "--lambdas", "0.25", "--grid", "1:3:3"]
    proc = subprocess.run(
        [sys.executable, "-m", "trapprob.cli", *args], capture_output=True, text=True, check=True
    )
    _, text = run_cli(tmp_path, *args)
    assert proc.stdout == text


def test_solution_cache_reuse(tmp_path):
    cache = tmp_path / "cache"
    args = ["insured", "--grid", "1.6:5:5", "--depth", "2", "--nodes", "16",
            "--a-method", "analytic", "--a-value", "-3.4", "--cache-dir", str(cache)]
    _, first = run_cli(tmp_path, *args, name="a.csv")
    files = list(cache.glob("solution-*.json"))
    assert len(files) == 1
    stamp = files[0].stat().st_mtime_ns
    _, second = run_cli(tmp_path, *args, name="b.csv")
    assert first == second
    assert files[0].stat().st_mtime_ns == stamp


def test_xc_curves_mode(tmp_path):
    _, text = run_cli(tmp_path, *(["xc", "--curves", "--grid", "1:1.5:6"] + QUICK["xc"][:4]), "--depth", "3")
    rows = parse(text)[1]
    assert set(rows[0]) >= {"x", "f_uninsured", "f_insured", "difference"}
