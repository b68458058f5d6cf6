import csv
import json

import numpy as np
import pytest

from ergoperturb import __version__
from ergoperturb.ar_model import ARKernelSpec, build_kernel
from ergoperturb.cli import ENV_OUT, EXPERIMENTS, main, validate
from ergoperturb.kernel_calculus import fit_drift
from ergoperturb.noise import student_t
from ergoperturb.weighted_space import WeightSpec, uniform_grid

SMALL = {"n": 300, "x_max": 75.0}


def write_config(tmp_path, **kw):
    path = tmp_path / "config.json"
    path.write_text(json.dumps(kw))
    return str(path)


def read_table(path):
    with open(path) as fh:
        header = [ln for ln in fh if ln.startswith("#")]
    with open(path) as fh:
        rows = list(csv.DictReader(ln for ln in fh if not ln.startswith("#")))
    return header, rows


def test_validate_only(tmp_path, capsys):
    cfg = write_config(tmp_path, **SMALL)
    assert main(["rate-table", "--config", cfg, "--validate-only"]) == 0
    assert "ok" in capsys.readouterr().out


def test_empty_alpha_list_rejected(tmp_path, capsys):
    cfg = write_config(tmp_path, alphas=[])
    assert main(["drift-certify", "--config", cfg]) == 1
    assert "alphas must be a non-empty list" in capsys.readouterr().err


def test_every_violation_reported(tmp_path, capsys):
    cfg = write_config(tmp_path, n=2, r=0.5, beta=3, colour="red")
    assert main(["rate-table", "--config", cfg]) == 1
    err = capsys.readouterr().err.strip().splitlines()
    assert len(err) == 4
    assert all(line.startswith("config error:") for line in err)


def test_validation_rules():
    assert validate({}, "mc-oracle")[1] == ["mc-oracle needs a non-negative integer seed"]
    _, errs = validate({"seed": 1, "n_samples": 50, "burn_in": 10}, "mc-oracle")
    assert any("10 * burn_in" in e for e in errs)
    _, errs = validate({"r": 2.0}, "taylor-expansion")
    assert any("non-integer" in e for e in errs)
    _, errs = validate({"r": 1.5, "beta_r": 0.5}, "taylor-expansion")
    assert any("beta_r" in e for e in errs)
    _, errs = validate({"alphas": [0.6, 0.7]}, "counterexample")
    assert any("decrease" in e for e in errs)
    _, errs = validate({"experiment": "rate-table"}, "drift-certify")
    assert any("does not match" in e for e in errs)
    cfg, errs = validate({"alphas": [0.1]}, "rate-table")
    assert errs == [] and cfg.alphas == [0.1]
    assert set(EXPERIMENTS) >= {"drift-certify", "mc-oracle"}


def test_bad_json(tmp_path):
    path = tmp_path / "c.json"
    path.write_text("{not json")
    assert main(["rate-table", "--config", str(path)]) == 1


def test_drift_certify_table(tmp_path):
    alphas = [-0.6, -0.3, 0.0, 0.3, 0.6]
    cfg = write_config(tmp_path, alphas=alphas, **SMALL)
    assert main(["drift-certify", "--config", cfg, "--out", str(tmp_path / "o")]) == 0
    header, rows = read_table(tmp_path / "o" / "drift.csv")
    assert header[0].strip() == f"# ergoperturb {__version__}"
    assert all(float(r["delta"]) < 1 for r in rows)
    # oracle: fit_drift on each kernel directly
    g = uniform_grid(300, 75.0)
    nz = student_t(5)
    cap = 10 * (1 + nz.abs_moment(1))
    for a, row in zip(alphas, rows):
        cert = fit_drift(build_kernel(ARKernelSpec(a, nz, g)), WeightSpec(1.0, 1.0), 1, cap)
        assert float(row["delta"]) == cert.delta
        assert float(row["L"]) == cert.L
    summary = json.loads((tmp_path / "o" / "drift-certify_summary.json").read_text())
    assert summary["results"]["common_certified"] is True
    assert summary["version"] == __version__


def test_counterexample_trajectory(tmp_path):
    cfg = write_config(tmp_path, alpha0=0.3, **SMALL)
    assert main(["counterexample", "--config", cfg, "--out", str(tmp_path)]) == 0
    _, rows = read_table(tmp_path / "counterexample.csv")
    s = json.loads((tmp_path / "counterexample_summary.json").read_text())["results"]
    errs = [abs(float(r["ratio"]) - s["limit"]) for r in rows]
    assert errs[-1] < errs[0] and errs[-1] / abs(s["limit"]) < 1e-2
    assert s["limit"] == pytest.approx(0.3 * s["I_a"])


def test_mc_oracle_byte_identical(tmp_path):
    cfg = write_config(tmp_path, seed=7, n_samples=20_000, burn_in=100, **SMALL)
    outs = []
    for name in ("a", "b"):
        assert main(["mc-oracle", "--config", cfg, "--out", str(tmp_path / name)]) == 0
        outs.append(((tmp_path / name / "mc_oracle.csv").read_bytes(),
                     (tmp_path / name / "mc-oracle_summary.json").read_bytes()))
    assert outs[0] == outs[1]
    assert b"rng=numpy.random.Generator(PCG64) seed=7" in outs[0][0]


def test_output_dir_precedence(tmp_path, monkeypatch):
    cfg = write_config(tmp_path, alphas=[0.5], out_dir=str(tmp_path / "cfg"), **SMALL)
    monkeypatch.setenv(ENV_OUT, str(tmp_path / "env"))
    assert main(["rate-table", "--config", cfg]) == 0
    assert (tmp_path / "env" / "rate.csv").exists()
    assert main(["rate-table", "--config", cfg, "--out", str(tmp_path / "flag")]) == 0
    assert (tmp_path / "flag" / "rate.csv").exists()
    monkeypatch.delenv(ENV_OUT)
    assert main(["rate-table", "--config", cfg]) == 0
    assert (tmp_path / "cfg" / "rate_diagnostics.csv").exists()


def test_numerical_failure_exit_code(tmp_path, capsys):
    cfg = write_config(tmp_path, n=200, x_max=10.0)
    assert main(["rate-table", "--config", cfg, "--out", str(tmp_path)]) == 2
    assert "TruncationError" in capsys.readouterr().err


def test_statuses_become_warnings(tmp_path):
    cfg = write_config(tmp_path, eps=[0.2, 0.01], **SMALL)
    assert main(["kartashov-compare", "--config", cfg, "--out", str(tmp_path)]) == 0
    s = json.loads((tmp_path / "kartashov-compare_summary.json").read_text())
    assert any("expansion-divergent" in w for w in s["warnings"])
    _, rows = read_table(tmp_path / "kartashov.csv")
    assert {r["status"] for r in rows} == {"ok", "expansion-divergent"}


def test_config_echo_reproduces_run(tmp_path):
    cfg = write_config(tmp_path, alphas=[0.4], **SMALL)
    assert main(["rate-table", "--config", cfg, "--out", str(tmp_path / "a")]) == 0
    header, _ = read_table(tmp_path / "a" / "rate.csv")
    echo = json.loads(next(h for h in header if h.startswith("# config="))[len("# config="):])
    echo = {k: v for k, v in echo.items() if v is not None}
    cfg2 = write_config(tmp_path, **echo)
    assert main(["rate-table", "--config", cfg2, "--out", str(tmp_path / "b")]) == 0
    assert (tmp_path / "a" / "rate.csv").read_bytes() == (tmp_path / "b" / "rate.csv").read_bytes()


@pytest.mark.parametrize(
    "experiment, extra, table",
    [
        ("continuity-profile", {}, "continuity.csv"),
        ("holder-check", {}, "continuity.csv"),
        ("lipschitz-check", {"r": 1.5, "beta": 0.5}, "lipschitz.csv"),
        ("taylor-expansion", {"r": 1.5, "eps": [0.04, 0.02]}, "taylor_remainder.csv"),
    ],
)
def test_remaining_experiments_run(tmp_path, experiment, extra, table):
    cfg = write_config(tmp_path, **SMALL, **extra)
    assert main([experiment, "--config", cfg, "--out", str(tmp_path)]) == 0
    _, rows = read_table(tmp_path / table)
    assert rows
    s = json.loads((tmp_path / f"{experiment}_summary.json").read_text())
    assert s["experiment"] == experiment
    assert all(np.isfinite(float(v)) for r in rows for k, v in r.items()
               if k not in ("status",) and v not in ("true", "false", "nan"))
