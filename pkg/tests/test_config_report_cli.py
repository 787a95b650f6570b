import csv
import math

import numpy as np
import pytest

from mixlab.cli import main
from mixlab.config import ConfigError, ExperimentConfig, coerce, load_config, parse_config_text
from mixlab.experiments import EXPERIMENTS, run_experiment
from mixlab.report import ExperimentReport, fit_line, write_report
from mixlab.spectral import TorusGrid, read_mixf, write_mixf

P1 = ["--set", "N=256", "--set", "delta_min=0.02", "--set", "delta_max=0.2", "--set", "count=3"]


def test_parse_config_text():
    text = "# header\nN = 64  # inline\n\nT=0.5\nxi_bar = 0.6, 0.8\n"
    assert parse_config_text(text) == {"N": "64", "T": "0.5", "xi_bar": "0.6, 0.8"}


@pytest.mark.parametrize("text,match", [("N 64", "key = value"), ("= 3", "empty key"), ("N=1\nN=2", "duplicate")])
def test_parse_config_errors(text, match):
    with pytest.raises(ConfigError, match=match):
        parse_config_text(text)


@pytest.mark.parametrize("value,default,expected", [
    ("64", 1, 64), ("0.25", 1.0, 0.25), ("yes", False, True), ("off", True, False),
    ("1, 2,4", (1.0,), (1.0, 2.0, 4.0)), ("a,b", ("x",), ("a", "b")), ("cutoff", "gaussian", "cutoff"),
])
def test_coerce(value, default, expected):
    assert coerce("k", value, default) == expected


@pytest.mark.parametrize("value,default", [("abc", 1), ("1.5", 1), ("maybe", True), ("x", 1.0)])
def test_coerce_rejects(value, default):
    with pytest.raises(ConfigError, match="cannot interpret"):
        coerce("k", value, default)


def test_build_rejects_unknown_keys():
    with pytest.raises(ConfigError, match="unknown keys for demo: bogus"):
        ExperimentConfig.build("demo", {"N": 8}, {"bogus": "1"})


def test_digest_is_stable_and_sensitive():
    a = ExperimentConfig.build("demo", {"N": 8, "T": 1.0}, {"N": "16"})
    b = ExperimentConfig.build("demo", {"T": 1.0, "N": 8}, {"N": 16})
    c = ExperimentConfig.build("demo", {"N": 8, "T": 1.0}, {"N": "16"}, seed=1)
    assert a.digest == b.digest and len(a.digest) == 16
    assert a.digest != c.digest
    assert a["N"] == 16 and a.as_dict() == {"N": 16, "T": 1.0}


def test_load_config(tmp_path):
    assert load_config(None) == {}
    (tmp_path / "c.txt").write_text("N = 32\n")
    assert load_config(tmp_path / "c.txt") == {"N": "32"}
    with pytest.raises(ConfigError, match="cannot read"):
        load_config(tmp_path / "missing.txt")


def test_fit_line_exact_and_flagging():
    x = np.arange(6.0)
    slope, intercept, resid, r2 = fit_line(x, 3 * x - 1)
    assert (slope, intercept) == pytest.approx((3.0, -1.0), abs=1e-12) and resid <= 1e-12 and r2 == pytest.approx(1.0)
    rep = ExperimentReport(ExperimentConfig.build("demo", {}, {}))
    good = rep.fit("good", x, 3 * x - 1, 3.0, "upper")
    bad = rep.fit("bad", x, np.array([0, 5, -3, 4, -2, 1.0]), 1.0, "upper")
    assert not good.flagged and bad.flagged
    with pytest.raises(ValueError):
        fit_line([1.0], [2.0])


def _demo_report():
    rep = ExperimentReport(ExperimentConfig.build("demo", {"N": 8, "xs": (1.0, 2.0)}, {}))
    rep.value("answer", 0.1 + 0.2)
    rep.check("ok", True, "fine")
    t = rep.table("curve", ["x", "y"])
    for x in (1.0, 2.0, 3.0):
        t.add(x, x * x)
    rep.fit("curve", [1, 2, 3], [1, 4, 9], 1.0, "upper")
    rep.fields["f"] = TorusGrid(2, 8).zeros()
    rep.figure("curve", "x", ["y"])
    return rep


def test_write_report_layout(tmp_path):
    out = write_report(_demo_report(), tmp_path, timestamp="T0", figures=True)
    rows = list(csv.reader((out / "report.csv").read_text().splitlines()[1:]))
    assert rows[0] == ["experiment", "parameter", "value"]
    assert ["demo", "answer", repr(0.1 + 0.2)] in rows
    assert ["demo", "check.ok", "pass"] in rows
    assert ["demo", "config.xs", "1.0,2.0"] in rows
    assert (out / "fit.csv").read_text().splitlines()[1].startswith("fit,fitted_constant,slope")
    assert (out / "curve.csv").exists() and (out / "curve.png").exists()
    assert read_mixf(out / "fields" / "f.mixf").grid == TorusGrid(2, 8)


def test_write_report_deterministic_apart_from_timestamp(tmp_path):
    a = write_report(_demo_report(), tmp_path / "a", figures=False)
    b = write_report(_demo_report(), tmp_path / "b", timestamp="later", figures=False)
    for name in ("report.csv", "fit.csv", "curve.csv"):
        la, lb = (a / name).read_text().splitlines(), (b / name).read_text().splitlines()
        assert la[0].startswith("# generated") and lb[0] == "# generated later"
        assert la[1:] == lb[1:]


def test_run_experiment_rerun_is_bit_identical(tmp_path):
    values = {"N": "256", "delta_min": "0.02", "delta_max": "0.2", "count": "3"}
    a = write_report(run_experiment("counterexample_part1", values), tmp_path / "a", timestamp="x", figures=False)
    b = write_report(run_experiment("counterexample-part1", values), tmp_path / "b", timestamp="x", figures=False)
    for f in sorted(p.name for p in a.iterdir() if p.is_file()):
        assert (a / f).read_bytes() == (b / f).read_bytes()


def test_every_experiment_registered_with_defaults():
    assert set(EXPERIMENTS) >= {"stability_cascade", "mixing", "field_perturbation", "vanishing_diffusion",
                                "regularity", "commutator_integral", "besov_decay", "counterexample_part1",
                                "counterexample_part2"}
    for defaults, fn in EXPERIMENTS.values():
        assert callable(fn) and len(dict(defaults)) > 0


def test_cli_experiment_pass(tmp_path, capsys):
    assert main(["counterexample-part1", *P1, "--out", str(tmp_path), "--no-figures"]) == 0
    assert "PASS no_uniform_decay" in capsys.readouterr().out
    assert (tmp_path / "report.csv").exists() and (tmp_path / "fit.csv").exists()


def test_cli_experiment_failure_exit_code(tmp_path, capsys):
    code = main(["counterexample_part1", *P1, "--set", "floor_fraction=100", "--out", str(tmp_path), "--no-figures"])
    captured = capsys.readouterr()
    assert code == 1
    assert "FAIL no_uniform_decay" in captured.out and "no_uniform_decay" in captured.err


def test_cli_config_file(tmp_path):
    cfg = tmp_path / "cfg.txt"
    cfg.write_text("N = 256\ndelta_min = 0.02\ndelta_max = 0.2\ncount = 3\n")
    assert main(["counterexample-part1", "--config", str(cfg), "--out", str(tmp_path / "o"), "--no-figures"]) == 0


@pytest.mark.parametrize("argv", [
    ["counterexample-part1", "--set", "bogus=1"],
    ["counterexample-part1", "--set", "N=abc"],
    ["counterexample-part1", "--config", "/nonexistent/cfg.txt"],
    ["simulate", "--set", "flow=vortex"],
    ["simulate", "--set", "N=100"],
    ["norm", "--kind", "dual", "--input", "/nonexistent.mixf"],
])
def test_cli_configuration_errors(argv, tmp_path, capsys):
    assert main([*argv, "--out", str(tmp_path)] if argv[0] != "norm" else argv) == 2
    assert "configuration error" in capsys.readouterr().err


def test_cli_simulate(tmp_path):
    out = tmp_path / "sim"
    argv = ["simulate", "--set", "N=64", "--set", "T=0.5", "--set", "samples=5", "--set", "dump_every=2", "--out", str(out)]
    assert main(argv) == 0
    rows = list(csv.reader((out / "trajectory.csv").read_text().splitlines()))
    assert rows[0][:4] == ["time", "L2", "L4", "accumulator"] and "W-1,2_exact" in rows[0]
    assert float(rows[-1][0]) == pytest.approx(0.5)
    assert (out / "fields" / "rho_final.mixf").exists()


def test_cli_counterexample_and_norm(tmp_path, capsys):
    out = tmp_path / "ce"
    assert main(["counterexample", "--set", "N=256", "--set", "n_max=2", "--out", str(out)]) == 0
    rows = list(csv.reader((out / "terms.csv").read_text().splitlines()))
    assert rows[0] == ["n", "delta", "amplitude", "omega1", "omega2"] and len(rows) == 3
    assert float(rows[1][1]) == 0.5 and float(rows[2][1]) == 2.0**-4
    capsys.readouterr()
    field = str(out / "fields" / "density.mixf")
    for kind in ("dual", "besov", "logd"):
        assert main(["norm", "--kind", kind, "--input", field]) == 0
        value = float(capsys.readouterr().out.strip().split("\t")[-1])
        assert math.isfinite(value) and value > 0


def test_cli_norm_matches_library(tmp_path, capsys):
    g = TorusGrid(2, 32)
    x1, _ = g.coords
    f = g.field(lambda a, b: np.sin(2 * np.pi * a) + 0 * b)
    write_mixf(tmp_path / "f.mixf", f)
    assert main(["norm", "--kind", "dual", "--input", str(tmp_path / "f.mixf"), "--L", "inf"]) == 0
    value = float(capsys.readouterr().out.strip().split("\t")[-1])
    assert value == pytest.approx((1 / math.sqrt(2)) / (2 * math.pi), rel=1e-12)


def test_cli_commutator_scan(tmp_path):
    out = tmp_path / "scan"
    argv = ["commutator-scan", "--set", "N=128", "--set", "delta_min=0.01", "--set", "delta_max=1", "--out", str(out)]
    assert main(argv) == 0
    rows = list(csv.reader((out / "scan.csv").read_text().splitlines()))
    assert rows[0] == ["delta", "norm_r", "envelope_small", "envelope_large"] and len(rows) == 18
