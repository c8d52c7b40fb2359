import csv
import json
import statistics
from collections import defaultdict

import numpy as np
import pytest

from giwsmooth import cli
from giwsmooth.checks import CheckResult
from giwsmooth.simulation import ResultTable


def _simulate(tmp_path, name, *extra):
    out = tmp_path / name
    rc = cli.main(["simulate", "--config", "cv_lowpd", "--out", str(out), *extra])
    return rc, out


def test_presets_load():
    pds = {name: cli.load_config(name).p_D for name in cli.PRESETS}
    assert pds == {"cv_lowpd": 0.25, "cv_highpd": 0.75, "ct_lowpd": 0.25, "ct_highpd": 0.75}
    assert cli.load_config("ct_highpd").truth_model == "CT"


def test_simulate_is_byte_identical(tmp_path):
    rc1, a = _simulate(tmp_path, "a", "--runs", "1", "--seed", "7")
    rc2, b = _simulate(tmp_path, "b", "--runs", "1", "--seed", "7")
    assert rc1 == rc2 == 0
    for f in ("gwd.csv", "summary.csv"):
        assert (a / f).read_bytes() == (b / f).read_bytes()


def test_row_count_and_header(tmp_path):
    rc, out = _simulate(tmp_path, "o", "--runs", "2", "--trackers", "ccv,fct")
    assert rc == 0
    with open(out / "gwd.csv", newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["run", "tracker", "k", "mode", "gwd"]
    assert len(rows) - 1 == 2 * 2 * 50 * 3
    assert {r[3] for r in rows[1:]} == {"predict", "filter", "smooth"}
    # 17 significant digits survive a round trip.
    assert all(float(repr(float(r[4]))) == float(r[4]) for r in rows[1:20])


def test_summary_matches_independent_recomputation(tmp_path):
    rc, out = _simulate(tmp_path, "o", "--runs", "3", "--seed", "11")
    assert rc == 0
    groups = defaultdict(list)
    with open(out / "gwd.csv", newline="") as fh:
        for row in csv.DictReader(fh):
            groups[row["tracker"], row["k"], row["mode"]].append(float(row["gwd"]))
    with open(out / "summary.csv", newline="") as fh:
        summary = list(csv.DictReader(fh))
    assert len(summary) == len(groups)
    for row in summary:
        ref = statistics.median(groups[row["tracker"], row["k"], row["mode"]])
        assert float(row["median_gwd"]) == pytest.approx(ref, rel=1e-15)


def test_manifest(tmp_path):
    rc, out = _simulate(tmp_path, "o", "--runs", "1", "--seed", "5", "--trackers", "fcv")
    m = json.loads((out / "manifest.json").read_text())
    assert m["seed"] == 5 and m["config"]["num_runs"] == 1
    assert m["divergences"] == {"FCV": 0}
    assert set(m["smoother_counters"]["FCV"]) >= {"extent_fallbacks", "skipped_increments"}
    assert m["wall_clock_seconds"] >= 0
    assert m["version"] == cli.__version__


def test_bad_config_reports_line_and_field(tmp_path, capsys):
    cfg = tmp_path / "bad.ini"
    cfg.write_text("[scenario]\nK = 20\n\nN_z = ten\n")
    rc = cli.main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "o")])
    assert rc == cli.EXIT_CONFIG
    err = capsys.readouterr().err
    assert "bad.ini:4" in err and "N_z" in err


@pytest.mark.parametrize("text, needle", [
    ("[scenario]\ncolour = red\n", "unknown field"),
    ("[scenario]\np_D = 2\n", "p_D"),
    ("K = 3\n", "section"),
    ("[scenario]\n[other]\n", "unexpected section"),
])
def test_config_errors(text, needle):
    with pytest.raises(cli.ConfigError, match=needle):
        cli.parse_config_text(text, "x.ini")


def test_config_accepts_pi_expressions():
    c = cli.parse_config_text("[scenario]\nsigma_omega = pi/90\n")
    assert c.sigma_omega == pytest.approx(np.pi / 90)


def test_missing_config(tmp_path, capsys):
    rc = cli.main(["simulate", "--config", "nope", "--out", str(tmp_path)])
    assert rc == cli.EXIT_CONFIG
    assert "no such file or preset" in capsys.readouterr().err


def test_bad_override_exits_nonzero(tmp_path):
    rc = cli.main(["simulate", "--config", "cv_lowpd", "--out", str(tmp_path), "--trackers", "abc"])
    assert rc == cli.EXIT_CONFIG


def test_divergence_exit(tmp_path, monkeypatch):
    def fake(config, workers=1):
        valid = np.ones((5, 1), dtype=bool)
        valid[:1] = False
        return ResultTable(("CCV",), np.ones((5, 1, 4, 3)), valid, {"CCV": {}})

    monkeypatch.setattr(cli, "run_monte_carlo", fake)
    rc = cli.main(["simulate", "--config", "cv_lowpd", "--out", str(tmp_path / "o")])
    assert rc == cli.EXIT_DIVERGED
    assert (tmp_path / "o" / "manifest.json").exists()


def test_selftest_exit_codes(monkeypatch, capsys):
    monkeypatch.setattr(cli, "run_selftest", lambda level: [CheckResult("a", True, ""), CheckResult("b", False, "x")])
    assert cli.main(["selftest"]) == cli.EXIT_FAILED
    assert "FAIL" in capsys.readouterr().out
    monkeypatch.setattr(cli, "run_selftest", lambda level: [CheckResult("a", True, "")])
    assert cli.main(["selftest", "--level", "deep"]) == cli.EXIT_OK


@pytest.mark.slow
def test_selftest_basic_passes(capsys):
    assert cli.main(["selftest", "--level", "basic"]) == 0
    assert "FAIL" not in capsys.readouterr().out
