import json
import os

import pytest

from fellerhawkes.cli import main

EXP = 'kernel = { type = "exponential", rate = 1.0 }'


def write(tmp_path, text, name="c.toml"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def run(tmp_path, command, text, *extra, out="out"):
    code = main([command, "--config", write(tmp_path, text), "--out", str(tmp_path / out),
                 *extra])
    report = tmp_path / out / "report.json"
    return code, (json.loads(report.read_text()) if report.exists() else None)


RICCATI = """
horizon = 2.0
dt = 0.01
[kernel]
{kernel}
[f]
shape = "constant"
c = {c}
"""


class TestRiccati:
    def test_zero_input(self, tmp_path):
        code, rep = run(tmp_path, "riccati", RICCATI.format(kernel=EXP, c=0.0))
        assert code == 0
        gaps = [v for v in rep["verdicts"] if v["name"].startswith("gap_")]
        assert len(gaps) == 3 and all(v["value"] == 0.0 for v in gaps)

    def test_above_half_refuses_series_but_exits_zero(self, tmp_path):
        code, rep = run(tmp_path, "riccati", RICCATI.format(kernel=EXP, c=0.6))
        assert code == 0
        assert [r["method"] for r in rep["refusals"]] == ["series"]
        assert rep["warnings"]

    def test_stationary_check(self, tmp_path):
        text = RICCATI.format(kernel=EXP, c=0.18).replace("horizon = 2.0", "horizon = 20.0")
        code, rep = run(tmp_path, "riccati", text.replace("dt = 0.01", "dt = 0.001"))
        assert code == 0
        (v,) = [v for v in rep["verdicts"] if v["name"] == "stationary_value"]
        assert v["passed"] and v["tolerance"] == 1e-3

    def test_all_methods_refused(self, tmp_path):
        text = RICCATI.format(kernel=EXP, c=3.0).replace("horizon = 2.0", "horizon = 20.0")
        code, rep = run(tmp_path, "riccati", text)
        assert code == 2

    def test_report_schema(self, tmp_path):
        _, rep = run(tmp_path, "riccati", RICCATI.format(kernel=EXP, c=0.1))
        assert rep["schema_version"] == 1
        assert len(rep["config_hash"]) == 64
        assert "total" in rep["timings"]
        assert all("tolerance" in v for v in rep["verdicts"])


SIM = """
seed = 3
horizon = 5.0
dt = 0.001
replications = {reps}
eps = 0.1
[kernel]
kernel = {{ type = "exponential", rate = 1.0 }}
[background]
kind = "{bg}"
"""


class TestSimulate:
    def test_zero_replications_is_config_error(self, tmp_path):
        code, _ = run(tmp_path, "simulate", SIM.format(reps=0, bg="lebesgue"))
        assert code == 1

    def test_zero_background(self, tmp_path):
        code, rep = run(tmp_path, "simulate", SIM.format(reps=5, bg="zero"))
        assert code == 0
        assert all(row["mean"] == 0 and row["prediction"] == 0
                   for row in rep["tables"]["mean_counts"])

    @pytest.mark.slow
    def test_mean_count_matches_prediction(self, tmp_path):
        code, rep = run(tmp_path, "simulate", SIM.format(reps=2000, bg="lebesgue"))
        assert code == 0

    def test_rerun_byte_identical_and_thread_independent(self, tmp_path):
        text = SIM.format(reps=150, bg="lebesgue")
        run(tmp_path, "simulate", text, out="a")
        run(tmp_path, "simulate", text, out="b")
        run(tmp_path, "simulate", text, "--threads", "2", out="c")
        a = (tmp_path / "a" / "points.csv").read_bytes()
        assert a == (tmp_path / "b" / "points.csv").read_bytes()
        assert a == (tmp_path / "c" / "points.csv").read_bytes()
        assert a.splitlines()[0] == b"replication,time,generation,cluster_id"

    def test_seed_override(self, tmp_path):
        text = SIM.format(reps=20, bg="lebesgue")
        run(tmp_path, "simulate", text, out="a")
        run(tmp_path, "simulate", text, "--seed", "4", out="b")
        assert (tmp_path / "a" / "points.csv").read_bytes() != \
            (tmp_path / "b" / "points.csv").read_bytes()


class TestVerifyLimit:
    TEXT = """
seed = 1
horizon = 2.0
dt = 0.001
replications = 300
eps = {eps}
t = [1.0, 2.0]
[kernel]
mode = "periodic"
kernels = [{{ type = "exponential", rate = 1.0 }}, {{ type = "exponential", rate = 2.0 }}]
[f]
shape = "constant"
c = {c}
"""

    def test_single_eps_is_config_error(self, tmp_path):
        code, _ = run(tmp_path, "verify-limit", self.TEXT.format(eps="[0.1]", c=-0.3))
        assert code == 1

    def test_positive_f_is_config_error(self, tmp_path):
        code, _ = run(tmp_path, "verify-limit", self.TEXT.format(eps="[0.2, 0.1]", c=0.3))
        assert code == 1

    def test_periodic_pipeline(self, tmp_path):
        code, rep = run(tmp_path, "verify-limit", self.TEXT.format(eps="[0.2, 0.1]", c=-0.3))
        assert code in (0, 3)
        assert len(rep["tables"]["comparisons"]) == 2
        assert (tmp_path / "out" / "laplace.csv").exists()

    def test_null_array_warning(self, tmp_path):
        text = self.TEXT.format(eps="[0.2, 0.1]", c=-0.3) + "[verify]\nnull_threshold = 0.01\n"
        _, rep = run(tmp_path, "verify-limit", text)
        assert any("null array" in w for w in rep["warnings"])


def test_cumulants_and_covariance(tmp_path):
    text = """
horizon = 2.0
dt = 0.01
[kernel]
kernel = { type = "mittag_leffler", alpha = 0.6, scale = 1.0 }
[f]
shape = "ramp"
c = 0.1
[covariance]
stride = 10
"""
    code, _ = run(tmp_path, "cumulants", text, out="k")
    assert code == 0
    assert (tmp_path / "k" / "cumulants.csv").read_text().startswith("t,k1,k2,k3,k4\n")
    code, rep = run(tmp_path, "covariance", text, out="s")
    assert code == 0
    meta = json.loads((tmp_path / "s" / "covariance.json").read_text())
    assert meta["alpha"] == 0.6 and meta["mu_kind"] == "lebesgue"
    assert "C_after_scale" in rep["tables"]["envelope"]


def test_usage_error_exit_code(capsys):
    assert main(["frobnicate"]) == 1
    assert main(["riccati"]) == 1


def test_unwritable_output(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    code = main(["riccati", "--config", write(tmp_path, RICCATI.format(kernel=EXP, c=0.1)),
                 "--out", str(blocker / "sub")])
    assert code == 1


def test_output_dir_env(tmp_path, monkeypatch):
    monkeypatch.setenv("OUTPUT_DIR", str(tmp_path / "env"))
    code = main(["riccati", "--config", write(tmp_path, RICCATI.format(kernel=EXP, c=0.1))])
    assert code == 0
    assert (tmp_path / "env" / "report.json").exists()
