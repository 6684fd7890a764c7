import json
import subprocess
import sys

import pytest

from heavytail.cli import main, parse_distribution
from heavytail.errors import ConfigError
from heavytail.tail_model import Pareto, Weibull


def run(capsys, *argv):
    try:
        code = main(list(argv))
    except SystemExit as exc:  # argparse usage errors
        code = exc.code
    out, err = capsys.readouterr()
    return code, out, err


def test_bound_example(capsys):
    code, out, _ = run(capsys, "bound", "--tail", "subexp", "--k", "1", "--mean", "1",
                       "--m", "100", "--t", "10", "--beta", "0.5")
    assert code == 0
    doc = json.loads(out)
    assert doc["regime"] == "HeavyTail"
    assert doc["t_max"] < 10
    assert doc["total"] == pytest.approx(doc["exp_term"] + doc["union_term"])
    assert doc["c_beta_used"]["method"] == "ExactQuadrature"


def test_bound_closed_form_fixed_point(capsys):
    code, out, _ = run(capsys, "tmax", "--tail", "subexp", "--k", "1", "--mean", "1",
                       "--m", "100", "--beta", "0.5", "--c-method", "closed")
    assert code == 0
    assert json.loads(out)["t_max"] == pytest.approx(0.5 * 6.1504, abs=1e-3)


@pytest.mark.parametrize("argv", [
    ("bound", "--tail", "subexp", "--k", "1", "--t", "1", "--beta", "0.5"),
    ("bound", "--tail", "subexp", "--k", "1", "--m", "10", "--t", "1", "--beta", "1.5"),
    ("bound", "--tail", "subexp", "--m", "10", "--t", "1"),
    ("bound", "--tail", "subexp", "--k", "1", "--m", "10", "--t", "-1"),
    ("bound", "--tail", "subweibull", "--alpha", "2", "--m", "10", "--t", "1", "--c-method", "constant"),
    ("bound", "--tail", "subexp", "--k", "1", "--mean", "3", "--m", "10", "--t", "1"),
    ("cbeta", "--tail", "polynomial", "--gamma", "3", "--L", "0", "--beta", "0.5"),
    ("nonsense",),
])
def test_usage_errors_exit_2(capsys, argv):
    code, _, err = run(capsys, *argv)
    assert code == 2
    assert "usage" in err


def test_numerical_failure_exits_1(capsys):
    code, _, err = run(capsys, "bound", "--tail", "subweibull", "--alpha", "2", "--m", "10",
                       "--t", "1", "--c-method", "constant", "--c", "inf")
    assert code == 1
    assert "DivergentC" in err


def test_cbeta_exponential(capsys):
    code, out, _ = run(capsys, "cbeta", "--tail", "subexp", "--k", "1", "--L", "50", "--beta", "0.5")
    assert code == 0
    est = {e["method"]: e["value"] for e in json.loads(out)["estimates"]}
    assert est["ExactQuadrature"] == pytest.approx(6.15, abs=0.01)
    assert est["ClosedFormSubExp"] == pytest.approx(6.1504, abs=1e-3)


def test_cbeta_subweibull_chain_ordered(capsys):
    code, out, _ = run(capsys, "cbeta", "--tail", "subweibull", "--alpha", "2", "--L", "1e4",
                       "--beta", "0.5")
    assert code == 0
    values = [e["value"] for e in json.loads(out)["estimates"]]
    assert [e["method"] for e in json.loads(out)["estimates"]] == [
        "ExactQuadrature", "RatioBound", "ClosedFormSubWeibull"]
    assert values == sorted(values)


def test_cbeta_polynomial_branch(capsys):
    code, out, _ = run(capsys, "cbeta", "--tail", "polynomial", "--gamma", "3", "--L", "100",
                       "--beta", str(1 - 2 / 3))
    assert code == 0
    doc = json.loads(out)
    closed = [e for e in doc["estimates"] if e["method"] == "ClosedFormPolynomial"]
    assert closed[0]["branch"] == "beta = 1 - 2/gamma"
    assert any("RatioBound skipped" in n for n in doc["notes"])


def test_tabulated_tail(capsys, tmp_path):
    table = tmp_path / "tail.csv"
    table.write_text("t,I\n0,0\n1,1\n4,2\n100,10\n")
    code, out, _ = run(capsys, "tmax", "--tail", "tabulated", "--table", str(table), "--m", "10",
                       "--beta", "0.5", "--c-method", "constant", "--c", "2")
    assert code == 0
    doc = json.loads(out)
    assert doc["t_max"] > 0
    assert doc["tail"]["growth_class"] == "SubLinear"
    assert "heuristic" in doc["tail"]["growth_heuristic"]


def test_parse_distribution():
    assert parse_distribution("weibull(alpha=2, c_alpha=1)") == Weibull(2.0, 1.0)
    assert parse_distribution("pareto(gamma=3)") == Pareto(3.0)
    with pytest.raises(ConfigError):
        parse_distribution("weibull(alpha=two)")
    with pytest.raises(ConfigError):
        parse_distribution("gaussian(mu=0)")
    with pytest.raises(ConfigError):
        parse_distribution("weibull(alpha)")


CONFIG = """
[monte_carlo]
n_samples = 20000
batch_size = 10000
seed = 42

[domination.small]
distributions = ["exponential(k=1)", "weibull(alpha=2, c_alpha=1)", "pareto(gamma=3)"]
m_grid = [20]

[ld.boundary]
distribution = "weibull(alpha=2, c_alpha=1)"
a = 1.0
p = 0.6666666666666666
m_grid = [100, 1000, 10000]

[ld.sqrt]
distribution = "pareto(gamma=3)"
p = 0.5
m_grid = [100, 1000]
"""


def test_experiment_outputs(capsys, tmp_path, monkeypatch):
    monkeypatch.delenv("HEAVYTAIL_SEED", raising=False)
    cfg = tmp_path / "exp.toml"
    cfg.write_text(CONFIG)
    code, out, _ = run(capsys, "experiment", str(cfg), "--out", str(tmp_path / "a"))
    assert code == 0
    rows = (tmp_path / "a" / "small.csv").read_text().splitlines()
    assert len(rows) == 1 + 24
    assert "domination.small: 24 passed, 0 failed" in out
    boundary = json.loads((tmp_path / "a" / "boundary.json").read_text())
    assert boundary["skipped"] is True
    assert "not decreasing" in boundary["reason"]
    assert "ConditionError" in json.loads((tmp_path / "a" / "sqrt.json").read_text())["reason"]
    assert json.loads((tmp_path / "a" / "small.json").read_text())["seed"] == 42

    run(capsys, "experiment", str(cfg), "--out", str(tmp_path / "b"))
    first = (tmp_path / "a" / "small.csv").read_bytes()
    assert first == (tmp_path / "b" / "small.csv").read_bytes()

    monkeypatch.setenv("HEAVYTAIL_SEED", "7")
    run(capsys, "experiment", str(cfg), "--out", str(tmp_path / "c"))
    assert json.loads((tmp_path / "c" / "small.json").read_text())["seed"] == 7
    assert first != (tmp_path / "c" / "small.csv").read_bytes()


def test_closed_c_method_rejected_for_experiments(capsys, tmp_path):
    cfg = tmp_path / "bad.toml"
    cfg.write_text(CONFIG.replace("m_grid = [20]", 'm_grid = [20]\nc_method = "closed"'))
    code, _, err = run(capsys, "experiment", str(cfg), "--out", str(tmp_path))
    assert code == 2
    assert "c_method" in err


def test_domination_failure_exits_1_and_keeps_outputs(capsys, tmp_path, monkeypatch):
    import heavytail.cli as cli
    from heavytail.concentration import constant_provider

    monkeypatch.delenv("HEAVYTAIL_SEED", raising=False)
    # a constant far below c_{L,beta} makes the bound undercut the truth
    monkeypatch.setattr(cli, "exact_provider", lambda d, f: constant_provider(1e-3))
    cfg = tmp_path / "bad.toml"
    cfg.write_text("""
[monte_carlo]
n_samples = 20000
seed = 1

[domination.wrong]
distribution = "exponential(k=1)"
m_grid = [100]
t_grid = [0.2, 3.0]
beta = 0.5

[domination.later]
distribution = "exponential(k=1)"
m_grid = [100]
t_grid = [0.2]
beta = 0.5
""")
    code, out, err = run(capsys, "experiment", str(cfg), "--out", str(tmp_path))
    assert code == 1
    assert "experiment domination.wrong failed" in err
    assert "domination.wrong: 1 passed, 1 failed" in out
    assert (tmp_path / "wrong.csv").exists() and (tmp_path / "later.csv").exists()


@pytest.mark.parametrize("text,fragment", [
    ("[domination.x]\nm_grid = [10]\n", "missing distribution"),
    ('[domination.x]\ndistribution = "exponential(k=1)"\n', "missing m_grid"),
    ('[domination.x]\ndistribution = "exponential(k=1)"\nm_grid = [10]\ncolour = 1\n', "unknown key"),
    ("[surprise]\n", "unknown section"),
    ("[monte_carlo]\nseed = 1\n", "no [domination.*]"),
    ("not toml ===", "exp.toml"),
])
def test_config_errors_exit_2(capsys, tmp_path, text, fragment):
    cfg = tmp_path / "exp.toml"
    cfg.write_text(text)
    code, _, err = run(capsys, "experiment", str(cfg), "--out", str(tmp_path))
    assert code == 2
    assert fragment in err


def test_bad_seed_env(capsys, tmp_path, monkeypatch):
    cfg = tmp_path / "exp.toml"
    cfg.write_text(CONFIG)
    monkeypatch.setenv("HEAVYTAIL_SEED", "abc")
    code, _, err = run(capsys, "experiment", str(cfg), "--out", str(tmp_path))
    assert code == 2
    assert "HEAVYTAIL_SEED" in err


def test_ldcheck(capsys, tmp_path, monkeypatch):
    monkeypatch.delenv("HEAVYTAIL_SEED", raising=False)
    code, out, _ = run(capsys, "ldcheck", "--distribution", "weibull(alpha=2, c_alpha=1)",
                       "--m-grid", "100,1000,10000")
    assert code == 0
    doc = json.loads(out)
    assert doc["admissible"] is True
    assert doc["boundary_class"] == "AboveBoundary"

    csv_path = tmp_path / "ld.csv"
    code, out, _ = run(capsys, "ldcheck", "--distribution", "weibull(alpha=2, c_alpha=1)",
                       "--a", "0.2", "--m-grid", "20,40", "--simulate", "--n-samples", "20000",
                       "--seed", "5", "--csv", str(csv_path))
    assert code == 0
    assert json.loads(out)["seed"] == 5
    assert csv_path.read_text().startswith("m,gamma_m,p_hat")

    code, _, err = run(capsys, "ldcheck", "--distribution", "pareto(gamma=3)", "--p", "0.5",
                       "--m-grid", "10,100")
    assert code == 1
    assert "ConditionError" in err


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "heavytail", "tmax", "--tail", "subweibull",
                           "--alpha", "2", "--m", "100", "--beta", "0.5", "--c-method",
                           "constant", "--c", "1"], capture_output=True, text=True, check=False)
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["t_max"] == pytest.approx(0.13572088082974534, rel=1e-8)
