"""End-to-end CLI tests: exit codes, JSON determinism, artifact writing."""

import json
import math

import pytest

import macfb.dp
from macfb import cli

XOR = """
[problem]
x1_size = 2
x2_size = 2
z_size = 2
m1 = 2
m2 = 2

[channel]
generator = "xor-bsc"
p = 0.1

[run]
horizon = 2
seed = 42
trials = 20000
lambda = [0.0, 0.0, 1.0]
lambdas = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]
"""

IDENTITY = """
[problem]
x1_size = 2
x2_size = 2
z_size = 4
m1 = 2
m2 = 2

[channel]
generator = "identity-pair"

[run]
horizon = 1
lambda = [0.0, 0.0, 1.0]
"""


def _conf(tmp_path, text, name="exp.toml"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def _run(capsys, argv):
    code = cli.main(argv)
    return code, capsys.readouterr().out


def test_canonical_json_formatting():
    doc = {"b": 1, "a": [0.1, 2.0, True, None], "s": "x\"y"}
    text = cli.canonical_json(doc)
    # insertion order, 17 significant digits, trailing newline
    assert text == '{"b": 1, "a": [0.10000000000000001, 2, true, null], "s": "x\\"y"}\n'
    with pytest.raises(ValueError):
        cli.canonical_json({"v": math.nan})


def test_validate_and_solve(tmp_path, capsys):
    conf = _conf(tmp_path, IDENTITY)
    code, out = _run(capsys, ["validate", "--config", conf])
    assert code == 0
    assert json.loads(out)["stochastic"] is True

    code, out = _run(capsys, ["solve-dp", "--config", conf])
    assert code == 0
    doc = json.loads(out)
    assert doc["pe_star"] == 0.0
    assert doc["level_sizes"][0] == 1


def test_solve_rational_flag(tmp_path, capsys):
    conf = _conf(tmp_path, XOR)
    code, out = _run(capsys, ["solve-dp", "--config", conf, "--rational"])
    assert code == 0
    doc = json.loads(out)
    num, den = doc["pe_star_exact"].split("/")
    assert abs(int(num) / int(den) - doc["pe_star"]) < 1e-12


def test_byte_identical_output_and_artifact(tmp_path, capsys):
    conf = _conf(tmp_path, XOR)
    _, out1 = _run(capsys, ["solve-dp", "--config", conf])
    code, out2 = _run(capsys, ["solve-dp", "--config", conf, "--out", str(tmp_path / "art")])
    assert code == 0
    assert out1 == out2
    assert (tmp_path / "art" / "solve_dp.json").read_text() == out2


def test_eval_policy_and_simulate(tmp_path, capsys):
    conf = _conf(tmp_path, XOR)
    code, out = _run(capsys, ["eval-policy", "--config", conf])
    assert code == 0
    assert json.loads(out)["consistent"] is True

    code, out = _run(capsys, ["simulate", "--config", conf])
    doc = json.loads(out)
    assert code == 0
    assert doc["trials"] == 20000
    assert abs(doc["error_rate"] - doc["exact_value"]) < 0.02


def test_oracle_unstructured(tmp_path, capsys):
    conf = _conf(tmp_path, XOR.replace("horizon = 2", "horizon = 1"))
    code, out = _run(capsys, ["oracle-unstructured", "--config", conf])
    assert code == 0
    assert json.loads(out)["agree"] is True


def test_costs_subcommand(tmp_path, capsys):
    conf = _conf(tmp_path, XOR.replace(
        'seed = 42', 'seed = 42\nobjective = "joint_entropy_drift"'))
    code, out = _run(capsys, ["costs", "--config", conf])
    assert code == 0
    doc = json.loads(out)
    assert doc["telescoping_abs_diff"] < 1e-10
    assert doc["initial_constant"] == 2.0


def test_costs_rejects_error_probability(tmp_path, capsys):
    conf = _conf(tmp_path, XOR)
    code, _ = _run(capsys, ["costs", "--config", conf])
    assert code == 2


def test_fixed_point_uniform_average(tmp_path, capsys):
    conf = _conf(tmp_path, """
[problem]
x1_size = 2
x2_size = 2
z_size = 2
m1 = 2
m2 = 2

[channel]
generator = "uniform"

[run]
horizon = 1
objective = "joint_entropy_drift"

[fixed_point]
grid_resolution = 6
mode = "average"
tol = 1e-10
""")
    code, out = _run(capsys, ["fixed-point", "--config", conf])
    assert code == 0
    doc = json.loads(out)
    assert doc["converged"] is True
    assert abs(doc["gain"]) < 1e-9
    assert doc["value_at_uniform"] == 0.0


def test_capacity_eval_with_oracle(tmp_path, capsys):
    conf = _conf(tmp_path, XOR.replace("seed = 42", "seed = 42\noracle = true"))
    code, out = _run(capsys, ["capacity-eval", "--config", conf])
    assert code == 0
    doc = json.loads(out)
    assert doc["oracle_agrees"] is True
    assert doc["bound_type"] == "structured_deterministic_lower_bound"


def test_capacity_search_identity(tmp_path, capsys):
    conf = _conf(tmp_path, IDENTITY)
    code, out = _run(capsys, ["capacity-search", "--config", conf])
    assert code == 0
    assert json.loads(out)["value"] == 2.0


def test_lambda_sweep_artifacts(tmp_path, capsys):
    conf = _conf(tmp_path, XOR)
    code, out = _run(capsys, ["lambda-sweep", "--config", conf, "--out", str(tmp_path / "o")])
    assert code == 0
    doc = json.loads(out)
    assert len(doc["rows"]) == 3
    assert all(r["error"] is None for r in doc["rows"])
    csv = (tmp_path / "o" / "lambda_sweep.csv").read_text()
    assert csv.splitlines()[0] == "λ1,λ2,λ3,In_lambda,I1,I2,I3"


def test_lambda_sweep_rows_survive_errors(tmp_path, capsys):
    conf = _conf(tmp_path, XOR + "\n[caps]\npolicies = 5\n")
    code, out = _run(capsys, ["lambda-sweep", "--config", conf])
    assert code == 0
    doc = json.loads(out)
    assert all("BudgetExceeded" in r["error"] for r in doc["rows"])


def test_check_invariants_passes(tmp_path, capsys):
    conf = _conf(tmp_path, XOR)
    code, out = _run(capsys, ["check-invariants", "--config", conf])
    assert code == 0
    doc = json.loads(out)
    assert doc["all_passed"] is True
    assert {c["name"] for c in doc["checks"]} == {
        "belief_update_consistency",
        "private_public_factorization",
        "stage_vs_history_information",
        "kernel_policy_independence",
    }


def test_exit_code_config_error(tmp_path, capsys):
    bad = _conf(tmp_path, XOR.replace('generator = "xor-bsc"', 'generator = "bogus"'))
    assert cli.main(["solve-dp", "--config", bad]) == 2
    assert cli.main(["solve-dp", "--config", str(tmp_path / "missing.toml")]) == 2
    capsys.readouterr()


def test_exit_code_budget(tmp_path, capsys):
    conf = _conf(tmp_path, XOR)
    assert cli.main(["solve-dp", "--config", conf, "--cap-nodes", "2"]) == 3
    capsys.readouterr()


def test_exit_code_invariant_failure(tmp_path, capsys, monkeypatch):
    conf = _conf(tmp_path, XOR)
    monkeypatch.setattr(macfb.dp, "check_belief_recursion", lambda *a, **k: 1.0)
    code, out = _run(capsys, ["check-invariants", "--config", conf])
    assert code == 4
    assert json.loads(out)["all_passed"] is False


def test_log_base_override(tmp_path, capsys):
    conf = _conf(tmp_path, IDENTITY)
    code, out = _run(capsys, ["capacity-search", "--config", conf, "--log-base", "nats"])
    assert code == 0
    assert abs(json.loads(out)["value"] - 2.0 * math.log(2.0)) < 1e-12
