import json
from pathlib import Path

import numpy as np
import pytest

from genperm.cli import dumps_report, load_matrix, main, run
from genperm.errors import InputError

DATA = Path(__file__).parent / "data"
MODEL = str(DATA / "toy_a_model.json")


def body(report):
    report = dict(report)
    report.pop("timing")
    return dumps_report(report)


def test_test_command_toy_a():
    rep, code = run(["test", "--model", MODEL, "--x", str(DATA / "toy_a_x.csv"), "--alpha", "0.05"])
    assert code == 0
    assert rep["results"]["phi"] == pytest.approx(0.075161, abs=1e-6)
    assert rep["results"]["p_value"]["paper-definition"] == 0.0
    assert rep["results"]["p_value"]["tie-inclusive"] == pytest.approx(0.665241, abs=1e-6)


def test_scan_command():
    rep, code = run(["scan", "--model", MODEL, "--x-values", "1,3,2"])
    assert code == 0 and rep["results"]["r"] == 2 and rep["results"]["D"] == 3
    assert rep["results"]["top_k_weights"][0]["weight"] == pytest.approx(0.665241, abs=1e-6)


def test_pvalue_sampling_validation():
    args = ["pvalue", "--model", MODEL, "--x-values", "1,3,2", "--method", "direct"]
    assert run(args + ["--samples", "0", "--seed", "1"])[1] == 2
    assert run(args + ["--samples", "10"])[1] == 2
    rep, code = run(args + ["--samples", "300", "--seed", "4"])
    assert code == 0 and 0 <= rep["results"]["alpha_hat"] <= 1


@pytest.mark.parametrize("method", ["exact", "direct", "indirect"])
def test_pvalue_methods(method):
    rep, code = run(["pvalue", "--model", MODEL, "--x-values", "1,3,2", "--method", method,
                     "--samples", "2000", "--seed", "3"])
    assert code == 0
    val = rep["results"].get("alpha_hat", rep["results"].get("alpha_strict"))
    assert val == pytest.approx(0.665241, abs=0.06)


def test_geometric_command():
    rep, code = run(["pvalue", "--model", str(DATA / "gauss3_model.json"), "--x-values", "0.3,-1,2",
                     "--method", "geometric", "--samples", "500", "--seed", "2"])
    assert code == 0 and rep["results"]["method"] == "indirect-geometric"
    assert "approximate-constants" in rep["results"]["bounds"]["flags"]


def test_vc_command():
    rep, code = run(["vc-test", "--y", str(DATA / "toy_d_y.csv"), "--A", str(DATA / "toy_d_A.csv"),
                     "--lambda2", "1"])
    assert code == 0
    assert rep["results"]["alpha_strict"] == pytest.approx(0.745779, abs=1e-5)


def test_lm_command(tmp_path):
    np.savetxt(tmp_path / "y.csv", [[1.13, 3.71, 2.29, 0.57]], delimiter=",")
    np.savetxt(tmp_path / "X.csv", [[1.0], [2.0], [3.0], [4.0]], delimiter=",")
    np.savetxt(tmp_path / "S.csv", np.eye(4), delimiter=",")
    rep, code = run(["lm-test", "--y", str(tmp_path / "y.csv"), "--X", str(tmp_path / "X.csv"),
                     "--Sigma0", str(tmp_path / "S.csv"), "--u", "1", "--alpha", "0.1"])
    assert code == 0 and rep["results"]["D"] == 24


def test_bernstein_command():
    rep, code = run(["bernstein", "--model", MODEL, "--x-values", "1,2,3", "--samples", "2",
                     "--delta", "0.05"])
    assert code == 0
    assert rep["results"]["phi_hat"] == pytest.approx(0.477814, abs=1e-6)
    assert "concentration" in rep["results"]


def test_demo_and_validate():
    rep, code = run(["demo-np", "--samples", "300", "--seed", "1"])
    assert code == 0 and rep["results"]["swap_identity_max_error"] <= 1e-10
    rep, code = run(["validate"])
    assert code == 0 and rep["results"]["all_pass"]


def test_exit_codes(tmp_path):
    assert run(["test", "--model", MODEL, "--x-values", "1,2", "--alpha", "0.05"])[1] == 2
    assert run(["test", "--model", MODEL, "--x-values", "1,2,3", "--alpha", "2"])[1] == 2
    assert run(["nonsense"])[1] == 2
    assert run(["test", "--model", str(tmp_path / "missing.json"), "--x-values", "1,2,3"])[1] == 2
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"g0": {"type": "gaussian", "mean": [0, 0], "cov": [[1, 2], [2, 1]]},
                               "g1": {"type": "linear-exp", "coef": [1, 0]}}))
    rep, code = run(["test", "--model", str(bad), "--x-values", "1,2"])
    assert code == 3 and rep["error"]["kind"] == "NotPositiveDefinite"
    big = ",".join(str(i) for i in range(10))
    cfg = tmp_path / "big.json"
    cfg.write_text(json.dumps({"g0": {"type": "linear-exp", "coef": [0] * 10},
                               "g1": {"type": "linear-exp", "coef": list(range(10))}}))
    assert run(["scan", "--model", str(cfg), "--x-values", big])[1] == 3


def test_load_matrix(tmp_path):
    np.testing.assert_array_equal(load_matrix(DATA / "toy_d_A.csv"), np.diag([1.0, 2.0, 3.0]))
    rag = tmp_path / "rag.csv"
    rag.write_text("1,2\n3\n")
    with pytest.raises(InputError):
        load_matrix(rag)
    txt = tmp_path / "txt.csv"
    txt.write_text("1,a\n")
    with pytest.raises(InputError):
        load_matrix(txt)


def test_report_round_trip_and_determinism(tmp_path):
    args = ["pvalue", "--model", MODEL, "--x-values", "1,3,2", "--method", "direct",
            "--samples", "200", "--seed", "7"]
    a, _ = run(args)
    b, _ = run(args + ["--threads", "4"])
    assert body(a) == body(run(args)[0])
    assert a["results"] == b["results"]
    out = tmp_path / "r.json"
    assert main(args + ["--output", str(out)]) == 0
    parsed = json.loads(out.read_text())
    assert parsed["results"] == json.loads(dumps_report(a))["results"]


def test_main_stdout(capsys):
    assert main(["validate"]) == 0
    assert json.loads(capsys.readouterr().out)["exit_code"] == 0
