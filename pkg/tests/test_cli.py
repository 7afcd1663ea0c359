import csv
import json
import math

import numpy as np
import pytest

from conehit.cli import CONFIG_SCHEMA, ConfigError, load_config, parse_config, run

FAST = {"pickands": {"T": 4, "n_steps": 64, "n_paths": 1024},
        "sim": {"u_ladder": [1.0, 1.5], "n_paths": 1024, "n_steps_per_unit": 16}}


def _write(tmp_path, cfg, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(cfg))
    return str(p)


def _run(tmp_path, mode, cfg, *extra, out="out"):
    out_dir = tmp_path / out
    code = run([mode, "--config", _write(tmp_path, cfg), "--out", str(out_dir), *extra])
    return code, out_dir


def rho_spec(rho):
    return {"correlation": [[1, rho], [rho, 1]], "scales": [1, 1], "alpha": [1, 0.5], "mu": [1, 1]}


def test_oracle_reduced_case(tmp_path):
    code, out = _run(tmp_path, "oracle", {"spec": rho_spec(0.9), "u_grid": [1, 2, 3]}, "--seed", "0")
    assert code == 0
    rep = json.loads((out / "report.json").read_text())
    assert rep["classification"] == "reduced to m=1"
    assert [o["agree"] for o in rep["oracles"]] == [True]
    for row in rep["evaluator"]:
        assert row["P_asym"] == pytest.approx(math.exp(-2 * row["u"]), rel=1e-12)
    assert not (out / "passage.csv").exists()


def test_analyze_negatively_associated(tmp_path):
    S = np.array([[1.0, -0.3, -0.2], [-0.3, 1.0, -0.1], [-0.2, -0.1, 1.0]])
    spec = {"sigma": S.tolist(), "alpha": (S @ [1, 2, 1]).tolist(), "mu": (S @ [1, 1, 2]).tolist()}
    code, out = _run(tmp_path, "analyze", {"spec": spec, "seed": 1})
    assert code == 0
    rep = json.loads((out / "report.json").read_text())
    g = rep["g_analysis"]
    assert (g["I"], g["K"], g["J"]) == ([0, 1, 2], [], [])
    assert sorted(p.name for p in out.iterdir()) == ["evaluator.csv", "report.json"]


def test_missing_mu_exit_code(tmp_path, capsys):
    spec = {"sigma": [[1, 0], [0, 1]], "alpha": [1, 1]}
    code, out = _run(tmp_path, "analyze", {"spec": spec})
    assert code == 2
    err = json.loads(capsys.readouterr().err)
    assert err["error"]["code"] == "CONFIG_MISSING_FIELD"
    assert json.loads((out / "error.json").read_text())["error"]["code"] == "CONFIG_MISSING_FIELD"


@pytest.mark.parametrize("spec, code", [
    ({"alpha": [1], "mu": [1]}, "CONFIG_MISSING_FIELD"),
    ({"sigma": [[1]], "factor": [[1]], "alpha": [1], "mu": [1]}, "CONFIG_INVALID"),
    ({"correlation": [[1]], "alpha": [1], "mu": [1]}, "CONFIG_MISSING_FIELD"),
    ({"sigma": [[1]], "alpha": [1], "mu": [-1]}, "CONFIG_INVALID"),
    ({"sigma": [[1, 2], [2, 1]], "alpha": [1, 1], "mu": [1, 1]}, "CONFIG_INVALID"),
    ({"sigma": [[1]], "alpha": ["a"], "mu": [1]}, "CONFIG_INVALID"),
])
def test_config_errors(spec, code):
    with pytest.raises(ConfigError) as exc:
        parse_config({"spec": spec})
    assert exc.value.code == code


def test_non_finite_literal_rejected(tmp_path):
    p = tmp_path / "c.json"
    p.write_text('{"spec": {"sigma": [[NaN]], "alpha": [1], "mu": [1]}}')
    with pytest.raises(ConfigError):
        load_config(p)


def test_factor_and_cone_inputs():
    cfg = parse_config({"spec": {"factor": [[1, 0], [0.5, 1]], "alpha": [1, 1], "mu": [1, 1],
                                 "cone": [[1, 0], [0, 2]]}})
    np.testing.assert_allclose(cfg.spec.sigma.entries, [[1.0, 1.0], [1.0, 5.0]])
    np.testing.assert_allclose(cfg.spec.alpha, [1, 2])


def test_schema_is_valid_draft():
    import jsonschema
    jsonschema.Draft202012Validator.check_schema(CONFIG_SCHEMA)


def test_validate_mode_and_determinism(tmp_path):
    cfg = {"spec": {"sigma": [[1, 0], [0, 1]], "alpha": [1, 1], "mu": [1, 1]}, **FAST}
    code, out1 = _run(tmp_path, "validate", cfg, "--seed", "5", out="a")
    assert code == 0
    code, out2 = _run(tmp_path, "validate", cfg, "--seed", "5", "--workers", "4", out="b")
    assert code == 0
    for name in ("evaluator.csv", "passage.csv"):
        assert (out1 / name).read_bytes() == (out2 / name).read_bytes()
    raw = (out1 / "evaluator.csv").read_bytes()
    assert b"\r\n" in raw
    rows = list(csv.reader(open(out1 / "evaluator.csv", newline="")))
    assert rows[0] == ["u", "P_asym", "band_lo", "band_hi", "p_hat", "stderr"]
    assert len(rows) - 1 == len(FAST["sim"]["u_ladder"])
    rep = json.loads((out1 / "report.json").read_text())
    assert rep["seed"] == 5 and rep["version"] and len(rep["config_hash"]) == 64
    assert len(rep["theorem1"]["rows"]) == 2
    # report round trip
    assert json.loads(json.dumps(rep)) == rep
    r1 = json.loads((out2 / "report.json").read_text())
    assert r1["theorem1"] == rep["theorem1"] and r1["H"] == rep["H"]


def test_generated_seed_is_printed(tmp_path, capsys):
    cfg = {"spec": {"sigma": [[1, 0], [0, 1]], "alpha": [1, 1], "mu": [1, 1]}, **FAST}
    code, out = _run(tmp_path, "estimate", cfg)
    assert code == 0
    seed = int(capsys.readouterr().err.split("seed:")[1])
    assert json.loads((out / "report.json").read_text())["seed"] == seed


def test_module_errors_carry_provenance(tmp_path, capsys):
    cfg = {"spec": {"sigma": [[1, 0], [0, 1]], "alpha": [1, 1], "mu": [1, 1]},
           "pickands": {"n_paths": 2, "T": 1, "n_steps": 4},
           "sim": {"u_ladder": [1.0], "n_paths": 3}}
    code, _ = _run(tmp_path, "validate", cfg, "--seed", "1")
    assert code == 1
    err = json.loads(capsys.readouterr().err)["error"]
    assert err["code"] == "MODULE_ERROR" and err["module"] == "conehit.path_sim"
