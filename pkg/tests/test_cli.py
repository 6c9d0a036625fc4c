import json
import subprocess
import sys
from pathlib import Path

import pytest

from _oracles import canonical_terms, golden_terms
from integrable.cli import ConfigError, dumps, execute, main, validate_config

GOLDEN = json.loads((Path(__file__).parent / "golden" / "q_a3.json").read_text())
H_DRESS = {"command": "dress", "context": "o4-grassmann",
           "params": {"kind": "ntuple", "grid": [{"lo": -1, "hi": 1, "n": 33}, {"lo": -0.7, "hi": 0.7, "n": 33}],
                      "elements": [{"family": "h", "pole": [0, 0.7], "vector": [1, 0, [0, 0.6], [0, 0.8]]}]}}


def run_cli(tmp_path, config, *extra):
    tmp_path.mkdir(parents=True, exist_ok=True)
    cfg = tmp_path / "config.json"
    cfg.write_text(json.dumps(config))
    out = tmp_path / "out"
    code = main(["--config", str(cfg), "--out", str(out), *extra])
    return code, out


def test_compute_q_matches_golden(tmp_path):
    code, out = run_cli(tmp_path, {"command": "compute-q", "context": "sl2-su2", "params": {"j": 3}})
    assert code == 0
    payload = json.loads((out / "q.json").read_text())
    tree = payload["expression"]
    for i in range(2):
        for k in range(2):
            assert canonical_terms(tree["args"][i][k]) == golden_terms(GOLDEN["Q"]["3"][i][k])
    report = json.loads((out / "report.json").read_text())
    assert report["all_pass"] and report["command"] == "compute-q"
    assert report["inputs_digest"].startswith("sha256:")


def test_dress_passes_and_is_deterministic(tmp_path):
    code, out = run_cli(tmp_path / "a", H_DRESS)
    assert code == 0
    code2, out2 = run_cli(tmp_path / "b", H_DRESS)
    assert code2 == 0
    report = json.loads((out / "report.json").read_text())
    assert set(report["pass"]) >= {"pde_grassmann", "flatness", "element0_reality", "projection_defect"}
    for name in report["artifacts"]:
        assert (out / name).read_bytes() == (out2 / name).read_bytes(), name
    # the report differs only in wall time
    r2 = json.loads((out2 / "report.json").read_text())
    report.pop("wall_time"), r2.pop("wall_time")
    assert report == r2


def test_tiny_tolerance_scale_fails_with_exit_2(tmp_path):
    code, out = run_cli(tmp_path, H_DRESS, "--tolerance-scale", "1e-12")
    assert code == 2
    report = json.loads((out / "report.json").read_text())
    assert not report["all_pass"]


def test_malformed_config_exits_1_without_artifacts(tmp_path):
    code, out = run_cli(tmp_path, {"command": "dress", "context": "o4-grassmann", "bogus": 1})
    assert code == 1
    assert not out.exists()
    code, out = run_cli(tmp_path, {"command": "dress", "context": "nowhere", "params": H_DRESS["params"]})
    assert code == 1 and not out.exists()
    cfg = tmp_path / "broken.json"
    cfg.write_text("{not json")
    assert main(["--config", str(cfg), "--out", str(tmp_path / "o2")]) == 1
    with pytest.raises(SystemExit) as exc:
        main(["--out", str(tmp_path / "o3")])
    assert exc.value.code == 1


def test_validate_config():
    with pytest.raises(ConfigError):
        validate_config({"command": "fly"})
    with pytest.raises(ConfigError):
        validate_config({"command": "dress", "context": "sl2-su2", "params": {"kind": "flow", "j": "two"}})
    ok = validate_config({"command": "compute-q", "context": "sl2-su2", "params": {"j": 2}})
    assert ok["command"] == "compute-q"


def test_dumps_format():
    text = dumps({"b": 0.1, "a": [1, 2.0, True, None], "c": complex(1, -2)})
    assert text.index('"a"') < text.index('"b"')
    assert "0.10000000000000001" in text
    assert json.loads(text)["c"] == {"re": 1.0, "im": -2.0}


def test_finite_type_and_extract(tmp_path):
    V = {"-1": [[[-0.3, 0.12], [-0.2, 0.08]], [[-0.5, 0.2], [0.3, -0.12]]],
         "0": [[[0.0, 0.4], [0.1, 0.2]], [[-0.1, 0.2], [0.0, -0.4]]],
         "1": [[[0.3, 0.12], [0.5, 0.2]], [[0.2, 0.08], [-0.3, -0.12]]]}
    config = {"command": "finite-type", "context": "sl2-su2",
              "params": {"V": V, "grid": {"lo": -0.5, "hi": 0.5, "n": 65}}}
    status, report = execute(config, str(tmp_path / "ft"))
    assert status == 0, report
    assert "isospectral_drift" in report["residuals"]
    status, report = execute({"command": "extract", "context": "sl2-su2/so2",
                              "params": {"object": "harmonic",
                                         "source": {"kind": "minus-one", "grid": {"n": 65},
                                                    "elements": [{"family": "g", "pole": [0, 0.5],
                                                                  "vector": [1, 0.3]}]}}},
                             str(tmp_path / "ex"))
    assert status == 0, report


def test_module_entry_point(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"command": "flow-rhs", "context": "sl2-su2", "params": {"j": 2}}))
    proc = subprocess.run([sys.executable, "-m", "integrable", "--config", str(cfg), "--out", str(tmp_path / "o")],
                          capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert (tmp_path / "o" / "flow_rhs.json").exists()
