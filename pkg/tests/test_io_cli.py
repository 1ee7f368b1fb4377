import hashlib
import json
import os
import subprocess
import sys

import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import coeffs
from lvqsd.cli import main
from lvqsd.errors import ConfigParseError, ValidationError
from lvqsd.io import (
    ExperimentConfig,
    IoError,
    RunManifest,
    dumps_csv,
    dumps_json,
    emit_results,
    format_number,
    load_config,
)


def write_cfg(tmp_path, d, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(d))
    return str(p)


def run(tmp_path, *argv, cfg=None, out="out"):
    args = list(argv)
    if cfg is not None:
        args += ["--config", write_cfg(tmp_path, cfg)]
    args += ["--out", str(tmp_path / out)]
    return main(args)


def checksums(directory):
    return {p.name: hashlib.sha256(p.read_bytes()).hexdigest()
            for p in sorted(directory.iterdir())}


# -- formatting ------------------------------------------------------------------------

def test_number_formatting():
    assert format_number(0.1) == "0.1"
    assert format_number(1 / 3) == repr(1 / 3)
    assert format_number(3) == "3" and format_number(True) == "1"


@given(st.floats(allow_nan=False, allow_infinity=False))
def test_csv_round_trip(x):
    text = dumps_csv(["v"], [[x]])
    assert float(text.splitlines()[1]) == x


def test_json_non_finite():
    assert json.loads(dumps_json({"a": float("inf"), "b": float("nan")})) == {
        "a": "inf", "b": "nan"}


# -- configs ---------------------------------------------------------------------------

def test_config_round_trip(tmp_path):
    d = {"model": coeffs(c12=0.5, c21=0.5), "sim": {"dt": 0.01, "t_max": 2.0, "n_paths": 4},
         "seed": 3, "options": {"k": 2}}
    cfg = load_config(write_cfg(tmp_path, d))
    again = ExperimentConfig.from_dict(json.loads(json.dumps(cfg.to_dict())))
    assert again == cfg and again.hash() == cfg.hash()
    assert cfg.sim_config().seed == 3


@given(seed=st.integers(0, 2**63), dt=st.floats(1e-4, 0.1))
def test_config_round_trip_property(seed, dt):
    cfg = ExperimentConfig(model=coeffs(), sim={"dt": dt, "t_max": 1.0}, seed=seed)
    assert ExperimentConfig.from_dict(cfg.to_dict()) == cfg


def test_config_errors(tmp_path):
    with pytest.raises(ConfigParseError):
        load_config(write_cfg(tmp_path, {"modle": {}}))
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ConfigParseError):
        load_config(str(bad))
    with pytest.raises(ValidationError):
        ExperimentConfig(model=coeffs(c12=1.0, c21=2.0))
    with pytest.raises(ValidationError):
        ExperimentConfig(sim={"dt": 2.0, "t_max": 1.0})


# -- emission --------------------------------------------------------------------------

def test_empty_manifest(tmp_path):
    path = emit_results(tmp_path / "run", {}, RunManifest("validate", "h", {}, {}))
    m = json.loads(path.read_text())
    assert m["files"] == [] and m["config_hash"] == "h"


def test_manifest_lists_every_file(tmp_path):
    path = emit_results(tmp_path, {"b.csv": "x\n1\n", "a.json": "{}\n"},
                        RunManifest("spectrum", "h", {}, {}))
    m = json.loads(path.read_text())
    assert [f["path"] for f in m["files"]] == ["a.json", "b.csv"]
    for f in m["files"]:
        data = (tmp_path / f["path"]).read_bytes()
        assert f["sha256"] == hashlib.sha256(data).hexdigest() and f["bytes"] == len(data)


def test_emit_rejects_paths(tmp_path):
    with pytest.raises(IoError):
        emit_results(tmp_path, {"../x.csv": ""}, RunManifest("s", "h", {}, {}))


# -- CLI -------------------------------------------------------------------------------

def test_validate_ok(tmp_path, capsys):
    assert run(tmp_path, "validate", cfg={"model": coeffs()}) == 0
    assert "INDEPENDENT" in capsys.readouterr().out
    assert (tmp_path / "out" / "validate" / "manifest.json").exists()


def test_validate_balance(tmp_path, capsys):
    assert run(tmp_path, "validate", cfg={"model": coeffs(c12=1.0, c21=2.0)}) == 1
    assert "balance" in capsys.readouterr().err


def test_validate_weak_cooperation(tmp_path, capsys):
    assert run(tmp_path, "validate", cfg={"model": coeffs(c12=-2.0, c21=-2.0)}) == 1
    assert "weak cooperation" in capsys.readouterr().err


def test_unknown_subcommand_and_bad_flags(tmp_path, capsys):
    assert run(tmp_path, "frobnicate") == 1
    assert "unknown subcommand" in capsys.readouterr().err
    assert main(["spectrum", "--dim", "7"]) == 1


def test_numerical_failure_exit_code(tmp_path, capsys):
    cfg = {"harness": {"dim": 1}, "options": {"x0": [0.01]},
           "sim": {"dt": 1e-3, "t_max": 0.5, "n_paths": 5}, "particles": {"n_particles": 100}}
    cfg["grid"] = {"dim": 1, "eps_lo": 0.0, "L_hi": 3.141592653589793, "n": 5000}
    # a start next to the wall with a coarse time step produces negative mass
    cfg["options"].update(t_end=2.0, dt_pde=0.5)
    assert run(tmp_path, "yaglom", cfg=cfg) == 2
    assert "StepUnstable" in capsys.readouterr().err


def test_io_error_exit_code(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    assert main(["validate", "--out", str(blocker)]) == 3


def test_harness_spectrum(tmp_path):
    assert run(tmp_path, "spectrum", "--harness", "dirichlet") == 0
    d = json.loads((tmp_path / "out" / "spectrum" / "spectrum.json").read_text())
    assert d["lambda"][0] == pytest.approx(0.5, rel=1e-3)
    header = (tmp_path / "out" / "spectrum" / "nodes.csv").read_text().splitlines()[0]
    assert header == "x1,psi1,eta1,nu1"


def test_output_dir_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("LVQSD_OUTPUT_DIR", str(tmp_path / "env"))
    assert main(["validate"]) == 0
    assert (tmp_path / "env" / "validate" / "params.json").exists()


def test_seed_isolation(tmp_path):
    base = {"harness": {"dim": 1}, "grid": {"dim": 1, "eps_lo": 0.0,
                                            "L_hi": 3.141592653589793, "n": 200},
            "sim": {"dt": 2e-3, "t_max": 3.0, "n_paths": 300}}
    for seed in (1, 2):
        assert run(tmp_path, "simulate", cfg=dict(base, seed=seed), out=f"s{seed}") == 0
        assert run(tmp_path, "spectrum", cfg=dict(base, seed=seed), out=f"s{seed}") == 0
    a, b = (checksums(tmp_path / f"s{s}" / "simulate") for s in (1, 2))
    assert a["paths.csv"] != b["paths.csv"]
    a, b = (checksums(tmp_path / f"s{s}" / "spectrum") for s in (1, 2))
    assert a["spectrum.json"] == b["spectrum.json"] and a["nodes.csv"] == b["nodes.csv"]


def test_module_entry_point(tmp_path):
    env = dict(os.environ, SOURCE_DATE_EPOCH="0")
    r = subprocess.run([sys.executable, "-m", "lvqsd.cli", "validate", "--out", str(tmp_path)],
                       capture_output=True, text=True, env=env)
    assert r.returncode == 0 and "INDEPENDENT" in r.stdout
