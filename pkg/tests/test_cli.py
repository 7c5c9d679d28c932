import json

import pytest

from harmonet import __version__
from harmonet.cli import RunConfig, SpecError, build_from_spec, parse_spec, run
from harmonet.network_core import ExplicitNetwork
from harmonet.bratteli import BratteliDiagram
from harmonet.transfer import TransferSystem


def _write(tmp_path, name, obj):
    p = tmp_path / name
    p.write_text(json.dumps(obj) if not isinstance(obj, str) else obj)
    return str(p)


P3_SPEC = {"model": "explicit", "params": {"edges": [[0, 1, 1.0], [1, 2, 1.0]], "origin": 0}}


def _run_json(tmp_path, argv, name="out.json"):
    out = tmp_path / name
    code = run(argv + ["--out", str(out)])
    return code, (json.loads(out.read_text()) if out.exists() else None)


# ---------------------------------------------------------------- specs

def test_parse_explicit_spec(tmp_path):
    net = parse_spec(_write(tmp_path, "p3.json", P3_SPEC))
    assert isinstance(net, ExplicitNetwork) and net.vertices() == [0, 1, 2]


def test_parse_pascal_spec(tmp_path):
    d = parse_spec(_write(tmp_path, "pascal.json", {"model": "pascal", "params": {"depth": 6}}))
    assert isinstance(d, BratteliDiagram) and [d.level_size(n) for n in range(5)] == [1, 2, 3, 4, 5]


def test_parse_transfer_spec(tmp_path):
    sys = parse_spec(_write(tmp_path, "t.json", {"model": "transfer", "params": {"q0": [1.0], "R": [[[0.5, 0.5]]]}}))
    assert isinstance(sys, TransferSystem)


def test_asymmetric_spec_names_pair(tmp_path, capsys):
    spec = {"model": "explicit", "params": {"edges": [[0, 1, 1.0], [1, 0, 2.0]]}}
    code = run(["validate", "--spec", _write(tmp_path, "bad.json", spec)])
    assert code == 2
    err = capsys.readouterr().err
    assert "0" in err and "1" in err


def test_broken_json_reports_position(tmp_path, capsys):
    code = run(["validate", "--spec", _write(tmp_path, "broken.json", '{"model": "explicit",\n "params": }')])
    assert code == 2
    assert "line 2" in capsys.readouterr().err


@pytest.mark.parametrize("spec,msg", [
    ({"model": "moebius"}, "model"),
    ({"model": "explicit", "params": {"edges": [[0, 1]]}}, "edges[0]"),
    ({"model": "stationary_bratteli", "params": {}}, "params.A"),
])
def test_schema_errors(spec, msg):
    with pytest.raises(SpecError, match=msg.replace("[", r"\[").replace("]", r"\]")):
        build_from_spec(spec)


# ------------------------------------------------------------- commands

def test_fixtures_list(capsys):
    assert run(["fixtures", "--list"]) == 0
    names = json.loads(capsys.readouterr().out)["result"]["fixtures"]
    assert "binary_tree" in names and "pascal" in names


def test_monopole_tree(tmp_path):
    code, doc = _run_json(tmp_path, ["monopole", "--fixture", "binary_tree", "--lambda", "1", "--x", "root",
                                     "--radii", "2,4,8,16"])
    assert code == 0
    vals = doc["result"]["values"]
    for key, d in (("0,1", 0), ("1,2", 1), ("3,5", 3)):
        assert vals[key] == pytest.approx(2.0**-d, abs=1e-4)


def test_monopole_refused_on_finite(tmp_path):
    code, doc = _run_json(tmp_path, ["monopole", "--spec", _write(tmp_path, "p3.json", P3_SPEC), "--x", "0"])
    assert code == 1 and doc is None


def test_green_line_recurrent(tmp_path):
    code, doc = _run_json(tmp_path, ["green", "--fixture", "line_z_unit", "--x", "0", "--y", "0", "--N", "1000"])
    assert code == 1
    assert doc["result"]["flag"] == "recurrent-consistent"


def test_dipole_p3(tmp_path):
    code, doc = _run_json(tmp_path, ["dipole", "--spec", _write(tmp_path, "p3.json", P3_SPEC), "--x", "0",
                                     "--y", "1"])
    assert code == 0
    v = doc["result"]["values"]
    assert v["0"] - v["1"] == pytest.approx(1, abs=1e-12) and v["1"] == v["2"]


def test_validate_ok_and_csv(tmp_path):
    out = tmp_path / "v.csv"
    assert run(["validate", "--spec", _write(tmp_path, "p3.json", P3_SPEC), "--format", "csv",
                "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    meta = json.loads(lines[0][2:])
    assert meta["harmonet_version"] == __version__ and lines[1] == "kind,x,y,detail"


def test_harmonic_pascal(tmp_path):
    code, doc = _run_json(tmp_path, ["harmonic", "--fixture", "pascal", "--f1", "1,-1", "--last", "8"])
    assert code == 0
    r = doc["result"]
    assert r["solution_dims"] == [1] * 7 and max(r["form_distance"]) < 1e-10


def test_bratteli_and_transfer_checks(tmp_path):
    code, _ = _run_json(tmp_path, ["bratteli-check", "--fixture", "pascal", "--depth", "6"], "b.json")
    assert code == 0
    code, doc = _run_json(tmp_path, ["transfer-check", "--spec",
                                     _write(tmp_path, "t.json", {"model": "transfer",
                                                                 "params": {"fixture": "pascal_binomial",
                                                                            "depth": 8}}),
                                     "--seed", "1"], "t.json")
    assert code == 0


def test_gauss_green_summable(tmp_path):
    code, doc = _run_json(tmp_path, ["gauss-green", "--fixture", "line_z_summable", "--side", "right",
                                     "--radii", "10,20,40"])
    assert code == 0


def test_plot_format(tmp_path):
    out = tmp_path / "g.txt"
    run(["green", "--fixture", "binary_tree", "--x", "root", "--y", "root", "--N", "20", "--format", "plot",
         "--out", str(out)])
    lines = out.read_text().splitlines()
    assert lines[0].startswith("# ") and len(lines) == 22
    assert all(len(l.split()) == 2 for l in lines[1:])


# ---------------------------------------------------------- exit codes

@pytest.mark.parametrize("argv", [
    ["hitting", "--fixture", "binary_tree", "--x", "root", "--y", "1,1"],
    ["dipole", "--fixture", "binary_tree", "--x", "nowhere", "--y", "root"],
    ["monopole", "--fixture", "binary_tree", "--x", "root", "--samples", "-5"],
    ["frobnicate"],
    ["green", "--fixture", "line_z_unit", "--x", "0", "--y", "0", "--N", "10", "--format", "xml"],
])
def test_usage_errors(argv):
    assert run(argv) == 2


def test_missing_seed_message(capsys):
    assert run(["transience", "--fixture", "binary_tree"]) == 2
    assert "--seed" in capsys.readouterr().err


def test_run_config_validation():
    with pytest.raises(SpecError):
        RunConfig("green", "fixture:x", workers=0).validate()
    with pytest.raises(SpecError):
        RunConfig("green", "fixture:x", tolerance=-1.0).validate()


# ---------------------------------------------------------- provenance

def test_identical_config_is_byte_identical(tmp_path, monkeypatch):
    monkeypatch.setenv("HARMONET_WORKERS", "2")
    out = tmp_path / "h.json"
    argv = ["hitting", "--fixture", "binary_tree", "--x", "root", "--y", "1,1", "--samples", "2000",
            "--horizon", "300", "--seed", "5", "--out", str(out)]
    assert run(argv) == 0
    first = out.read_bytes()
    assert run(argv) == 0
    assert out.read_bytes() == first
    doc = json.loads(first)
    assert doc["run_config"]["workers"] == 2 and doc["run_config"]["seed"] == 5
    assert doc["harmonet_version"] == __version__
