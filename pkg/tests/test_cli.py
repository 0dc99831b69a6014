import os
import subprocess
import sys

import pytest
import yaml

from morsekit import cli
from morsekit import scenes as sc
from morsekit.errors import ParseError, UnknownFixture


def run(argv, capsys):
    code = cli.main(argv)
    return code, capsys.readouterr().out


def test_fixture_names():
    names = sc.fixture_names()
    for n in ("round-sphere", "ellipsoid", "torus-cosine", "rp2-ellipsoid", "heart-complex",
              "punctured-heart", "monkey-saddle", "peanut-sphere", "torus-translate-chain"):
        assert n in names


def test_fixture_specs():
    s = sc.fixture("ellipsoid a=1,2,3")
    assert s.name == "ellipsoid" and s.field["a"] == [1.0, 2.0, 3.0]
    assert sc.fixture("ellipsoid(1, 2, 4)").field["a"] == [1.0, 2.0, 4.0]
    assert sc.fixture("real-line-many-minima(4)").field["n"] == 4
    assert sc.load_scene("round-sphere").name == "round-sphere"
    with pytest.raises(UnknownFixture):
        sc.fixture("klein-bottle")
    assert len(sc.torus_chain()) == 3


def test_fixtures_command(capsys):
    code, out = run(["fixtures"], capsys)
    assert code == 0
    names = [r["name"] for r in yaml.safe_load(out)["fixtures"]]
    assert "round-sphere" in names and "real-line-many-minima(6)" in names
    code, out = run(["fixtures", "--show", "torus-metric"], capsys)
    assert yaml.safe_load(out)["model"]["metric"] == [[1.0, 0.0], [0.0, 2.0]]


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def test_scene_file_roundtrip(tmp_path):
    p = write(tmp_path, "ell.yaml", "fixture: ellipsoid\nname: my-ellipsoid\n"
              "tolerances:\n  seed_count: 256\n")
    s = sc.load_scene(p)
    assert s.name == "my-ellipsoid" and s.tolerances["seed_count"] == 256
    p = write(tmp_path, "line.yaml", "model:\n  kind: real-line\n  interval: [-4, 4]\n"
              "field:\n  kind: polynomial\n  terms: [[1.0, [2]]]\n")
    s = sc.load_scene(p)
    assert s.name == "line"
    assert sc.scene_from_dict(s.to_dict()).to_dict() == s.to_dict()


def test_parse_errors(tmp_path):
    p = write(tmp_path, "bad.yaml", "model:\n  kind: sphere\n  radius: 1\n  colour: red\n"
              "field:\n  kind: height\n")
    with pytest.raises(ParseError, match="line 4"):
        sc.load_scene(p)
    p = write(tmp_path, "typo.yaml", "fixture: round-sphere\nflagz: {}\n")
    with pytest.raises(ParseError, match="flagz.*line 2"):
        sc.load_scene(p)
    p = write(tmp_path, "broken.yaml", "model: [sphere\nfield: x\n")
    with pytest.raises(ParseError, match="line"):
        sc.load_scene(p)
    p = write(tmp_path, "nested.yaml", "model: {kind: sphere}\nfield:\n  kind: combination\n"
              "  parts:\n    - weight: 1\n      field: {kind: height, axiz: 2}\n")
    with pytest.raises(ParseError, match="axiz"):
        sc.load_scene(p)
    with pytest.raises(ParseError):
        sc.load_scene(str(tmp_path / "missing.yaml"))
    p = write(tmp_path, "nofield.yaml", "model: {kind: sphere}\n")
    with pytest.raises(ParseError):
        sc.load_scene(p)


def test_cli_error_exit_codes(tmp_path, capsys):
    p = write(tmp_path, "bad.yaml", "model: {kind: sphere, colour: red}\nfield: {kind: height}\n")
    assert cli.main(["run", p]) == 1
    assert cli.main(["run", "klein-bottle"]) == 1
    capsys.readouterr()


@pytest.mark.parametrize("name,betti", [
    ("real-line-parabola", [1]),
    ("real-line-many-minima(3)", [1, 0]),
    ("rp2-ellipsoid", [1, 1, 1]),
    ("torus-cosine", [1, 2, 1]),
    ("heart-complex", [1, 0, 1]),
    ("genus-g-complex(2)", [1, 4, 1]),
])
def test_run_betti(name, betti, capsys):
    code, out = run(["run", name], capsys)
    assert code == 0
    assert yaml.safe_load(out)["betti"] == betti


def test_run_slope_empty(capsys):
    with pytest.warns(RuntimeWarning, match="EmptyResult"):
        code, out = run(["run", "real-line-slope"], capsys)
    rep = yaml.safe_load(out)
    assert code == 0 and rep["betti"] == [] and rep["critical_points"] == []


def test_run_violations(capsys):
    code, out = run(["run", "monkey-saddle"], capsys)
    rep = yaml.safe_load(out)
    assert code == 2 and rep["status"] == "morse-violation"
    assert len(rep["critical_points"]) == 3 and len(rep["degenerate_points"]) == 1
    code, out = run(["run", "punctured-heart"], capsys)
    rep = yaml.safe_load(out)
    assert code == 1 and rep["boundary_squared"] == {"ok": False, "degree": 2}
    code, out = run(["run", "peanut-upright"], capsys)
    assert code == 2 and yaml.safe_load(out)["status"] == "non-generic"


def test_reports_are_byte_identical(tmp_path):
    a, b = tmp_path / "a.yaml", tmp_path / "b.yaml"
    assert cli.main(["run", "ellipsoid", "-o", str(a)]) == 0
    assert cli.main(["run", "ellipsoid", "-o", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()
    assert "timing" not in yaml.safe_load(a.read_text())


def test_export_flows(tmp_path, capsys):
    d = tmp_path / "out"
    assert cli.main(["export-flows", "torus-cosine", str(d)]) == 0
    files = sorted(os.listdir(d))
    assert "torus-cosine__critical.csv" in files and "torus-cosine__report.yaml" in files
    flows = [f for f in files if f.count("__") == 3]
    # two lines for each of the four index-difference-one pairs
    assert len(flows) == 8
    head = (d / flows[0]).read_text().splitlines()[0]
    assert head == "s,x0,x1,f"
    capsys.readouterr()


def test_fredholm_sweep_spec(tmp_path, capsys):
    p = write(tmp_path, "sweep.yaml", "count: 2\nseed: 4\ndomains: [compact-interval, half-line-plus]\n"
              "m: 200\n")
    code, out = run(["fredholm", "sweep", p], capsys)
    rep = yaml.safe_load(out)
    assert code == 0 and rep["all_match"]
    assert rep["summary"]["compact-interval"]["index_matches"] == 2
    assert len(rep["families"]) == 4
    p = write(tmp_path, "bad.yaml", "count: 2\nsize: 3\n")
    assert cli.main(["fredholm", "sweep", p]) == 1
    p = write(tmp_path, "dom.yaml", "domains: [circle]\n")
    assert cli.main(["fredholm", "sweep", p]) == 1
    capsys.readouterr()


def test_console_script():
    out = subprocess.run([sys.executable, "-m", "morsekit.cli", "fixtures"], capture_output=True,
                         text=True, check=True).stdout
    assert "round-sphere" in out
