import dataclasses
import json
import os
import subprocess
import sys

import numpy as np
import pytest

from climbprint import cli, cli_io, controller
from climbprint.controller import ControlRecord, ControlTrace
from climbprint.errors import ParseError, ValidationError
from climbprint.kinematics import Mode
from climbprint.planner import PrintMode
from climbprint.simulator import export_obj

from conftest import FIXTURES


def fixture_bytes(name):
    return (FIXTURES / name).read_bytes()


def fixture_dict(name):
    return json.loads(fixture_bytes(name))


def encode(d):
    return json.dumps(d).encode()


class TestParse:
    def test_closed_fixture(self):
        df = cli_io.parse_design_file(fixture_bytes("circle_closed.json"))
        d = df.design
        assert d.mode is PrintMode.CLOSED_LAYERED
        assert d.n_layers == 10 and d.layer_height == 0.02
        assert d.footprint.closed and len(d.footprint.points) == 720
        assert d.correct_deviation
        assert df.resample_step is None and df.dt is None
        assert len(df.digest) == 64

    def test_defaults(self):
        d = cli_io.parse_design(fixture_bytes("line_open.json"))
        assert d.inclination.max_abs() == 0.0
        assert d.device.foot_angle_range == (0.0, 180.0)

    def test_target_height(self):
        raw = fixture_dict("circle_closed.json")
        del raw["design"]["n_layers"]
        raw["design"]["target_height_m"] = 0.1
        assert cli_io.parse_design(encode(raw)).n_layers == 5

    def test_overrides(self):
        raw = fixture_dict("circle_closed.json")
        raw["overrides"] = {"resample_step_m": 0.02, "dt_s": 0.05}
        df = cli_io.parse_design_file(encode(raw))
        assert (df.resample_step, df.dt) == (0.02, 0.05)

    def test_misspelled_field(self):
        with pytest.raises(ValidationError) as info:
            cli_io.parse_design_file(fixture_bytes("misspelled_field.json"))
        paths = {p for p, _, _ in info.value.issues}
        assert paths == {"design.layer_height_m", "design.layer_hieght_m"}

    def test_negative_layer_height(self):
        raw = fixture_dict("circle_closed.json")
        raw["design"]["layer_height_m"] = -0.02
        with pytest.raises(ValidationError) as info:
            cli_io.parse_design_file(encode(raw))
        (path, constraint, value), = info.value.issues
        assert path == "design.layer_height_m" and value == -0.02
        assert "greater than 0" in constraint

    def test_all_errors_reported(self):
        raw = fixture_dict("circle_closed.json")
        raw["design"]["layer_height_m"] = 0.0
        raw["design"]["device"]["wheelbase_m"] = -1.0
        raw["design"]["mode"] = "helix"
        with pytest.raises(ValidationError) as info:
            cli_io.parse_design_file(encode(raw))
        paths = {p for p, _, _ in info.value.issues}
        assert {"design.layer_height_m", "design.device.wheelbase_m", "design.mode"} <= paths

    def test_spiral_on_open_footprint(self):
        raw = fixture_dict("line_open.json")
        raw["design"]["mode"] = "spiral"
        with pytest.raises(ValidationError) as info:
            cli_io.parse_design_file(encode(raw))
        assert any("mode" in p for p, _, _ in info.value.issues)

    def test_semantic_error_from_component(self):
        raw = fixture_dict("circle_closed.json")
        raw["design"]["device"]["clamp_range_m"] = [0.1, 0.02]
        with pytest.raises(ValidationError) as info:
            cli_io.parse_design_file(encode(raw))
        assert any(p.startswith("design.device") for p, _, _ in info.value.issues)

    def test_bad_schema_version(self):
        raw = fixture_dict("circle_closed.json")
        raw["schema_version"] = 2
        with pytest.raises(ValidationError):
            cli_io.parse_design_file(encode(raw))

    def test_parse_error_position(self):
        with pytest.raises(ParseError) as info:
            cli_io.parse_design_file(b'{\n  "schema_version": ,\n}')
        assert (info.value.line, info.value.column) == (2, 21)
        assert "line 2" in str(info.value)

    def test_invalid_utf8(self):
        with pytest.raises(ParseError) as info:
            cli_io.parse_design_file(b'{\n "a": "\xff"}')
        assert info.value.line == 2

    def test_wrong_type_is_not_coerced(self):
        raw = fixture_dict("circle_closed.json")
        raw["design"]["n_layers"] = "10"
        with pytest.raises(ValidationError):
            cli_io.parse_design_file(encode(raw))


class TestTraceCsv:
    def test_header_and_digest_line(self, open_run):
        text = cli_io.write_trace_csv(open_run.trace).decode()
        lines = text.split("\n")
        assert lines[0] == cli_io.DIGEST_PREFIX + open_run.plan.digest
        assert lines[1] == cli_io.CSV_HEADER
        assert "\r" not in text and text.endswith("\n")

    def test_round_trip(self, open_run):
        data = cli_io.write_trace_csv(open_run.trace)
        back = cli_io.read_trace_csv(data)
        assert back == open_run.trace
        assert cli_io.write_trace_csv(back) == data

    def test_empty_plan(self, closed_run):
        empty = dataclasses.replace(closed_run.plan, layers=())
        trace = controller.execute(empty, closed_run.design.device)
        lines = cli_io.write_trace_csv(trace).decode().splitlines()
        assert len(lines) == 4
        assert lines[2].split(",")[1] == Mode.IDLE.value and lines[3].split(",")[1] == Mode.DONE.value

    def test_fixed_decimals(self):
        tr = ControlTrace([ControlRecord(t=0.1, mode=Mode.IDLE, clamp_gap=1 / 3)])
        row = cli_io.write_trace_csv(tr).decode().splitlines()[2]
        assert row.split(",")[0] == "0.100000000"
        assert row.split(",")[7] == "0.333333333"

    def test_bad_header(self):
        with pytest.raises(ParseError):
            cli_io.read_trace_csv(b"t,mode\n1,Idle\n")


class TestObjSvg:
    def test_obj_round_trip(self, open_run):
        mesh = export_obj(open_run.structure)
        data = cli_io.write_obj(mesh)
        verts, faces = cli_io.read_obj(data)
        np.testing.assert_allclose(verts, mesh.vertices, atol=1e-9)
        assert np.array_equal(faces, mesh.faces)

    def test_svgs(self, closed_run):
        svgs = cli_io.write_layer_svgs(closed_run.structure)
        assert sorted(svgs) == [f"layer_{k:03d}.svg" for k in range(10)]
        doc = svgs["layer_000.svg"].decode()
        assert doc.startswith("<?xml") and "<polygon" in doc
        assert 'stroke-width="40.000"' in doc


def run_cli(argv, capsys):
    code = cli.main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


class TestCli:
    def test_check_ok(self, capsys):
        code, out, _ = run_cli(["check", str(FIXTURES / "circle_closed.json")], capsys)
        assert code == 0 and out.startswith("ok")

    def test_check_too_short(self, capsys):
        code, _, err = run_cli(["check", str(FIXTURES / "footprint_too_short.json")], capsys)
        assert code == 1
        assert "FootprintTooShort" in err and "value=" in err

    def test_check_unclampable(self, capsys):
        code, _, err = run_cli(["check", str(FIXTURES / "footprint_unclampable.json")], capsys)
        assert code == 1 and "FootprintUnclampable" in err

    def test_check_misspelled(self, capsys):
        code, _, err = run_cli(["check", str(FIXTURES / "misspelled_field.json")], capsys)
        assert code == 1 and "layer_hieght_m" in err

    def test_missing_file(self, capsys, tmp_path):
        code, _, err = run_cli(["check", str(tmp_path / "nope.json")], capsys)
        assert code == 2 and err.startswith("error:")

    def test_plan_to_file(self, capsys, tmp_path):
        out = tmp_path / "plan.json"
        code, _, _ = run_cli(["plan", str(FIXTURES / "line_open.json"), "-o", str(out), "--quiet"], capsys)
        assert code == 0
        plan = json.loads(out.read_text())
        assert plan["mode"] == "open_boustrophedon" and len(plan["layers"]) == 4

    def test_run_and_report(self, capsys, tmp_path):
        out = tmp_path / "run"
        code, _, _ = run_cli(["run", str(FIXTURES / "line_open.json"), "-o", str(out)], capsys)
        assert code == 0
        names = {p.relative_to(out).as_posix() for p in out.rglob("*") if p.is_file()}
        assert {"plan.json", "trace.csv", "report.json", "structure.obj", "manifest.json"} <= names
        assert {f"layers/layer_{k:03d}.svg" for k in range(4)} <= names
        man = json.loads((out / "manifest.json").read_text())
        assert set(man["outputs"]) == names - {"manifest.json"}
        assert man["config_digests"]["plan"] == json.loads((out / "report.json").read_text())["plan_digest"]
        code, text, _ = run_cli(["report", str(out)], capsys)
        assert code == 0 and "open_boustrophedon" in text and "3 reversal(s)" in text

    def test_run_twice_identical(self, tmp_path):
        a = cli.run_pipeline(FIXTURES / "line_open.json", tmp_path / "a")
        b = cli.run_pipeline(FIXTURES / "line_open.json", tmp_path / "b")
        a.pop("runtime_s"), b.pop("runtime_s")
        assert a == b
        for name in a["outputs"]:
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_report_missing_dir(self, capsys, tmp_path):
        code, _, err = run_cli(["report", str(tmp_path / "nothing")], capsys)
        assert code == 2 and "error" in err

    def test_entry_point_no_color(self, tmp_path):
        env = dict(os.environ, NO_COLOR="1")
        proc = subprocess.run(
            [sys.executable, "-m", "climbprint.cli", "check", str(FIXTURES / "footprint_too_short.json")],
            capture_output=True, text=True, env=env,
        )
        assert proc.returncode == 1
        assert "\033[" not in proc.stderr and proc.stderr.startswith("error:")
