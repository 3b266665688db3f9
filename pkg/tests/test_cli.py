import json
import logging

import pytest

from relu_compiler import __version__
from relu_compiler.cli import EXIT_CONSTRUCTION, EXIT_OK, EXIT_USAGE, EXIT_VERIFY_FAILED, normalise_argv, run
from relu_compiler.datasets import write_calibration_csv
from relu_compiler.haar import load_haar, save_haar
from relu_compiler.network import load_network, save_network
from relu_compiler.trees import save_forest, save_tree


def test_eval(tmp_path, capsys, abs_net):
    path = save_network(abs_net, str(tmp_path / "abs.json"))
    assert run(["eval", "--net", path, "--point", "3"]) == EXIT_OK
    assert capsys.readouterr().out.strip() == "3"
    assert run(["eval", "--net", path, "--point=-0.25"]) == EXIT_OK
    assert capsys.readouterr().out.strip() == "0.25"


def test_negative_vector_values(tmp_path, capsys):
    haar, net = str(tmp_path / "ramp.json"), str(tmp_path / "net.json")
    assert run(["project", "--fn", "linear_ramp", "--domain", "-1,-1:1,1", "--res", "2", "--out", haar]) == EXIT_OK
    assert run(["compile-haar", "--haar", haar, "--eps", "0.05", "--out", net]) == EXIT_OK
    capsys.readouterr()
    assert run(["eval", "--net", net, "--point", "-0.5,-0.5"]) == EXIT_OK
    expected = load_haar(haar).evaluate([[-0.5, -0.5]])[0]
    assert float(capsys.readouterr().out) == pytest.approx(expected, abs=1e-9)


def test_normalise_argv():
    assert normalise_argv(["eval", "--point", "-1,2"]) == ["eval", "--point=-1,2"]
    assert normalise_argv(["plot", "--bounds", "0,0:1,1"]) == ["plot", "--bounds", "0,0:1,1"]
    assert normalise_argv(["eval", "--point", "--net", "x"]) == ["eval", "--point", "--net", "x"]
    assert normalise_argv(["--log-level", "debug"]) == ["--log-level", "debug"]


def test_log_level_flag_keeps_handlers(tmp_path, capsys, abs_net):
    path = save_network(abs_net, str(tmp_path / "abs.json"))
    package = logging.getLogger("relu_compiler")
    level, handlers, root_handlers = package.level, list(package.handlers), list(logging.getLogger().handlers)
    try:
        assert run(["--log-level", "debug", "eval", "--net", path, "--point", "1"]) == EXIT_OK
        assert package.level == logging.DEBUG
        assert package.handlers == handlers
        assert logging.getLogger().handlers == root_handlers
    finally:
        package.setLevel(level)


def test_eval_wrong_width(tmp_path, capsys, abs_net):
    path = save_network(abs_net, str(tmp_path / "abs.json"))
    assert run(["eval", "--net", path, "--point", "1,2"]) == EXIT_USAGE
    assert "DimensionMismatch" in capsys.readouterr().err


def test_usage_errors(tmp_path, capsys):
    assert run(["eval", "--nope"]) == EXIT_USAGE
    assert run([]) == EXIT_USAGE
    assert run(["eval", "--net", str(tmp_path / "missing.json"), "--point", "1"]) == EXIT_USAGE
    assert run(["--version"]) == EXIT_OK


def test_compile_haar_params_too_loose(tmp_path, capsys, two_cells):
    haar = save_haar(two_cells, str(tmp_path / "f.json"))
    code = run(["compile-haar", "--haar", haar, "--eps", "0.3", "--out", str(tmp_path / "net.json")])
    assert code == EXIT_CONSTRUCTION
    assert "ParamsTooLoose:" in capsys.readouterr().err


def test_project_compile_verify_haar(tmp_path, capsys):
    haar, net = str(tmp_path / "ramp.json"), str(tmp_path / "net.json")
    assert run(["project", "--fn", "linear_ramp", "--domain", "0,0:1,1", "--res", "2", "--out", haar]) == EXIT_OK
    assert run(["compile-haar", "--haar", haar, "--eps", "0.05", "--out", net]) == EXIT_OK
    doc = json.loads((tmp_path / "ramp.json").read_text())
    assert doc["provenance"]["tool"] == "relu-compiler"
    assert doc["provenance"]["run_config"]["projection"] == {"fn": "linear_ramp", "domain": "0,0:1,1", "res": 2}
    metadata = json.loads(load_network(net).metadata)
    assert metadata["tool"] == "relu-compiler"
    assert metadata["run_config"]["tighten"]["outer_offset"] == 0.05
    code = run(["--export-dir", str(tmp_path / "reports"), "verify", "haar", "--net", net, "--spec", haar,
                "--eps", "0.05", "--samples", "2000", "--report", "haar.json"])
    out = capsys.readouterr().out
    assert code == EXIT_OK, out
    assert "✓ verify haar: pass" in out
    report = json.loads((tmp_path / "reports" / "haar.json").read_text())
    assert report["pass"] is True
    assert report["provenance"]["run_config"]["subcommand"] == "verify"


def test_compile_haar_baseline_flag(tmp_path, capsys, two_cells):
    haar = save_haar(two_cells, str(tmp_path / "f.json"))
    plain, shifted = str(tmp_path / "plain.json"), str(tmp_path / "shifted.json")
    assert run(["compile-haar", "--haar", haar, "--eps", "0.05", "--out", plain]) == EXIT_OK
    assert run(["compile-haar", "--haar", haar, "--eps", "0.05", "--baseline", "--out", shifted]) == EXIT_OK
    capsys.readouterr()
    assert run(["eval", "--net", plain, "--point", "9,9"]) == EXIT_OK
    assert float(capsys.readouterr().out) == 0.0
    assert run(["eval", "--net", shifted, "--point", "9,9"]) == EXIT_OK
    assert float(capsys.readouterr().out) == 2.5


def test_compile_and_verify_tree(tmp_path, capsys, corner_tree, corner_data):
    tree = save_tree(corner_tree, str(tmp_path / "tree.json"))
    data = write_calibration_csv(str(tmp_path / "calib.csv"), corner_data)
    net = str(tmp_path / "net.json")
    assert run(["compile-tree", "--tree", tree, "--data", data, "--out", net]) == EXIT_OK
    assert run(["eval", "--net", net, "--point=-0.5,0.5"]) == EXIT_OK
    assert capsys.readouterr().out.strip().splitlines()[-1] == "0"
    code = run(["--export-dir", str(tmp_path), "verify", "tree", "--net", net, "--spec", tree, "--data", data,
                "--samples", "2000", "--report", "tree_report.json"])
    assert code in (EXIT_OK, EXIT_VERIFY_FAILED)
    report = json.loads((tmp_path / "tree_report.json").read_text())
    assert report["agreement_rate"] == 1.0
    calibration = next(c for c in report["criteria"] if c["name"] == "calibration_agreement")
    assert calibration["passed"]


def test_verify_tree_needs_data(tmp_path, capsys, corner_tree, abs_net):
    tree = save_tree(corner_tree, str(tmp_path / "tree.json"))
    net = save_network(abs_net, str(tmp_path / "abs.json"))
    assert run(["verify", "tree", "--net", net, "--spec", tree]) == EXIT_USAGE


def test_compile_tree_label_mismatch(tmp_path, capsys, stump):
    tree = save_tree(stump, str(tmp_path / "stump.json"))
    (tmp_path / "calib.csv").write_text("1.0,0.5,0\n-1.0,0.0,0\n")
    code = run(["compile-tree", "--tree", tree, "--data", str(tmp_path / "calib.csv"),
                "--out", str(tmp_path / "net.json")])
    assert code == EXIT_USAGE
    assert "LabelMismatch" in capsys.readouterr().err


def test_compile_forest(tmp_path, capsys, split_forest, split_forest_data):
    forest = save_forest(split_forest, str(tmp_path / "forest.json"))
    data = write_calibration_csv(str(tmp_path / "calib.csv"), split_forest_data)
    net = str(tmp_path / "net.json")
    assert run(["compile-forest", "--forest", forest, "--data", data, "--out", net]) == EXIT_OK
    capsys.readouterr()
    assert run(["eval", "--net", net, "--point", "2.5"]) == EXIT_OK
    values = [float(v) for v in capsys.readouterr().out.strip().split(",")]
    assert len(values) == 3
    assert values.index(max(values)) == 2


def test_gadgets(tmp_path, capsys):
    assert run(["gadget", "gate", "--beta", "10", "--margin", "1"]) == EXIT_OK
    assert float(capsys.readouterr().out) == pytest.approx(4.53979e-5, rel=1e-5)
    assert run(["gadget", "transmit", "--eps", "0.1", "0.05"]) == EXIT_OK
    lines = capsys.readouterr().out.strip().splitlines()
    assert len(lines) == 2 and lines[0].startswith("eps=0.1")


def test_plot(tmp_path, capsys, two_cells):
    haar = save_haar(two_cells, str(tmp_path / "f.json"))
    net = str(tmp_path / "net.json")
    assert run(["compile-haar", "--haar", haar, "--eps", "0.05", "--out", net]) == EXIT_OK
    svg = tmp_path / "f.svg"
    assert run(["plot", "--net", net, "--bounds", "-0.5,-0.5:1.5,1.5", "--res", "32", "--haar", haar,
                "--out", str(svg)]) == EXIT_OK
    text = svg.read_text()
    assert text.lstrip().startswith("<?xml")
    assert f"relu-compiler {__version__}" in text
    assert "run_config" in text
