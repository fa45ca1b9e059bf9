"""Command line tests: exit codes, table output and CSV output."""

import io
import json

import numpy as np
import pytest

from .cli import main
from .logging_config import get_simulation_logger
from .matrix_factory import gen_kerdock
from .storage import CSV_COLUMNS, read_matrix, read_results_csv, write_matrix


@pytest.fixture
def tiny_config(tmp_path):
    path = tmp_path / "tiny.json"
    path.write_text(json.dumps({
        "name": "tiny",
        "trials": 20,
        "N": 40,
        "K": 2,
        "sigma2": 0.01,
        "matrix": {"kind": "partial-dft", "M": 10, "seed": 1, "search_count": 3},
        "detectors": [{"family": "rdd"}, {"family": "rddf"}],
        "sweep": {"variable": "M", "values": [8, 12]},
        "tune": {"family": "rddt", "grid": [0.3, 0.5]},
    }))
    return path


def test_gen_matrix_and_coherence(tmp_path, capsys):
    out = tmp_path / "kerdock16.mat"
    assert main(["gen-matrix", "--kind", "kerdock", "--rows", "16", "--out", str(out)]) == 0
    assert read_matrix(out).shape == (16, 256)
    assert "0.25" in capsys.readouterr().out

    assert main(["coherence", str(out), "--dft-c", "2"]) == 0
    table = capsys.readouterr().out
    assert "welch_bound" in table and "dft_coherence_bound" in table


def test_gen_matrix_needs_cols(capsys):
    assert main(["gen-matrix", "--kind", "gaussian", "--rows", "4"]) == 1
    assert "--cols is required" in capsys.readouterr().err


def test_missing_file_is_a_runtime_error(tmp_path, capsys):
    assert main(["coherence", str(tmp_path / "nope.mat")]) == 1
    assert "error: file not found" in capsys.readouterr().err


def test_parse_error_names_the_line(tmp_path, capsys):
    path = tmp_path / "bad.mat"
    path.write_text("RDMUD-MAT v1 2 2 real\n1 0\n0\n")
    assert main(["coherence", str(path)]) == 1
    assert f"{path}:3:" in capsys.readouterr().err


def test_usage_errors_exit_2():
    with pytest.raises(SystemExit) as info:
        main(["gen-matrix", "--kind", "hadamard", "--rows", "4"])
    assert info.value.code == 2
    with pytest.raises(SystemExit) as info:
        main(["detect", "--y", "y.mat", "--matrix", "a.mat", "--detector", "rddf"])
    assert info.value.code == 2


def test_detect(tmp_path, capsys):
    A = gen_kerdock(16, 64, seed=4)
    b = np.zeros(64)
    b[[5, 40]] = [1, -1]
    write_matrix(tmp_path / "a.mat", A.values)
    write_matrix(tmp_path / "y.mat", A.values @ b)
    code = main(["detect", "--y", str(tmp_path / "y.mat"), "--matrix", str(tmp_path / "a.mat"),
                 "--detector", "rddf", "--k", "2"])
    assert code == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "support: 5 40"
    assert lines[1].split()[1:] == [str(int(s)) for s in b]


def test_pe_sweep_csv(tiny_config, tmp_path, capsys):
    assert main(["pe-sweep", str(tiny_config)]) == 0
    captured = capsys.readouterr()
    rows = read_results_csv(io.StringIO(captured.out))
    assert len(rows) == 4
    assert list(rows[0]) == list(CSV_COLUMNS)
    assert [row["detector"] for row in rows] == ["rdd", "rddf", "rdd", "rddf"]
    assert "tiny: 4 estimates" in captured.err

    out = tmp_path / "results.csv"
    assert main(["--threads", "2", "pe-sweep", str(tiny_config), "--trials", "10", "--out", str(out)]) == 0
    with open(out, encoding="utf-8") as f:
        assert {row["trials"] for row in read_results_csv(f)} == {"10"}


def test_pe_sweep_results_do_not_depend_on_threads(tiny_config, capsys):
    main(["pe-sweep", str(tiny_config)])
    serial = capsys.readouterr().out
    main(["--threads", "3", "pe-sweep", str(tiny_config)])
    assert capsys.readouterr().out == serial


def test_invalid_config(tmp_path, capsys):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"N": 10, "detectors": [{"family": "rdd", "colour": "red"}]}))
    assert main(["pe-sweep", str(path)]) == 1
    err = capsys.readouterr().err
    assert "invalid config" in err and "detectors.0.colour" in err


def test_bounds(tiny_config, capsys):
    assert main(["bounds", str(tiny_config)]) == 0
    out = capsys.readouterr().out
    assert "tau" in out and "pe_bound_rddf" in out
    header, values = out.strip().splitlines()[-2:]
    assert len(header.split(",")) == len(values.split(","))


def test_tune(tiny_config, capsys):
    assert main(["tune", str(tiny_config)]) == 0
    captured = capsys.readouterr()
    lines = captured.out.splitlines()
    assert lines[0] == "xi,pe,ci_halfwidth"
    assert len(lines) == 3
    assert "best xi" in captured.err


def test_reproduce_list(capsys):
    assert main(["reproduce", "--list"]) == 0
    names = capsys.readouterr().out.split()
    assert "table1" in names and "fig10d" in names


def test_reproduce_unknown_preset(capsys):
    assert main(["reproduce", "fig99"]) == 1
    assert "unknown preset" in capsys.readouterr().err


def test_log_dir(tiny_config, tmp_path):
    log_dir = tmp_path / "logs"
    assert main(["--log-dir", str(log_dir), "pe-sweep", str(tiny_config), "--trials", "5"]) == 0
    assert (log_dir / "runs" / "runs.log").read_text().count("Estimate") == 4
    assert get_simulation_logger().get_log_files() == {
        "runs": ["runs.log"],
        "errors": ["errors.log"],
        "debug": ["debug.log"],
    }


def test_matrix_cache_keeps_searched_matrices(tiny_config, tmp_path, capsys):
    cache = tmp_path / "cache"
    assert main(["--matrix-cache", str(cache), "pe-sweep", str(tiny_config), "--trials", "5"]) == 0
    first = capsys.readouterr().out
    assert sorted(p.name for p in cache.glob("*.mat")) == [
        "partial-dft-12x40-seed1-search3.mat",
        "partial-dft-8x40-seed1-search3.mat",
    ]
    assert len(list(cache.glob("*.json"))) == 2

    assert main(["--matrix-cache", str(cache), "pe-sweep", str(tiny_config), "--trials", "5"]) == 0
    assert capsys.readouterr().out == first

    out = tmp_path / "g.mat"
    assert main(["--matrix-cache", str(cache), "gen-matrix", "--kind", "gaussian", "--rows", "4",
                 "--cols", "8", "--search", "5", "--out", str(out)]) == 0
    assert (cache / "gaussian-4x8-seed0-search5.mat").exists()


def test_pe_sweep_reports_detector_failures(tmp_path, capsys):
    path = tmp_path / "narrow.json"
    path.write_text(json.dumps({
        "name": "narrow",
        "trials": 20,
        "N": 40,
        "K": 2,
        "sigma2": 0.01,
        "matrix": {"kind": "partial-dft", "M": 1, "seed": 1},
        "detectors": [{"family": "rd-ls"}],
    }))
    assert main(["pe-sweep", str(path)]) == 0
    assert "narrow: 1 estimates, 20 trials, 20 detector failures" in capsys.readouterr().err


def test_bounds_use_the_gain_spread(tmp_path, capsys):
    path = tmp_path / "spread.json"
    path.write_text(json.dumps({
        "name": "spread",
        "N": 256,
        "K": 2,
        "sigma2": 0.0,
        "matrix": {"kind": "kerdock", "M": 16},
        "amplitude": {"kind": "uniform", "low": 1.0, "high": 1.5},
        "detectors": [{"family": "rdd"}],
    }))
    assert main(["bounds", str(path)]) == 0
    header, values = capsys.readouterr().out.strip().splitlines()[-2:]
    row = dict(zip(header.split(","), values.split(",")))
    # mu = 1/4: r_min - 3 mu r_max, and the eps range ends at r_min (1 - mu)
    assert float(row["rdd_condition_lhs"]) == pytest.approx(1.0 - 3 * 0.25 * 1.5)
    assert [float(v) for v in row["eps_range"].split(";")] == pytest.approx([0.0, 0.75])
