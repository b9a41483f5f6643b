import math
import subprocess
import sys
import xml.etree.ElementTree as ET
from pathlib import Path

import pytest

from fractalbv.cli import main


def run_cli(args, out):
    return main(list(args) + ["--out", str(out)])


def run_cli_capture(args, out, capsys):
    code = run_cli(args, out)
    return code, capsys.readouterr().out.strip()


def _parse_summary(line):
    vals = {}
    for tok in line.split():
        k, _, v = tok.partition("=")
        vals[k] = v
    return vals


def test_info_values_parse_exact(tmp_path, capsys):
    code, line = run_cli_capture(["info", "--preset", "sierpinski"], tmp_path, capsys)
    assert code == 0
    vals = _parse_summary(line)
    assert abs(float(vals["d_h"]) - math.log(3) / math.log(2)) < 1e-12
    assert abs(float(vals["d_w"]) - math.log(5) / math.log(2)) < 1e-12
    assert vals["L"] == "2" and vals["M"] == "3" and vals["R"] == "2"
    assert (tmp_path / "info.csv").exists()


def test_info_vicsek(tmp_path, capsys):
    code, line = run_cli_capture(["info", "--preset", "vicsek"], tmp_path, capsys)
    vals = _parse_summary(line)
    assert abs(float(vals["d_h"]) - math.log(5) / math.log(3)) < 1e-12
    assert abs(float(vals["d_w"]) - math.log(15) / math.log(3)) < 1e-12
    assert vals["R"] == "1"


def test_unknown_subcommand_exits_1(tmp_path):
    assert main(["make-coffee"]) == 1
    assert main(["info", "--bogus-flag"]) == 1


def test_precondition_errors_exit_1(tmp_path, capsys):
    code = run_cli(["info", "--depth", "15"], tmp_path)
    assert code == 1
    code = run_cli(["info", "--N", "12"], tmp_path)
    assert code == 1
    code = run_cli(["fold"], tmp_path)  # missing --input
    assert code == 1


def test_config_rejection_via_cli(tmp_path, capsys):
    bad = tmp_path / "bad.toml"
    bad.write_text("L = 2.0\n")
    code = run_cli(["info", "--config", str(bad)], tmp_path)
    assert code == 1
    err = capsys.readouterr().err
    assert "missing required keys" in err


def test_ks_profile_csv_schema(tmp_path, capsys):
    code, line = run_cli_capture(
        ["ks-profile", "--preset", "sierpinski", "--depth", "9", "--phases", "4",
         "--periods", "1", "--deterministic", "--svg"],
        tmp_path,
        capsys,
    )
    assert code == 0
    rows = (tmp_path / "ks-profile.csv").read_text().splitlines()
    assert rows[0] == "r,neg_ln_r,phase,N_lo,N_hi,width"
    first = rows[1].split(",")
    assert len(first) == 6
    # 9-significant-digit fixed format
    assert first[0] == f"{float(first[0]):.9g}"
    svg = (tmp_path / "ks-profile.svg").read_text()
    ET.fromstring(svg)  # well-formed XML
    assert "polyline" in svg


def test_heat_profile_csv_schema(tmp_path, capsys):
    code, line = run_cli_capture(
        ["heat-profile", "--preset", "sierpinski", "--N", "5", "--phases", "4",
         "--periods", "2", "--deterministic"],
        tmp_path,
        capsys,
    )
    assert code == 0
    rows = (tmp_path / "heat-profile.csv").read_text().splitlines()
    assert rows[0] == "t,neg_ln_t,k_steps,value,rescaled_value"
    fold_rows = (tmp_path / "heat-profile-fold.csv").read_text().splitlines()
    assert fold_rows[0] == "phase,mean,spread,n_samples"
    vals = _parse_summary(line)
    assert float(vals["band_ratio"]) < 10


def test_hit_tail_csv_schema(tmp_path, capsys):
    code, line = run_cli_capture(
        ["hit-tail", "--preset", "sierpinski", "--N", "5", "--phases", "4",
         "--periods", "1", "--samples", "10000", "--deterministic", "--seed", "0"],
        tmp_path,
        capsys,
    )
    assert code == 0
    rows = (tmp_path / "hit-tail.csv").read_text().splitlines()
    assert rows[0] == "t,neg_ln_t,k_steps,value,rescaled_value,exits,samples,ci_lo,ci_hi"
    vals = _parse_summary(line)
    assert float(vals["slope"]) < 0


def test_fold_subcommand(tmp_path, capsys):
    code, _ = run_cli_capture(
        ["ks-profile", "--preset", "sierpinski", "--depth", "9", "--phases", "8",
         "--periods", "2", "--deterministic"],
        tmp_path,
        capsys,
    )
    assert code == 0
    code, line = run_cli_capture(
        ["fold", "--input", str(tmp_path / "ks-profile.csv"), "--period",
         str(math.log(2.0)), "--gamma", "0"],
        tmp_path,
        capsys,
    )
    assert code == 0
    rows = (tmp_path / "fold.csv").read_text().splitlines()
    assert rows[0] == "phase,mean,spread,n_samples"
    vals = _parse_summary(line)
    assert int(vals["bins"]) == 8


def test_ks_union_exit_codes(tmp_path, capsys):
    code, line = run_cli_capture(
        ["ks-union", "--preset", "vicsek", "--union", "single", "--depth", "10",
         "--phases", "4", "--periods", "1", "--deterministic", "--memo"],
        tmp_path,
        capsys,
    )
    assert code == 0
    vals = _parse_summary(line)
    assert vals["matched"] == "true" and vals["recovered"] == "4"


def test_named_union_requires_window_one(tmp_path, capsys):
    code = run_cli(["ks-union", "--preset", "sierpinski", "--union", "single", "--level", "0"], tmp_path)
    assert code == 1


def test_deterministic_rerun_byte_identical(tmp_path):
    out1, out2 = tmp_path / "a", tmp_path / "b"
    args = [
        sys.executable, "-m", "fractalbv", "ks-oscillation", "--preset", "sierpinski",
        "--depth", "10", "--phases", "8", "--periods", "1", "--deterministic", "--seed", "0",
    ]
    r1 = subprocess.run(args + ["--out", str(out1)], capture_output=True, text=True)
    r2 = subprocess.run(args + ["--out", str(out2)], capture_output=True, text=True)
    assert r1.returncode == 0 and r2.returncode == 0
    assert r1.stdout.replace(str(out1), "") == r2.stdout.replace(str(out2), "")
    assert (out1 / "ks-oscillation.csv").read_bytes() == (out2 / "ks-oscillation.csv").read_bytes()


def test_scalecheck_cli(tmp_path, capsys):
    code, line = run_cli_capture(
        ["heat-scalecheck", "--preset", "sierpinski", "--N", "4", "--deterministic"],
        tmp_path,
        capsys,
    )
    assert code == 0
    vals = _parse_summary(line)
    assert float(vals["residual"]) < 1e-10
    rows = (tmp_path / "heat-scalecheck.csv").read_text().splitlines()
    assert rows[0] == "side,t,k_steps,value"
