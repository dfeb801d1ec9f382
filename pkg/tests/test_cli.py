import json
import subprocess
import sys

import pytest

from absplace import cli, harness
from test_harness import small_dict


@pytest.fixture
def scenario_file(tmp_path):
    p = tmp_path / "s.json"
    p.write_text(json.dumps(small_dict()))
    return p


def test_place(scenario_file, tmp_path, capsys):
    out = tmp_path / "place.json"
    assert cli.main(["place", str(scenario_file), "-o", str(out)]) == cli.EXIT_OK
    data = json.loads(out.read_text())
    assert data["feasible"] and data["num_abs"] == len(data["active_columns"])
    assert data["num_abs"] >= data["lower_bound"]
    assert "ABSs" in capsys.readouterr().err


def test_place_seed_and_nonconvergence(scenario_file, tmp_path):
    out = tmp_path / "p.json"
    code = cli.main(["place", str(scenario_file), "--seed", "3", "--max-iters", "1",
                     "--eps-abs", "1e-30", "--eps-rel", "1e-30", "-o", str(out)])
    assert code == cli.EXIT_NONCONVERGED
    assert json.loads(out.read_text())["converged"] is False


def test_sweep(scenario_file, tmp_path, capsys):
    out = tmp_path / "sweep.csv"
    args = ["sweep", str(scenario_file), "--param", "num_gts", "--values", "3,6",
            "--trials", "2", "-o", str(out)]
    assert cli.main(args) == 0
    first = out.read_text()
    assert first.splitlines()[0] == ",".join(harness.CSV_HEADER)
    assert len(first.splitlines()) == 1 + 2 * 2 * 3
    assert cli.main(args + ["--threads", "2"]) == 0
    assert out.read_text() == first


def test_bound(capsys, scenario_file):
    assert cli.main(["bound", "--num-gts", "70", "--min-rate", "2e7", "--backhaul", "1e8"]) == 0
    assert capsys.readouterr().out.strip() == "14"
    assert cli.main(["bound", str(scenario_file)]) == 0
    assert capsys.readouterr().out.strip() == "2"
    assert cli.main(["bound", "--num-gts", "3", "--min-rate", "1", "--backhaul", "0"]) == 2
    assert cli.main(["bound", "--num-gts", "3"]) == cli.EXIT_PARSE


def test_oracle(tmp_path):
    d = small_dict(flight_grid={"dims": [2, 2, 2], "min_height": 50})
    p = tmp_path / "o.json"
    p.write_text(json.dumps(d))
    out = tmp_path / "oracle.json"
    assert cli.main(["oracle", str(p), "-o", str(out)]) == 0
    assert json.loads(out.read_text())["min_count"] >= 2
    big = tmp_path / "big.json"
    big.write_text(json.dumps(small_dict(flight_grid={"dims": [5, 5, 2], "min_height": 50})))
    assert cli.main(["oracle", str(big)]) == cli.EXIT_FAIL


def test_extensions(scenario_file, tmp_path):
    place = tmp_path / "place.json"
    cli.main(["place", str(scenario_file), "-o", str(place)])
    conn = tmp_path / "conn.json"
    assert cli.main(["min-connections", str(scenario_file), "--placement", str(place),
                     "-o", str(conn)]) == 0
    assert json.loads(conn.read_text())["connections"] >= 8
    served = tmp_path / "served.json"
    assert cli.main(["allocate-served", str(scenario_file), "-o", str(served)]) == 0
    assert json.loads(served.read_text())["served"] == 8


def test_gain_map(scenario_file, tmp_path):
    out = tmp_path / "g.txt"
    assert cli.main(["gain-map", str(scenario_file), "-o", str(out), "--model", "free_space"]) == 0
    from absplace.propagation import load_gain_map
    gm = load_gain_map(out)
    sc = harness.load_scenario(scenario_file)
    assert gm.shape == (len(harness.gt_candidates(sc)), len(harness.flight_grid(sc)))


@pytest.mark.parametrize("args", [
    ["place", "nope.json"],
    ["sweep", "default", "--param", "num_gts", "--values", "a,b"],
    ["sweep", "default", "--param", "colour", "--values", "1"],
    ["sweep", "default", "--param", "num_gts", "--values", "1", "--algorithms", "magic"],
    ["frobnicate"],
    ["place", "default", "--rho", "fast"],
])
def test_parse_errors(args):
    with pytest.raises(SystemExit) as exc:
        code = cli.main(args)
        raise SystemExit(code)
    assert exc.value.code == cli.EXIT_PARSE


def test_bad_scenario_and_placement(tmp_path, scenario_file):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps(small_dict(channel={"model": "raytrace"})))
    assert cli.main(["place", str(bad)]) == cli.EXIT_PARSE
    junk = tmp_path / "junk.json"
    junk.write_text("[1, 2]")
    assert cli.main(["min-connections", str(scenario_file), "--placement", str(junk)]) == cli.EXIT_PARSE


def test_infeasible_exit(tmp_path):
    p = tmp_path / "inf.json"
    p.write_text(json.dumps(small_dict(backhaul={"constant": 1e6})))
    assert cli.main(["place", str(p)]) == cli.EXIT_INFEASIBLE


def test_console_entry_point():
    res = subprocess.run([sys.executable, "-m", "absplace.cli", "bound", "--num-gts", "70",
                          "--min-rate", "2e7", "--backhaul", "1e8"],
                         capture_output=True, text=True)
    assert res.returncode == 0 and res.stdout.strip() == "14"
