import json
import math

import numpy as np
import pytest

from ncentre.cli import main

from .conftest import TRIANGLE


@pytest.fixture
def configs(tmp_path):
    def write(name, body):
        path = tmp_path / name
        path.write_text(json.dumps(body))
        return str(path)

    return {
        "kepler": write("kep.json", {"dim": 2, "centres": [[0, 0]], "strengths": [1]}),
        "triangle": write("tri.json", {"dim": 2, "centres": TRIANGLE, "strengths": [1, 1, 1]}),
        "euler": write("euler.json", {"dim": 2, "centres": [[1, 0], [-1, 0]],
                                      "strengths": [1, 1]}),
        "bad": write("bad.json", {"dim": 2, "centres": [[0, 0]], "strengths": [0]}),
    }


def run(*argv):
    return main([str(a) for a in argv])


def test_usage_errors_exit_64(configs, tmp_path, capsys):
    assert run("simulate", "--out", tmp_path) == 64
    with pytest.raises(SystemExit) as exc:
        run("scatter", "--config", configs["kepler"], "--energy", "x")
    assert exc.value.code == 64
    with pytest.raises(SystemExit) as exc:
        run("nonsense")
    assert exc.value.code == 64


def test_malformed_config_names_field(configs, tmp_path, capsys):
    assert run("simulate", "--config", configs["bad"], "--energy", 1, "--out", tmp_path) == 65
    assert "strengths" in capsys.readouterr().err


def test_unparsable_config_reports_line(tmp_path, capsys):
    path = tmp_path / "broken.json"
    path.write_text('{\n "dim": 2,\n "centres": [[0, 0]]\n "strengths": [1]}')
    assert run("simulate", "--config", path, "--energy", 1, "--out", tmp_path) == 65
    assert "line 4" in capsys.readouterr().err


def test_simulate_circular_orbit(configs, tmp_path):
    out = tmp_path / "circ"
    code = run("simulate", "--config", configs["kepler"], "--q", "1,0", "--p", "0,1",
               "--no-escape", "--budget-time", 5, "--out", out)
    assert code == 0
    data = np.genfromtxt(out / "trajectory.csv", delimiter=",", names=True)
    assert np.ptp(data["H"]) <= 1e-9
    r = np.hypot(data["q1"], data["q2"])
    assert np.allclose(r, 1.0, atol=1e-8)
    assert (out / "trajectory.csv.manifest.json").exists()
    assert (out / "events.jsonl.manifest.json").exists()


def test_simulate_triangle_beam_ends_with_sphere_exit(configs, tmp_path):
    out = tmp_path / "beam"
    assert run("simulate", "--config", configs["triangle"], "--energy", 10, "--angle", 0.3,
               "--impact", 0.2, "--out", out) == 0
    events = [json.loads(ln) for ln in (out / "events.jsonl").read_text().splitlines()]
    assert events[-1]["kind"] == "sphere_exit"
    man = json.loads((out / "trajectory.csv.manifest.json").read_text())
    assert {"config_hash", "command", "parameters", "seeds", "tool_version",
            "wall_time"} <= set(man)
    assert man["command"] == "simulate"


def test_scatter_single_centre_grid(configs, tmp_path):
    out = tmp_path / "k"
    assert run("scatter", "--config", configs["kepler"], "--energy", 2,
               "--impacts", "0.2:1.0:5", "--out", out) == 0
    lines = (out / "scatter.csv").read_text().splitlines()
    rows = [ln.split(",") for ln in lines[1:]]
    assert len(rows) == 5
    assert all(r[2] == "Scattering" for r in rows)
    assert all(abs(float(r[7])) <= 1e-8 for r in rows)


def test_scatter_is_deterministic_across_runs_and_jobs(configs, tmp_path):
    outs = []
    for name, jobs in (("a", 1), ("b", 1), ("c", 2)):
        out = tmp_path / name
        assert run("scatter", "--config", configs["triangle"], "--energy", 10,
                   "--random", 12, "--seed", 5, "--jobs", jobs, "--out", out) == 0
        outs.append((out / "scatter.csv").read_bytes())
    assert outs[0] == outs[1] == outs[2]
    out = tmp_path / "d"
    run("scatter", "--config", configs["triangle"], "--energy", 10, "--random", 12,
        "--seed", 6, "--out", out)
    assert (out / "scatter.csv").read_bytes() != outs[0]


def test_verify_single_centre_passes(configs, tmp_path):
    out = tmp_path / "v"
    code = run("verify-integrals", "--config", configs["kepler"], "--energy", 2,
               "--samples", 6, "--points", 5, "--out", out)
    assert code == 0
    rep = json.loads((out / "verify.json").read_text())
    assert rep["exit_code"] == 0
    assert set(rep["checks"]) == {"conservation", "rank", "bracket_H", "bracket_ff"}
    for c in rep["checks"].values():
        assert "fraction" in c and "threshold" in c


def test_verify_distinguishes_undetermined(configs, tmp_path):
    out = tmp_path / "u"
    code = run("verify-integrals", "--config", configs["triangle"], "--energy", 10,
               "--samples", 4, "--points", 5, "--budget-time", 0.5, "--out", out)
    assert code == 2
    assert json.loads((out / "verify.json").read_text())["determinate"] is False


def test_verify_triangle_reports_failed_check(configs, tmp_path):
    """Criterion 5's bracket between integrals fails; the code says so."""
    out = tmp_path / "f"
    code = run("verify-integrals", "--config", configs["triangle"], "--energy", 10,
               "--samples", 4, "--points", 5, "--out", out)
    rep = json.loads((out / "verify.json").read_text())
    assert rep["determinate"]
    assert code == (0 if all(c["passed"] for c in rep["checks"].values()) else 1)


@pytest.mark.parametrize("cfg,expect_zero", [("kepler", True), ("euler", True),
                                             ("triangle", False)])
def test_entropy_command(configs, tmp_path, cfg, expect_zero):
    out = tmp_path / cfg
    energy = 10 if cfg == "triangle" else 5
    assert run("entropy", "--config", configs[cfg], "--energy", energy, "--L-max", 5,
               "--grid", 60, "--max-samples", 1500, "--out", out) == 0
    text = (out / "census.csv").read_text()
    meta = json.loads(text.splitlines()[0][2:])
    if expect_zero:
        assert meta["slope"] == 0.0
    else:
        assert meta["slope"] > 0.0


def test_plotdata_kinds(configs, tmp_path):
    sc = tmp_path / "sc"
    run("scatter", "--config", configs["triangle"], "--energy", 10,
        "--impacts=-0.5:0.5:9", "--out", sc)
    for kind in ("tau", "angle"):
        assert run("plotdata", "--input", sc / "scatter.csv", "--kind", kind,
                   "--out", sc) == 0
        lines = (sc / f"scatter.{kind}.dat").read_text().splitlines()
        assert lines[0] == f"# impact {kind}"
        assert all(len(ln.split()) == 2 for ln in lines[1:])
        assert len(lines) - 1 <= 9
    tr = tmp_path / "tr"
    run("simulate", "--config", configs["kepler"], "--energy", 1, "--impact", 0.5,
        "--out", tr)
    assert run("plotdata", "--input", tr / "trajectory.csv", "--kind", "trajectory",
               "--out", tr) == 0
    lines = (tr / "trajectory.trajectory.dat").read_text().splitlines()
    assert lines[0] == "# q1 q2"
    en = tmp_path / "en"
    run("entropy", "--config", configs["triangle"], "--energy", 10, "--L-max", 4,
        "--grid", 40, "--no-refine", "--out", en)
    assert run("plotdata", "--input", en / "census.csv", "--kind", "census",
               "--out", en) == 0
    rows = [ln.split() for ln in (en / "census.census.dat").read_text().splitlines()[1:]]
    assert float(rows[0][1]) == pytest.approx(math.log(3))


def test_plotdata_wrong_kind_is_data_error(configs, tmp_path):
    tr = tmp_path / "tr"
    run("simulate", "--config", configs["kepler"], "--energy", 1, "--impact", 0.5,
        "--out", tr)
    assert run("plotdata", "--input", tr / "trajectory.csv", "--kind", "census",
               "--out", tr) == 65
