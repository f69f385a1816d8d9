import csv
import json

import numpy as np
import pytest

from pwabarrier import fixtures as fx
from pwabarrier import io as pio
from pwabarrier.barrier import monte_carlo_area
from pwabarrier.cli import main
from pwabarrier.dynamics import simulate


@pytest.fixture(scope="module")
def files(tmp_path_factory):
    d = tmp_path_factory.mktemp("fx")
    pio.write_json(d / "stable.json", pio.system_to_dict(fx.linear_system(-1.0)))
    pio.write_json(d / "unstable.json", pio.system_to_dict(fx.linear_system(+1.0)))
    pio.write_json(d / "neuron.json", fx.relu_to_json(fx.single_neuron()))
    pio.write_json(d / "relu8.json", fx.relu_to_json(fx.load_relu("pendulum")))
    return d


@pytest.fixture(scope="module")
def stable_barrier(files):
    assert main(["synth", str(files / "stable.json"), "--alpha", "0.5", "--out", str(files / "b.json")]) == 0
    return files / "b.json"


def test_convert_single_neuron(files, capsys):
    out = files / "neuron_sys.json"
    assert main(["convert", str(files / "neuron.json"), "--box=-1,1", "--out", str(out)]) == 0
    assert "regions: 2" in capsys.readouterr().out
    assert len(json.loads(out.read_text())["cells"]) == 2


def test_convert_pendulum_equivalence(files):
    out = files / "relu_sys.json"
    assert main(["convert", str(files / "relu8.json"), f"--box={-np.pi},{np.pi}", "--out", str(out)]) == 0
    assert json.loads(out.read_text())["conversion"]["max_discrepancy"] <= 1e-9


def test_convert_malformed(files, capsys):
    (files / "broken.json").write_text('{"W1": [[1, 0]]')
    assert main(["convert", str(files / "broken.json"), "--box=-1,1"]) == 2
    assert "invalid JSON" in capsys.readouterr().err


def test_convert_schema_error(files, capsys):
    (files / "noW2.json").write_text('{"W1": [[1, 0]], "b1": [0], "b2": [0, 0]}')
    assert main(["convert", str(files / "noW2.json"), "--box=-1,1"]) == 2
    assert "'W2' is a required property" in capsys.readouterr().err


def test_synth_certified(stable_barrier):
    obj = json.loads(stable_barrier.read_text())
    assert obj["certified"] and obj["verification"]["passed"]
    assert obj["alpha_1"] == obj["alpha_m"] == 0.5


def test_synth_uncertified(files):
    out = files / "u.json"
    assert main(["synth", str(files / "unstable.json"), "--max-rounds", "2", "--out", str(out)]) == 3


def test_synth_zero_rounds(files, capsys):
    out = files / "u0.json"
    assert main(["synth", str(files / "unstable.json"), "--max-rounds", "0", "--out", str(out)]) == 3
    assert "rounds=0" in capsys.readouterr().out
    assert json.loads(out.read_text())["synthesis"]["rounds"] == 0


def test_verify_pass_and_fail(files, stable_barrier):
    assert main(["verify", str(files / "stable.json"), str(stable_barrier)]) == 0
    obj = json.loads(stable_barrier.read_text())
    for c in obj["cells"]:
        c["t"] -= 1.0
    (files / "bad_b.json").write_text(json.dumps(obj))
    assert main(["verify", str(files / "stable.json"), str(files / "bad_b.json"),
                 "--out", str(files / "vr.json")]) == 4
    assert json.loads((files / "vr.json").read_text())["min_residual"] < 0


def test_verify_mismatched_partition(files, stable_barrier):
    pio.write_json(files / "other.json", pio.system_to_dict(fx.linear_system(-1.0, 3, "alternate")))
    assert main(["verify", str(files / "other.json"), str(stable_barrier)]) == 2


def test_uis_single_alpha_matches_synth(files, stable_barrier, tmp_path):
    assert main(["uis", str(files / "stable.json"), "--alphas", "0.5", "--mc-samples", "5000",
                 "--grid", "40", "--out", str(tmp_path)]) == 0
    u, _ = pio.load_barrier(tmp_path / "union_barrier.json")
    b, _ = pio.load_barrier(stable_barrier)
    X = np.random.default_rng(0).uniform(-1, 1, size=(1000, 2))
    assert np.allclose(u(X), b(X), atol=1e-9)
    report = json.loads((tmp_path / "report.json").read_text())
    assert report["containment"]["passed"]


def test_uis_uncertified_exit(files, tmp_path):
    assert main(["uis", str(files / "unstable.json"), "--alphas", "0.5", "--max-rounds", "1",
                 "--out", str(tmp_path)]) == 3
    assert json.loads((tmp_path / "report.json").read_text())["members"][0]["certified"] is False


def test_simulate_csv(files):
    out = files / "tr.csv"
    assert main(["simulate", str(files / "stable.json"), "--x0=1,0", "--T", "1", "--out", str(out)]) == 0
    rows = list(csv.reader(out.open()))
    assert rows[0] == ["t", "x1", "x2"]
    assert float(rows[-1][1]) == pytest.approx(np.exp(-1), abs=1e-6)


def test_export_superlevel_area(files, stable_barrier):
    out = files / "sl.json"
    assert main(["export", str(stable_barrier), "--what", "superlevel", "--out", str(out)]) == 0
    polys = json.loads(out.read_text())["polygons"]
    area = sum(p["area"] for p in polys)
    b, _ = pio.load_barrier(stable_barrier)
    assert abs(area - monte_carlo_area(b, b.partition.domain, 100_000)) <= 0.01 * area


def test_export_empty_superlevel(files, stable_barrier):
    obj = json.loads(stable_barrier.read_text())
    for c in obj["cells"]:
        c["t"] -= 100.0
    (files / "neg.json").write_text(json.dumps(obj))
    assert main(["export", str(files / "neg.json"), "--out", str(files / "empty.json")]) == 0
    assert json.loads((files / "empty.json").read_text())["polygons"] == []


def test_export_partition(files, stable_barrier):
    out = files / "part.json"
    assert main(["export", str(stable_barrier), "--what", "partition", "--out", str(out)]) == 0
    cells = json.loads(out.read_text())["cells"]
    assert len(cells) == 16 and all(len(c["vertices"]) == 3 for c in cells)


def test_export_trajectories_match_simulate(files, stable_barrier, tmp_path):
    assert main(["export", str(stable_barrier), "--what", "trajectories", "--system", str(files / "stable.json"),
                 "--x0=0.5,0.2", "--x0=-0.3,0.1", "--T", "2", "--dt", "0.01", "--out", str(tmp_path)]) == 0
    tr = simulate(fx.linear_system(-1.0), [0.5, 0.2], 0.01, 2.0)
    rows = list(csv.reader((tmp_path / "traj_000.csv").open()))[1:]
    assert len(rows) == len(tr.times)
    assert np.allclose(np.array(rows, float), np.column_stack([tr.times, tr.states]), atol=1e-11)
    assert (tmp_path / "traj_001.csv").exists()


def test_export_trajectories_needs_system(stable_barrier, tmp_path):
    assert main(["export", str(stable_barrier), "--what", "trajectories", "--out", str(tmp_path)]) == 2


def test_rerun_from_manifest_is_bit_identical(files, tmp_path):
    out = tmp_path / "b.json"
    assert main(["synth", str(files / "stable.json"), "--alpha", "0.3", "--out", str(out)]) == 0
    first = out.read_bytes()
    man = json.loads((tmp_path / "b.manifest.json").read_text())
    assert man["outputs"] == [str(out)] and man["command"] == "synth"
    out.unlink()
    assert main(man["argv"]) == 0
    assert out.read_bytes() == first


def test_fixtures_command(tmp_path):
    assert main(["fixtures", "--grid", "4", "--out", str(tmp_path)]) == 0
    for name in ("pendulum_system.json", "example2_system.json", "pendulum_relu8.json", "example2_relu20.json"):
        assert (tmp_path / name).exists()
    assert pio.load_weights(tmp_path / "example2_relu20.json").hidden == 20


def test_bad_args_exit_2():
    with pytest.raises(SystemExit) as exc:
        main(["synth"])
    assert exc.value.code == 2
