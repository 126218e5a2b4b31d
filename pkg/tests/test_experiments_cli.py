import csv
import json

import pytest

from fdmec.cli import EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_OK, main
from fdmec.errors import ConfigurationError
from fdmec.experiments import (
    INFEASIBLE_COLUMNS, RESULT_COLUMNS, SUMMARY_COLUMNS, TRACE_COLUMNS, ExperimentSpec,
    emit_convergence_trace, fmt, run_experiment,
)
from fdmec.units import ScenarioSpec

SMALL = {"kind": "sweep_T", "grid": [0.1, 0.2], "seeds": 2, "scenario": {"user_count": 4},
         "schemes": ["proposed", "oma_fd", "noma_hd"]}


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


@pytest.mark.parametrize("change", [
    {"kind": "sweep_X"}, {"seeds": 0}, {"grid": []}, {"grid": [0.2, 0.1]},
    {"schemes": ["tdma"]}, {"solver": {"max_outer_iterations": 0}}, {"colour": "red"},
    {"kind": "pairing", "grid": ["SM", "XY"]},
])
def test_spec_validation(change):
    with pytest.raises(ConfigurationError):
        ExperimentSpec.from_dict({**SMALL, **change})


def test_spec_round_trip():
    spec = ExperimentSpec.from_dict(SMALL)
    again = ExperimentSpec.from_dict(spec.to_dict())
    assert again.to_dict() == spec.to_dict()
    assert spec.point(0.2)[1].slot_duration_s == 0.2
    pairing = ExperimentSpec("pairing", ["SW", "SM"], seeds=1)
    assert pairing.point("SW")[0].pairing_strategy == "SW"


def test_fmt_is_twelve_digits():
    assert fmt(1 / 3) == "0.333333333333"
    assert fmt(3) == "3" and fmt(True) == "true" and fmt(None) == ""


@pytest.fixture(scope="module")
def sweep_dirs(tmp_path_factory):
    spec = ExperimentSpec.from_dict(SMALL)
    a, b = tmp_path_factory.mktemp("a"), tmp_path_factory.mktemp("b")
    out = run_experiment(spec, a)
    run_experiment(spec, b)
    return spec, out, a, b


def test_reruns_are_byte_identical(sweep_dirs):
    _, _, a, b = sweep_dirs
    names = sorted(p.name for p in a.iterdir())
    assert names == sorted(p.name for p in b.iterdir())
    for name in names:
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_row_counts_and_headers(sweep_dirs):
    spec, out, a, _ = sweep_dirs
    results, failed = _rows(a / "results.csv"), _rows(a / "infeasible.csv")
    assert len(results) + len(failed) == len(spec.grid) * spec.seeds * len(spec.schemes)
    assert len(results) == len(out["solved"]) and len(failed) == len(out["infeasible"])
    for name, columns in (("results.csv", RESULT_COLUMNS), ("infeasible.csv", INFEASIBLE_COLUMNS)):
        assert (a / name).read_text().splitlines()[0] == ",".join(c for c, _ in columns)
    schema = json.loads((a / "schema.json").read_text())
    assert [c["name"] for c in schema["summary.csv"]["columns"]] == [c for c, _ in SUMMARY_COLUMNS]
    meta = json.loads((a / "metadata.json").read_text())
    assert meta["spec"]["seeds"] == 2 and meta["infeasible"] == len(failed)


def test_summary_means_and_pairing(sweep_dirs):
    spec, _, a, _ = sweep_dirs
    results = _rows(a / "results.csv")
    summary = _rows(a / "summary.csv")
    assert len(summary) == len(spec.grid) * len(spec.schemes)
    for row in summary:
        mine = [float(r["total_energy_j"]) for r in results
                if r["scheme"] == row["scheme"] and r["sweep_value"] == row["sweep_value"]]
        assert int(row["n_solved"]) == len(mine)
        assert int(row["n_solved"]) + int(row["n_infeasible"]) == spec.seeds
        if mine:
            assert float(row["mean_energy_j"]) == pytest.approx(sum(mine) / len(mine), rel=1e-11)
        seeds = {s: {r["seed"] for r in results if r["scheme"] == s and r["sweep_value"] == row["sweep_value"]}
                 for s in spec.schemes}
        assert int(row["n_paired"]) == len(set.intersection(*seeds.values()))


def test_convergence_trace(tmp_path):
    path_a, path_b = tmp_path / "a.csv", tmp_path / "b.csv"
    scenario = ScenarioSpec(user_count=4)
    rows = emit_convergence_trace(0, [2e9, 6e9], path_a, scenario=scenario)
    emit_convergence_trace(0, [2e9, 6e9], path_b, scenario=scenario)
    assert path_a.read_bytes() == path_b.read_bytes()
    assert path_a.read_text().splitlines()[0] == ",".join(c for c, _ in TRACE_COLUMNS)
    for value in (2e9, 6e9):
        trace = [r["objective_j"] for r in rows if r["sweep_value"] == value]
        assert 2 <= len(trace) <= 11
        assert all(b <= a + 1e-9 for a, b in zip(trace, trace[1:]))
        assert [r["normalized"] for r in rows if r["sweep_value"] == value][0] == 1.0


def test_worker_pool_matches_serial(tmp_path):
    doc = {**SMALL, "grid": [0.1], "schemes": ["proposed"]}
    spec = ExperimentSpec.from_dict(doc)
    run_experiment(spec, tmp_path / "serial")
    run_experiment(spec, tmp_path / "pool", workers=2)
    for name in ("results.csv", "infeasible.csv", "summary.csv"):
        assert (tmp_path / "serial" / name).read_bytes() == (tmp_path / "pool" / name).read_bytes()


def test_cli_run(tmp_path):
    spec = tmp_path / "spec.json"
    spec.write_text(json.dumps({**SMALL, "grid": [0.1], "seeds": 1, "schemes": ["proposed"]}))
    assert main(["run", str(spec), "--out", str(tmp_path / "out"), "--quiet"]) == EXIT_OK
    assert (tmp_path / "out" / "summary.csv").exists()
    assert main(["run", str(spec), "--out", str(tmp_path / "out"), "--workers", "0"]) == EXIT_CONFIG
    assert main(["run", str(tmp_path / "missing.json")]) == EXIT_CONFIG


def test_cli_solve_exit_codes(tmp_path, capsys):
    ok = tmp_path / "ok.json"
    ok.write_text(json.dumps({"scenario": {"user_count": 4, "rng_seed": 0}}))
    assert main(["solve", str(ok)]) == EXIT_OK
    report = json.loads(capsys.readouterr().out)
    assert report["status"] in ("converged", "iteration-limit")
    assert report["trace"][-1] == report["objective_j"]

    lonely = tmp_path / "lonely.json"
    lonely.write_text(json.dumps({"users": [{
        "uplink_gain": 1e-2, "downlink_gain": 1e-2, "eh_efficiency": 0.8, "task_bits": 2e5,
        "cycles_per_bit": 1000.0, "local_energy_per_cycle_j": 1e-10,
        "local_capacity_cycles_per_s": 1e9}], "groups": [[0]]}))
    assert main(["solve", str(lonely)]) == EXIT_INFEASIBLE
    assert json.loads(capsys.readouterr().out)["infeasible_family"] == "energy_harvesting"

    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"system": {"slot_duration_s": -1.0}}))
    assert main(["solve", str(bad)]) == EXIT_CONFIG
    assert main(["solve", str(ok), "--tol", "0"]) == EXIT_CONFIG
