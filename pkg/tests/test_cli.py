import csv
import json
import os

import numpy as np
import pytest

from gridsddp.cli import main

from conftest import case_path


def run_cli(*args):
    return main(list(args))


def read_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.reader(fh))


def test_run_sddp_deterministic_fixture(tmp_path):
    out = tmp_path / "det"
    rc = run_cli("run-sddp", "--case", case_path("det1.grid"),
                 "--wind", case_path("det1.model"),
                 "--iterations", "4", "--backward-samples", "2", "--scenarios", "2",
                 "--forward-samples", "2", "--stop-rule", "ci", "--seed", "1",
                 "--out", str(out))
    assert rc == 0
    summary = json.loads((out / "summary.json").read_text())
    assert summary["lower_bound"] == pytest.approx(summary["upper_mean"], rel=1e-9)
    assert summary["iterations"] == 1
    assert (out / "bounds.csv").exists()
    assert (out / "cuts.csv").exists()
    assert (out / "trajectories.csv").exists()


def test_run_sddp_reports_cut_accounting(tmp_path):
    out = tmp_path / "nine"
    rc = run_cli("run-sddp", "--case", case_path("case9.grid"),
                 "--wind", case_path("case9.model"), "--horizon", "6",
                 "--iterations", "2", "--backward-samples", "4", "--scenarios", "3",
                 "--forward-samples", "3", "--stop-rule", "fixed", "--seed", "0",
                 "--out", str(out))
    assert rc == 0
    summary = json.loads((out / "summary.json").read_text())
    assert summary["iterations"] == 2
    assert summary["cuts_per_period_per_iteration"] == 4
    assert summary["lp_solve_count"] > 0
    rows = read_csv(out / "cuts.csv")
    assert rows[0][:3] == ["t", "iteration", "intercept"]
    # one cut constructed per sampled state per period per iteration,
    # minus exact duplicates dropped by the pool
    assert 1 <= len(rows) - 1 <= 2 * 4 * 6


def test_run_sddp_byte_identical_outputs(tmp_path):
    args = ("run-sddp", "--case", case_path("tiny2.grid"),
            "--wind", case_path("tiny2.model"),
            "--iterations", "3", "--backward-samples", "3", "--scenarios", "3",
            "--forward-samples", "4", "--stop-rule", "fixed", "--seed", "7")
    out1, out2 = tmp_path / "a", tmp_path / "b"
    assert run_cli(*args, "--out", str(out1)) == 0
    assert run_cli(*args, "--out", str(out2)) == 0
    for name in ("bounds.csv", "cuts.csv", "trajectories.csv"):
        assert (out1 / name).read_bytes() == (out2 / name).read_bytes(), name


def test_run_dp_degenerate_grid(tmp_path):
    out = tmp_path / "dp1"
    rc = run_cli("run-dp", "--case", case_path("tiny2.grid"),
                 "--wind", case_path("tiny2.model"), "--dp-grid", "1,1,1",
                 "--seed", "0", "--out", str(out))
    assert rc == 0
    summary = json.loads((out / "dp_summary.json").read_text())
    assert summary["evaluations_per_period"] == 1
    assert summary["total_evaluations"] == 2  # horizon of the tiny fixture


def test_run_dp_counts_product(tmp_path):
    out = tmp_path / "dp2"
    rc = run_cli("run-dp", "--case", case_path("tiny2.grid"),
                 "--wind", case_path("tiny2.model"), "--dp-grid", "3,2,3",
                 "--seed", "0", "--out", str(out))
    assert rc == 0
    summary = json.loads((out / "dp_summary.json").read_text())
    assert summary["evaluations_per_period"] == 3 * 2 * 3 * 3
    assert summary["total_evaluations"] == 2 * summary["evaluations_per_period"]
    rows = read_csv(out / "value_table.csv")
    assert rows[0] == ["t", "s0", "g0", "w0", "value"]
    assert len(rows) == 1 + 2 * 3 * 2 * 3


def test_compare_zero_gap_on_state_free_fixture(tmp_path):
    # no storage and loose ramps: the DP and SDDP policies coincide, so the
    # simulated cost distributions are identical
    out = tmp_path / "cmp"
    rc = run_cli("compare", "--case", case_path("det1.grid"),
                 "--wind", case_path("det1.model"),
                 "--iterations", "2", "--backward-samples", "2", "--scenarios", "2",
                 "--forward-samples", "2", "--dp-grid", "1,3,2",
                 "--sim-scenarios", "10", "--seed", "3", "--out", str(out))
    assert rc == 0
    summary = json.loads((out / "compare_summary.json").read_text())
    assert abs(summary["mean_gap_fraction"]) <= 1e-9
    rows = read_csv(out / "compare.csv")
    assert rows[0] == ["method", "run", "min", "max", "mean", "sd", "cpu_seconds"]
    assert {r[0] for r in rows[1:]} == {"sddp", "dp"}


def test_compare_deterministic_outputs(tmp_path):
    args = ("compare", "--case", case_path("tiny2.grid"),
            "--wind", case_path("tiny2.model"),
            "--iterations", "2", "--backward-samples", "3", "--scenarios", "3",
            "--forward-samples", "3", "--dp-grid", "3,3,3",
            "--sim-scenarios", "8", "--seed", "5")
    out1, out2 = tmp_path / "c1", tmp_path / "c2"
    assert run_cli(*args, "--out", str(out1)) == 0
    assert run_cli(*args, "--out", str(out2)) == 0
    rows1, rows2 = read_csv(out1 / "compare.csv"), read_csv(out2 / "compare.csv")
    # wall-clock column excluded from the determinism contract
    strip = [r[:-1] for r in rows1]
    assert strip == [r[:-1] for r in rows2]


def test_scale_empty_list(tmp_path):
    out = tmp_path / "scale0"
    rc = run_cli("scale", "--cases", "", "--out", str(out))
    assert rc == 0
    rows = read_csv(out / "scale.csv")
    assert rows == [["case", "buses", "generators", "lines", "storage", "wind",
                     "cpu_seconds", "status"]]


def test_scale_records_failures_and_continues(tmp_path):
    case = tmp_path / "ok.grid"
    rc = run_cli("make-case", "--buses", "5", "--generators", "2", "--lines", "6",
                 "--storage", "1", "--wind-farms", "1", "--horizon", "4",
                 "--seed", "3", "--out", str(case))
    assert rc == 0
    out = tmp_path / "scale1"
    rc = run_cli("scale", "--cases", f"missing.grid,{case}",
                 "--iterations", "1", "--backward-samples", "2", "--scenarios", "2",
                 "--forward-samples", "2", "--seed", "1", "--out", str(out))
    assert rc == 0
    rows = read_csv(out / "scale.csv")
    assert len(rows) == 3
    assert rows[1][0] == "missing.grid" and rows[1][-1].startswith("error")
    assert rows[2][-1] == "ok"
    assert float(rows[2][6]) > 0


def test_make_case_produces_valid_fixture(tmp_path):
    from gridsddp.network import parse_case, validate
    from gridsddp.wind import load_wind_model

    case = tmp_path / "gen.grid"
    rc = run_cli("make-case", "--buses", "12", "--generators", "4", "--lines", "16",
                 "--storage", "2", "--wind-farms", "2", "--horizon", "24",
                 "--seed", "11", "--out", str(case))
    assert rc == 0
    net = parse_case(str(case))
    assert validate(net) == []
    assert len(net.buses) == 12 and len(net.lines) == 16
    model = load_wind_model(str(tmp_path / "gen.model"))
    assert model.n_farms == 2


def test_wind_fit_and_rescale(tmp_path):
    from gridsddp.wind import WindModel, load_wind_model, simulate

    true = WindModel(p=1, mu=np.array([30.0]), phi=(np.array([[0.6]]),),
                     noise_sd=np.array([3.0]), capacity=np.array([100.0]))
    path = simulate(true, [true.mu], 3000, 1, seed=4)[0]
    hist = tmp_path / "hist.csv"
    with open(hist, "w", encoding="utf-8") as fh:
        fh.write("t,farm_1\n")
        for t, row in enumerate(path, start=1):
            fh.write(f"{t},{row[0]}\n")

    model_out = tmp_path / "fit.model"
    assert run_cli("wind-fit", "--csv", str(hist), "--capacity", "100",
                   "--out", str(model_out)) == 0
    fitted = load_wind_model(str(model_out))
    assert fitted.phi[0][0, 0] == pytest.approx(0.6, abs=0.08)

    scaled_out = tmp_path / "scaled.csv"
    assert run_cli("wind-rescale", "--csv", str(hist), "--capacity", "100",
                   "--capacity-factor", "0.3", "--out", str(scaled_out)) == 0
    rows = read_csv(scaled_out)
    values = np.array([float(r[1]) for r in rows[1:]])
    assert values.mean() == pytest.approx(30.0, rel=1e-6)


def test_bench_kernel_writes_csv(tmp_path):
    out = tmp_path / "bench"
    rc = run_cli("bench-kernel", "--buses", "5", "--solves", "20", "--seed", "0",
                 "--out", str(out))
    assert rc == 0
    rows = read_csv(out / "kernel_bench.csv")
    assert rows[0] == ["kernel", "rows", "cols", "solves", "seconds",
                       "solves_per_second"]
    kernels = {r[0] for r in rows[1:]}
    assert "python" in kernels


def test_error_exit_is_machine_readable(tmp_path, capsys):
    rc = run_cli("run-sddp", "--case", "no_such.grid", "--wind", "no.model",
                 "--out", str(tmp_path / "x"))
    assert rc == 1
    payload = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
    assert "error" in payload and "message" in payload


def test_ci_failure_exit_still_writes_artifacts(tmp_path, capsys):
    out = tmp_path / "noconv"
    rc = run_cli("run-sddp", "--case", case_path("tiny2.grid"),
                 "--wind", case_path("tiny2.model"),
                 "--iterations", "1", "--backward-samples", "1", "--scenarios", "1",
                 "--forward-samples", "2", "--alpha", "0.9999",
                 "--stop-rule", "ci", "--seed", "3", "--out", str(out))
    assert rc == 1
    assert (out / "bounds.csv").exists()
    summary = json.loads((out / "summary.json").read_text())
    assert summary["converged"] is False


@pytest.mark.slow
def test_scale_ladder_runtime_grows_with_size(tmp_path):
    # synthetic analogs of the published test networks: runtime ordering only
    shapes = [(30, 6, 41, 1, 1), (57, 7, 80, 1, 1), (118, 54, 186, 5, 5)]
    cases = []
    for buses, gens, lines, storage, wind in shapes:
        case = tmp_path / f"n{buses}.grid"
        rc = run_cli("make-case", "--buses", str(buses), "--generators", str(gens),
                     "--lines", str(lines), "--storage", str(storage),
                     "--wind-farms", str(wind), "--horizon", "4", "--seed", "2",
                     "--out", str(case))
        assert rc == 0
        cases.append(str(case))
    out = tmp_path / "scale"
    rc = run_cli("scale", "--cases", ",".join(cases), "--horizon", "4",
                 "--iterations", "1", "--backward-samples", "2", "--scenarios", "2",
                 "--forward-samples", "2", "--breakpoints", "5", "--seed", "1",
                 "--out", str(out))
    assert rc == 0
    rows = read_csv(out / "scale.csv")
    assert [r[0] for r in rows[1:]] == [os.path.basename(c) for c in cases]
    assert all(r[-1] == "ok" for r in rows[1:])
    sizes = [int(r[1]) for r in rows[1:]]
    times = [float(r[6]) for r in rows[1:]]
    assert sizes == sorted(sizes)
    assert times[0] < times[1] < times[2]
    # Table-7 style columns: storage and wind farm counts per case
    assert [int(r[4]) for r in rows[1:]] == [1, 1, 5]
    assert [int(r[5]) for r in rows[1:]] == [1, 1, 5]
