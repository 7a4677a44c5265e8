import json
import math

import numpy as np
import pytest

from optosync import scenarios as scn
from optosync.errors import ConfigError, PlotError
from optosync.plotting import emit_plot
from optosync.trajectory import read_csv, sample_grid, write_csv


def quick(name, tmp_path, **kw):
    mapping = {"t_final": 4 * math.pi, "plots": True, **kw}
    return scn.scenario_from_mapping(name, mapping, output_dir=tmp_path / name)


def test_sample_grid_inclusive():
    g = sample_grid(0.0, 1.0, 0.25)
    assert g.tolist() == [0.0, 0.25, 0.5, 0.75, 1.0]


def test_csv_roundtrip_exact(tmp_path):
    cols = {"t": np.array([0.0, 0.1]), "x": np.array([1 / 3, -2e-17])}
    back = read_csv(write_csv(tmp_path / "a.csv", cols))
    assert all(np.array_equal(back[k], cols[k]) for k in cols)


def test_scenario_config_errors(tmp_path):
    with pytest.raises(ConfigError):
        scn.scenario_from_mapping("squeeze", {"bogus": 1})
    with pytest.raises(ConfigError):
        scn.scenario_from_mapping("squeeze", {"plots": "maybe"})
    with pytest.raises(ConfigError):
        scn.scenario_from_mapping("squeeze", {"t_final": 0.01, "sample_dt": 0.1})
    with pytest.raises(ConfigError):
        scn.Scenario(name="nope")
    with pytest.raises(ConfigError):
        scn.Scenario(name="squeeze", solver="lindblad")


def test_validate_defaults_to_truncation():
    sc = scn.scenario_from_mapping("validate", {})
    assert sc.fock.dims == (8, 8, 5)
    assert sc.t_final == pytest.approx(3 * sc.tau)


def test_squeeze_run_writes_outputs(tmp_path):
    sc = quick("squeeze", tmp_path)
    report = scn.run_scenario(sc)
    names = set(report["outputs"])
    assert {"squeeze_gaussian.csv", "squeeze_gaussian.svg"} <= names
    on_disk = json.loads((sc.output_dir / "report.json").read_text())
    assert on_disk["metrics"] == report["metrics"]
    assert on_disk["settings"]["params"]["kappa"] == 0.1
    inv = report["metrics"]["gaussian_invariants"]
    assert inv["min_symplectic_eigenvalue"] >= 0.5 - 1e-6


def test_runs_are_byte_identical(tmp_path):
    a = quick("oscillations", tmp_path / "a")
    b = quick("oscillations", tmp_path / "b")
    scn.run_scenario(a)
    scn.run_scenario(b)
    for name in ("oscillations.csv", "oscillations.svg"):
        assert (a.output_dir / name).read_bytes() == (b.output_dir / name).read_bytes()


def test_plot_series_are_tagged(tmp_path):
    table = {"t": np.arange(5.0), "a": np.ones(5), "b": np.zeros(5)}
    svg = emit_plot(table, "timeseries", tmp_path / "p.svg").read_text()
    assert svg.count('id="series-') == 2
    svg = emit_plot({"q1": [0, 1], "p1": [1, 0], "q2": [0, 1], "p2": [1, 1]}, "portrait",
                    tmp_path / "q.svg").read_text()
    assert 'id="series-q1-p1"' in svg and 'id="series-q2-p2"' in svg


@pytest.mark.parametrize("table, kind", [({}, "timeseries"), ({"t": [0, 1]}, "scatter"),
                                         ({"t": [0, 1]}, "sweep")])
def test_plot_errors(tmp_path, table, kind):
    with pytest.raises(PlotError):
        emit_plot(table, kind, tmp_path / "x.svg", y=["missing"])


def test_plot_unwritable(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    with pytest.raises(PlotError):
        emit_plot({"t": [0, 1], "a": [1, 2]}, "timeseries", blocker / "sub" / "x.svg")


def test_zero_drive_unmodulated_is_vacuum(tmp_path):
    sc = quick("correlations", tmp_path, drive_e=0.0, mod_eps=0.0)
    cols = scn.gaussian_run(sc).observables
    assert np.allclose(cols["var_q1_ratio"], 1.0, atol=1e-9)
    assert np.allclose(cols["sync"], 1.0, atol=1e-9)
    assert np.allclose(cols["log_neg"], 0.0)
    assert np.allclose(cols["mutual_info"], 0.0, atol=1e-9)


def test_sweep_workers_preserve_order(tmp_path):
    serial = quick("detuning-sweep", tmp_path / "s", sweep_max=0.04, plots=False)
    par = quick("detuning-sweep", tmp_path / "p", sweep_max=0.04, plots=False, workers=2)
    r1 = scn.run_scenario(serial)["metrics"]
    r2 = scn.run_scenario(par)["metrics"]
    assert r1["delta_m"] == [0.0, 0.01, 0.02, 0.03, 0.04]
    assert r1 == r2


def test_onsets_helper():
    t = np.arange(10.0)
    cols = {"t": t, "log_neg": np.r_[0, 0, 0.5, 1, 1, 1, 1, 1, 1, 1],
            "sync": np.r_[0, 0.95, 1, 1, 1, 1, 1, 1, 1, 1], "mutual_info": np.ones(10)}
    on = scn.correlation_onsets(cols, 5.0)
    assert on["log_neg_onset"] == 2.0 and on["sync_onset"] == 1.0
    assert on["log_neg_last_nonpositive"] == 1.0


def test_relative_sup_error():
    assert scn.relative_sup_error([1.0, 2.1], [1.0, 2.0]) == pytest.approx(0.05)
    assert scn.relative_sup_error([0.0], [0.0]) == 0.0
    assert scn.relative_sup_error([1.0], [0.0]) == math.inf


def test_lindblad_scenario_small(tmp_path):
    sc = quick("squeeze", tmp_path, solver="both", drive_e=0.5, fock_cav=4, fock_m1=4, fock_m2=4,
               t_final=2.0, sample_dt=0.5, plots=False)
    report = scn.run_scenario(sc)
    m = report["metrics"]
    assert "lindblad_min_var_q1" in m and "gaussian_min_var_q1" in m
    assert abs(m["lindblad_min_var_q1"] - m["gaussian_min_var_q1"]) < 0.05


@pytest.mark.slow
def test_modulation_helps_from_thermal_mirrors(tmp_path):
    # With thermally occupied mirrors the unmodulated difference mode relaxes
    # slowly, and the modulated run is better synchronized at equal times.
    sc = scn.scenario_from_mapping("sync", {"init_n_m1": 1.0, "init_n_m2": 1.0, "plots": False,
                                            "baseline_stretch": 1.0}, output_dir=tmp_path)
    m = scn.run_scenario(sc)["metrics"]
    assert m["late_mean_sync"] > m["baseline_late_mean_sync"] + 0.2
