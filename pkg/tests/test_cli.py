"""End-to-end checks of the command line interface.

Each subcommand is driven through main() with throwaway JSON configs on
small designs, so the file stays cheap while still exercising the real
entry points (config parsing, output shaping, file writing).
"""

import json
import math

import pytest
from scipy.special import ndtri

from platformpower.cli import main
from platformpower.sweeps import CSV_COLUMNS

DESIGN = {"K": 2, "J": 2, "n": 8, "entry": [0, 0, 0], "sigma": 1.0}
BOUNDS = {"upper": [2.3, 2.0], "lower": [0.0, 2.0]}


def write_cfg(tmp_path, name, payload):
    p = tmp_path / name
    p.write_text(json.dumps(payload))
    return str(p)


def run_json(capsys, argv):
    assert main(argv) == 0
    return json.loads(capsys.readouterr().out)


def test_calibrate_single_stage(tmp_path, capsys):
    # K=1, J=1: the family-wise error is one normal tail, so the calibrated
    # upper bound must be the alpha-quantile and c is half of it (u1 = 2c).
    cfg = write_cfg(tmp_path, "d.json",
                    {"K": 1, "J": 1, "n": 20, "entry": [0, 0], "sigma": 1.0})
    out = run_json(capsys, ["calibrate", "--config", cfg, "--alpha", "0.05"])
    assert out["kind"] == "triangular"
    assert abs(out["upper"][0] - ndtri(0.95)) < 2e-3
    assert abs(out["c"] - out["upper"][0] / 2.0) < 1e-9
    assert out["lower"][-1] == out["upper"][-1]
    assert abs(out["fwer"] - 0.05) < 2e-4
    assert out["fwer_err"] >= 0.0


def test_calibrate_out_file(tmp_path, capsys):
    cfg = write_cfg(tmp_path, "d.json",
                    {"K": 1, "J": 1, "n": 20, "entry": [0, 0], "sigma": 1.0})
    dest = tmp_path / "res.json"
    assert main(["calibrate", "--config", cfg, "--kind", "obrien-fleming",
                 "--alpha", "0.10", "--out", str(dest)]) == 0
    assert capsys.readouterr().out == ""
    out = json.loads(dest.read_text())
    assert out["kind"] == "obrien-fleming"
    assert abs(out["upper"][0] - ndtri(0.90)) < 2e-3


def test_power_conditional_both_policies(tmp_path, capsys):
    cfg = write_cfg(tmp_path, "p.json", {
        "design": DESIGN, "bounds": BOUNDS,
        "scenario": {"mu": [0.0, 0.4, 0.8]},
        "quantity": "conditional", "kstar": 2, "kprime": 1, "jprime": 1})
    out = run_json(capsys, ["power", "--config", cfg, "--tol", "1e-4"])
    assert out["quantity"] == "conditional"
    res = out["results"]
    assert set(res) == {"retain", "discard"}
    for pol in res:
        assert 0.0 <= res[pol]["value"] <= 1.0
        assert 0.0 <= res[pol]["err"] < 1e-3
    assert res["retain"]["value"] <= res["discard"]["value"] + 5e-4

    only = run_json(capsys, ["power", "--config", cfg, "--policy", "discard",
                             "--tol", "1e-4"])
    assert set(only["results"]) == {"discard"}
    assert only["results"]["discard"]["value"] == res["discard"]["value"]


def test_power_scalar_quantities(tmp_path, capsys):
    base = {"design": DESIGN, "bounds": BOUNDS}
    cfg = write_cfg(tmp_path, "f.json", dict(base, quantity="fwer"))
    out = run_json(capsys, ["power", "--config", cfg, "--tol", "1e-4"])
    assert 0.0 < out["value"] < 1.0
    assert out["err"] < 1e-3

    cfg = write_cfg(tmp_path, "x.json", dict(
        base, quantity="xi", scenario={"mu": [0.0, 0.4, 0.8]},
        kstar=2, jstar=1))
    out = run_json(capsys, ["power", "--config", cfg, "--tol", "1e-4"])
    assert 0.0 <= out["value"] <= 1.0

    cfg = write_cfg(tmp_path, "w.json", dict(
        base, quantity="wrong-control", scenario={"mu": [0.0, 0.8, 0.4]}))
    out = run_json(capsys, ["power", "--config", cfg, "--tol", "1e-4"])
    assert 0.0 <= out["value"] < 0.5

    cfg = write_cfg(tmp_path, "pw.json", dict(base, quantity="pairwise",
                                              theta=0.5))
    out = run_json(capsys, ["power", "--config", cfg, "--tol", "1e-4"])
    assert 0.0 < out["value"] < 1.0


def test_power_shape_config_matches_explicit_bounds(tmp_path, capsys):
    # passing shape {kind, c} must behave like spelling out the boundaries
    c = 1.0
    explicit = {"upper": [c * 1.5 / math.sqrt(0.5), 2.0 * c],
                "lower": [c * 0.5 / math.sqrt(0.5), 2.0 * c]}
    cfg_a = write_cfg(tmp_path, "a.json", {
        "design": DESIGN, "shape": {"kind": "triangular", "c": c},
        "quantity": "fwer"})
    cfg_b = write_cfg(tmp_path, "b.json", {
        "design": DESIGN, "bounds": explicit, "quantity": "fwer"})
    out_a = run_json(capsys, ["power", "--config", cfg_a, "--tol", "1e-4"])
    out_b = run_json(capsys, ["power", "--config", cfg_b, "--tol", "1e-4"])
    assert abs(out_a["value"] - out_b["value"]) < 1e-6


def test_power_not_estimable_maps_to_null(tmp_path, capsys):
    # a hopeless conditioning event should surface as null + note, not a crash
    cfg = write_cfg(tmp_path, "ne.json", {
        "design": DESIGN, "bounds": BOUNDS,
        "scenario": {"mu": [0.0, -8.0, 0.5]},
        "quantity": "conditional", "kstar": 2, "kprime": 1, "jprime": 1})
    out = run_json(capsys, ["power", "--config", cfg, "--policy", "retain",
                            "--tol", "1e-4"])
    res = out["results"]["retain"]
    assert res["value"] is None and res["err"] is None
    assert "note" in res


def test_power_config_errors(tmp_path):
    cfg = write_cfg(tmp_path, "bad.json", {
        "design": DESIGN, "bounds": BOUNDS, "quantity": "banana"})
    with pytest.raises(ValueError, match="unknown quantity"):
        main(["power", "--config", cfg])
    cfg = write_cfg(tmp_path, "nob.json", {"design": DESIGN,
                                           "quantity": "fwer"})
    with pytest.raises(ValueError, match="bounds"):
        main(["power", "--config", cfg])


def test_sweep_csv_reproducible(tmp_path, capsys):
    cfg = write_cfg(tmp_path, "s.json", {
        "design": DESIGN, "bounds": BOUNDS, "quantity": "conditional",
        "kstar": 2, "kprime": 1, "jprime": 1,
        "grid": {"lo": 0.0, "hi": 0.3, "step": 0.3}})
    out1, out2 = tmp_path / "s1.csv", tmp_path / "s2.csv"
    summary = run_json(capsys, ["sweep", "--config", cfg, "--tol", "1e-4",
                                "--seed", "3", "--out", str(out1)])
    assert summary["points"] == 4
    assert summary["skipped"] == 0
    assert summary["max_abs_difference"] >= 0.0

    run_json(capsys, ["sweep", "--config", cfg, "--tol", "1e-4",
                      "--seed", "3", "--out", str(out2)])
    # the invariant: same config, same seed => byte-identical artifact
    assert out1.read_bytes() == out2.read_bytes()

    lines = out1.read_text().splitlines()
    assert lines[0] == "# platformpower sweep"
    assert CSV_COLUMNS in lines
    assert any(l.startswith("# tol: 0.0001 seed: 3") for l in lines)
    data = [l for l in lines if not l.startswith("#") and l != CSV_COLUMNS]
    assert len(data) == 4
    for row in data:
        fields = row.split(",")
        assert len(fields) == 6
        assert float(fields[0]) in (0.0, 0.3)
        assert float(fields[1]) in (0.0, 0.3)


def test_sweep_respects_config_tol(tmp_path, capsys):
    # without --tol on the command line the config's own tol must win
    dest = tmp_path / "t.csv"
    cfg = write_cfg(tmp_path, "s.json", {
        "design": DESIGN, "bounds": BOUNDS, "quantity": "conditional",
        "kstar": 2, "kprime": 1, "jprime": 1, "tol": 5e-4,
        "grid": {"lo": 0.0, "hi": 0.3, "step": 0.3}})
    run_json(capsys, ["sweep", "--config", cfg, "--out", str(dest)])
    assert any(l.startswith("# tol: 0.0005")
               for l in dest.read_text().splitlines())


def test_sweep_per_axis_grid(tmp_path, capsys):
    dest = tmp_path / "axes.csv"
    cfg = write_cfg(tmp_path, "s.json", {
        "design": DESIGN, "bounds": BOUNDS, "quantity": "conditional",
        "kstar": 2, "kprime": 1, "jprime": 1,
        "grid": {"axis1": {"lo": 0.0, "hi": 0.3, "step": 0.3},
                 "axis2": {"lo": 0.2, "hi": 0.2, "step": 0.1}}})
    summary = run_json(capsys, ["sweep", "--config", cfg, "--tol", "1e-4",
                                "--out", str(dest)])
    assert summary["points"] == 2
    lines = dest.read_text().splitlines()
    gridline = [l for l in lines if l.startswith("# grid:")]
    assert len(gridline) == 1
    assert "axis1" in gridline[0] and "axis2" in gridline[0]
    data = [l for l in lines if not l.startswith("#") and l != CSV_COLUMNS]
    assert [float(r.split(",")[1]) for r in data] == [0.2, 0.2]


def test_simulate_estimate(tmp_path, capsys):
    cfg = write_cfg(tmp_path, "sim.json", {
        "design": DESIGN, "bounds": BOUNDS,
        "scenario": {"mu": [0.0, 0.5, 1.0]}})
    out = run_json(capsys, ["simulate", "--config", cfg, "--reps", "4000",
                            "--policy", "both"])
    assert set(out) == {"retain", "discard"}
    for pol, est in out.items():
        assert est["policy"] == pol
        assert est["reps"] == 4000
        assert "counts" not in est
        p, se = est["any_change"]
        assert 0.0 <= p <= 1.0 and se >= 0.0
        assert all("," in k for k in est["xi"])
        assert est["mean_patients"] <= est["max_patients"] <= 48
    # both policies watch the same phase-one sample paths
    assert out["retain"]["any_change"] == out["discard"]["any_change"]


def test_simulate_trace(tmp_path, capsys):
    cfg = write_cfg(tmp_path, "sim.json", {
        "design": DESIGN, "bounds": BOUNDS,
        "scenario": {"mu": [0.0, 0.5, 1.0]}})
    out = run_json(capsys, ["simulate", "--config", cfg, "--trace",
                            "--policy", "retain", "--seed", "5"])
    assert out["policy"] == "retain"
    assert out["seed"] == 5
    assert out["control_history"][0] == 0
    assert set(out["arm_fate"]) == {"1", "2"}


def test_samplesize_single_stage(tmp_path, capsys):
    cfg = write_cfg(tmp_path, "d.json",
                    {"K": 1, "J": 1, "n": 10, "entry": [0, 0], "sigma": 1.0})
    out = run_json(capsys, ["samplesize", "--config", cfg, "--alpha", "0.05",
                            "--power", "0.8", "--theta", "0.5"])
    want = 2.0 * ((ndtri(0.95) + ndtri(0.8)) / 0.5) ** 2
    assert abs(out["n"] - math.ceil(want)) <= 1
    assert out["pairwise_power"] >= 0.8
    assert out["per_arm_max"] == out["n"]
    assert out["max_total_sample_size"] == 2 * out["n"]
    assert out["bounds"]["upper"][0] == pytest.approx(2 * out["c"], abs=1e-9)


def test_argparse_rejects_bad_usage(tmp_path):
    with pytest.raises(SystemExit):
        main(["power"])  # --config is required
    cfg = write_cfg(tmp_path, "d.json", DESIGN)
    with pytest.raises(SystemExit):
        main(["calibrate", "--config", cfg, "--kind", "pocock"])
