import csv
import json
import math

import numpy as np
import pytest

from rnls.cli import main
from rnls.config import ConfigError, config_hash, load_config, parse_text
from rnls.grid import Field, load_snapshot, make_grid, save_snapshot
from rnls.outputs import IncompleteRecord, Provenance, emit_plot_data, read_csv_payload, write_csv
from rnls.montecarlo import tail_fit


def write(tmp_path, text, name="run.cfg"):
    p = tmp_path / name
    p.write_text(text)
    return p


def rows(path):
    return list(csv.reader(line for line in open(path) if not line.startswith("#")))


# --- config -----------------------------------------------------------------------------


def test_parse_text_sections_and_comments():
    raw = parse_text("experiment = evolve  # trailing\n\n# full line\ngrid.n = 16\nblowup.alphas = 1, 2\n")
    assert raw == {"experiment": "evolve", "grid": {"n": "16"}, "blowup": {"alphas": "1, 2"}}


@pytest.mark.parametrize("text", ["grid.n 16", "a.b.c = 1", "grid.n = 1\ngrid.n = 2", ".n = 3"])
def test_parse_text_errors(text):
    with pytest.raises(ConfigError):
        parse_text(text)


def test_load_config_types_and_lists(tmp_path):
    cfg = load_config(write(tmp_path, "experiment = blowup-scan\ngrid.d = 5\ngrid.n = 16\ngrid.L = 4\n"
                                      "blowup.alphas = 1, 2, 3, 4, 5\nblowup.lam = 1+2j\n"))
    assert cfg.blowup.alphas == [1.0, 2.0, 3.0, 4.0, 5.0]
    assert cfg.blowup.lam == 1 + 2j
    assert cfg.grid.L == 4.0


def test_load_config_collects_all_errors(tmp_path):
    with pytest.raises(ConfigError) as info:
        load_config(write(tmp_path, "experiment = evolve\ngrid.n = 7\nevolution.dt = -1\n"
                                    "nonlinearity.kind = gauge\nnonlinearity.sign = 0\n"))
    locs = {e["loc"] for e in info.value.errors}
    assert {"grid", "evolution", "nonlinearity"} <= locs


def test_load_config_rejects_unknown_keys_and_values(tmp_path):
    with pytest.raises(ConfigError) as info:
        load_config(write(tmp_path, "experiment = evolve\ngrid.m = 3\nrandomization.window = hat\n"))
    locs = {e["loc"] for e in info.value.errors}
    assert "grid.m" in locs and "randomization.window" in locs


def test_load_config_subcommand_consistency(tmp_path):
    p = write(tmp_path, "experiment = evolve\n")
    with pytest.raises(ConfigError, match="subcommand"):
        load_config(p, "ensemble")
    assert load_config(write(tmp_path, "grid.n = 16\n", "x.cfg"), "evolve").experiment == "evolve"


def test_resolution_checked_for_randomized_experiments(tmp_path):
    with pytest.raises(ConfigError) as info:
        load_config(write(tmp_path, "experiment = ensemble\ngrid.L = 10\n"))
    assert info.value.errors[0]["loc"] == "grid.L"


def test_config_hash_is_stable_and_sensitive(tmp_path):
    a = load_config(write(tmp_path, "experiment = evolve\ngrid.n = 16\n"))
    b = load_config(write(tmp_path, "# reordered with comments\ngrid.n = 16\nexperiment = evolve\n", "b.cfg"))
    c = load_config(write(tmp_path, "experiment = evolve\ngrid.n = 16\n"), seed_override=4)
    assert config_hash(a) == config_hash(b)
    assert config_hash(a) != config_hash(c)
    assert len(config_hash(a)) == 16


# --- outputs ------------------------------------------------------------------------------


def test_write_csv_provenance_and_repr_floats(tmp_path):
    prov = Provenance("abc123", 7, "ensemble")
    p = write_csv(tmp_path / "x.csv", ["a", "b", "c"], [[0.1, True, None], [1 / 3, 2, "s"]], prov)
    text = p.read_text().splitlines()
    assert text[:3] == ["# config_hash = abc123", "# master_seed = 7", "# experiment = ensemble"]
    assert read_csv_payload(p) == "a,b,c\n0.1,1,\n0.3333333333333333,2,s\n"


def test_emit_plot_data_for_tail_fit(tmp_path):
    x = np.sqrt(2 * np.random.default_rng(1).exponential(size=5000))
    fit = tail_fit(x)
    p = emit_plot_data(fit, tmp_path, Provenance("h", 0))
    r = rows(p)
    assert r[0] == ["lambda", "empirical_log_survival", "fitted_log_survival"]
    assert len(r) == 1 + len(fit.lambdas)
    with pytest.raises(TypeError):
        emit_plot_data(object(), tmp_path, Provenance("h", 0))
    fit.c = None
    with pytest.raises(IncompleteRecord):
        emit_plot_data(fit, tmp_path, Provenance("h", 0))


# --- CLI ------------------------------------------------------------------------------------


def test_cli_config_error_exit_code(tmp_path, capsys):
    code = main(["evolve", "--config", str(write(tmp_path, "experiment = evolve\ngrid.n = 9\n")),
                 "--out", str(tmp_path / "out")])
    assert code == 2
    err = json.loads(capsys.readouterr().err)
    assert err["errors"][0]["loc"] == "grid"
    assert not (tmp_path / "out").exists()


def test_cli_missing_config(tmp_path, capsys):
    assert main(["evolve", "--config", str(tmp_path / "nope.cfg")]) == 2


def test_cli_bad_workers(tmp_path, capsys):
    assert main(["evolve", "--config", str(write(tmp_path, "grid.n = 8\n")), "--workers", "0"]) == 2


def test_cli_evolve_outputs(tmp_path):
    cfg = write(tmp_path, "experiment = evolve\nseed = 5\ngrid.d = 3\ngrid.n = 8\ngrid.L = 8\n"
                          "nonlinearity.kind = gauge\nevolution.dt = 0.05\nevolution.t_end = 0.2\n"
                          "evolution.snapshot_stride = 2\nevolution.save_snapshots = true\n")
    out = tmp_path / "out"
    assert main(["evolve", "--config", str(cfg), "--out", str(out)]) == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["status"] == "complete"
    assert manifest["metadata"]["master_seed"] == 5
    assert "series.csv" in manifest["files"]
    series = rows(out / "series.csv")
    assert series[0] == ["t", "mass", "energy", "modified_energy", "sup_norm"]
    assert len(series) == 1 + 5
    head = (out / "series.csv").read_text().splitlines()[0]
    assert head == f"# config_hash = {manifest['metadata']['config_hash']}"
    snaps = sorted((out / "snapshots").iterdir())
    assert len(snaps) == 3
    summary = json.loads((out / "summary.json").read_text())
    assert summary["status"] == "completed"


def test_cli_runtime_abort_writes_partial_manifest(tmp_path):
    snap = tmp_path / "other.rnls"
    save_snapshot(Field.zeros(make_grid(3, 8, 5.0)), snap)
    cfg = write(tmp_path, f"experiment = evolve\ngrid.d = 3\ngrid.n = 8\ndata.kind = file\ndata.path = {snap}\n")
    out = tmp_path / "out"
    assert main(["run", "--config", str(cfg), "--out", str(out)]) == 3
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["status"] == "aborted" and "GridError" in manifest["error"]


def test_cli_randomize_then_norms(tmp_path):
    cfg = write(tmp_path, "experiment = randomize\nseed = 2\ngrid.d = 3\ngrid.n = 16\n"
                          "randomization.distribution = rademacher-complex\nrandomization.samples = 3\n")
    out = tmp_path / "r"
    assert main(["randomize", "--config", str(cfg), "--out", str(out)]) == 0
    table = rows(out / "randomize.csv")
    assert len(table) == 4
    l2 = [float(r[1]) for r in table[1:]]
    np.testing.assert_allclose(l2, l2[0], rtol=1e-12)  # rademacher + cube preserves L^2
    snap = out / "samples" / "phi_omega_000001.rnls"
    assert load_snapshot(snap).grid.n == 16
    ncfg = write(tmp_path, f"experiment = norms\nnorms.inputs = {snap}\nnorms.r = 2, inf\nnorms.s = 1\n", "n.cfg")
    assert main(["norms", "--config", str(ncfg), "--out", str(tmp_path / "n")]) == 0
    labels = {r[0]: float(r[1]) for r in rows(tmp_path / "n" / "norms.csv")[1:]}
    assert labels["phi_omega_000001.rnls:L2"] == pytest.approx(l2[1])
    assert math.isfinite(labels["phi_omega_000001.rnls:Linf"])


def test_cli_ensemble_is_worker_independent(tmp_path):
    text = ("experiment = ensemble\nseed = 9\ngrid.d = 3\ngrid.n = 16\ndata.width = 1.5\n"
            "ensemble.m = 300\nensemble.statistic = hs_norm\nensemble.s = 0.8\n")
    cfg = write(tmp_path, text)
    assert main(["ensemble", "--config", str(cfg), "--out", str(tmp_path / "a"), "--workers", "1"]) == 0
    assert main(["ensemble", "--config", str(cfg), "--out", str(tmp_path / "b"), "--workers", "3"]) == 0
    for name in ("samples.csv", "tail_fit_plot.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    doc = json.loads((tmp_path / "a" / "ensemble.json").read_text())
    assert doc["fit"]["c"] > 0 and len(doc["samples"]) == 300


def test_cli_identity_check(tmp_path):
    cfg = write(tmp_path, "experiment = identity-check\ngrid.d = 3\ngrid.n = 16\ndata.amplitude = 0.3\n"
                          "data.width = 1.5\nforcing.eps = 1\nevolution.dt = 0.01\nevolution.t_end = 0.1\n")
    assert main(["identity-check", "--config", str(cfg), "--out", str(tmp_path / "i")]) == 0
    doc = json.loads((tmp_path / "i" / "identity.json").read_text())
    assert doc["mass_bound_holds"] is True
    assert doc["max_rel_err"] < 0.01
    assert rows(tmp_path / "i" / "identity_plot.csv")[0] == ["t", "dE_dt_fd", "rhs_quadrature", "rel_err"]


def test_cli_blowup_scan_small(tmp_path):
    cfg = write(tmp_path, "experiment = blowup-scan\ngrid.d = 3\ngrid.n = 16\ngrid.L = 4\nblowup.k = 0.25\n"
                          "blowup.alphas = 3, 4, 5, 6, 8\nblowup.check_dt = false\nevolution.dt = 0.01\n"
                          "evolution.cfl = 0.05\nevolution.t_end = 2\nevolution.blowup_threshold = 10\n")
    out = tmp_path / "b"
    assert main(["blowup-scan", "--config", str(cfg), "--out", str(out)]) == 0
    table = rows(out / "blowup.csv")
    assert table[0][:3] == ["alpha", "t_star", "censored"]
    t = [float(r[1]) for r in table[1:]]
    assert all(np.diff(t) < 0)
    assert rows(out / "scaling_plot.csv")[0] == ["alpha", "t_star", "censored", "fit_value"]
    doc = json.loads((out / "blowup.json").read_text())
    assert doc["target_exponent"] == -8.0  # -1/kappa with kappa = (d-2)/4 - k/2 = 1/8


def test_cli_blowup_scan_insufficient_data(tmp_path):
    cfg = write(tmp_path, "experiment = blowup-scan\ngrid.d = 3\ngrid.n = 16\ngrid.L = 4\nblowup.k = 0.25\n"
                          "blowup.alphas = 0.1, 0.2, 0.3, 0.4, 0.5\nblowup.check_dt = false\nevolution.dt = 0.01\n"
                          "evolution.t_end = 0.05\n")
    out = tmp_path / "b"
    assert main(["blowup-scan", "--config", str(cfg), "--out", str(out)]) == 3
    doc = json.loads((out / "blowup.json").read_text())
    assert "error" in doc["fit"] and all(doc["censored"])
    assert json.loads((out / "manifest.json").read_text())["files"] == ["blowup.csv", "blowup.json"]
