import math
from pathlib import Path

import numpy as np
import pytest

from curvipat import cli, output
from curvipat import operators as op


def run_cli(*argv):
    return cli.main(list(argv))


def test_config_file_parsing(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text(
        """
        # comment line
        model = bvam_disk
        n_rho = 6   # trailing comment
        n_theta = 8
        m = 2
        tstar = 0.01
        params.gamma = 0.004
        heatmap = true
        """
    )
    parsed = cli.parse_config_file(cfg)
    assert parsed["model"] == "bvam_disk"
    assert parsed["n_rho"] == "6"
    merged = cli.merge_config(cli.build_parser().parse_args(["run", "--config", str(cfg)]))
    assert merged["n_rho"] == 6
    assert merged["tstar"] == 0.01
    assert merged["heatmap"] is True
    assert merged["overrides"] == {"gamma": 0.004}


def test_config_file_rejects_garbage(tmp_path):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("just some words\n")
    with pytest.raises(cli.UsageError):
        cli.parse_config_file(cfg)


def test_run_single_step_writes_two_timeseries_rows(tmp_path):
    out = tmp_path / "o"
    code = run_cli(
        "run", "--model", "bvam_disk", "--n-rho", "6", "--n-theta", "8",
        "--m", "1", "--tstar", "0.01", "--seed", "3", "--out", str(out),
    )
    assert code == 0
    lines = (out / "timeseries.csv").read_text().splitlines()
    assert lines[0] == "t,mean_u,mean_v"
    assert len(lines) == 3  # header + t=0 + t=t*


def test_timeseries_row_count_matches_snapshot_interval(tmp_path):
    out = tmp_path / "o"
    code = run_cli(
        "run", "--model", "bvam_disk", "--n-rho", "6", "--n-theta", "8",
        "--m", "10", "--tstar", "0.01", "--seed", "3", "--out", str(out),
        "--snapshots", "5",
    )
    assert code == 0
    lines = (out / "timeseries.csv").read_text().splitlines()
    assert len(lines) == 1 + 10 // 5 + 1


def test_runs_are_byte_identical(tmp_path):
    args = [
        "run", "--model", "dib_sphere", "--n-theta", "8", "--n-phi", "6",
        "--m", "4", "--tstar", "0.001", "--seed", "11", "--snapshots", "2",
        "--heatmap",
    ]
    out1, out2 = tmp_path / "a", tmp_path / "b"
    assert run_cli(*args, "--out", str(out1)) == 0
    assert run_cli(*args, "--out", str(out2)) == 0
    files1 = sorted(p.name for p in out1.iterdir())
    files2 = sorted(p.name for p in out2.iterdir())
    assert files1 == files2
    for name in files1:
        assert (out1 / name).read_bytes() == (out2 / name).read_bytes()


def test_run_manifest_files_exist(tmp_path):
    out = tmp_path / "o"
    cfg = {
        "model": "bvam_disk", "n_rho": 6, "n_theta": 8, "m": 2, "tstar": 0.01,
        "seed": 1, "out": str(out), "snapshots": 1, "heatmap": True,
        "overrides": {},
    }
    report = cli.cmd_run(cfg)
    assert report.diverged_step is None
    assert report.manifest
    for path in report.manifest:
        assert Path(path).exists()
    assert set(report.final_means) == {"u", "v"}


def test_snapshot_headers_and_flat_index_order(tmp_path):
    out = tmp_path / "o"
    run_cli(
        "run", "--model", "bvam_disk", "--n-rho", "4", "--n-theta", "6",
        "--m", "1", "--tstar", "0.001", "--seed", "2", "--out", str(out),
    )
    text = (out / "u_0000000.csv").read_text().splitlines()
    header = [l for l in text if l.startswith("#")]
    assert any(l.startswith("# geometry: disk") for l in header)
    assert any(l.startswith("# dims: 4 6") for l in header)
    assert any(l.startswith("# grid_rho:") for l in header)
    body = [l for l in text if not l.startswith("#")]
    assert body[0] == "i,j,rho,theta,value"
    first = body[1].split(",")
    second = body[2].split(",")
    assert (first[0], first[1]) == ("1", "1")
    assert (second[0], second[1]) == ("2", "1")  # first index fastest


def test_heatmap_extrema_match_field_extrema(tmp_path):
    rng = np.random.RandomState(40)
    field = rng.randn(5, 7)
    path = tmp_path / "f.ppm"
    output.write_heatmap(path, field)
    raw = path.read_bytes()
    header, pixels = raw.split(b"\n255\n", 1)
    assert header.startswith(b"P6")
    w, h = header.split(b"\n")[1].split()
    img = np.frombuffer(pixels, dtype=np.uint8).reshape(int(h), int(w), 3)
    lo_color = output.PALETTE[0]
    hi_color = output.PALETTE[255]
    i_min, j_min = np.unravel_index(np.argmin(field), field.shape)
    i_max, j_max = np.unravel_index(np.argmax(field), field.shape)
    assert np.array_equal(img[i_min, j_min], lo_color)
    assert np.array_equal(img[i_max, j_max], hi_color)


def test_heatmap_order3_unfolds_every_value(tmp_path):
    rng = np.random.RandomState(41)
    field = rng.randn(3, 4, 2)
    path = tmp_path / "f.ppm"
    output.write_heatmap(path, field)
    raw = path.read_bytes()
    header, pixels = raw.split(b"\n255\n", 1)
    w, h = header.split(b"\n")[1].split()
    assert (int(h), int(w)) == (3, 8)
    img = np.frombuffer(pixels, dtype=np.uint8).reshape(3, 8, 3)
    flat_min = np.argmin(field.reshape(3, -1, order="F"))
    assert np.array_equal(
        img.reshape(-1, 3)[flat_min], output.PALETTE[0]
    )


def test_run_divergence_exit_code_and_partial_outputs(tmp_path):
    out = tmp_path / "o"
    code = run_cli(
        "run", "--model", "bvam_disk", "--n-rho", "6", "--n-theta", "8",
        "--m", "50", "--tstar", "1.0", "--seed", "1", "--out", str(out),
        "--set", "params.alpha1=1e9",
    )
    assert code == 3
    assert (out / "timeseries.csv").exists()


def test_usage_errors_exit_2(tmp_path):
    assert run_cli("run", "--model", "nope", "--m", "1", "--tstar", "1") == 2
    assert run_cli("run", "--model", "bvam_disk", "--m", "1", "--tstar", "1") == 2
    assert run_cli(
        "run", "--model", "bvam_disk", "--n-rho", "4", "--n-theta", "2",
        "--m", "1", "--tstar", "1",
    ) == 2
    assert run_cli(
        "run", "--model", "bvam_disk", "--n-rho", "6", "--n-theta", "8",
        "--m", "1", "--tstar", "1", "--set", "params.bogus=1",
    ) == 2
    assert run_cli(
        "run", "--model", "bvam_disk", "--n-rho", "6", "--n-theta", "8",
        "--m", "1", "--tstar", "1", "--set", "nonsense",
    ) == 2


def test_converge_table_and_slope(tmp_path, capsys):
    out = tmp_path / "c"
    cfg = {
        "model": "bvam_disk", "n_rho": 8, "n_theta": 16, "tstar": 0.5,
        "m_list": [20, 40, 80], "m_ref": 640, "seed": 3, "out": str(out),
        "dense": True, "fe": True, "overrides": {},
    }
    result = cli.cmd_converge(cfg)
    assert 0.7 <= -np.polyfit(
        np.log([e["m"] for e in result["table"]]),
        np.log([e["err_split"] for e in result["table"]]),
        1,
    )[0] <= 1.3
    for entry in result["table"]:
        if entry.get("err_fe") is not None:
            assert abs(entry["err_fe"] - entry["err_split"]) < 1.0
        assert abs(entry["err_dense"] - entry["err_split"]) <= 0.1 * entry["err_dense"]
    assert (out / "convergence.csv").exists()
    captured = capsys.readouterr().out
    assert "least-squares slope" in captured


def test_converge_skips_dense_over_cap_with_notice(capsys):
    cfg = {
        "model": "bvam_disk", "n_rho": 80, "n_theta": 80, "tstar": 0.01,
        "m_list": [2, 4], "m_ref": 16, "seed": 3, "dense": True,
        "overrides": {},
    }
    result = cli.cmd_converge(cfg)
    assert "dense column skipped" in capsys.readouterr().out
    assert all("err_dense" not in entry for entry in result["table"])


def test_converge_rejects_unordered_m_list():
    cfg = {
        "model": "bvam_disk", "n_rho": 8, "n_theta": 16, "tstar": 0.5,
        "m_list": [40, 20], "seed": 3, "overrides": {},
    }
    with pytest.raises(cli.UsageError):
        cli.cmd_converge(cfg)


def test_props_closed_forms():
    rows = cli.cmd_props({"kind": "rho2", "n_list": [20], "overrides": {}})
    assert rows[0]["xi_inv_norm"] == pytest.approx(math.sqrt(37), rel=1e-12)
    assert rows[0]["xi_inv_closed_form"] == pytest.approx(math.sqrt(37), rel=1e-15)
    rows = cli.cmd_props({"kind": "z", "n_list": [12, 33], "overrides": {}})
    for row in rows:
        assert row["xi_cond"] == pytest.approx(math.sqrt(2), rel=1e-12)
    rows = cli.cmd_props({"kind": "phi", "n_list": [16], "overrides": {}})
    row = rows[0]
    assert row["extra_diag_positive"]
    assert row["max_abs_rowsum"] <= 1e-12 * 2 / op.build_phi_op(16)[0].h ** 2
    assert row["max_eigenvalue"] <= 1e-10
    assert row["exp_min_entry"] >= -1e-12


def test_props_via_main(capsys):
    assert run_cli("props", "--kind", "theta", "--n-list", "8,16") == 0
    out = capsys.readouterr().out
    assert "max_eigenvalue" in out


def test_props_caps_n():
    with pytest.raises(cli.UsageError):
        cli.cmd_props({"kind": "rho2", "n_list": [4096], "overrides": {}})


def test_shipped_full_size_configs_are_valid():
    config_dir = Path(__file__).resolve().parent.parent / "configs"
    files = sorted(config_dir.glob("*.cfg"))
    assert len(files) == 5
    for path in files:
        raw = cli.parse_config_file(path)
        args = cli.build_parser().parse_args(["run", "--config", str(path)])
        cfg = cli.merge_config(args)
        spec = cli._require_model(cfg)
        dims = cli._require_dims(cfg, spec.name)
        assert cfg["m"] >= 1 and cfg["tstar"] > 0
        assert all(v >= 2 for v in dims.values())
        assert raw["out"].startswith("out/")
