import os

import numpy as np
import pytest

from hlab.errors import AlignmentError, ConfigError, EmptySelectionError, HlabError
from hlab.grid import Field, TimeField, build_box_grid, build_perforated_grid
from hlab.lab import (
    StudyConfig,
    box_torsion,
    data_preset,
    difference_quotient_norm,
    error_outside_layer,
    export_trajectory,
    layer_oscillation,
    load_trajectory,
    max_h_gradient_near_holes,
    parse_config_text,
    run_study,
    study_config_from_mapping,
    time_derivative_norm,
)
from hlab.report import (
    HRule,
    StudyReport,
    emit_report,
    report_csv,
    report_plotdata,
    trend_bounded,
    trend_decreasing,
    trend_increasing,
)


def grid2d(h=1 / 32):
    return build_perforated_grid(2, [(0, 1), (0, 1)], 0.25, 0.05, h)


# ---------------------------------------------------------------------------
# diagnostics
# ---------------------------------------------------------------------------


def test_difference_quotient_examples():
    g = grid2d()
    const = Field(g, np.full(g.shape, 2.5))
    assert difference_quotient_norm(const, 0.25) == 0.0
    lin = Field(g, np.broadcast_to(g.coords()[0], g.shape).copy())
    assert difference_quotient_norm(lin, 0.25) == pytest.approx(1.0, rel=1e-12)
    with pytest.raises(AlignmentError):
        difference_quotient_norm(lin, 0.3)


def test_time_derivative_examples():
    g = build_box_grid(1, [(0, 1)], 1 / 8)
    z = np.zeros(g.shape)
    stat = TimeField(g, 0.5, [0.0, 0.5, 1.0], [z, z, z])
    assert time_derivative_norm(stat) == 0.0
    a = 3.0
    ramp = TimeField(g, 0.5, [0.0, 0.5, 1.0], [z, z + a * 0.5, z + a * 1.0])
    assert time_derivative_norm(ramp) == pytest.approx(a)
    single = TimeField(g, 0.5, [0.0], [z])
    with pytest.raises(ConfigError):
        time_derivative_norm(single)


def test_layer_oscillation_examples():
    g = grid2d(h=1 / 64)
    const = Field(g, np.full(g.shape, 1.23))
    assert layer_oscillation(const, (0.02, 0.1)) == 0.0
    # monotone radial spike: oscillation brackets the end values of the band
    r_in, r_out = 0.04, 0.11
    dist = g.lattice_distance()
    spike = Field(g, 1.0 / np.maximum(dist, r_in))
    osc = layer_oscillation(spike, (r_in, r_out))
    assert osc <= 1.0 / r_in - 1.0 / r_out + 1e-12
    assert osc >= 1.0 / (r_in + 2 * g.h) - 1.0 / r_out
    with pytest.raises(EmptySelectionError):
        layer_oscillation(const, (0.05, 0.04))
    with pytest.raises(EmptySelectionError):
        layer_oscillation(const, (0.0101, 0.0102))  # no nodes in the sliver


def test_error_outside_layer_basics():
    g = grid2d()
    z = np.zeros(g.shape)
    u = TimeField(g, 0.1, [0.0, 0.1], [z, z + 1.0])
    same = TimeField(g, 0.1, [0.0, 0.1], [z, z + 1.0])
    assert error_outside_layer(u, same, layer_radius=0.05) == 0.0
    with pytest.raises(EmptySelectionError):
        error_outside_layer(u, same, layer_radius=0.2)  # swallows the cell


def test_error_outside_layer_interpolates_finer_reference():
    g = grid2d(h=1 / 32)
    gf = build_box_grid(2, [(0, 1), (0, 1)], 1 / 64, eps=0.25)
    f = lambda x: np.sin(np.pi * x[0]) * np.sin(2 * np.pi * x[1])
    u = TimeField(g, 1.0, [0.0], [g.sample(f)])
    ref = TimeField(gf, 1.0, [0.0], [gf.sample(f)])
    err, det = error_outside_layer(u, ref, layer_radius=0.03, details=True)
    assert err < 1e-12  # multilinear interpolation is exact on shared nodes
    assert det["max_time_skew"] == 0.0


def test_max_h_gradient_near_holes():
    g = grid2d(h=1 / 64)
    dist = g.lattice_distance()
    f = Field(g, np.maximum(0.2 - dist, 0.0))
    val = max_h_gradient_near_holes(f, 0.1)
    assert val == pytest.approx(1.0, rel=0.2)


# ---------------------------------------------------------------------------
# trends
# ---------------------------------------------------------------------------


def test_trend_helpers():
    assert trend_decreasing([3.0, 2.0, 1.0])
    assert trend_decreasing([3.0, 3.05, 1.0])  # within 2% slack
    assert not trend_decreasing([3.0, 3.5, 1.0])
    assert not trend_decreasing([1.0, 1.0, 1.0])  # no overall drop
    assert trend_increasing([1.0, 2.0, 3.0])
    assert not trend_increasing([2.0, 1.0])
    assert trend_bounded([5.0, 1.0, 1.9])
    assert not trend_bounded([5.0, 1.0, 2.5])


# ---------------------------------------------------------------------------
# config parsing
# ---------------------------------------------------------------------------


def test_parse_config_text():
    text = """
    # corrector sweep
    kind = corrector
    n = 3
    alpha = 3
    k = auto
    eps_list = 1/2, 1/3
    h_rule = resolve:6,max_nodes:32
    """
    cfg = study_config_from_mapping(parse_config_text(text))
    assert cfg.kind == "CORRECTOR"
    assert cfg.eps_list == (0.5, 1.0 / 3.0)
    assert cfg.h_rule.resolve == 6.0
    assert cfg.resolved_k() == pytest.approx(4 * np.pi)


def test_parse_config_errors():
    with pytest.raises(ConfigError):
        parse_config_text("kind corrector")
    with pytest.raises(ConfigError):
        study_config_from_mapping({"kind": "CORRECTOR", "bogus": "1"})
    with pytest.raises(ConfigError):
        study_config_from_mapping({"kind": "CORRECTOR"})  # empty eps_list
    with pytest.raises(ConfigError):
        study_config_from_mapping({"kind": "CORRECTOR", "eps_list": "1/4, 1/2"})
    with pytest.raises(ConfigError):
        study_config_from_mapping({"kind": "WHAT", "eps_list": "1/2"})


def test_data_presets():
    box = ((0.0, 1.0), (0.0, 1.0))
    b = data_preset("bump:0.8", box)
    x = (np.array([[0.5]]), np.array([[0.5]]))
    assert b(x)[0, 0] == pytest.approx(0.8)
    z = data_preset("zero", box)
    assert z(x)[0, 0] == 0.0
    c = data_preset("const:2.5", box)
    assert c(x)[0, 0] == 2.5
    with pytest.raises(ConfigError):
        data_preset("wiggle:1", box)


# ---------------------------------------------------------------------------
# study runner and reports
# ---------------------------------------------------------------------------


def small_corrector_cfg(out_dir=None, k="auto"):
    return StudyConfig(
        kind="CORRECTOR",
        n=3,
        alpha=2.0,
        eps_list=(1 / 2, 1 / 3),
        h_rule=HRule(resolve=4, max_nodes=24),
        k=k,
        out_dir=out_dir,
    )


def test_run_study_corrector_and_artifacts(tmp_path):
    cfg = small_corrector_cfg(out_dir=str(tmp_path / "out"))
    rep = run_study(cfg)
    assert rep.kind == "CORRECTOR"
    assert rep.meta["config_hash"] == cfg.config_hash()
    for name in ("report.json", "report.csv", "report.plot"):
        assert os.path.exists(tmp_path / "out" / name)
    # no temp droppings from the atomic writes
    leftovers = [p for p in os.listdir(tmp_path / "out") if p.startswith(".tmp-")]
    assert leftovers == []


def test_csv_determinism_modulo_wall_time():
    rep1 = run_study(small_corrector_cfg())
    rep2 = run_study(small_corrector_cfg())

    def strip_wall(report):
        idx = report.columns.index("wall_ms")
        lines = report_csv(report).splitlines()
        return [",".join(v for i, v in enumerate(l.split(",")) if i != idx) for l in lines]

    assert strip_wall(rep1) == strip_wall(rep2)


def test_report_json_roundtrip_and_plotdata():
    rep = run_study(small_corrector_cfg())
    back = StudyReport.from_json(rep.to_json())
    assert back == rep
    plot = report_plotdata(rep)
    lines = plot.splitlines()
    declared = len(lines[0].split()) - 1  # minus the comment marker
    assert declared == len(rep.curves)
    for line in lines[1:]:
        assert len(line.split()) == declared


def test_report_verdicts_rederivable():
    rep = run_study(small_corrector_cfg())
    v = rep.verdict("regime_trend")
    assert v.values == rep.column("min_w")
    assert v.passed == trend_increasing(v.values)


def test_run_study_all_rows_failing_raises():
    cfg = StudyConfig(
        kind="CORRECTOR",
        n=3,
        alpha=2.0,
        eps_list=(1 / 2,),  # touching holes at c0 = 1, eps = 1/2
        h_rule=HRule(resolve=4, max_nodes=16),
    )
    with pytest.raises(HlabError):
        run_study(cfg)


def test_empty_report_header_only_csv():
    rep = StudyReport(kind="CORRECTOR", columns=["eps", "min_w"], rows=[])
    assert report_csv(rep) == "eps,min_w\n"


def test_emit_report_unknown_format(tmp_path):
    rep = run_study(small_corrector_cfg())
    with pytest.raises(ConfigError):
        emit_report(rep, "YAML", str(tmp_path))


def test_run_study_eigen_small():
    cfg = StudyConfig(
        kind="EIGEN", n=3, eps_list=(1 / 2, 1 / 3), p=0.5,
        h_rule=HRule(resolve=4, max_nodes=24), tol=1e-7,
    )
    rep = run_study(cfg)
    assert rep.kind == "EIGEN"
    assert [r["eps"] for r in rep.rows] == [1 / 2, 1 / 3]
    for row in rep.rows:
        assert row["min_phi"] > 0
        assert row["corr_I_residual"] > 0
        assert row["c_low"] > 0 and row["C_high"] >= row["c_low"]
    assert rep.verdict("positivity").passed
    vals = rep.column("corr_I_residual")
    assert vals[1] < vals[0]


def test_run_study_pme_single_row():
    cfg = StudyConfig(
        kind="PME", n=3, eps_list=(1 / 2,), m=2.0,
        h_rule=HRule(resolve=4, max_nodes=16), T=0.02, tol=1e-6,
    )
    rep = run_study(cfg)
    row = rep.rows[0]
    assert row["sandwich_pass"] and row["mono_pass"]
    assert row["clamp_max"] == 0.0
    assert set(rep.columns) >= {"m", "lambda1", "lambda2", "sandwich_pass",
                                "mono_pass", "clamp_max"}


def test_trajectory_export_roundtrip(tmp_path):
    g = grid2d()
    f = lambda x: np.sin(np.pi * x[0]) * np.sin(np.pi * x[1])
    snaps = [g.sample(f), 2.0 * g.sample(f)]
    tf = TimeField(g, 0.5, [0.0, 0.5], snaps)
    stem = str(tmp_path / "traj")
    paths = export_trajectory(tf, stem, mode="binary")
    assert set(paths) == {stem + ".json", stem + ".bin"}
    back = load_trajectory(stem)
    assert np.array_equal(back.snapshots[1], tf.snapshots[1])
    assert np.array_equal(back.times, tf.times)
    csv_paths = export_trajectory(tf, str(tmp_path / "tcsv"), mode="csv")
    assert len(csv_paths) == 3  # sidecar + one csv per snapshot


def test_box_torsion_superharmonic():
    from hlab.kernels import laplacian

    g = grid2d()
    w = box_torsion(g)
    lap = laplacian(w, g.inv_h2)
    assert np.max(lap[1:-1, 1:-1]) <= -1.0 + 1e-6
