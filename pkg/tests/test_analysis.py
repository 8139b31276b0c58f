import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import oracles
from railscope.analysis import (
    CONFLICT,
    NO_RAIL,
    ScanPlan,
    classification_report,
    classify_map,
    classify_threshold,
    estimate_noise_sigma,
    label_texture,
    masked_speedup,
    overlay_rails,
    plan_report,
    scan_time,
    texture_label_map,
)
from railscope.floorplan import Die, Floorplan, MaterialParams, Rail, Rect, Region, rasterize_rail_footprint


# -- noise estimate ------------------------------------------------------------------


def test_sigma_of_unit_normal(rng):
    assert estimate_noise_sigma(rng.normal(size=(1000, 1000))) == pytest.approx(1.0, abs=0.01)


def test_sigma_of_constant():
    assert estimate_noise_sigma(np.full((5, 5), 3.3)) == 0.0


def test_sigma_robust_to_outliers(rng):
    a = rng.normal(0, 2.0, size=200_000)
    a[: a.size // 100] = 1e6
    assert estimate_noise_sigma(a) == pytest.approx(2.0, rel=0.05)


def test_sigma_errors():
    with pytest.raises(ValueError):
        estimate_noise_sigma(np.zeros((0,)))
    with pytest.raises(ValueError):
        estimate_noise_sigma(np.ones((3, 3)), np.zeros((3, 3), bool))


def test_sigma_with_background_mask(rng):
    a = rng.normal(0, 1.0, size=(300, 300))
    a[:100] += 50
    bg = np.ones(a.shape, bool)
    bg[:100] = False
    assert estimate_noise_sigma(a, bg) == pytest.approx(1.0, abs=0.02)


# -- thresholding -------------------------------------------------------------------


def test_two_level_map():
    sigma = 0.7
    a = np.zeros((20, 20))
    a[3:6, 4:9] = 10 * sigma
    a[15, 15] = 10 * sigma
    r = classify_threshold(a, 3.0, sigma)
    assert np.array_equal(r.affected_mask, a > 0)
    assert r.affected_fraction == 16 / 400 and r.search_space_reduction == 1 - 16 / 400
    assert sorted(c.pixel_count for c in r.components) == [1, 15]


def test_eight_connectivity():
    a = np.zeros((5, 5))
    a[1, 1] = a[2, 2] = a[3, 3] = 1
    assert len(classify_threshold(a, 1.0, 0.1).components) == 1


def test_min_region_px_drops_specks():
    a = np.zeros((20, 20))
    a[2, 2] = 1
    a[10:12, 10:13] = 1
    r = classify_threshold(a, 1.0, 0.1, min_region_px=4)
    assert r.affected_mask.sum() == 6 and len(r.components) == 1


def test_classify_threshold_arg_checks():
    with pytest.raises(ValueError):
        classify_threshold(np.zeros((3, 3)), 0.0, 1.0)
    with pytest.raises(ValueError):
        classify_threshold(np.zeros((3, 3)), 1.0, -1.0)


maps = st.builds(
    lambda seed, shape, frac: _speckle_map(seed, shape, frac),
    st.integers(0, 10_000),
    st.tuples(st.integers(8, 60), st.integers(8, 60)),
    st.floats(0.0, 0.5),
)


def _speckle_map(seed, shape, frac):
    rng = np.random.default_rng(seed)
    a = np.abs(rng.normal(size=shape))
    a[rng.random(shape) < frac] += 6.0
    return a


@given(a=maps, k=st.floats(0.1, 10.0), sigma=st.floats(0.0, 3.0), min_px=st.integers(1, 6))
def test_fraction_reduction_and_components(a, k, sigma, min_px):
    r = classify_threshold(a, k, sigma, min_region_px=min_px)
    assert r.affected_fraction + r.search_space_reduction == 1.0
    assert sum(c.pixel_count for c in r.components) == int(r.affected_mask.sum())
    # every affected pixel carries exactly one component id, background none
    assert np.array_equal(r.component_map > 0, r.affected_mask)
    ids = np.unique(r.component_map[r.affected_mask])
    assert sorted(ids.tolist()) == sorted(c.id for c in r.components)


@given(a=maps, k1=st.floats(0.1, 10.0), k2=st.floats(0.1, 10.0), sigma=st.floats(0.01, 3.0))
def test_monotone_in_k(a, k1, k2, sigma):
    lo, hi = sorted((k1, k2))
    m_lo = classify_threshold(a, lo, sigma).affected_mask
    m_hi = classify_threshold(a, hi, sigma).affected_mask
    assert not np.any(m_hi & ~m_lo)


def test_classify_map_uses_robust_baseline(rng):
    a = np.abs(rng.normal(size=(200, 200)) + 1j * rng.normal(size=(200, 200)))
    r = classify_map(a, 3.0, min_region_px=4)
    assert r.affected_fraction < 0.001
    a[50:80, 50:80] += 20
    r = classify_map(a, 3.0, min_region_px=4)
    assert r.affected_mask[50:80, 50:80].all()


def test_zero_map_empty_mask():
    r = classify_map(np.zeros((30, 30)))
    assert r.affected_fraction == 0.0 and r.search_space_reduction == 1.0 and not r.components


# -- texture ---------------------------------------------------------------------------


def _result(mask, pitch=10.0):
    return classify_threshold(mask.astype(float), 1.0, 0.5, pixel_pitch_um=pitch)


def test_solid_rectangle_is_supply():
    m = np.zeros((80, 80), bool)
    m[10:60, 20:45] = True
    r = label_texture(_result(m), window_um=60.0)
    assert [c.label for c in r.components] == ["supply"]
    assert r.supply_fraction == m.mean() and r.logic_fraction == 0.0


def test_checkerboard_is_logic():
    m = np.zeros((80, 80), bool)
    yy, xx = np.mgrid[10:60, 10:60]
    m[10:60, 10:60] = (yy + xx) % 2 == 0
    r = label_texture(_result(m), window_um=60.0)
    assert {c.label for c in r.components} == {"logic"}
    assert r.logic_fraction == pytest.approx(m.mean())


def test_small_component_uses_own_fill():
    m = np.zeros((40, 40), bool)
    m[5:8, 5:8] = True  # solid 3x3, smaller than the window
    m[20, 20] = m[21, 21] = m[22, 20] = m[20, 22] = True  # sparse, bbox 3x3
    r = label_texture(_result(m), window_um=60.0)
    labels = {c.bbox: (c.label, c.fill_ratio) for c in r.components}
    assert labels[(5, 5, 8, 8)] == ("supply", 1.0)
    assert labels[(20, 20, 23, 23)][0] == "logic"
    assert labels[(20, 20, 23, 23)][1] == pytest.approx(4 / 9)


def test_window_too_small():
    with pytest.raises(ValueError, match="4 px"):
        label_texture(_result(np.ones((10, 10), bool)), window_um=25.0)


def test_texture_label_map_codes():
    m = np.zeros((80, 80), bool)
    m[10:60, 5:30] = True
    r = label_texture(_result(m), window_um=60.0)
    lm = texture_label_map(r)
    assert set(np.unique(lm)) == {0, 1}


def _texture_fp(fill, seed):
    regions = (
        Region("a", Rect(50.0, 50.0, 200.0, 500.0), "supply", 1.0, 0.2, name="strap"),
        Region("a", Rect(350.0, 50.0, 400.0, 500.0), "logic", 1.0, 0.2, fill, 20.0, "core"),
    )
    return Floorplan(Die(800.0, 600.0, 10.0), (Rail("a", "a", 1.0),), regions, seed, MaterialParams())


def region_level_labels(fp, result):
    """Majority (pixel-weighted) label of detected pixels inside each region."""
    lm = texture_label_map(result)
    out = []
    for i, region in enumerate(fp.regions):
        inside = lm[fp.region_footprint(i)]
        n_sup, n_log = int(np.sum(inside == 1)), int(np.sum(inside == 2))
        out.append((region.kind, "supply" if n_sup > n_log else "logic"))
    return out


@given(fill=st.floats(0.1, 0.6), seed=st.integers(0, 2**31 - 1))
def test_texture_accuracy_noiseless(fill, seed):
    fp = _texture_fp(fill, seed)
    amp = rasterize_rail_footprint(fp, "a").astype(float)
    r = label_texture(classify_threshold(amp, 3.0, 0.1, pixel_pitch_um=10.0), amp, window_um=60.0)
    for truth, got in region_level_labels(fp, r):
        assert truth == got


# -- rail overlay ------------------------------------------------------------------------


def test_overlay_disjoint():
    a = np.zeros((10, 10))
    b = np.zeros((10, 10))
    a[:3] = 1
    b[5:] = 1
    ov = overlay_rails([("x", classify_threshold(a, 1, 0.1)), ("y", classify_threshold(b, 1, 0.1))])
    assert ov.conflict_count == 0 and ov.affected_count == 80
    assert np.all(ov.attribution[:3] == 0) and np.all(ov.attribution[5:] == 1)
    assert np.all(ov.attribution[3:5] == NO_RAIL)


def test_overlay_identical():
    a = np.zeros((10, 10))
    a[2:6, 2:6] = 1
    r = classify_threshold(a, 1, 0.1)
    ov = overlay_rails([("x", r), ("y", r)])
    assert ov.conflict_count == 16 and ov.conflict_fraction == 1.0
    assert np.all(ov.attribution[2:6, 2:6] == CONFLICT)


def test_overlay_shape_mismatch():
    with pytest.raises(ValueError):
        overlay_rails([("x", classify_threshold(np.zeros((3, 3)), 1, 1)), ("y", classify_threshold(np.zeros((4, 3)), 1, 1))])


# -- scan time -----------------------------------------------------------------------------


def test_reference_scan_time():
    p = scan_time(ScanPlan(8000.0, 12000.0, 1.0, 1.0, 1, 0.1, 1))
    assert p.positions == 96_000_000
    assert p.t_scan_s == pytest.approx(9.6e6)
    assert p.t_scan_days == pytest.approx(111.1, rel=0.005)
    assert "111.1 days" in plan_report(p)["summary"]


def test_single_position():
    p = scan_time(ScanPlan(3.0, 3.0, 3.0, 3.0, 4, 0.25, 2))
    assert p.positions == 1 and p.t_scan_s == 4 * 0.25 * 2


def test_small_grid_against_enumeration():
    p = scan_time(ScanPlan(100.0, 100.0, 10.0, 10.0, 2, 0.5, 3))
    assert p.positions == oracles.enumerate_positions(100.0, 100.0, 10.0, 10.0) == 100
    assert p.t_scan_s == 300.0


@given(
    w=st.floats(1.0, 500.0), h=st.floats(1.0, 500.0), sx=st.floats(0.5, 50.0), sy=st.floats(0.5, 50.0),
    n=st.integers(1, 5), t=st.floats(0.01, 2.0), comb=st.integers(1, 5),
)
def test_positions_match_enumeration(w, h, sx, sy, n, t, comb):
    p = scan_time(ScanPlan(w, h, sx, sy, n, t, comb))
    assert p.positions == oracles.enumerate_positions(w, h, sx, sy)
    assert p.t_scan_s == pytest.approx(p.positions * n * t * comb, rel=1e-12)


@given(
    w=st.floats(10.0, 1e4), h=st.floats(10.0, 1e4), s=st.floats(1.0, 10.0),
    n=st.integers(1, 10), t=st.floats(0.01, 1.0), comb=st.integers(1, 10),
    field=st.sampled_from(["area_width_um", "area_height_um", "n_attempts_per_position", "t_attempt_s", "comb_params"]),
)
def test_scan_time_monotone(w, h, s, n, t, comb, field):
    base = ScanPlan(w, h, s, s, n, t, comb)
    bigger = {
        "area_width_um": dict(area_width_um=w + 2 * s),
        "area_height_um": dict(area_height_um=h + 2 * s),
        "n_attempts_per_position": dict(n_attempts_per_position=n + 1),
        "t_attempt_s": dict(t_attempt_s=t * 1.5),
        "comb_params": dict(comb_params=comb + 1),
    }[field]
    from dataclasses import replace

    assert scan_time(replace(base, **bigger)).t_scan_s > scan_time(base).t_scan_s
    assert scan_time(replace(base, step_x_um=s * 1.7)).t_scan_s <= scan_time(base).t_scan_s
    assert scan_time(replace(base, step_y_um=s * 1.7)).t_scan_s <= scan_time(base).t_scan_s


def test_masked_time():
    p = scan_time(ScanPlan(8000.0, 12000.0), affected_fraction=0.189)
    assert p.t_masked_s == pytest.approx(9.6e6 * 0.189)
    rep = plan_report(p)
    assert rep["speedup"] == pytest.approx(1 / 0.189) and "111.1 days" in rep["summary"]


def test_speedups():
    p = scan_time(ScanPlan(8000.0, 12000.0))
    assert masked_speedup(p, 0.189) == pytest.approx(5.29, abs=0.005)
    assert masked_speedup(p, 1.0) == 1.0
    assert masked_speedup(p, 0.012) == pytest.approx(83.3, abs=0.05)
    with pytest.raises(ValueError, match="undefined"):
        masked_speedup(p, 0.0)


def test_scan_time_rejects_nonpositive():
    with pytest.raises(ValueError):
        scan_time(ScanPlan(0.0, 1.0))


def test_report_fields(rng):
    a = np.zeros((40, 40))
    a[5:20, 5:20] = 5
    r = label_texture(classify_threshold(a, 1.0, 1.0, pixel_pitch_um=10.0), a, 60.0)
    rep = classification_report(r)
    assert rep["affected_pixels"] == 225 and rep["n_components"] == 1
    assert rep["components"][0]["label"] == "supply"
    assert rep["affected_fraction"] + rep["search_space_reduction"] == 1.0


# -- scenario-level classification ---------------------------------------------------------


def test_pch_lit_core_prim_fraction(pch_runs):
    res, _ = pch_runs("lit", "core_prim")
    c = res.classification
    assert c.affected_fraction == pytest.approx(0.189, abs=0.01)
    assert c.search_space_reduction == pytest.approx(0.811, abs=0.01)


def test_pch_usb_fraction(pch_runs):
    for technique in ("lit", "llsi"):
        res, _ = pch_runs(technique, "usb")
        assert res.classification.affected_fraction == pytest.approx(0.012, abs=0.003)


def test_pch_llsi_logic_fraction(pch_runs):
    res, _ = pch_runs("llsi", "core_prim")
    assert res.classification.logic_fraction == pytest.approx(0.109, abs=0.01)


def test_pch_rail_overlay_conflicts(pch_runs):
    a, _ = pch_runs("lit", "core_prim")
    b, _ = pch_runs("lit", "usb")
    ov = overlay_rails([("core_prim", a.classification), ("usb", b.classification)])
    assert ov.conflict_fraction < 0.01
