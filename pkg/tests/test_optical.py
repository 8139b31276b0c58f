import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import oracles
from railscope.floorplan import Die, Floorplan, MaterialParams, Rail, Rect, Region, rasterize_rail_footprint
from railscope.optical import (
    CoverageGapError,
    LensSpec,
    ModulationDepthMap,
    TileScan,
    UnsupportedStimulusError,
    acquire_tile,
    default_lens,
    load_tileset,
    modulation_depth_map,
    plan_tiles,
    save_tileset,
    scan_die,
    split_into_tiles,
    stitch_tiles,
)
from railscope.stimulus import ModulationSpec, lit_default, llsi_default

SINE = llsi_default()


def depth_map(arr, pitch=1.0):
    return ModulationDepthMap(np.asarray(arr, dtype=float), "a", 2e6, pitch)


def whole_lens(shape, pitch=1.0, mag=20, spot=2.0):
    return LensSpec(mag, spot, shape[1], shape[0], pitch)


# -- modulation depth --------------------------------------------------------------


def test_zero_vpp_gives_zero_depth(small_fp):
    d = modulation_depth_map(small_fp, "a", ModulationSpec("sine", 2e6, 0.0, 0.82))
    assert not d.depth.any()


def test_depth_formula_value(small_fp):
    d = modulation_depth_map(small_fp, "a", ModulationSpec("sine", 2e6, 0.1, 0.82))
    logic = small_fp.region_footprint(1)  # reflect_sensitivity 0.2 on a 0.82 V rail
    assert np.allclose(d.depth[logic], 0.2 * 0.05 / 0.82)
    assert d.depth[logic][0] == pytest.approx(0.0122, abs=5e-5)


def test_depth_zero_off_rail(small_fp):
    d = modulation_depth_map(small_fp, "a", SINE)
    assert np.all(d.depth[~rasterize_rail_footprint(small_fp, "a")] == 0)
    assert np.all(d.depth >= 0)


def test_pch_core_prim_optical_fraction(pch):
    d = modulation_depth_map(pch, "core_prim", SINE)
    assert abs(np.count_nonzero(d.depth) / d.depth.size - 0.163) <= 0.0005


def test_square_stimulus_unsupported(small_fp):
    with pytest.raises(UnsupportedStimulusError):
        modulation_depth_map(small_fp, "a", lit_default())


@given(vpp=st.floats(0.0, 1.6))
def test_depth_linear_in_vpp(small_fp, vpp):
    ref = modulation_depth_map(small_fp, "a", ModulationSpec("sine", 2e6, 0.1, 0.82)).depth
    d = modulation_depth_map(small_fp, "a", ModulationSpec("sine", 2e6, vpp, 0.82)).depth
    np.testing.assert_allclose(d, ref * (vpp / 0.1), rtol=1e-12, atol=0)


# -- lenses and tiling ------------------------------------------------------------


def test_default_lenses():
    assert default_lens(50).spot_size_um == pytest.approx(1.0)
    assert default_lens(20).field_width_um == pytest.approx(471.0)
    assert default_lens(5).field_height_um == pytest.approx(2000.0)
    with pytest.raises(ValueError):
        LensSpec(10, 1.0)


def test_single_exact_tile():
    die = Die(512.0, 256.0, 1.0)
    assert plan_tiles(die, LensSpec(20, 2.0, 512, 256, 1.0), 0.0) == [(0.0, 0.0)]


def test_reference_die_tile_count():
    lens = LensSpec(20, 2.0, 471, 471, 1.0)
    tiles = plan_tiles(Die(8000.0, 12000.0, 10.0), lens, 0.0)
    assert len(tiles) == 17 * 26 == 442
    assert tiles[:2] == [(0.0, 0.0), (471.0, 0.0)]  # row-major


def test_oversized_tile_is_centred():
    die = Die(100.0, 100.0, 1.0)
    assert plan_tiles(die, LensSpec(5, 5.0, 300, 300, 1.0)) == [(-100.0, -100.0)]


def test_overlap_bounds():
    with pytest.raises(ValueError):
        plan_tiles(Die(100.0, 100.0, 1.0), LensSpec(5, 5.0, 30, 30, 1.0), 0.5)


def test_plan_covers_partial_last_pixel():
    # 1411 um at 10 um pitch: the last raster row's centre lies past the die edge
    from railscope.optical import tile_pixel_window

    die = Die(80.0, 1411.0, 10.0)
    lens = LensSpec(20, 2.0, 2, 2, 10.0)
    coverage = np.zeros(die.raster_shape, dtype=int)
    for o in plan_tiles(die, lens, 0.25):
        r0, r1, c0, c1 = tile_pixel_window(die.raster_shape, 10.0, o, lens)
        coverage[r0:r1, c0:c1] += 1
    assert coverage.min() >= 1


@given(
    w=st.floats(80.0, 3000.0),
    h=st.floats(80.0, 3000.0),
    fov=st.floats(20.0, 800.0),
    overlap=st.floats(0.0, 0.49),
)
def test_plan_covers_die(w, h, fov, overlap):
    pitch = 10.0
    die = Die(w, h, pitch)
    lens = LensSpec(20, 2.0, 64, 64, fov / 64).resampled(pitch)
    coverage = np.zeros(die.raster_shape, dtype=int)
    from railscope.optical import tile_pixel_window

    for o in plan_tiles(die, lens, overlap):
        r0, r1, c0, c1 = tile_pixel_window(die.raster_shape, pitch, o, lens)
        coverage[r0:r1, c0:c1] += 1
    assert coverage.min() >= 1


# -- acquisition --------------------------------------------------------------------


def test_zero_depth_noiseless_tile():
    d = depth_map(np.zeros((40, 50)))
    t = acquire_tile(d, (0.0, 0.0), whole_lens((40, 50)), 16, 0.0, 1)
    assert not t.amplitude.any() and t.amplitude.shape == (40, 50)
    assert np.all(t.samples == 16)


def test_dwell_noise_ratio():
    d = depth_map(np.zeros((120, 120)))
    lens = whole_lens((120, 120))
    s1 = acquire_tile(d, (0.0, 0.0), lens, 1, 5.0, 1).amplitude.std()
    s100 = acquire_tile(d, (0.0, 0.0), lens, 100, 5.0, 2).amplitude.std()
    assert s1 / s100 == pytest.approx(10.0, rel=0.10)


def test_spot_fwhm_fifty_x():
    arr = np.zeros((41, 41))
    arr[20, 20] = 1.0
    d = depth_map(arr, pitch=0.5)
    lens = default_lens(50).resampled(0.5)
    lens = LensSpec(50, lens.spot_size_um, 41, 41, 0.5)
    t = acquire_tile(d, (0.0, 0.0), lens, 1, 0.0, 1)
    assert oracles.gaussian_fwhm(t.amplitude[20]) == pytest.approx(2.0, abs=0.5)
    assert oracles.gaussian_fwhm(t.amplitude[:, 20]) == pytest.approx(2.0, abs=0.5)


def test_tile_outside_die():
    d = depth_map(np.zeros((20, 20)))
    with pytest.raises(ValueError, match="outside"):
        acquire_tile(d, (50.0, 0.0), whole_lens((10, 10)), 1, 0.0, 1)
    with pytest.raises(ValueError):
        acquire_tile(d, (0.0, 0.0), whole_lens((10, 10)), 0, 0.0, 1)


def test_lens_pitch_must_match():
    with pytest.raises(ValueError, match="resampled"):
        acquire_tile(depth_map(np.zeros((20, 20))), (0.0, 0.0), whole_lens((10, 10), pitch=2.0), 1, 0.0, 1)


def test_amplitude_noise_scales_with_dwell():
    arr = np.full((1, 400), 0.05)
    d = depth_map(arr)
    lens = whole_lens((1, 400), spot=0.1)
    stds = [acquire_tile(d, (0.0, 0.0), lens, n, 20.0, n).amplitude.std() for n in (4, 64, 1024)]
    assert stds[0] / stds[1] == pytest.approx(4.0, rel=0.10)
    assert stds[1] / stds[2] == pytest.approx(4.0, rel=0.10)


def test_rail_isolation_of_tiles(small_fp):
    d = modulation_depth_map(small_fp, "a", SINE)
    tiles = scan_die(small_fp, d, LensSpec(20, 2.0, 13, 13, 10.0), 64, 0.0, 1, 0.1)
    img = stitch_tiles(tiles, small_fp.die).image
    assert np.all(img[rasterize_rail_footprint(small_fp, "b")] == 0)


# -- stitching -------------------------------------------------------------------------


def test_single_tile_identity(rng):
    m = rng.random((30, 40))
    die = Die(40.0, 30.0, 1.0)
    tile = TileScan((0.0, 0.0), 0, 0, m, np.ones(m.shape, int), 0.0)
    assert np.array_equal(stitch_tiles([tile], die).image, m)


def test_split_two_by_two_roundtrip(rng):
    m = rng.random((30, 40))
    tiles = split_into_tiles(m, 15, 20)
    assert len(tiles) == 4
    assert np.array_equal(stitch_tiles(tiles, Die(40.0, 30.0, 1.0)).image, m)


def test_overlap_mean():
    die = Die(30.0, 10.0, 1.0)
    a = TileScan((0.0, 0.0), 0, 0, np.full((10, 20), 1.0), np.ones((10, 20), int), 0.0)
    b = TileScan((10.0, 0.0), 0, 10, np.full((10, 20), 3.0), np.ones((10, 20), int), 0.0)
    mosaic = stitch_tiles([a, b], die)
    assert np.all(mosaic.image[:, 10:20] == 2.0)
    assert np.all(mosaic.image[:, :10] == 1.0) and np.all(mosaic.image[:, 20:] == 3.0)
    assert mosaic.coverage.max() == 2


def test_coverage_gap_lists_boxes():
    die = Die(30.0, 10.0, 1.0)
    a = TileScan((0.0, 0.0), 0, 0, np.ones((10, 10)), np.ones((10, 10), int), 0.0)
    b = TileScan((20.0, 0.0), 0, 20, np.ones((10, 10)), np.ones((10, 10), int), 0.0)
    with pytest.raises(CoverageGapError) as exc:
        stitch_tiles([a, b], die)
    assert exc.value.boxes == [(0, 10, 10, 20)]


@given(
    rows=st.integers(8, 60),
    cols=st.integers(8, 60),
    tr=st.integers(1, 30),
    tc=st.integers(1, 30),
    seed=st.integers(0, 1000),
)
def test_stitch_idempotent(rows, cols, tr, tc, seed):
    m = np.random.default_rng(seed).normal(size=(rows, cols))
    out = stitch_tiles(split_into_tiles(m, tr, tc), Die(float(cols), float(rows), 1.0))
    assert np.array_equal(out.image, m)
    assert np.all(out.coverage == 1)


def test_tileset_roundtrip_and_determinism(tmp_path, small_fp):
    d = modulation_depth_map(small_fp, "a", SINE)
    lens = LensSpec(20, 2.0, 13, 13, 10.0)
    tiles = scan_die(small_fp, d, lens, 64, 3.0, 9, 0.1)
    again = scan_die(small_fp, d, lens, 64, 3.0, 9, 0.1)
    assert all(np.array_equal(a.amplitude, b.amplitude) for a, b in zip(tiles, again))
    save_tileset(tmp_path / "ts", tiles, lens, 64, 9)
    loaded, lens2, index = load_tileset(tmp_path / "ts")
    assert lens2 == lens and index["seed"] == 9 and index["probe_wavelength_um"] == 1.3
    for a, b in zip(tiles, loaded):
        assert (a.row0, a.col0, a.origin_um) == (b.row0, b.col0, b.origin_um)
        assert np.array_equal(a.amplitude.astype(np.float32), b.amplitude)
    assert np.array_equal(
        stitch_tiles(loaded, small_fp.die).image,
        stitch_tiles([TileScan(t.origin_um, t.row0, t.col0, t.amplitude.astype(np.float32).astype(float),
                               t.samples, t.dwell_time_s) for t in tiles], small_fp.die).image,
    )


def test_single_tile_die_scan():
    fp = Floorplan(
        Die(100.0, 100.0, 1.0),
        (Rail("a", "a", 1.0),),
        (Region("a", Rect(10.0, 10.0, 20.0, 20.0), reflect_sensitivity=0.5),),
        0,
        MaterialParams(),
    )
    tiles = scan_die(fp, modulation_depth_map(fp, "a", ModulationSpec("sine", 2e6, 0.1, 1.0)), default_lens(50), 8, 1.0, 0)
    assert len(tiles) == 1 and tiles[0].amplitude.shape == (100, 100)
    assert math.isclose(tiles[0].dwell_time_s, 8 / 2e6)
