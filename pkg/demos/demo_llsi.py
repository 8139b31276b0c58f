"""
Laser logic state imaging with tiled acquisition
================================================

A small sine on the supply modulates the reflected laser light of every
transistor on the rail. The die is scanned tile by tile through a lens and
the tiles are stitched into a mosaic.
"""

import numpy as np

from railscope.floorplan import load_scenario, rasterize_rail_footprint
from railscope.optical import default_lens, modulation_depth_map, plan_tiles
from railscope.pipeline import run_pipeline, scenario_config
from railscope.stimulus import llsi_default

fp = load_scenario("pch_like.fp")
spec = llsi_default()
print("modulation: %s %.0f MHz, %.0f mV around %.2f V" % (
    spec.waveform, spec.frequency_hz / 1e6, spec.amplitude_vpp * 1e3, spec.dc_offset_v))

# %%
# Modulation depth is the AC/DC ratio of the reflected light. Only regions
# with reflect sensitivity show up, so the optical footprint can be smaller
# than the thermal one.
depth = modulation_depth_map(fp, "core_prim", spec)
print("optically visible: %.1f%% of the die" % (100 * np.count_nonzero(depth.depth) / depth.depth.size))

# %%
# Tile plan for the 20x lens at the raster pitch.
lens = default_lens(20).resampled(fp.die.grid_pitch_um)
tiles = plan_tiles(fp.die, lens, 0.1)
print("%d tiles of %.0f x %.0f um" % (len(tiles), lens.field_width_um, lens.field_height_um))

# %%
# Full pipeline: acquire, stitch, classify.
res = run_pipeline(scenario_config("llsi_core_prim.toml"), fp)
c = res.classification
print("coverage min/max: %d/%d" % (res.mosaic.coverage.min(), res.mosaic.coverage.max()))
print("affected %.1f%%, logic-like %.1f%%" % (100 * c.affected_fraction, 100 * c.logic_fraction))
truth = rasterize_rail_footprint(fp, "core_prim", "optical")
print("IoU against optical footprint: %.3f" % (np.sum(c.affected_mask & truth) / np.sum(c.affected_mask | truth)))
