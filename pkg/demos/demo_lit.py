"""
Lock-in thermography of one rail
================================

Square-wave modulate a rail, render the IR camera stack and correlate it
with the reference. Amplitude marks where the rail dissipates power; phase
grows with distance from the heat source.
"""

import numpy as np

from railscope.floorplan import load_scenario, rasterize_rail_footprint
from railscope.pipeline import scenario_config, run_pipeline
from railscope.stimulus import lit_default
from railscope.thermal import build_power_map, thermal_response

fp = load_scenario("pch_like.fp")
spec = lit_default()
mu = fp.material.diffusion_length_um(spec.frequency_hz)
print("modulation: %s %.0f Hz, thermal diffusion length %.1f um" % (spec.waveform, spec.frequency_hz, mu))

# %%
# Noiseless thermal response for the core rail.
tr = thermal_response(build_power_map(fp, "core_prim", spec), fp.material)
print("peak response %.3g, median over footprint %.3g" % (
    tr.amplitude.max(), np.median(tr.amplitude[rasterize_rail_footprint(fp, "core_prim", "thermal")])))

# %%
# Full pipeline at the shipped noise level: 1024 frames at 400 fps are
# streamed through the lock-in accumulator, then thresholded and labelled.
cfg = scenario_config("lit_core_prim.toml")
res = run_pipeline(cfg, fp)
c = res.classification
print("noise sigma %.3g, threshold %.3g" % (c.noise_sigma_est, c.threshold_value))
print("affected %.1f%% of the die, search space reduced by %.1f%%" % (
    100 * c.affected_fraction, 100 * c.search_space_reduction))
print("supply-like %.1f%%, logic-like %.1f%%" % (100 * c.supply_fraction, 100 * c.logic_fraction))

# %%
# How well does the mask match the rail's power-dissipating footprint?
truth = rasterize_rail_footprint(fp, "core_prim", "thermal")
iou = np.sum(c.affected_mask & truth) / np.sum(c.affected_mask | truth)
print("IoU against ground truth: %.3f" % iou)
