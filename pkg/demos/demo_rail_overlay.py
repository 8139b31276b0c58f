"""
Attributing die area to rails
=============================

Image each rail separately, then overlay the masks. Each pixel is given to
the rail that claimed it; pixels claimed twice are flagged as conflicts.
The two-tone PNG marks strong (above 6 sigma) and weak detections.
"""

import tempfile
from pathlib import Path

import numpy as np

from railscope.analysis import CONFLICT, NO_RAIL, overlay_rails
from railscope.floorplan import load_scenario, render_emissivity_map
from railscope.pipeline import overlay_image, run_pipeline, save_png, scenario_config

fp = load_scenario("pch_like.fp")
results = []
for rail in ("core_prim", "usb"):
    res = run_pipeline(scenario_config(f"lit_{rail}.toml"), fp)
    results.append((rail, res))
    print("%-10s affected %.2f%%" % (rail, 100 * res.classification.affected_fraction))

# %%
# Overlay the two rails.
ov = overlay_rails([(rail, r.classification) for rail, r in results])
for k, rail in enumerate(ov.rail_ids):
    print("%-10s owns %d pixels" % (rail, int(np.sum(ov.attribution == k))))
print("unclaimed %d, conflicts %d (%.3f%%)" % (
    int(np.sum(ov.attribution == NO_RAIL)), int(np.sum(ov.attribution == CONFLICT)), 100 * ov.conflict_fraction))

# %%
# Save the overlay for the core rail on top of the emissivity image.
rail, res = results[0]
rgb = overlay_image(render_emissivity_map(fp), res.amplitude, res.classification)
out = Path(tempfile.mkdtemp()) / f"{rail}_overlay.png"
save_png(out, rgb)
print("wrote", out)
