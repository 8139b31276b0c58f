"""
Splitting and stitching tiles
=============================

Stitching averages every tile that covers a pixel. Disjoint tilings
reproduce the original bit for bit; overlaps are blended by the mean.
"""

import numpy as np

from railscope.floorplan import Die
from railscope.optical import CoverageGapError, TileScan, split_into_tiles, stitch_tiles

rng = np.random.default_rng(0)
image = rng.normal(size=(90, 70))

# %%
# Split into 32 x 25 tiles (edge tiles are smaller) and stitch back.
tiles = split_into_tiles(image, 32, 25)
mosaic = stitch_tiles(tiles, Die(70.0, 90.0, 1.0))
print("%d tiles, identical: %s" % (len(tiles), np.array_equal(mosaic.image, image)))

# %%
# Two overlapping constant tiles: the overlap holds their mean.
die = Die(30.0, 10.0, 1.0)
a = TileScan((0.0, 0.0), 0, 0, np.full((10, 20), 1.0), np.ones((10, 20), int), 0.0)
b = TileScan((10.0, 0.0), 0, 10, np.full((10, 20), 3.0), np.ones((10, 20), int), 0.0)
m = stitch_tiles([a, b], die)
print("row profile:", m.image[0, ::5])
print("coverage:   ", m.coverage[0, ::5])

# %%
# Leaving a hole is an error that names the uncovered boxes.
try:
    stitch_tiles([a], die)
except CoverageGapError as exc:
    print("gap:", exc.boxes)
