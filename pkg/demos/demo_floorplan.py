"""
Building and inspecting a floorplan
===================================

A floorplan lists the die, its supply rails and the regions each rail feeds.
Supply regions (straps, rings) respond as solid blocks, logic regions as a
seeded speckle of occupied cells.
"""

import numpy as np

from railscope.floorplan import (
    footprint_fraction,
    load_scenario,
    parse_floorplan,
    rasterize_rail_footprint,
    render_emissivity_map,
    serialize_floorplan,
)

# %%
# A two-rail toy die written as TOML. Rail ``a`` has a strap and a logic
# block at 50% fill; rail ``b`` is a ring along the bottom edge.
doc = """
[die]
width_um = 400.0
height_um = 300.0
grid_pitch_um = 10.0

[[rails]]
id = "a"
nominal_voltage_v = 0.82

[[rails]]
id = "b"
nominal_voltage_v = 1.05

[[regions]]
name = "a_strap"
rail_id = "a"
kind = "supply"
shape = { rect = [20.0, 20.0, 100.0, 60.0] }
power_density_uw_per_um2 = 2.0

[[regions]]
name = "a_logic"
rail_id = "a"
kind = "logic"
shape = { rect = [200.0, 20.0, 160.0, 120.0] }
speckle_fill = 0.5
speckle_pitch_um = 20.0

[[regions]]
name = "b_ring"
rail_id = "b"
kind = "supply"
shape = { polygon = [[20.0, 200.0], [380.0, 200.0], [380.0, 280.0], [20.0, 280.0]] }
"""
fp = parse_floorplan(doc)
print("raster shape:", fp.die.raster_shape)

# %%
# Rasterised footprints. Rails never overlap, the parser rejects that.
a = rasterize_rail_footprint(fp, "a")
b = rasterize_rail_footprint(fp, "b")
print("rail a covers %.1f%% of the die, rail b %.1f%%" % (100 * a.mean(), 100 * b.mean()))
print("overlap pixels:", int(np.sum(a & b)))

# %%
# A coarse text picture of rail a: '#' strap or occupied logic cell.
for row in a[::2]:
    print("".join("#" if v else "." for v in row))

# %%
# The emissivity map is a deterministic texture used by the IR camera model.
e = render_emissivity_map(fp)
print("emissivity range: %.3f .. %.3f" % (e.min(), e.max()))

# %%
# Serialisation round-trips exactly.
assert np.array_equal(rasterize_rail_footprint(parse_floorplan(serialize_floorplan(fp)), "a"), a)

# %%
# The shipped reference scenario: an 8 mm x 12 mm die with several rails.
pch = load_scenario("pch_like.fp")
for rail in pch.rail_ids:
    print("%-10s all %.3f  thermal %.3f  optical %.3f" % (
        rail,
        footprint_fraction(pch, rail),
        footprint_fraction(pch, rail, "thermal"),
        footprint_fraction(pch, rail, "optical"),
    ))
