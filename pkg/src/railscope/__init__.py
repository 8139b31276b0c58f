"""Simulation and analysis of modulation-based sub-circuit identification.

A supply rail is modulated; lock-in thermography (LIT) or laser logic state
imaging (LLSI) then reveals where on the die the rail's circuitry sits. The
resulting mask shrinks the area an exhaustive fault-injection scan has to
cover.
"""

__version__ = "0.1.0"

from .analysis import (  # noqa: E402
    ClassificationResult,
    ScanPlan,
    classify_map,
    classify_threshold,
    label_texture,
    masked_speedup,
    overlay_rails,
    scan_time,
)
from .floorplan import (  # noqa: E402
    Floorplan,
    load_floorplan,
    load_scenario,
    parse_floorplan,
    rasterize_rail_footprint,
    serialize_floorplan,
)
from .framestack import FrameStack, read_framestack, write_framestack  # noqa: E402
from .lockin import BandFilterSpec, LockInResult, eofm_point_filter, lockin_demodulate  # noqa: E402
from .optical import LensSpec, acquire_tile, default_lens, plan_tiles, stitch_tiles  # noqa: E402
from .stimulus import ModulationSpec  # noqa: E402
from .thermal import build_power_map, render_ir_frames, thermal_response  # noqa: E402

__all__ = [
    "BandFilterSpec",
    "ClassificationResult",
    "Floorplan",
    "FrameStack",
    "LensSpec",
    "LockInResult",
    "ModulationSpec",
    "ScanPlan",
    "acquire_tile",
    "build_power_map",
    "classify_map",
    "classify_threshold",
    "default_lens",
    "eofm_point_filter",
    "label_texture",
    "load_floorplan",
    "load_scenario",
    "lockin_demodulate",
    "masked_speedup",
    "overlay_rails",
    "parse_floorplan",
    "plan_tiles",
    "rasterize_rail_footprint",
    "read_framestack",
    "render_ir_frames",
    "scan_time",
    "serialize_floorplan",
    "stitch_tiles",
    "thermal_response",
    "write_framestack",
]
