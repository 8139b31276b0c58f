"""Laser scanning (EOFM / LLSI) acquisition: modulation depth on the modulated
rail, lens-dependent tiling, per-tile narrow-band amplitude with detector
noise, and stitching back into a whole-die map."""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, replace

import numpy as np
from scipy import ndimage

from .floorplan import Die, Floorplan
from .framestack import read_map, write_map
from .stimulus import ModulationSpec

FWHM_PER_SIGMA = 2.0 * math.sqrt(2.0 * math.log(2.0))
SPOT_TRUNCATE_FWHM = 3.0
LASER_DC = 1000.0
PROBE_WAVELENGTH_UM = 1.3


class UnsupportedStimulusError(ValueError):
    pass


class CoverageGapError(ValueError):
    def __init__(self, boxes):
        self.boxes = boxes
        listed = "; ".join(f"rows {r0}-{r1 - 1}, cols {c0}-{c1 - 1}" for r0, c0, r1, c1 in boxes[:10])
        more = f" (+{len(boxes) - 10} more)" if len(boxes) > 10 else ""
        super().__init__(f"tiles leave {len(boxes)} uncovered area(s): {listed}{more}")


@dataclass(frozen=True)
class LensSpec:
    magnification: int
    spot_size_um: float
    tile_width_px: int = 512
    tile_height_px: int = 512
    px_pitch_um: float = 1.0

    def __post_init__(self):
        if self.magnification not in (5, 20, 50):
            raise ValueError(f"magnification must be 5, 20 or 50, got {self.magnification}")
        if not self.spot_size_um > 0:
            raise ValueError("spot_size_um must be positive")
        if self.tile_width_px < 1 or self.tile_height_px < 1 or not self.px_pitch_um > 0:
            raise ValueError("tile size and pixel pitch must be positive")

    @property
    def field_width_um(self) -> float:
        return self.tile_width_px * self.px_pitch_um

    @property
    def field_height_um(self) -> float:
        return self.tile_height_px * self.px_pitch_um

    def resampled(self, px_pitch_um: float) -> "LensSpec":
        """Same field of view (to the nearest pixel) sampled at ``px_pitch_um``."""
        return replace(
            self,
            tile_width_px=max(1, int(round(self.field_width_um / px_pitch_um))),
            tile_height_px=max(1, int(round(self.field_height_um / px_pitch_um))),
            px_pitch_um=px_pitch_um,
        )

    def to_dict(self) -> dict:
        return {
            "magnification": self.magnification,
            "spot_size_um": self.spot_size_um,
            "tile_width_px": self.tile_width_px,
            "tile_height_px": self.tile_height_px,
            "px_pitch_um": self.px_pitch_um,
        }


# square fields of view of 2000, 471 and 188 um imaged onto 512 x 512 px
_DEFAULT_LENSES = {
    5: (5.0, 2000.0),
    20: (2.0, 471.0),
    50: (1.0, 188.0),
}


def default_lens(magnification: int) -> LensSpec:
    spot, fov = _DEFAULT_LENSES[magnification]
    return LensSpec(magnification, spot, 512, 512, fov / 512)


@dataclass(frozen=True)
class ModulationDepthMap:
    depth: np.ndarray
    rail_id: str
    frequency_hz: float
    pitch_um: float


@dataclass(frozen=True)
class TileScan:
    origin_um: tuple[float, float]
    row0: int
    col0: int
    amplitude: np.ndarray
    samples: np.ndarray
    dwell_time_s: float

    @property
    def rows(self) -> slice:
        return slice(self.row0, self.row0 + self.amplitude.shape[0])

    @property
    def cols(self) -> slice:
        return slice(self.col0, self.col0 + self.amplitude.shape[1])


@dataclass(frozen=True)
class Mosaic:
    image: np.ndarray
    coverage: np.ndarray


def modulation_depth_map(fp: Floorplan, rail_id: str, spec: ModulationSpec) -> ModulationDepthMap:
    """AC/DC ratio of the reflected light on the rail's footprint."""
    if spec.waveform != "sine":
        raise UnsupportedStimulusError("laser logic state imaging expects sine supply modulation")
    rail = fp.rail(rail_id)
    ripple = spec.amplitude_vpp / 2 / rail.nominal_voltage_v
    depth = np.zeros(fp.die.raster_shape)
    for i, region in fp.regions_of(rail_id):
        if region.reflect_sensitivity > 0:
            depth[fp.region_footprint(i)] = region.reflect_sensitivity * ripple
    depth.flags.writeable = False
    return ModulationDepthMap(depth, rail_id, spec.frequency_hz, fp.die.grid_pitch_um)


def _axis_origins(extent: float, fov: float, overlap: float) -> list[float]:
    if fov >= extent - 1e-9:
        return [(extent - fov) / 2]
    step = fov * (1 - overlap)
    n = int(math.ceil((extent - fov) / step - 1e-9)) + 1
    return [k * step for k in range(n)]


def plan_tiles(die: Die, lens: LensSpec, overlap_fraction: float = 0.1) -> list[tuple[float, float]]:
    """Row-major tile origins ``(x_um, y_um)`` covering the die.

    Tiles start at the die origin and advance by ``fov * (1 - overlap)``; the
    last tile in a row or column may extend past the die edge. An axis that fits
    inside one field of view gets a single centred tile.
    """
    if not 0 <= overlap_fraction < 0.5:
        raise ValueError(f"overlap_fraction must lie in [0, 0.5), got {overlap_fraction}")
    # plan over the raster, whose last row/column may reach past a die edge that
    # is not a whole number of pixels
    rows, cols = die.raster_shape
    xs = _axis_origins(cols * die.grid_pitch_um, lens.field_width_um, overlap_fraction)
    ys = _axis_origins(rows * die.grid_pitch_um, lens.field_height_um, overlap_fraction)
    return [(x, y) for y in ys for x in xs]


def _pixel_span(origin_um: float, extent_um: float, pitch: float, n: int) -> tuple[int, int]:
    """Die pixels whose centres fall in [origin, origin + extent), clipped to the die."""
    a = int(math.ceil(origin_um / pitch - 0.5 - 1e-9))
    b = int(math.ceil((origin_um + extent_um) / pitch - 0.5 - 1e-9))
    return max(a, 0), min(b, n)


def tile_pixel_window(shape, pitch_um: float, origin, lens: LensSpec):
    rows, cols = shape
    c0, c1 = _pixel_span(origin[0], lens.field_width_um, pitch_um, cols)
    r0, r1 = _pixel_span(origin[1], lens.field_height_um, pitch_um, rows)
    return r0, r1, c0, c1


def acquire_tile(
    depth: ModulationDepthMap,
    origin,
    lens: LensSpec,
    dwell_samples: int,
    noise_sigma: float,
    seed: int,
    laser_dc: float = LASER_DC,
) -> TileScan:
    """Narrow-band amplitude for one field of view.

    Each pixel reports ``|s + n|`` where ``s`` is the spot-blurred depth times
    ``laser_dc`` and ``n`` is complex Gaussian detector noise with per-component
    standard deviation ``noise_sigma / sqrt(dwell_samples)``.
    """
    if dwell_samples < 1:
        raise ValueError("dwell_samples must be >= 1")
    pitch = depth.pitch_um
    if not math.isclose(lens.px_pitch_um, pitch, rel_tol=1e-9):
        raise ValueError(
            f"lens pixel pitch {lens.px_pitch_um} um differs from the map pitch {pitch} um; "
            "use lens.resampled(pitch)"
        )
    r0, r1, c0, c1 = tile_pixel_window(depth.depth.shape, pitch, origin, lens)
    if r1 <= r0 or c1 <= c0:
        raise ValueError(f"tile origin {tuple(origin)} um places the tile outside the die")

    sigma_px = lens.spot_size_um / FWHM_PER_SIGMA / pitch
    margin = int(math.ceil(SPOT_TRUNCATE_FWHM * lens.spot_size_um / pitch))
    rows, cols = depth.depth.shape
    pr0, pr1 = max(r0 - margin, 0), min(r1 + margin, rows)
    pc0, pc1 = max(c0 - margin, 0), min(c1 + margin, cols)
    patch = np.zeros((r1 - r0 + 2 * margin, c1 - c0 + 2 * margin))
    patch[pr0 - r0 + margin : pr1 - r0 + margin, pc0 - c0 + margin : pc1 - c0 + margin] = depth.depth[
        pr0:pr1, pc0:pc1
    ]
    blurred = ndimage.gaussian_filter(
        patch, sigma_px, mode="constant", truncate=SPOT_TRUNCATE_FWHM * FWHM_PER_SIGMA
    )
    signal = laser_dc * blurred[margin : margin + r1 - r0, margin : margin + c1 - c0]

    if noise_sigma > 0:
        rng = np.random.default_rng(seed)
        noise = rng.normal(0.0, noise_sigma / math.sqrt(dwell_samples), size=(2,) + signal.shape)
        amplitude = np.hypot(signal + noise[0], noise[1])
    else:
        amplitude = np.abs(signal)
    samples = np.full(signal.shape, dwell_samples, dtype=np.int64)
    return TileScan(
        (float(origin[0]), float(origin[1])),
        r0,
        c0,
        amplitude,
        samples,
        dwell_samples / depth.frequency_hz,
    )


def _uncovered_boxes(coverage: np.ndarray):
    labels, n = ndimage.label(coverage == 0, structure=np.ones((3, 3)))
    return [(s[0].start, s[1].start, s[0].stop, s[1].stop) for s in ndimage.find_objects(labels)]


def stitch_tiles(tiles, die: Die, lens: LensSpec | None = None) -> Mosaic:
    """Mean of all tile values covering each die pixel.

    ``lens`` is accepted for symmetry with acquisition; tile placement is taken
    from each tile's stored pixel offset.
    """
    shape = die.raster_shape
    total = np.zeros(shape)
    coverage = np.zeros(shape, dtype=np.int64)
    for tile in tiles:
        if tile.row0 < 0 or tile.col0 < 0 or tile.rows.stop > shape[0] or tile.cols.stop > shape[1]:
            raise ValueError(f"tile at {tile.origin_um} does not fit the {shape} die raster")
        total[tile.rows, tile.cols] += tile.amplitude
        coverage[tile.rows, tile.cols] += 1
    if np.any(coverage == 0):
        raise CoverageGapError(_uncovered_boxes(coverage))
    image = total / coverage
    return Mosaic(image, coverage)


def split_into_tiles(image: np.ndarray, tile_rows: int, tile_cols: int) -> list[TileScan]:
    """Cut a map into disjoint tiles (the inverse of stitching a disjoint tiling)."""
    tiles = []
    for r0 in range(0, image.shape[0], tile_rows):
        for c0 in range(0, image.shape[1], tile_cols):
            block = image[r0 : r0 + tile_rows, c0 : c0 + tile_cols]
            tiles.append(
                TileScan((float(c0), float(r0)), r0, c0, block.copy(), np.ones(block.shape, dtype=np.int64), 0.0)
            )
    return tiles


def scan_die(
    fp: Floorplan,
    depth: ModulationDepthMap,
    lens: LensSpec,
    dwell_samples: int,
    noise_sigma: float,
    seed: int,
    overlap_fraction: float = 0.1,
    laser_dc: float = LASER_DC,
) -> list[TileScan]:
    """Acquire every planned tile; tile ``k`` uses seed ``[seed, k]``."""
    lens = lens.resampled(fp.die.grid_pitch_um)
    origins = plan_tiles(fp.die, lens, overlap_fraction)
    return [
        acquire_tile(depth, o, lens, dwell_samples, noise_sigma, [seed, k], laser_dc)
        for k, o in enumerate(origins)
    ]


def save_tileset(directory, tiles, lens: LensSpec, dwell_samples: int, seed: int, extra: dict | None = None):
    """Write tiles as one-frame stacks plus ``index.json``."""
    os.makedirs(directory, exist_ok=True)
    entries = []
    for k, tile in enumerate(tiles):
        name = f"tile_{k:04d}.mfrs"
        write_map(os.path.join(directory, name), tile.amplitude)
        entries.append(
            {
                "file": name,
                "origin_um": list(tile.origin_um),
                "row0": tile.row0,
                "col0": tile.col0,
                "dwell_time_s": tile.dwell_time_s,
            }
        )
    index = {
        "lens": lens.to_dict(),
        "dwell_samples": dwell_samples,
        "seed": seed,
        "probe_wavelength_um": PROBE_WAVELENGTH_UM,
        "tiles": entries,
    }
    if extra:
        index.update(extra)
    with open(os.path.join(directory, "index.json"), "w", encoding="utf-8") as fh:
        json.dump(index, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return index


def load_tileset(directory):
    """Inverse of :func:`save_tileset`; returns ``(tiles, lens, index)``."""
    with open(os.path.join(directory, "index.json"), encoding="utf-8") as fh:
        index = json.load(fh)
    lens = LensSpec(**index["lens"])
    dwell = int(index["dwell_samples"])
    tiles = []
    for e in index["tiles"]:
        amp = read_map(os.path.join(directory, e["file"])).astype(np.float64)
        tiles.append(
            TileScan(
                tuple(e["origin_um"]),
                int(e["row0"]),
                int(e["col0"]),
                amp,
                np.full(amp.shape, dwell, dtype=np.int64),
                float(e["dwell_time_s"]),
            )
        )
    return tiles, lens, index
