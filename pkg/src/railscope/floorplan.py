"""Synthetic die description: geometry, voltage rails and rail-powered regions.

All maps share one raster convention: origin at the top-left die corner,
row-major, x to the right, y downward, lengths in micrometres. Pixel ``(i, j)``
has its centre at ``((j + 0.5) * pitch, (i + 0.5) * pitch)``.

Floorplans are read from a TOML document::

    emissivity_map_seed = 7

    [die]
    width_um = 8000.0
    height_um = 12000.0
    grid_pitch_um = 10.0

    [material]
    thermal_diffusivity_um2_per_s = 1413.7
    emissivity_contrast = 0.2

    [[rails]]
    id = "core_prim"
    name = "vcc_core_prim_0p82"
    nominal_voltage_v = 0.82

    [[regions]]
    rail_id = "core_prim"
    kind = "logic"                       # or "supply"
    shape = { rect = [x, y, width, height] }   # or { polygon = [[x, y], ...] }
    power_density_uw_per_um2 = 1.0
    reflect_sensitivity = 0.2
    speckle_fill = 0.5
    speckle_pitch_um = 20.0
"""

from __future__ import annotations

import math
import sys
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import tomli_w
from scipy import ndimage

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

MIN_RASTER_PX = 8
_EPS = 1e-9


class FloorplanError(ValueError):
    """Base class for floorplan problems."""


class FloorplanSyntaxError(FloorplanError):
    """The document is not well-formed."""


class FloorplanValidationError(FloorplanError):
    """The document parses but violates a floorplan invariant."""


class UnknownRailError(FloorplanError, LookupError):
    def __init__(self, rail_id, valid):
        self.rail_id = rail_id
        self.valid = tuple(valid)
        super().__init__(f"unknown rail {rail_id!r}; valid rails: {', '.join(self.valid)}")


def _ceil_ratio(a: float, b: float) -> int:
    return int(math.ceil(a / b - _EPS))


@dataclass(frozen=True)
class Die:
    width_um: float
    height_um: float
    grid_pitch_um: float

    def __post_init__(self):
        for name in ("width_um", "height_um", "grid_pitch_um"):
            if not getattr(self, name) > 0:
                raise FloorplanValidationError(f"die.{name} must be positive, got {getattr(self, name)}")
        if min(self.raster_shape) < MIN_RASTER_PX:
            raise FloorplanValidationError(
                f"die raster {self.raster_shape} is smaller than {MIN_RASTER_PX} px in some axis; "
                "reduce grid_pitch_um"
            )

    @property
    def raster_shape(self) -> tuple[int, int]:
        """(rows, cols) of the simulation raster."""
        return (_ceil_ratio(self.height_um, self.grid_pitch_um), _ceil_ratio(self.width_um, self.grid_pitch_um))

    @property
    def area_um2(self) -> float:
        return self.width_um * self.height_um


@dataclass(frozen=True)
class Rail:
    id: str
    name: str
    nominal_voltage_v: float

    def __post_init__(self):
        if not self.nominal_voltage_v > 0:
            raise FloorplanValidationError(f"rail {self.id!r}: nominal_voltage_v must be positive")


@dataclass(frozen=True)
class MaterialParams:
    """Thermal and emissive properties.

    The thermal diffusion length at modulation frequency ``f`` is
    ``sqrt(alpha / (pi * f))`` for diffusivity ``alpha``.
    """

    thermal_diffusivity_um2_per_s: float = 1413.7
    emissivity_contrast: float = 0.2
    gain_uk_per_uw: float = 1.0

    def __post_init__(self):
        if not self.thermal_diffusivity_um2_per_s > 0:
            raise FloorplanValidationError("material.thermal_diffusivity_um2_per_s must be positive")
        if not 0.0 <= self.emissivity_contrast <= 1.0:
            raise FloorplanValidationError("material.emissivity_contrast must lie in [0, 1]")
        if not self.gain_uk_per_uw > 0:
            raise FloorplanValidationError("material.gain_uk_per_uw must be positive")

    def diffusion_length_um(self, frequency_hz: float) -> float:
        if not frequency_hz > 0:
            raise ValueError(f"frequency must be positive, got {frequency_hz}")
        return math.sqrt(self.thermal_diffusivity_um2_per_s / (math.pi * frequency_hz))


@dataclass(frozen=True)
class Rect:
    x_um: float
    y_um: float
    width_um: float
    height_um: float

    def bounds(self):
        return self.x_um, self.y_um, self.x_um + self.width_um, self.y_um + self.height_um

    def to_doc(self) -> dict:
        return {"rect": [self.x_um, self.y_um, self.width_um, self.height_um]}

    def _inside(self, x, y):
        x0, y0, x1, y1 = self.bounds()
        return (x >= x0) & (x < x1) & (y >= y0) & (y < y1)


@dataclass(frozen=True)
class Polygon:
    """Simple polygon, filled with the even-odd rule."""

    vertices: tuple[tuple[float, float], ...]

    def bounds(self):
        xs = [v[0] for v in self.vertices]
        ys = [v[1] for v in self.vertices]
        return min(xs), min(ys), max(xs), max(ys)

    def to_doc(self) -> dict:
        return {"polygon": [list(v) for v in self.vertices]}

    def _inside(self, x, y):
        inside = np.zeros(np.broadcast(x, y).shape, dtype=bool)
        verts = self.vertices
        for (xa, ya), (xb, yb) in zip(verts, verts[1:] + verts[:1]):
            if ya == yb:
                continue
            crosses = (ya > y) != (yb > y)
            x_cross = xa + (y - ya) * (xb - xa) / (yb - ya)
            inside ^= crosses & (x < x_cross)
        return inside


@dataclass(frozen=True)
class Region:
    rail_id: str
    shape: Rect | Polygon
    kind: str = "supply"
    power_density_uw_per_um2: float = 0.0
    reflect_sensitivity: float = 0.0
    speckle_fill: float = 1.0
    speckle_pitch_um: float = 1.0
    name: str = ""

    def __post_init__(self):
        label = self.name or self.rail_id
        if self.kind not in ("supply", "logic"):
            raise FloorplanValidationError(f"region {label!r}: kind must be 'supply' or 'logic', got {self.kind!r}")
        if self.power_density_uw_per_um2 < 0:
            raise FloorplanValidationError(f"region {label!r}: power_density_uw_per_um2 must be >= 0")
        if self.reflect_sensitivity < 0:
            raise FloorplanValidationError(f"region {label!r}: reflect_sensitivity must be >= 0")
        if not 0 < self.speckle_fill <= 1:
            raise FloorplanValidationError(f"region {label!r}: speckle_fill must lie in (0, 1]")
        if not self.speckle_pitch_um > 0:
            raise FloorplanValidationError(f"region {label!r}: speckle_pitch_um must be positive")

    @property
    def effective_fill(self) -> float:
        return 1.0 if self.kind == "supply" else self.speckle_fill


@dataclass(frozen=True)
class Floorplan:
    die: Die
    rails: tuple[Rail, ...]
    regions: tuple[Region, ...]
    emissivity_map_seed: int = 0
    material: MaterialParams = field(default_factory=MaterialParams)

    def __post_init__(self):
        object.__setattr__(self, "rails", tuple(self.rails))
        object.__setattr__(self, "regions", tuple(self.regions))
        _validate(self)

    @property
    def rail_ids(self) -> tuple[str, ...]:
        return tuple(r.id for r in self.rails)

    def rail(self, rail_id: str) -> Rail:
        for r in self.rails:
            if r.id == rail_id:
                return r
        raise UnknownRailError(rail_id, self.rail_ids)

    def regions_of(self, rail_id: str) -> list[tuple[int, Region]]:
        self.rail(rail_id)
        return [(i, r) for i, r in enumerate(self.regions) if r.rail_id == rail_id]

    def region_shape_mask(self, index: int) -> np.ndarray:
        """Pixels whose centre lies inside region ``index`` (ignoring speckle)."""
        return _shape_mask(self, index)

    def region_footprint(self, index: int) -> np.ndarray:
        """Shape mask of region ``index`` restricted to occupied speckle cells."""
        return _region_footprint(self, index)


def _region_label(index: int, region: Region) -> str:
    return f"regions[{index}]" + (f" ({region.name})" if region.name else "") + f" rail {region.rail_id!r}"


def _validate(fp: Floorplan):
    ids = [r.id for r in fp.rails]
    dupes = sorted({i for i in ids if ids.count(i) > 1})
    if dupes:
        raise FloorplanValidationError(f"duplicate rail ids: {', '.join(dupes)}")
    for i, region in enumerate(fp.regions):
        if region.rail_id not in ids:
            raise FloorplanValidationError(
                f"{_region_label(i, region)} references undeclared rail {region.rail_id!r}"
            )
        x0, y0, x1, y1 = region.shape.bounds()
        if (
            x0 < -_EPS
            or y0 < -_EPS
            or x1 > fp.die.width_um + _EPS
            or y1 > fp.die.height_um + _EPS
            or x1 <= x0
            or y1 <= y0
        ):
            raise FloorplanValidationError(
                f"{_region_label(i, region)} shape bounds ({x0}, {y0})-({x1}, {y1}) lie outside the "
                f"{fp.die.width_um} x {fp.die.height_um} um die or are empty"
            )
    owner = np.full(fp.die.raster_shape, -1, dtype=np.int32)
    for i, region in enumerate(fp.regions):
        mask = _shape_mask(fp, i)
        clash = owner[mask]
        clash = clash[clash >= 0]
        others = [j for j in np.unique(clash) if fp.regions[j].rail_id != region.rail_id]
        if others:
            j = others[0]
            raise FloorplanValidationError(
                f"{_region_label(i, region)} overlaps {_region_label(j, fp.regions[j])}"
            )
        owner[mask & (owner < 0)] = i


def _pixel_centres(die: Die):
    rows, cols = die.raster_shape
    p = die.grid_pitch_um
    y = (np.arange(rows) + 0.5) * p
    x = (np.arange(cols) + 0.5) * p
    return x, y


@lru_cache(maxsize=256)
def _shape_mask(fp: Floorplan, index: int) -> np.ndarray:
    region = fp.regions[index]
    x, y = _pixel_centres(fp.die)
    mask = np.zeros(fp.die.raster_shape, dtype=bool)
    x0, y0, x1, y1 = region.shape.bounds()
    cols = np.flatnonzero((x >= x0) & (x < x1))
    rows = np.flatnonzero((y >= y0) & (y < y1))
    if cols.size and rows.size:
        sub_y, sub_x = np.meshgrid(y[rows], x[cols], indexing="ij")
        mask[rows[0] : rows[-1] + 1, cols[0] : cols[-1] + 1] = region.shape._inside(sub_x, sub_y)
    mask.flags.writeable = False
    return mask


def speckle_cells(fp: Floorplan, index: int):
    """Per-cell uniform draws for a logic region.

    Returns ``(draws, cx0, cy0)``: ``draws[cy - cy0, cx - cx0]`` is the draw for
    the speckle cell with column ``cx`` and row ``cy``. A cell is occupied when
    its draw is below ``speckle_fill``, so footprints grow monotonically with fill.
    """
    region = fp.regions[index]
    pitch = region.speckle_pitch_um
    x0, y0, x1, y1 = region.shape.bounds()
    cx0, cy0 = int(math.floor(x0 / pitch)), int(math.floor(y0 / pitch))
    cx1, cy1 = int(math.floor(x1 / pitch)), int(math.floor(y1 / pitch))
    rng = np.random.default_rng(np.random.SeedSequence([fp.emissivity_map_seed, index]))
    draws = rng.random((cy1 - cy0 + 1, cx1 - cx0 + 1))
    return draws, cx0, cy0


@lru_cache(maxsize=256)
def _region_footprint(fp: Floorplan, index: int) -> np.ndarray:
    region = fp.regions[index]
    shape_mask = _shape_mask(fp, index)
    if region.kind == "supply" or region.speckle_fill >= 1.0:
        return shape_mask
    draws, cx0, cy0 = speckle_cells(fp, index)
    rows, cols = np.nonzero(shape_mask)
    x, y = _pixel_centres(fp.die)
    cx = np.floor(x[cols] / region.speckle_pitch_um).astype(int) - cx0
    cy = np.floor(y[rows] / region.speckle_pitch_um).astype(int) - cy0
    occupied = draws[cy, cx] < region.speckle_fill
    out = np.zeros_like(shape_mask)
    out[rows[occupied], cols[occupied]] = True
    out.flags.writeable = False
    return out


_VISIBILITY = {
    "all": lambda r: True,
    "thermal": lambda r: r.power_density_uw_per_um2 > 0,
    "optical": lambda r: r.reflect_sensitivity > 0,
}


def rasterize_rail_footprint(fp: Floorplan, rail_id: str, visibility: str = "all") -> np.ndarray:
    """Boolean raster of pixels powered by ``rail_id``.

    ``visibility`` restricts the footprint to regions that dissipate power
    (``"thermal"``) or modulate reflected light (``"optical"``).
    """
    if visibility not in _VISIBILITY:
        raise ValueError(f"visibility must be one of {sorted(_VISIBILITY)}, got {visibility!r}")
    keep = _VISIBILITY[visibility]
    out = np.zeros(fp.die.raster_shape, dtype=bool)
    for i, region in fp.regions_of(rail_id):
        if keep(region):
            out |= _region_footprint(fp, i)
    return out


def region_index_map(fp: Floorplan) -> np.ndarray:
    """Index of the region owning each pixel's shape, -1 where none."""
    out = np.full(fp.die.raster_shape, -1, dtype=np.int32)
    for i in range(len(fp.regions)):
        out[_shape_mask(fp, i) & (out < 0)] = i
    return out


def _texture(fp: Floorplan, stream: int, base_default: float) -> np.ndarray:
    """Map in [0, 1]: a per-region base level blended with smooth seeded noise."""
    rng = np.random.default_rng(np.random.SeedSequence([fp.emissivity_map_seed, stream]))
    shape = fp.die.raster_shape
    base = np.full(shape, base_default)
    levels = rng.uniform(0.3, 1.0, size=len(fp.regions))
    owner = region_index_map(fp)
    inside = owner >= 0
    base[inside] = levels[owner[inside]]
    noise = ndimage.gaussian_filter(rng.random(shape), sigma=1.5, mode="reflect")
    lo, hi = noise.min(), noise.max()
    noise = (noise - lo) / (hi - lo) if hi > lo else np.zeros(shape)
    return np.clip(0.6 * base + 0.4 * noise, 0.0, 1.0)


def render_emissivity_map(fp: Floorplan) -> np.ndarray:
    """Static emissivity in ``[1 - emissivity_contrast, 1]``."""
    contrast = fp.material.emissivity_contrast
    if contrast == 0:
        return np.ones(fp.die.raster_shape)
    return 1.0 - contrast * _texture(fp, 0xE1, base_default=0.1)


def render_reflectance_map(fp: Floorplan) -> np.ndarray:
    """Relative DC reflected-light level in ``[0.5, 1]`` (the optical base image)."""
    return 1.0 - 0.5 * _texture(fp, 0x0F, base_default=0.05)


# -- document I/O -----------------------------------------------------------


def _shape_from_doc(doc, where: str):
    if not isinstance(doc, dict) or len(doc) != 1:
        raise FloorplanValidationError(f"{where}.shape must be a table with exactly one of 'rect' or 'polygon'")
    if "rect" in doc:
        vals = doc["rect"]
        if len(vals) != 4:
            raise FloorplanValidationError(f"{where}.shape.rect must be [x, y, width, height]")
        x, y, w, h = (float(v) for v in vals)
        if w <= 0 or h <= 0:
            raise FloorplanValidationError(f"{where}.shape.rect has non-positive size")
        return Rect(x, y, w, h)
    if "polygon" in doc:
        verts = tuple((float(v[0]), float(v[1])) for v in doc["polygon"])
        if len(verts) < 3:
            raise FloorplanValidationError(f"{where}.shape.polygon needs at least 3 vertices")
        return Polygon(verts)
    raise FloorplanValidationError(f"{where}.shape must contain 'rect' or 'polygon'")


def _require(table: dict, key: str, where: str):
    if key not in table:
        raise FloorplanValidationError(f"{where} is missing required field {key!r}")
    return table[key]


def floorplan_from_dict(doc: dict) -> Floorplan:
    try:
        die_doc = _require(doc, "die", "document")
        die = Die(
            float(_require(die_doc, "width_um", "die")),
            float(_require(die_doc, "height_um", "die")),
            float(_require(die_doc, "grid_pitch_um", "die")),
        )
        material = MaterialParams(**doc.get("material", {}))
        rails = []
        for k, r in enumerate(_require(doc, "rails", "document")):
            where = f"rails[{k}]"
            rails.append(
                Rail(
                    str(_require(r, "id", where)),
                    str(r.get("name", r["id"])),
                    float(_require(r, "nominal_voltage_v", where)),
                )
            )
        regions = []
        for k, r in enumerate(doc.get("regions", [])):
            where = f"regions[{k}]"
            kind = r.get("kind", "supply")
            regions.append(
                Region(
                    rail_id=str(_require(r, "rail_id", where)),
                    shape=_shape_from_doc(_require(r, "shape", where), where),
                    kind=kind,
                    power_density_uw_per_um2=float(r.get("power_density_uw_per_um2", 0.0)),
                    reflect_sensitivity=float(r.get("reflect_sensitivity", 0.0)),
                    speckle_fill=float(r.get("speckle_fill", 1.0)),
                    speckle_pitch_um=float(r.get("speckle_pitch_um", die.grid_pitch_um)),
                    name=str(r.get("name", "")),
                )
            )
        return Floorplan(die, tuple(rails), tuple(regions), int(doc.get("emissivity_map_seed", 0)), material)
    except TypeError as exc:
        raise FloorplanValidationError(f"invalid field: {exc}") from exc


def parse_floorplan(text: str) -> Floorplan:
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise FloorplanSyntaxError(f"malformed floorplan document: {exc}") from exc
    return floorplan_from_dict(doc)


def load_floorplan(path) -> Floorplan:
    with open(path, encoding="utf-8") as fh:
        return parse_floorplan(fh.read())


def floorplan_to_dict(fp: Floorplan) -> dict:
    regions = []
    for r in fp.regions:
        d = {
            "rail_id": r.rail_id,
            "kind": r.kind,
            "shape": r.shape.to_doc(),
            "power_density_uw_per_um2": r.power_density_uw_per_um2,
            "reflect_sensitivity": r.reflect_sensitivity,
            "speckle_fill": r.speckle_fill,
            "speckle_pitch_um": r.speckle_pitch_um,
        }
        if r.name:
            d["name"] = r.name
        regions.append(d)
    return {
        "emissivity_map_seed": fp.emissivity_map_seed,
        "die": {
            "width_um": fp.die.width_um,
            "height_um": fp.die.height_um,
            "grid_pitch_um": fp.die.grid_pitch_um,
        },
        "material": {
            "thermal_diffusivity_um2_per_s": fp.material.thermal_diffusivity_um2_per_s,
            "emissivity_contrast": fp.material.emissivity_contrast,
            "gain_uk_per_uw": fp.material.gain_uk_per_uw,
        },
        "rails": [{"id": r.id, "name": r.name, "nominal_voltage_v": r.nominal_voltage_v} for r in fp.rails],
        "regions": regions,
    }


def serialize_floorplan(fp: Floorplan) -> str:
    return tomli_w.dumps(floorplan_to_dict(fp))


def footprint_fraction(fp: Floorplan, rail_id: str, visibility: str = "all") -> float:
    mask = rasterize_rail_footprint(fp, rail_id, visibility)
    return float(mask.mean())


def scenario_path(name: str = "pch_like.fp"):
    """Path of a scenario file shipped with the package."""
    from importlib.resources import files

    return files("railscope") / "scenarios" / name


def load_scenario(name: str = "pch_like.fp") -> Floorplan:
    return parse_floorplan(scenario_path(name).read_text(encoding="utf-8"))


__all__ = [
    "Die",
    "Rail",
    "Region",
    "Rect",
    "Polygon",
    "MaterialParams",
    "Floorplan",
    "FloorplanError",
    "FloorplanSyntaxError",
    "FloorplanValidationError",
    "UnknownRailError",
    "parse_floorplan",
    "load_floorplan",
    "serialize_floorplan",
    "floorplan_from_dict",
    "floorplan_to_dict",
    "rasterize_rail_footprint",
    "region_index_map",
    "render_emissivity_map",
    "render_reflectance_map",
    "footprint_fraction",
    "speckle_cells",
    "scenario_path",
    "load_scenario",
]

