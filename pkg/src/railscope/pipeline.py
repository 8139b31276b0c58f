"""Configuration loading and end-to-end orchestration.

``simulate`` writes raw acquisitions (an IR frame stack or a tile set) plus an
``index.json`` recording every parameter; ``analyze`` turns those into
amplitude/phase maps, a classification mask, a metrics report and an overlay
image. Both are deterministic for a fixed configuration and seed.
"""

from __future__ import annotations

import json
import shutil
import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import (
    ClassificationResult,
    classification_report,
    classify_map,
    label_texture,
)
from .floorplan import (
    Floorplan,
    load_floorplan,
    render_emissivity_map,
    render_reflectance_map,
    serialize_floorplan,
)
from .framestack import FrameStackWriter, read_framestack, read_map, write_map
from .lockin import LockInAccumulator, LockInResult, lockin_demodulate
from .optical import (
    LASER_DC,
    Mosaic,
    default_lens,
    load_tileset,
    modulation_depth_map,
    save_tileset,
    scan_die,
    stitch_tiles,
)
from .stimulus import ModulationSpec, lit_default, llsi_default
from .thermal import DC_BACKGROUND, build_power_map, iter_ir_frames, thermal_response

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

TECHNIQUES = ("lit", "llsi")
STRONG_K_SIGMA = 6.0
STRONG_RGB = (255, 215, 0)
WEAK_RGB = (128, 0, 160)


class ConfigError(ValueError):
    pass


@dataclass
class LitAcquisition:
    n_frames: int = 1024
    fps: float = 400.0
    noise_sigma: float = 2.0
    seed: int = 1
    dc_background: float = DC_BACKGROUND
    lit_band_hz: tuple[float, float] = (1.0, 100.0)


@dataclass
class LlsiAcquisition:
    magnification: int = 20
    dwell_samples: int = 256
    overlap: float = 0.1
    noise_sigma: float = 25.0
    seed: int = 1
    laser_dc: float = LASER_DC


@dataclass
class AnalysisParams:
    k_sigma: float = 3.0
    window_um: float = 60.0
    fill_cutoff: float = 0.9
    min_region_px: int = 4


@dataclass
class PipelineConfig:
    floorplan: str
    technique: str
    rail_id: str
    modulation: ModulationSpec | None = None
    lit: LitAcquisition = field(default_factory=LitAcquisition)
    llsi: LlsiAcquisition = field(default_factory=LlsiAcquisition)
    analysis: AnalysisParams = field(default_factory=AnalysisParams)
    output: str = "railscope_out"

    def load_floorplan(self) -> Floorplan:
        return load_floorplan(self.floorplan)

    def resolved_modulation(self, fp: Floorplan) -> ModulationSpec:
        if self.modulation is not None:
            return self.modulation
        nominal = fp.rail(self.rail_id).nominal_voltage_v
        return lit_default(nominal) if self.technique == "lit" else llsi_default(nominal)

    def validate(self, fp: Floorplan | None = None) -> ModulationSpec:
        if self.technique not in TECHNIQUES:
            raise ConfigError(f"technique must be one of {TECHNIQUES}, got {self.technique!r}")
        fp = fp or self.load_floorplan()
        fp.rail(self.rail_id)
        spec = self.resolved_modulation(fp)
        if self.technique == "lit":
            lo, hi = self.lit.lit_band_hz
            if spec.waveform != "square":
                raise ConfigError("lock-in thermography uses square-wave supply switching")
            if not lo <= spec.frequency_hz <= hi:
                raise ConfigError(f"LIT frequency {spec.frequency_hz} Hz lies outside the configured band [{lo}, {hi}] Hz")
        elif spec.waveform != "sine":
            raise ConfigError("laser logic state imaging uses sine supply modulation")
        return spec

    def to_dict(self) -> dict:
        d = {
            "floorplan": str(self.floorplan),
            "technique": self.technique,
            "rail_id": self.rail_id,
            "output": str(self.output),
            "analysis": asdict(self.analysis),
        }
        if self.modulation is not None:
            d["modulation"] = self.modulation.to_dict()
        if self.technique == "lit":
            acq = asdict(self.lit)
            acq["lit_band_hz"] = list(acq["lit_band_hz"])
        else:
            acq = asdict(self.llsi)
        d["acquisition"] = acq
        return d


def _build(cls, table: dict, where: str):
    names = {f.name for f in fields(cls)}
    unknown = set(table) - names
    if unknown:
        raise ConfigError(f"unknown key(s) in [{where}]: {', '.join(sorted(unknown))}")
    obj = cls()
    for k, v in table.items():
        default = getattr(obj, k)
        if isinstance(default, tuple):
            v = tuple(float(x) for x in v)
        elif isinstance(default, bool):
            v = bool(v)
        elif isinstance(default, int):
            v = int(v)
        elif isinstance(default, float):
            v = float(v)
        setattr(obj, k, v)
    return obj


def config_from_dict(doc: dict, base_dir=None) -> PipelineConfig:
    try:
        technique = doc.get("technique", "lit")
        if technique not in TECHNIQUES:
            raise ConfigError(f"technique must be one of {TECHNIQUES}, got {technique!r}")
        fp_path = Path(doc["floorplan"])
        if base_dir is not None and not fp_path.is_absolute():
            fp_path = Path(base_dir) / fp_path
        acq = doc.get("acquisition", {})
        cfg = PipelineConfig(
            floorplan=str(fp_path),
            technique=technique,
            rail_id=str(doc["rail_id"]),
            modulation=ModulationSpec.from_dict(doc["modulation"]) if "modulation" in doc else None,
            analysis=_build(AnalysisParams, doc.get("analysis", {}), "analysis"),
            output=str(doc.get("output", "railscope_out")),
        )
        if technique == "lit":
            cfg.lit = _build(LitAcquisition, acq, "acquisition")
        else:
            cfg.llsi = _build(LlsiAcquisition, acq, "acquisition")
        return cfg
    except KeyError as exc:
        raise ConfigError(f"configuration is missing required key {exc}") from exc
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"invalid configuration value: {exc}") from exc


def load_config(path) -> PipelineConfig:
    path = Path(path)
    try:
        doc = tomllib.loads(path.read_text(encoding="utf-8"))
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: malformed configuration: {exc}") from exc
    return config_from_dict(doc, base_dir=path.parent)


# -- in-memory pipelines -----------------------------------------------------


def lit_lockin(fp: Floorplan, rail_id: str, spec: ModulationSpec, acq: LitAcquisition) -> LockInResult:
    """Render IR frames chunk by chunk and demodulate them without storing the stack."""
    tr = thermal_response(build_power_map(fp, rail_id, spec), fp.material)
    acc = LockInAccumulator(tr.amplitude.shape, acq.n_frames, acq.fps, spec.frequency_hz)
    for start, chunk in iter_ir_frames(
        tr, fp, spec, acq.n_frames, acq.fps, acq.noise_sigma, acq.seed, acq.dc_background, dtype=np.float32
    ):
        if start >= acc.n_used:
            break
        acc.add(chunk, start)
    return acc.result()


def llsi_mosaic(fp: Floorplan, rail_id: str, spec: ModulationSpec, acq: LlsiAcquisition) -> Mosaic:
    depth = modulation_depth_map(fp, rail_id, spec)
    tiles = scan_die(
        fp, depth, default_lens(acq.magnification), acq.dwell_samples, acq.noise_sigma, acq.seed, acq.overlap,
        acq.laser_dc,
    )
    return stitch_tiles(tiles, fp.die)


def classify_amplitude(amplitude, params: AnalysisParams, pixel_pitch_um: float) -> ClassificationResult:
    result = classify_map(
        amplitude, params.k_sigma, min_region_px=params.min_region_px, pixel_pitch_um=pixel_pitch_um
    )
    return label_texture(result, amplitude, params.window_um, params.fill_cutoff)


@dataclass
class PipelineResult:
    amplitude: np.ndarray
    classification: ClassificationResult
    phase: np.ndarray | None = None
    lockin: LockInResult | None = None
    mosaic: Mosaic | None = None


def run_pipeline(cfg: PipelineConfig, fp: Floorplan | None = None) -> PipelineResult:
    """Simulate, demodulate and classify entirely in memory."""
    fp = fp or cfg.load_floorplan()
    spec = cfg.validate(fp)
    pitch = fp.die.grid_pitch_um
    if cfg.technique == "lit":
        res = lit_lockin(fp, cfg.rail_id, spec, cfg.lit)
        cls = classify_amplitude(res.amplitude, cfg.analysis, pitch)
        return PipelineResult(res.amplitude, cls, phase=res.phase, lockin=res)
    mosaic = llsi_mosaic(fp, cfg.rail_id, spec, cfg.llsi)
    cls = classify_amplitude(mosaic.image, cfg.analysis, pitch)
    return PipelineResult(mosaic.image, cls, mosaic=mosaic)


# -- on-disk commands --------------------------------------------------------


def write_json(path, doc):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_json(path):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def cmd_simulate(cfg: PipelineConfig, output: str | None = None) -> dict:
    """Write the raw acquisition for ``cfg`` and return the index document."""
    fp = cfg.load_floorplan()
    spec = cfg.validate(fp)
    out = Path(output or cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    (out / "floorplan.fp").write_text(serialize_floorplan(fp), encoding="utf-8")
    index = {
        "railscope_version": __version__,
        "technique": cfg.technique,
        "rail_id": cfg.rail_id,
        "floorplan": "floorplan.fp",
        "floorplan_source": str(cfg.floorplan),
        "modulation": spec.to_dict(),
        "raster_shape": list(fp.die.raster_shape),
        "pixel_pitch_um": fp.die.grid_pitch_um,
        "analysis": asdict(cfg.analysis),
    }
    if cfg.technique == "lit":
        acq = cfg.lit
        tr = thermal_response(build_power_map(fp, cfg.rail_id, spec), fp.material)
        rows, cols = tr.amplitude.shape
        with FrameStackWriter(out / "frames.mfrs", cols, rows, acq.n_frames, acq.fps) as w:
            for _, chunk in iter_ir_frames(
                tr, fp, spec, acq.n_frames, acq.fps, acq.noise_sigma, acq.seed, acq.dc_background,
                dtype=np.float32,
            ):
                w.write(chunk)
        periods = acq.n_frames * spec.frequency_hz / acq.fps
        acq_doc = asdict(acq)
        acq_doc["lit_band_hz"] = list(acq.lit_band_hz)
        index.update(
            acquisition=acq_doc,
            frames="frames.mfrs",
            periods=periods,
            integer_periods=bool(abs(periods - round(periods)) < 1e-9),
        )
    else:
        acq = cfg.llsi
        lens = default_lens(acq.magnification)
        depth = modulation_depth_map(fp, cfg.rail_id, spec)
        tiles = scan_die(fp, depth, lens, acq.dwell_samples, acq.noise_sigma, acq.seed, acq.overlap, acq.laser_dc)
        save_tileset(
            out / "tiles",
            tiles,
            lens.resampled(fp.die.grid_pitch_um),
            acq.dwell_samples,
            acq.seed,
            extra={"die": {"width_um": fp.die.width_um, "height_um": fp.die.height_um,
                           "grid_pitch_um": fp.die.grid_pitch_um}},
        )
        index.update(acquisition=asdict(acq), tiles="tiles", n_tiles=len(tiles))
    write_json(out / "index.json", index)
    return index


def overlay_image(base: np.ndarray, amplitude: np.ndarray, result: ClassificationResult) -> np.ndarray:
    """RGB overlay: affected pixels in two tones on a grey base image.

    Pixels above ``baseline + 6 sigma`` are drawn in the strong colour, the
    remaining affected pixels in the weak colour.
    """
    b = np.asarray(base, dtype=float)
    lo, hi = float(b.min()), float(b.max())
    grey = np.zeros_like(b) if hi <= lo else (b - lo) / (hi - lo)
    rgb = np.repeat((40 + 160 * grey)[..., None], 3, axis=2).astype(np.uint8)
    mask = result.affected_mask
    strong = mask & (amplitude > result.baseline + STRONG_K_SIGMA * result.noise_sigma_est)
    rgb[mask & ~strong] = WEAK_RGB
    rgb[strong] = STRONG_RGB
    return rgb


def save_png(path, rgb: np.ndarray):
    from PIL import Image

    Image.fromarray(rgb, mode="RGB").save(path, format="PNG")


def cmd_analyze(input_dir, output_dir, params: AnalysisParams | None = None) -> dict:
    """Demodulate/stitch a simulated acquisition, classify it and write reports."""
    src = Path(input_dir)
    index = read_json(src / "index.json")
    fp = load_floorplan(src / index["floorplan"])
    params = params or AnalysisParams(**index.get("analysis", {}))
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    pitch = fp.die.grid_pitch_um
    spec = ModulationSpec.from_dict(index["modulation"])

    if index["technique"] == "lit":
        fs = read_framestack(src / index["frames"])
        res = lockin_demodulate(fs, spec.frequency_hz)
        amplitude = res.amplitude
        write_map(out / "amplitude.mfrs", res.amplitude)
        write_map(out / "phase.mfrs", res.phase)
        write_json(out / "lockin.json", res.metadata())
        base = render_emissivity_map(fp)
    else:
        tiles, lens, _ = load_tileset(src / index["tiles"])
        mosaic = stitch_tiles(tiles, fp.die, lens)
        amplitude = mosaic.image
        write_map(out / "amplitude.mfrs", mosaic.image)
        write_map(out / "coverage.mfrs", mosaic.coverage.astype(np.float32))
        base = render_reflectance_map(fp) * index["acquisition"].get("laser_dc", LASER_DC)

    cls = classify_amplitude(amplitude, params, pitch)
    write_map(out / "mask.mfrs", cls.affected_mask.astype(np.float32))
    report = classification_report(cls)
    report.update(
        technique=index["technique"],
        rail_id=index["rail_id"],
        analysis=asdict(params),
    )
    write_json(out / "classification.json", report)
    save_png(out / "overlay.png", overlay_image(base, amplitude, cls))
    return report


def mask_fraction(path) -> float:
    """Affected fraction of a saved 0/1 mask map."""
    mask = read_map(path)
    return float(np.count_nonzero(mask) / mask.size)


def scenario_config(name: str) -> PipelineConfig:
    """Load a configuration shipped in the package's scenario directory."""
    from .floorplan import scenario_path

    path = scenario_path(name)
    return load_config(Path(str(path)))


def copy_scenarios(dest):
    """Copy the shipped scenario files to ``dest`` (for editing)."""
    from importlib.resources import files

    dest = Path(dest)
    dest.mkdir(parents=True, exist_ok=True)
    for entry in (files("railscope") / "scenarios").iterdir():
        if entry.name.endswith((".fp", ".toml")):
            shutil.copyfile(str(entry), dest / entry.name)


__all__ = [
    "AnalysisParams",
    "ConfigError",
    "LitAcquisition",
    "LlsiAcquisition",
    "PipelineConfig",
    "PipelineResult",
    "classify_amplitude",
    "cmd_analyze",
    "cmd_simulate",
    "config_from_dict",
    "lit_lockin",
    "llsi_mosaic",
    "load_config",
    "overlay_image",
    "run_pipeline",
    "scenario_config",
    "mask_fraction",
    "copy_scenarios",
]
