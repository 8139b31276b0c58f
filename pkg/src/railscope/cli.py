"""``railscope`` command-line entry point.

Settings resolve as built-in defaults, then the ``--config`` file, then flags
given explicitly on the command line. Failures exit nonzero and print one JSON
object ``{"error": <category>, "message": ...}`` on stderr.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import ScanPlan, plan_report, scan_time
from .floorplan import (
    Die,
    FloorplanError,
    UnknownRailError,
    footprint_fraction,
    load_floorplan,
)
from .framestack import FormatError, write_map
from .optical import CoverageGapError, load_tileset, stitch_tiles
from .pipeline import (
    AnalysisParams,
    ConfigError,
    PipelineConfig,
    cmd_analyze,
    cmd_simulate,
    load_config,
    mask_fraction,
    write_json,
)
from .stimulus import ModulationSpec
from .thermal import NyquistError

EXIT_CODES = {
    "internal": 1,
    "usage": 2,
    "config": 3,
    "unknown_rail": 4,
    "floorplan": 5,
    "format": 6,
    "io": 7,
    "coverage_gap": 8,
    "sampling": 9,
    "invalid_value": 10,
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def categorize(exc: BaseException) -> str:
    # order matters: the specific floorplan errors are ValueErrors too
    for cls, cat in (
        (UsageError, "usage"),
        (UnknownRailError, "unknown_rail"),
        (FloorplanError, "floorplan"),
        (ConfigError, "config"),
        (FormatError, "format"),
        (CoverageGapError, "coverage_gap"),
        (NyquistError, "sampling"),
        (OSError, "io"),
        (ValueError, "invalid_value"),
    ):
        if isinstance(exc, cls):
            return cat
    return "internal"


def _emit(doc):
    json.dump(doc, sys.stdout, indent=2, sort_keys=True)
    sys.stdout.write("\n")


# -- simulate ----------------------------------------------------------------

_MODULATION_FLAGS = ("waveform", "frequency_hz", "amplitude_vpp", "dc_offset_v", "phase_rad")
_LIT_FLAGS = ("n_frames", "fps", "noise_sigma", "seed", "dc_background")
_LLSI_FLAGS = ("magnification", "dwell_samples", "overlap", "noise_sigma", "seed", "laser_dc")
_ANALYSIS_FLAGS = ("k_sigma", "window_um", "fill_cutoff", "min_region_px")


def _add_analysis_flags(p):
    g = p.add_argument_group("analysis")
    g.add_argument("--k-sigma", type=float, help="detection threshold in noise sigmas (default 3)")
    g.add_argument("--window-um", type=float, help="texture window edge in um (default 60)")
    g.add_argument("--fill-cutoff", type=float, help="fill ratio at or above which a group is supply (default 0.9)")
    g.add_argument("--min-region-px", type=int, help="drop connected regions smaller than this (default 4)")


def build_config(args) -> PipelineConfig:
    if args.config:
        cfg = load_config(args.config)
    else:
        if not args.floorplan or not args.rail:
            raise ConfigError("either --config or both --floorplan and --rail are required")
        cfg = PipelineConfig(floorplan=args.floorplan, technique=args.technique or "lit", rail_id=args.rail)
    if args.floorplan:
        cfg.floorplan = args.floorplan
    if args.technique:
        cfg.technique = args.technique
    if args.rail:
        cfg.rail_id = args.rail
    if args.output:
        cfg.output = args.output

    mod = {k: getattr(args, k) for k in _MODULATION_FLAGS if getattr(args, k) is not None}
    if mod:
        base = cfg.resolved_modulation(cfg.load_floorplan()).to_dict()
        base.update(mod)
        cfg.modulation = ModulationSpec.from_dict(base)

    for name in _LIT_FLAGS:
        v = getattr(args, name)
        if v is not None and cfg.technique == "lit":
            setattr(cfg.lit, name, v)
    for name in _LLSI_FLAGS:
        v = getattr(args, name)
        if v is not None and cfg.technique == "llsi":
            setattr(cfg.llsi, name, v)
    if args.lit_band_hz is not None:
        cfg.lit.lit_band_hz = tuple(args.lit_band_hz)
    for name in _ANALYSIS_FLAGS:
        v = getattr(args, name)
        if v is not None:
            setattr(cfg.analysis, name, v)
    return cfg


def _cmd_simulate(args):
    cfg = build_config(args)
    index = cmd_simulate(cfg)
    _emit({"output": str(cfg.output), "index": index})


def _cmd_analyze(args):
    index_path = Path(args.input) / "index.json"
    if not index_path.exists():
        raise FileNotFoundError(f"{index_path} not found; run `railscope simulate` first")
    with open(index_path, encoding="utf-8") as fh:
        stored = json.load(fh).get("analysis", {})
    params = AnalysisParams(**stored)
    for name in _ANALYSIS_FLAGS:
        v = getattr(args, name)
        if v is not None:
            setattr(params, name, v)
    output = args.output or str(Path(args.input) / "analysis")
    report = cmd_analyze(args.input, output, params)
    report = {k: v for k, v in report.items() if k != "components"}
    _emit({"output": output, "report": report})


def _cmd_plan(args):
    fraction = args.affected_fraction
    if args.mask:
        if fraction is not None:
            raise ConfigError("give either --mask or --affected-fraction, not both")
        fraction = mask_fraction(args.mask)
    plan = ScanPlan(
        area_width_um=args.width_um,
        area_height_um=args.height_um,
        step_x_um=args.step_x_um,
        step_y_um=args.step_y_um,
        n_attempts_per_position=args.n_attempts,
        t_attempt_s=args.t_attempt_s,
        comb_params=args.comb_params,
    )
    report = plan_report(scan_time(plan, fraction))
    if args.output:
        write_json(args.output, report)
    _emit(report)


def _cmd_stitch(args):
    tiles, lens, index = load_tileset(args.tiles)
    if args.floorplan:
        die = load_floorplan(args.floorplan).die
    elif "die" in index:
        die = Die(**index["die"])
    else:
        raise ConfigError("tile index has no die geometry; pass --floorplan")
    mosaic = stitch_tiles(tiles, die, lens)
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    write_map(out / "mosaic.mfrs", mosaic.image)
    write_map(out / "coverage.mfrs", mosaic.coverage.astype(np.float32))
    _emit(
        {
            "output": str(out),
            "n_tiles": len(tiles),
            "raster_shape": list(mosaic.image.shape),
            "max_coverage": int(mosaic.coverage.max()),
        }
    )


def _cmd_validate(args):
    fp = load_floorplan(args.floorplan)
    rails = list(fp.rail_ids) if not args.rail else [args.rail]
    for r in rails:
        fp.rail(r)
    doc = {
        "valid": True,
        "raster_shape": list(fp.die.raster_shape),
        "n_regions": len(fp.regions),
        "rails": {
            r: {
                "footprint_fraction": footprint_fraction(fp, r),
                "thermal_fraction": footprint_fraction(fp, r, "thermal"),
                "optical_fraction": footprint_fraction(fp, r, "optical"),
            }
            for r in rails
        },
    }
    _emit(doc)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="railscope", description="Simulate and analyse supply-modulation imaging of a die.")
    p.add_argument("--version", action="version", version=f"railscope {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("simulate", help="render an IR frame stack (lit) or a tile set (llsi)")
    s.add_argument("--config", help="TOML scan configuration")
    s.add_argument("--floorplan", help="floorplan file (.fp)")
    s.add_argument("--technique", choices=("lit", "llsi"))
    s.add_argument("--rail", help="rail id to modulate")
    s.add_argument("--output", help="output directory")
    g = s.add_argument_group("modulation")
    g.add_argument("--waveform", choices=("sine", "square"))
    g.add_argument("--frequency-hz", type=float)
    g.add_argument("--amplitude-vpp", type=float)
    g.add_argument("--dc-offset-v", type=float)
    g.add_argument("--phase-rad", type=float)
    g = s.add_argument_group("acquisition")
    g.add_argument("--n-frames", type=int)
    g.add_argument("--fps", type=float)
    g.add_argument("--noise-sigma", type=float)
    g.add_argument("--seed", type=int)
    g.add_argument("--dc-background", type=float)
    g.add_argument("--lit-band-hz", type=float, nargs=2, metavar=("LO", "HI"))
    g.add_argument("--magnification", type=int, choices=(5, 20, 50))
    g.add_argument("--dwell-samples", type=int)
    g.add_argument("--overlap", type=float)
    g.add_argument("--laser-dc", type=float)
    _add_analysis_flags(s)
    s.set_defaults(func=_cmd_simulate)

    a = sub.add_parser("analyze", help="demodulate/stitch, classify and report")
    a.add_argument("input", help="directory written by `simulate`")
    a.add_argument("--output", help="output directory (default INPUT/analysis)")
    _add_analysis_flags(a)
    a.set_defaults(func=_cmd_analyze)

    pl = sub.add_parser("plan", help="exhaustive and mask-restricted scan time")
    pl.add_argument("--width-um", type=float, default=8000.0)
    pl.add_argument("--height-um", type=float, default=12000.0)
    pl.add_argument("--step-x-um", type=float, default=1.0)
    pl.add_argument("--step-y-um", type=float, default=1.0)
    pl.add_argument("--n-attempts", type=int, default=1)
    pl.add_argument("--t-attempt-s", type=float, default=0.1)
    pl.add_argument("--comb-params", type=int, default=1)
    pl.add_argument("--affected-fraction", type=float)
    pl.add_argument("--mask", help="mask map (.mfrs) whose nonzero fraction restricts the scan")
    pl.add_argument("--output", help="also write the report to this JSON file")
    pl.set_defaults(func=_cmd_plan)

    st = sub.add_parser("stitch", help="stitch a saved tile set into a mosaic")
    st.add_argument("tiles", help="tile-set directory")
    st.add_argument("--floorplan", help="take die geometry from this floorplan")
    st.add_argument("--output", required=True, help="output directory")
    st.set_defaults(func=_cmd_stitch)

    v = sub.add_parser("validate-floorplan", help="parse and check a floorplan file")
    v.add_argument("floorplan")
    v.add_argument("--rail", help="only report this rail")
    v.set_defaults(func=_cmd_validate)
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        args.func(args)
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    except Exception as exc:
        cat = categorize(exc)
        doc = {"error": cat, "message": str(exc)}
        if isinstance(exc, UnknownRailError):
            doc["valid_rails"] = list(exc.valid)
        if isinstance(exc, CoverageGapError):
            doc["gaps"] = [list(b) for b in exc.boxes]
        sys.stderr.write(json.dumps(doc, sort_keys=True) + "\n")
        return EXIT_CODES[cat]
    return 0


if __name__ == "__main__":
    sys.exit(main())
