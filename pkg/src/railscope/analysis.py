"""From amplitude maps to rail-attributed regions and attack-budget metrics."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import ndimage

MAD_TO_SIGMA = 1.4826
EIGHT_CONNECTED = np.ones((3, 3), dtype=bool)
SECONDS_PER_DAY = 86400.0


@dataclass(frozen=True)
class Component:
    id: int
    pixel_count: int
    bbox: tuple[int, int, int, int]  # row0, col0, row1, col1 (exclusive)
    label: str = "unlabeled"
    fill_ratio: float | None = None
    mean_amplitude: float | None = None


@dataclass(frozen=True)
class ClassificationResult:
    affected_mask: np.ndarray
    threshold_value: float
    noise_sigma_est: float
    components: tuple[Component, ...]
    affected_fraction: float
    search_space_reduction: float
    baseline: float = 0.0
    pixel_pitch_um: float = 1.0
    component_map: np.ndarray | None = field(default=None, repr=False)
    logic_fraction: float | None = None
    supply_fraction: float | None = None

    def label_counts(self) -> dict:
        out = {"supply": 0, "logic": 0, "unlabeled": 0}
        for c in self.components:
            out[c.label] += c.pixel_count
        return out


def estimate_noise_sigma(amplitude, background_mask=None) -> float:
    """Robust standard deviation, 1.4826 * MAD, over the background pixels."""
    a = np.asarray(amplitude, dtype=float)
    if a.size == 0:
        raise ValueError("cannot estimate noise of an empty map")
    if background_mask is not None:
        a = a[np.asarray(background_mask, dtype=bool)]
        if a.size == 0:
            raise ValueError("background mask excludes every pixel")
    a = a.ravel()
    med = np.median(a)
    return float(MAD_TO_SIGMA * np.median(np.abs(a - med)))


def background_level(amplitude, background_mask=None) -> float:
    """Median of the background pixels (the noise floor of a magnitude map)."""
    a = np.asarray(amplitude, dtype=float)
    if background_mask is not None:
        a = a[np.asarray(background_mask, dtype=bool)]
    return float(np.median(a))


def clipped_background(amplitude, k_sigma: float = 3.0, max_iter: int = 20):
    """Median and MAD sigma of the pixels below ``median + k_sigma * sigma``, iterated.

    Returns ``(baseline, sigma, background_mask)``.
    """
    a = np.asarray(amplitude, dtype=float)
    bg = np.ones(a.shape, dtype=bool)
    for _ in range(max_iter):
        base = background_level(a, bg)
        sigma = estimate_noise_sigma(a, bg)
        new_bg = a <= base + k_sigma * sigma
        if np.array_equal(new_bg, bg) or not new_bg.any():
            break
        bg = new_bg
    return base, sigma, bg


def _components(mask: np.ndarray, amplitude=None):
    labels, n = ndimage.label(mask, structure=EIGHT_CONNECTED)
    if n == 0:
        return labels, ()
    counts = np.bincount(labels.ravel(), minlength=n + 1)
    means = None
    if amplitude is not None:
        sums = np.bincount(labels.ravel(), weights=np.asarray(amplitude, float).ravel(), minlength=n + 1)
        means = sums / np.maximum(counts, 1)
    comps = []
    for i, sl in enumerate(ndimage.find_objects(labels), start=1):
        comps.append(
            Component(
                id=i,
                pixel_count=int(counts[i]),
                bbox=(sl[0].start, sl[1].start, sl[0].stop, sl[1].stop),
                mean_amplitude=None if means is None else float(means[i]),
            )
        )
    return labels, tuple(comps)


def classify_threshold(
    amplitude,
    k_sigma: float,
    sigma: float,
    *,
    baseline: float = 0.0,
    min_region_px: int = 1,
    pixel_pitch_um: float = 1.0,
) -> ClassificationResult:
    """Mark pixels whose amplitude exceeds ``baseline + k_sigma * sigma``.

    ``baseline`` is the background level of the map; magnitude maps have a
    positive noise floor, so thresholds are placed above it. Connected regions
    (8-connectivity) smaller than ``min_region_px`` are discarded as isolated
    noise hits.
    """
    if not k_sigma > 0:
        raise ValueError(f"k_sigma must be positive, got {k_sigma}")
    if sigma < 0:
        raise ValueError(f"sigma must be >= 0, got {sigma}")
    a = np.asarray(amplitude, dtype=float)
    threshold = baseline + k_sigma * sigma
    mask = a > threshold
    labels, comps = _components(mask, a)
    if min_region_px > 1 and comps:
        small = np.array([0] + [c.pixel_count < min_region_px for c in comps], dtype=bool)
        mask = mask & ~small[labels]
        labels, comps = _components(mask, a)
    fraction = float(np.count_nonzero(mask)) / mask.size
    return ClassificationResult(
        affected_mask=mask,
        threshold_value=float(threshold),
        noise_sigma_est=float(sigma),
        components=comps,
        affected_fraction=fraction,
        search_space_reduction=1.0 - fraction,
        baseline=float(baseline),
        pixel_pitch_um=pixel_pitch_um,
        component_map=labels,
    )


def classify_map(
    amplitude,
    k_sigma: float = 3.0,
    *,
    min_region_px: int = 4,
    pixel_pitch_um: float = 1.0,
    background_mask=None,
) -> ClassificationResult:
    """Threshold a magnitude map against its own robust noise statistics.

    Without an explicit ``background_mask`` the background is found by sigma
    clipping, so rails that cover a large share of the die do not inflate the
    noise estimate.
    """
    if background_mask is None:
        base, sigma, _ = clipped_background(amplitude, k_sigma)
    else:
        sigma = estimate_noise_sigma(amplitude, background_mask)
        base = background_level(amplitude, background_mask)
    return classify_threshold(
        amplitude, k_sigma, sigma, baseline=base, min_region_px=min_region_px, pixel_pitch_um=pixel_pitch_um
    )


def _square(size: int) -> np.ndarray:
    return np.ones((size, size), dtype=bool)


def label_texture(
    result: ClassificationResult,
    amplitude=None,
    window_um: float = 25.0,
    fill_cutoff: float = 0.9,
) -> ClassificationResult:
    """Label components as solid supply structures or sprinkled logic.

    Components closer than half a window are grouped. Each group's fill ratio is
    the mean, over windows lying wholly inside the group's closed outline, of
    the fraction of affected pixels in the window. Groups too small to hold a
    window use their own pixel count over their bounding-box area.
    """
    window_px = window_um / result.pixel_pitch_um
    if window_px < 4:
        raise ValueError(
            f"window of {window_um} um spans {window_px:.2f} px at {result.pixel_pitch_um} um/px; need >= 4 px"
        )
    mask = result.affected_mask
    if result.component_map is None:
        comp_map, comps = _components(mask, amplitude)
    else:
        comp_map, comps = result.component_map, result.components
    if not comps:
        return replace(result, logic_fraction=0.0, supply_fraction=0.0)

    half = int(window_px) // 2
    win = 2 * half + 1
    grown = ndimage.binary_dilation(mask, structure=_square(win))
    groups, n_groups = ndimage.label(grown, structure=EIGHT_CONNECTED)
    interior = ndimage.binary_erosion(grown, structure=_square(4 * half + 1), border_value=0)
    local_fill = ndimage.uniform_filter(mask.astype(float), size=win, mode="constant")

    idx = np.arange(1, n_groups + 1)
    interior_groups = np.where(interior, groups, 0)
    n_interior = ndimage.sum_labels(np.ones_like(local_fill), interior_groups, idx)
    fill_interior = ndimage.sum_labels(local_fill, interior_groups, idx) / np.maximum(n_interior, 1)
    group_px = ndimage.sum_labels(mask, groups, idx)
    fill = fill_interior.copy()
    slices = ndimage.find_objects(groups)
    for g in np.flatnonzero(n_interior == 0):
        sl = slices[g]
        ys, xs = np.nonzero((groups[sl] == g + 1) & mask[sl])
        box = (ys.max() - ys.min() + 1) * (xs.max() - xs.min() + 1)
        fill[g] = group_px[g] / box

    group_of_comp = np.zeros(len(comps) + 1, dtype=np.int64)
    rows, cols = np.nonzero(comp_map)
    group_of_comp[comp_map[rows, cols]] = groups[rows, cols]

    labelled = []
    for c in comps:
        g = group_of_comp[c.id] - 1
        label = "supply" if fill[g] >= fill_cutoff else "logic"
        labelled.append(replace(c, label=label, fill_ratio=float(fill[g])))
    total = mask.size
    logic_px = sum(c.pixel_count for c in labelled if c.label == "logic")
    supply_px = sum(c.pixel_count for c in labelled if c.label == "supply")
    return replace(
        result,
        components=tuple(labelled),
        logic_fraction=logic_px / total,
        supply_fraction=supply_px / total,
    )


def texture_label_map(result: ClassificationResult) -> np.ndarray:
    """Per-pixel labels: 0 unaffected, 1 supply, 2 logic, 3 unlabeled."""
    code = {"supply": 1, "logic": 2, "unlabeled": 3}
    lut = np.zeros(len(result.components) + 1, dtype=np.uint8)
    for c in result.components:
        lut[c.id] = code[c.label]
    if result.component_map is None:
        raise ValueError("result carries no component map")
    return lut[result.component_map]


@dataclass(frozen=True)
class RailOverlay:
    """Per-pixel rail attribution: index into ``rail_ids``, -1 none, -2 conflict."""

    attribution: np.ndarray
    rail_ids: tuple[str, ...]
    conflict_mask: np.ndarray
    conflict_count: int
    affected_count: int

    @property
    def conflict_fraction(self) -> float:
        return self.conflict_count / self.affected_count if self.affected_count else 0.0


NO_RAIL = -1
CONFLICT = -2


def overlay_rails(results) -> RailOverlay:
    results = list(results)
    if not results:
        raise ValueError("nothing to overlay")
    shape = results[0][1].affected_mask.shape
    for rail_id, r in results:
        if r.affected_mask.shape != shape:
            raise ValueError(f"rail {rail_id!r} mask has shape {r.affected_mask.shape}, expected {shape}")
    claims = np.zeros(shape, dtype=np.int32)
    attribution = np.full(shape, NO_RAIL, dtype=np.int32)
    for k, (_, r) in enumerate(results):
        claims += r.affected_mask
        attribution[r.affected_mask] = k
    conflict = claims >= 2
    attribution[conflict] = CONFLICT
    return RailOverlay(
        attribution,
        tuple(rid for rid, _ in results),
        conflict,
        int(conflict.sum()),
        int((claims > 0).sum()),
    )


@dataclass(frozen=True)
class ScanPlan:
    """Exhaustive spatial scan budget: positions x attempts x time x parameter combinations."""

    area_width_um: float
    area_height_um: float
    step_x_um: float = 1.0
    step_y_um: float = 1.0
    n_attempts_per_position: int = 1
    t_attempt_s: float = 0.1
    comb_params: int = 1
    positions: int | None = None
    t_scan_s: float | None = None
    affected_fraction: float | None = None
    t_masked_s: float | None = None

    @property
    def t_scan_days(self) -> float | None:
        return None if self.t_scan_s is None else self.t_scan_s / SECONDS_PER_DAY

    @property
    def t_masked_days(self) -> float | None:
        return None if self.t_masked_s is None else self.t_masked_s / SECONDS_PER_DAY


def _grid_count(extent: float, step: float) -> int:
    return int(math.ceil(extent / step - 1e-9))


def scan_time(plan: ScanPlan, affected_fraction: float | None = None) -> ScanPlan:
    for name in ("area_width_um", "area_height_um", "step_x_um", "step_y_um", "n_attempts_per_position",
                 "t_attempt_s", "comb_params"):
        if not getattr(plan, name) > 0:
            raise ValueError(f"{name} must be positive, got {getattr(plan, name)}")
    positions = _grid_count(plan.area_width_um, plan.step_x_um) * _grid_count(plan.area_height_um, plan.step_y_um)
    t_scan = positions * plan.n_attempts_per_position * plan.t_attempt_s * plan.comb_params
    t_masked = None
    if affected_fraction is not None:
        if not 0 <= affected_fraction <= 1:
            raise ValueError("affected_fraction must lie in [0, 1]")
        t_masked = t_scan * affected_fraction
    return replace(plan, positions=positions, t_scan_s=t_scan, affected_fraction=affected_fraction,
                   t_masked_s=t_masked)


def masked_speedup(plan: ScanPlan, fraction: float) -> float:
    """How many times faster a campaign restricted to ``fraction`` of the area runs."""
    if fraction <= 0:
        raise ValueError("speedup is undefined for an empty target area (fraction 0)")
    if fraction > 1:
        raise ValueError(f"fraction must be <= 1, got {fraction}")
    return 1.0 / fraction


# -- reports ------------------------------------------------------------------


def classification_report(result: ClassificationResult) -> dict:
    comps = [
        {
            "id": c.id,
            "pixel_count": c.pixel_count,
            "bbox": list(c.bbox),
            "label": c.label,
            **({"fill_ratio": round(c.fill_ratio, 6)} if c.fill_ratio is not None else {}),
        }
        for c in result.components
    ]
    report = {
        "threshold_value": result.threshold_value,
        "baseline": result.baseline,
        "noise_sigma_est": result.noise_sigma_est,
        "affected_fraction": result.affected_fraction,
        "search_space_reduction": result.search_space_reduction,
        "affected_pixels": int(np.count_nonzero(result.affected_mask)),
        "total_pixels": int(result.affected_mask.size),
        "pixel_pitch_um": result.pixel_pitch_um,
        "n_components": len(comps),
        "components": comps,
    }
    if result.logic_fraction is not None:
        report["logic_fraction"] = result.logic_fraction
        report["supply_fraction"] = result.supply_fraction
    return report


def _days(seconds: float) -> str:
    return f"{seconds / SECONDS_PER_DAY:.1f} days"


def plan_report(plan: ScanPlan) -> dict:
    if plan.positions is None:
        plan = scan_time(plan, plan.affected_fraction)
    report = {
        "area_width_um": plan.area_width_um,
        "area_height_um": plan.area_height_um,
        "step_x_um": plan.step_x_um,
        "step_y_um": plan.step_y_um,
        "n_attempts_per_position": plan.n_attempts_per_position,
        "t_attempt_s": plan.t_attempt_s,
        "comb_params": plan.comb_params,
        "positions": plan.positions,
        "t_scan_s": plan.t_scan_s,
        "t_scan_days": plan.t_scan_days,
        "t_scan_human": _days(plan.t_scan_s),
    }
    summary = f"{plan.positions:,} positions; exhaustive scan takes {_days(plan.t_scan_s)}"
    if plan.affected_fraction is not None:
        report["affected_fraction"] = plan.affected_fraction
        report["t_masked_s"] = plan.t_masked_s
        report["t_masked_days"] = plan.t_masked_days
        report["t_masked_human"] = _days(plan.t_masked_s)
        if plan.affected_fraction > 0:
            report["speedup"] = masked_speedup(plan, plan.affected_fraction)
            summary += (
                f"; restricted to {100 * plan.affected_fraction:.1f}% of the area it takes "
                f"{_days(plan.t_masked_s)} ({report['speedup']:.2f}x faster)"
            )
    report["summary"] = summary
    return report
