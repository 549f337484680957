"""Static road features: attributes, turn statistics, and diversity areas.

Eighteen numbers per road, all computable before any drive: global
attributes (distances, segment counts, cumulative turn angle), descriptive
statistics of per-turn angle and radius, and the chord-polygon areas that
measure how far each segment strays from its straight chord.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from .geometry import (
    STRAIGHT,
    GeometryConfig,
    RoadPoints,
    RoadSegment,
    RoadSpine,
    SelfIntersecting,
    interpolate_spine,
    segment_spine,
    self_intersects,
)

FEATURE_NAMES = (
    "direct_distance",
    "length",
    "num_l_turns",
    "num_r_turns",
    "num_straights",
    "total_angle",
    "median_angle",
    "std_angle",
    "max_angle",
    "min_angle",
    "mean_angle",
    "median_radius",
    "std_radius",
    "max_radius",
    "min_radius",
    "mean_radius",
    "full_road_diversity",
    "mean_road_diversity",
)


@dataclass(frozen=True)
class FeatureVector:
    direct_distance: float
    length: float
    num_l_turns: int
    num_r_turns: int
    num_straights: int
    total_angle: float
    median_angle: float
    std_angle: float
    max_angle: float
    min_angle: float
    mean_angle: float
    median_radius: float
    std_radius: float
    max_radius: float
    min_radius: float
    mean_radius: float
    full_road_diversity: float
    mean_road_diversity: float

    def as_dict(self) -> dict[str, float]:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, n) for n in FEATURE_NAMES], dtype=np.float64)


def extract_attributes(spine: RoadSpine, segments: list[RoadSegment]) -> dict:
    """Global road attributes: endpoint distance, length, per-kind counts,
    cumulative turn angle."""
    first, last = spine.samples[0], spine.samples[-1]
    kinds = [seg.kind for seg in segments]
    turn_angles = [seg.turn_angle for seg in segments if seg.kind != STRAIGHT]
    return {
        "direct_distance": float(np.hypot(last.x - first.x, last.y - first.y)),
        "length": spine.total_length,
        "num_l_turns": sum(1 for k in kinds if k == "left"),
        "num_r_turns": sum(1 for k in kinds if k == "right"),
        "num_straights": sum(1 for k in kinds if k == STRAIGHT),
        "total_angle": float(sum(turn_angles)),
    }


def extract_statistics(segments: list[RoadSegment]) -> dict:
    """Angle and radius statistics over turn segments.

    Population standard deviation; a road without turns reports zeros for
    all ten statistics.
    """
    turns = [seg for seg in segments if seg.kind != STRAIGHT]
    if not turns:
        return {n: 0.0 for n in FEATURE_NAMES[6:16]}
    angles = np.array([seg.turn_angle for seg in turns])
    radii = np.array([seg.radius for seg in turns])
    return {
        "median_angle": float(np.median(angles)),
        "std_angle": float(np.std(angles)),
        "max_angle": float(np.max(angles)),
        "min_angle": float(np.min(angles)),
        "mean_angle": float(np.mean(angles)),
        "median_radius": float(np.median(radii)),
        "std_radius": float(np.std(radii)),
        "max_radius": float(np.max(radii)),
        "min_radius": float(np.min(radii)),
        "mean_radius": float(np.mean(radii)),
    }


def extract_diversity(spine: RoadSpine, segments: list[RoadSegment]) -> dict:
    """Chord-polygon areas: full road diversity is the sum over segments,
    mean diversity divides by the segment count."""
    areas = [seg.chord_area for seg in segments]
    full = float(sum(areas))
    return {
        "full_road_diversity": full,
        "mean_road_diversity": full / len(segments) if segments else 0.0,
    }


def features_from_segments(spine: RoadSpine, segments: list[RoadSegment]) -> FeatureVector:
    out: dict = {}
    out.update(extract_attributes(spine, segments))
    out.update(extract_statistics(segments))
    out.update(extract_diversity(spine, segments))
    return FeatureVector(**out)


def extract_features(road: RoadPoints, config: GeometryConfig | None = None) -> FeatureVector:
    """Full pipeline: interpolate, validate, segment, extract.

    Raises DegenerateRoad for bad control points and SelfIntersecting when
    the spine folds back on itself.
    """
    cfg = config or GeometryConfig()
    spine = interpolate_spine(road, cfg)
    if self_intersects(spine, road.lane_width):
        raise SelfIntersecting("road spine passes too close to itself")
    segments = segment_spine(spine, cfg)
    return features_from_segments(spine, segments)


def _format_value(name: str, value: float) -> str:
    if name.startswith("num_"):
        return str(int(value))
    return format(float(value), ".12g")


def write_feature_csv(path: str | Path, rows: list[tuple[str, FeatureVector, str | None]]) -> None:
    """Write the feature matrix: test_id, 18 features, label (may be empty)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["test_id", *FEATURE_NAMES, "label"])
        for test_id, vec, label in rows:
            d = vec.as_dict()
            writer.writerow(
                [test_id]
                + [_format_value(n, d[n]) for n in FEATURE_NAMES]
                + [label if label is not None else ""])


def read_feature_csv(path: str | Path) -> list[tuple[str, FeatureVector, str | None]]:
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        expected = ["test_id", *FEATURE_NAMES, "label"]
        if header != expected:
            raise ValueError(f"unexpected feature CSV header: {header}")
        for line in reader:
            test_id = line[0]
            values = {n: float(v) for n, v in zip(FEATURE_NAMES, line[1:-1])}
            for n in ("num_l_turns", "num_r_turns", "num_straights"):
                values[n] = int(values[n])
            label = line[-1] or None
            rows.append((test_id, FeatureVector(**values), label))
    return rows
