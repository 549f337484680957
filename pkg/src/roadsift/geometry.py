"""Road geometry: control points -> interpolated spine -> classified segments.

A road is described by sparse control points on a flat map. The spine is a
C2 interpolating cubic through those points on the centripetal (square-root
chord) parameter, resampled at a fixed arc-length step with heading and
curvature taken from the analytic spline derivatives. Segmentation
partitions the spine samples into maximal straight / left-turn / right-turn
runs by signed curvature.

Sign convention: positive curvature = left turn.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.spatial import cKDTree

STRAIGHT = "straight"
LEFT_TURN = "left"
RIGHT_TURN = "right"

_MIN_POINT_SPACING = 1e-9


class DegenerateRoad(ValueError):
    """Road has too few control points or duplicate consecutive points."""


class SelfIntersecting(ValueError):
    """Road spine folds back onto itself closer than two lane widths."""


@dataclass(frozen=True)
class GeometryConfig:
    sampling_step: float = 1.0            # m, max spacing between spine samples
    straight_curvature_threshold: float = 0.005   # 1/m, |k| below = straight
    min_segment_length: float = 5.0       # m, shorter runs merge into a neighbour
    min_radius: float = 2.0               # m, curvature clamp = 1/min_radius
    straight_area_epsilon: float = 1e-3   # m^2, chord area of a true straight


@dataclass(frozen=True)
class RoadPoints:
    """Ordered road control points plus map metadata.

    Invariants (checked at construction): at least 3 points, consecutive
    points distinct, all points inside the [0, map_size]^2 square.
    """

    points: tuple[tuple[float, float], ...]
    lane_width: float = 4.0
    map_size: float = 500.0

    def __post_init__(self):
        pts = [(float(x), float(y)) for x, y in self.points]
        object.__setattr__(self, "points", tuple(pts))
        if len(pts) < 3:
            raise DegenerateRoad(f"need at least 3 road points, got {len(pts)}")
        for (x0, y0), (x1, y1) in zip(pts, pts[1:]):
            if math.hypot(x1 - x0, y1 - y0) <= _MIN_POINT_SPACING:
                raise DegenerateRoad("duplicate consecutive road points")
        for x, y in pts:
            if not (0.0 <= x <= self.map_size and 0.0 <= y <= self.map_size):
                raise DegenerateRoad(
                    f"point ({x:.1f}, {y:.1f}) outside [0, {self.map_size}]^2")

    def as_array(self) -> np.ndarray:
        return np.asarray(self.points, dtype=np.float64)


@dataclass(frozen=True)
class SpineSample:
    s: float          # arc length from road start, m
    x: float
    y: float
    heading: float    # rad, in (-pi, pi]
    curvature: float  # 1/m, signed, positive = left


@dataclass(frozen=True)
class RoadSpine:
    samples: tuple[SpineSample, ...]
    total_length: float

    # column views, built once; the dataclass stays the public carrier
    def __post_init__(self):
        arr = np.asarray(
            [(p.s, p.x, p.y, p.heading, p.curvature) for p in self.samples])
        object.__setattr__(self, "_columns", arr)

    @property
    def s(self) -> np.ndarray:
        return self._columns[:, 0]

    @property
    def xy(self) -> np.ndarray:
        return self._columns[:, 1:3]

    @property
    def heading(self) -> np.ndarray:
        return self._columns[:, 3]

    @property
    def curvature(self) -> np.ndarray:
        return self._columns[:, 4]

    def __len__(self) -> int:
        return len(self.samples)


@dataclass(frozen=True)
class RoadSegment:
    kind: str                 # STRAIGHT | LEFT_TURN | RIGHT_TURN
    start_index: int          # first spine sample index (inclusive)
    end_index: int            # last spine sample index (inclusive)
    length: float             # m
    turn_angle: float         # deg, |cumulative heading change|
    radius: float | None      # m, None for straights
    chord_area: float         # m^2, area between samples and closing chord


def _wrap_angle(a):
    """Wrap angle(s) to (-pi, pi]."""
    w = np.mod(np.asarray(a) + np.pi, 2.0 * np.pi) - np.pi
    w = np.where(w <= -np.pi, w + 2.0 * np.pi, w)
    return w if w.ndim else float(w)


def _centripetal_knots(pts: np.ndarray) -> np.ndarray:
    d = np.sqrt(np.linalg.norm(np.diff(pts, axis=0), axis=1))
    return np.concatenate([[0.0], np.cumsum(d)])


def interpolate_spine(road: RoadPoints, config: GeometryConfig | None = None) -> RoadSpine:
    """Interpolate control points into an arc-length sampled road spine.

    Natural C2 cubic through every control point on the centripetal
    parameter. Heading and curvature come from the analytic spline
    derivatives; curvature is clamped to +-1/min_radius.
    """
    cfg = config or GeometryConfig()
    pts = road.as_array()
    knots = _centripetal_knots(pts)
    spline_x = CubicSpline(knots, pts[:, 0], bc_type="natural")
    spline_y = CubicSpline(knots, pts[:, 1], bc_type="natural")

    def evaluate(tq):
        pos = np.column_stack([spline_x(tq), spline_y(tq)])
        d1 = np.column_stack([spline_x(tq, 1), spline_y(tq, 1)])
        d2 = np.column_stack([spline_x(tq, 2), spline_y(tq, 2)])
        return pos, d1, d2

    # dense pre-pass to build the arc-length -> parameter map
    approx_len = float(np.sum(np.linalg.norm(np.diff(pts, axis=0), axis=1)))
    n_fine = max(32, int(math.ceil(approx_len / (cfg.sampling_step / 4.0))))
    tq_fine = np.linspace(knots[0], knots[-1], n_fine + 1)
    pos_fine, _, _ = evaluate(tq_fine)
    arc_fine = np.concatenate(
        [[0.0], np.cumsum(np.linalg.norm(np.diff(pos_fine, axis=0), axis=1))])
    total = float(arc_fine[-1])

    # emit samples at uniform arc spacing strictly below the configured step
    n_out = max(2, int(math.ceil(total / (0.98 * cfg.sampling_step))))
    targets = np.linspace(0.0, total, n_out + 1)
    idx = np.clip(np.searchsorted(arc_fine, targets, side="right") - 1,
                  0, len(arc_fine) - 2)
    span = np.maximum(arc_fine[idx + 1] - arc_fine[idx], 1e-15)
    frac = (targets - arc_fine[idx]) / span
    tq = tq_fine[idx] + frac * (tq_fine[idx + 1] - tq_fine[idx])
    tq[0], tq[-1] = knots[0], knots[-1]

    pos, d1, d2 = evaluate(tq)
    heading = _wrap_angle(np.arctan2(d1[:, 1], d1[:, 0]))
    speed_sq = d1[:, 0] ** 2 + d1[:, 1] ** 2
    denom = np.maximum(speed_sq, 1e-12) ** 1.5
    kappa = (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]) / denom
    kappa = np.clip(kappa, -1.0 / cfg.min_radius, 1.0 / cfg.min_radius)

    s = np.concatenate(
        [[0.0], np.cumsum(np.linalg.norm(np.diff(pos, axis=0), axis=1))])
    samples = tuple(
        SpineSample(float(s[i]), float(pos[i, 0]), float(pos[i, 1]),
                    float(heading[i]), float(kappa[i]))
        for i in range(len(tq)))
    return RoadSpine(samples=samples, total_length=float(s[-1]))


def self_intersects(spine: RoadSpine, lane_width: float) -> bool:
    """True iff two stretches of spine far apart in arc length come closer
    than 2 x lane_width in the plane.

    Pairs whose arc separation is within 2x the proximity threshold are the
    road's own continuity and are ignored; a legal single turn never trips
    the check for radii above roughly the lane width.
    """
    proximity = 2.0 * lane_width
    exclusion = 2.0 * proximity
    xy = spine.xy
    s = spine.s
    pairs = cKDTree(xy).query_pairs(r=proximity, output_type="ndarray")
    if len(pairs) == 0:
        return False
    return bool(np.any(np.abs(s[pairs[:, 0]] - s[pairs[:, 1]]) > exclusion))


def _classify(kappa: np.ndarray, threshold: float) -> np.ndarray:
    out = np.zeros(len(kappa), dtype=np.int8)
    out[kappa >= threshold] = 1
    out[kappa <= -threshold] = -1
    return out


def _runs(codes: np.ndarray) -> list[list[int]]:
    """Maximal runs of equal codes as [code, start, end_inclusive] triples."""
    runs = []
    start = 0
    for i in range(1, len(codes)):
        if codes[i] != codes[start]:
            runs.append([int(codes[start]), start, i - 1])
            start = i
    runs.append([int(codes[start]), start, len(codes) - 1])
    return runs


def _merge_short_runs(runs: list[list[int]], s: np.ndarray,
                      min_length: float) -> list[list[int]]:
    def run_len(r):
        return s[r[2]] - s[r[1]]

    runs = [list(r) for r in runs]
    while len(runs) > 1:
        lengths = [run_len(r) for r in runs]
        shortest = min(range(len(runs)), key=lambda i: (lengths[i], i))
        if lengths[shortest] >= min_length:
            break
        left = runs[shortest - 1] if shortest > 0 else None
        right = runs[shortest + 1] if shortest < len(runs) - 1 else None
        # absorb into the longer neighbour; ties go left for determinism
        if right is None or (left is not None and run_len(left) >= run_len(right)):
            left[2] = runs[shortest][2]
            del runs[shortest]
        else:
            right[1] = runs[shortest][1]
            del runs[shortest]
        # adjacent runs of equal kind collapse
        i = 0
        while i < len(runs) - 1:
            if runs[i][0] == runs[i + 1][0]:
                runs[i][2] = runs[i + 1][2]
                del runs[i + 1]
            else:
                i += 1
    return runs


def _shoelace_area(xy: np.ndarray) -> float:
    x, y = xy[:, 0], xy[:, 1]
    return 0.5 * abs(float(
        np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1))))


def segment_spine(spine: RoadSpine, config: GeometryConfig | None = None) -> list[RoadSegment]:
    """Partition the spine samples into maximal straight / left / right runs.

    Runs shorter than min_segment_length are merged into their longer
    neighbour. Turn angle is the absolute summed heading increment inside the
    segment (degrees); turn radius is length / angle.
    """
    cfg = config or GeometryConfig()
    kappa = spine.curvature
    s = spine.s
    heading = spine.heading
    xy = spine.xy

    runs = _merge_short_runs(
        _runs(_classify(kappa, cfg.straight_curvature_threshold)),
        s, cfg.min_segment_length)

    n = len(s)
    segments = []
    for k, (code, a, b) in enumerate(runs):
        # reported length runs to the next segment's first sample so lengths
        # sum exactly to the spine total; angle and radius stay on the
        # segment's own samples (a boundary increment can have the opposite
        # sign at turn-to-turn transitions and would shave the angle)
        reach = runs[k + 1][1] if k + 1 < len(runs) else n - 1
        increments = _wrap_angle(np.diff(heading[a:b + 1]))
        angle_rad = abs(float(np.sum(increments))) if b > a else 0.0
        kind = {0: STRAIGHT, 1: LEFT_TURN, -1: RIGHT_TURN}[code]
        radius = None
        if kind != STRAIGHT:
            radius = float(s[b] - s[a]) / max(angle_rad, 1e-12)
        area = _shoelace_area(xy[a:b + 1]) if b - a >= 2 else 0.0
        segments.append(RoadSegment(
            kind=kind, start_index=a, end_index=b,
            length=float(s[reach] - s[a]),
            turn_angle=math.degrees(angle_rad), radius=radius,
            chord_area=area))
    return segments


def load_road(path: str | Path) -> tuple[str, RoadPoints]:
    """Read a road description file: {"id", "lane_width", "map_size", "road_points"}."""
    obj = json.loads(Path(path).read_text())
    road = RoadPoints(
        points=tuple((p[0], p[1]) for p in obj["road_points"]),
        lane_width=float(obj["lane_width"]),
        map_size=float(obj.get("map_size", 500.0)))
    return str(obj["id"]), road


def save_road(path: str | Path, road_id: str, road: RoadPoints) -> None:
    obj = {
        "id": road_id,
        "lane_width": road.lane_width,
        "map_size": road.map_size,
        "road_points": [[x, y] for x, y in road.points],
    }
    Path(path).write_text(json.dumps(obj, indent=2) + "\n")
