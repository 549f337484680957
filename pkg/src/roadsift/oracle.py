"""Deterministic kinematic driving oracle and random road generator.

Labels a road safe/unsafe by driving it with a pure-pursuit bicycle model.
Cornering speed follows the flat-road friction law v = sqrt(mu * r * g),
scaled by a risk factor: aggressive styles corner faster and look ahead
less, cutting corners until the vehicle leaves its lane. The achievable yaw
rate is capped by a friction circle, so overdriving a turn makes the car run
wide instead of rotating in place.

Everything here is pure and seed-driven: identical inputs give bit-identical
traces, which the selection experiments rely on.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .features import FeatureVector, features_from_segments
from .geometry import (
    GeometryConfig,
    RoadPoints,
    RoadSpine,
    SelfIntersecting,
    interpolate_spine,
    segment_spine,
    self_intersects,
)

SAFE = "safe"
UNSAFE = "unsafe"


class NonPositiveRadius(ValueError):
    """Cornering-speed formula needs a strictly positive radius."""


class GenerationExhausted(RuntimeError):
    """Rejection sampling failed to produce a valid road."""


@dataclass(frozen=True)
class DriverConfig:
    mu: float = 0.8                 # static friction coefficient
    g: float = 9.81                 # m/s^2
    risk_factor: float = 1.5        # cornering-speed multiplier
    v_max: float = 30.0             # m/s
    a_accel: float = 3.0            # m/s^2
    a_brake: float = 6.0            # m/s^2
    lookahead: float = 3.0          # m, base pursuit distance (shrunk by rf)
    timestep: float = 0.05          # s
    lane_width: float = 4.0         # m, drivable lane centred on the spine
    oob_fraction: float = 0.5       # vehicle-width fraction outside = failure
    vehicle_width: float = 2.0      # m
    wheelbase: float = 2.5          # m
    max_steer: float = 0.7          # rad
    max_steer_rate: float = 0.18    # rad/s, wheel swing limit
    speed_gain: float = 0.35        # s, speed-proportional lookahead growth
    grip_margin: float = 2.3        # executed lateral grip = margin * mu * g
    overhead_s: float = 10.0        # fixed per-test cost outside the drive

    def __post_init__(self):
        if not 0.0 < self.mu <= 2.0:
            raise ValueError(f"mu must be in (0, 2], got {self.mu}")
        if not 0.5 <= self.risk_factor <= 2.5:
            raise ValueError(f"risk_factor must be in [0.5, 2.5], got {self.risk_factor}")
        if not 0.0 < self.timestep <= 0.1:
            raise ValueError(f"timestep must be in (0, 0.1], got {self.timestep}")
        if not 0.0 < self.oob_fraction <= 1.0:
            raise ValueError(f"oob_fraction must be in (0, 1], got {self.oob_fraction}")


@dataclass(frozen=True)
class VehicleState:
    t: float
    x: float
    y: float
    heading: float
    speed: float
    steering: float
    throttle: float
    brake: float
    lateral_offset: float


@dataclass(frozen=True)
class TestOutcome:
    __test__ = False              # not a pytest class despite the name
    label: str                    # SAFE | UNSAFE
    duration: float               # s of simulated driving
    max_abs_lateral_offset: float
    trace: tuple[VehicleState, ...]


@dataclass
class TestCase:
    __test__ = False              # not a pytest class despite the name
    id: str
    road: RoadPoints
    features: FeatureVector | None = None
    outcome: TestOutcome | None = None


def safe_speed(radius: float, cfg: DriverConfig) -> float:
    """Maximum cornering speed for a turn radius: rf * sqrt(mu * r * g),
    capped at v_max."""
    if radius <= 0.0:
        raise NonPositiveRadius(f"radius must be > 0, got {radius}")
    return min(cfg.v_max, cfg.risk_factor * math.sqrt(cfg.mu * radius * cfg.g))


def plan_speed_profile(spine: RoadSpine, cfg: DriverConfig) -> np.ndarray:
    """Per-sample target speed: cornering limit at each sample, then a
    backward pass bounding deceleration and a forward pass bounding
    acceleration. The first sample is a standing start."""
    kappa = np.abs(spine.curvature)
    v = np.full(len(kappa), cfg.v_max)
    turning = kappa > 1e-12
    v[turning] = np.minimum(
        cfg.v_max,
        cfg.risk_factor * np.sqrt(cfg.mu * cfg.g / kappa[turning]))
    ds = np.diff(spine.s)
    v[0] = 0.0
    for i in range(len(v) - 2, -1, -1):          # braking feasibility
        v[i] = min(v[i], math.sqrt(v[i + 1] ** 2 + 2.0 * cfg.a_brake * ds[i]))
    for i in range(len(v) - 1):                  # acceleration feasibility
        v[i + 1] = min(v[i + 1], math.sqrt(v[i] ** 2 + 2.0 * cfg.a_accel * ds[i]))
    return v


def _simulate(spine: RoadSpine, cfg: DriverConfig) -> TestOutcome:
    sx = spine.xy[:, 0]
    sy = spine.xy[:, 1]
    s_arc = spine.s
    n = len(sx)
    profile = plan_speed_profile(spine, cfg)

    dt = cfg.timestep
    half_lane = cfg.lane_width / 2.0
    half_width = cfg.vehicle_width / 2.0
    pursuit_base = cfg.lookahead / cfg.risk_factor
    yaw_cap_acc = cfg.grip_margin * cfg.mu * cfg.g
    end_s = spine.total_length - 0.5

    x, y = float(sx[0]), float(sy[0])
    heading = float(spine.heading[0])
    speed = 0.0
    steer_prev = 0.0
    rate_step = cfg.max_steer_rate * dt
    ptr = 0
    look = 0
    t = 0.0
    max_steps = int((spine.total_length / 1.0 + 120.0) / dt)

    trace: list[VehicleState] = []
    max_off = 0.0
    failed = False

    for _ in range(max_steps):
        # advance the progress pointer to the nearest sample (monotone)
        while ptr < n - 1:
            dx0 = sx[ptr] - x
            dy0 = sy[ptr] - y
            dx1 = sx[ptr + 1] - x
            dy1 = sy[ptr + 1] - y
            if dx1 * dx1 + dy1 * dy1 < dx0 * dx0 + dy0 * dy0:
                ptr += 1
            else:
                break

        # signed lateral offset from the local tangent
        hx = math.cos(spine.heading[ptr])
        hy = math.sin(spine.heading[ptr])
        ex = x - sx[ptr]
        ey = y - sy[ptr]
        offset = hx * ey - hy * ex
        abs_off = abs(offset)
        if abs_off > max_off:
            max_off = abs_off

        oob = (abs_off + half_width - half_lane) / cfg.vehicle_width
        if oob >= cfg.oob_fraction:
            failed = True
            trace.append(VehicleState(t, x, y, heading, speed, steer if trace else 0.0,
                                      throttle if trace else 0.0, brake if trace else 0.0,
                                      offset))
            break

        progress = s_arc[ptr] + hx * ex + hy * ey
        if progress >= end_s:
            break

        # pure pursuit toward the point lookahead distance ahead by arc
        pursuit = pursuit_base + cfg.speed_gain * speed
        target_s = progress + pursuit
        if look < ptr:
            look = ptr
        while look < n - 1 and s_arc[look] < target_s:
            look += 1
        tx, ty = sx[look], sy[look]
        alpha = math.atan2(ty - y, tx - x) - heading
        alpha = (alpha + math.pi) % (2.0 * math.pi) - math.pi
        dist = max(math.hypot(tx - x, ty - y), 1e-6)
        steer = math.atan2(2.0 * cfg.wheelbase * math.sin(alpha), dist)
        steer = max(-cfg.max_steer, min(cfg.max_steer, steer))
        steer = max(steer_prev - rate_step, min(steer_prev + rate_step, steer))
        steer_prev = steer

        # longitudinal control toward the planned profile
        v_ref = profile[min(ptr + 1, n - 1)]
        accel = (v_ref - speed) / dt
        accel = max(-cfg.a_brake, min(cfg.a_accel, accel))
        throttle = accel / cfg.a_accel if accel > 0.0 else 0.0
        brake = -accel / cfg.a_brake if accel < 0.0 else 0.0

        trace.append(VehicleState(t, x, y, heading, speed, steer,
                                  throttle, brake, offset))

        # kinematic bicycle with a friction-circle yaw-rate cap: demanding
        # more lateral acceleration than the tyres have makes the car run wide
        yaw_rate = speed * math.tan(steer) / cfg.wheelbase
        if speed > 0.1:
            cap = yaw_cap_acc / speed
            yaw_rate = max(-cap, min(cap, yaw_rate))
        x += speed * math.cos(heading) * dt
        y += speed * math.sin(heading) * dt
        heading = (heading + yaw_rate * dt + math.pi) % (2.0 * math.pi) - math.pi
        speed = max(0.0, speed + accel * dt)
        t += dt

    duration = max(t, dt)
    return TestOutcome(
        label=UNSAFE if failed else SAFE,
        duration=duration,
        max_abs_lateral_offset=max_off,
        trace=tuple(trace))


def simulate_drive(road: RoadPoints, cfg: DriverConfig,
                   geometry: GeometryConfig | None = None) -> TestOutcome:
    """Drive the road once and return the verdict with its state trace."""
    geo = geometry or GeometryConfig()
    spine = interpolate_spine(road, geo)
    if self_intersects(spine, road.lane_width):
        raise SelfIntersecting("cannot drive a self-intersecting road")
    return _simulate(spine, cfg)


@dataclass(frozen=True)
class GeneratorBounds:
    min_primitives: int = 2
    max_primitives: int = 12
    straight_range: tuple[float, float] = (20.0, 100.0)
    # primitive radii; spline blending inflates the measured segment radius,
    # so the cap sits below the 47 m the feature tables are allowed to reach
    radius_range: tuple[float, float] = (7.0, 33.0)
    angle_range: tuple[float, float] = (15.0, 270.0)   # degrees
    length_range: tuple[float, float] = (55.0, 3300.0)
    map_size: float = 500.0
    lane_width: float = 4.0
    margin: float = 8.0              # keep control points away from the edge
    max_attempts: int = 1000


def _candidate_points(rng: np.random.Generator, bounds: GeneratorBounds) -> list[tuple[float, float]]:
    n_prim = int(rng.integers(bounds.min_primitives, bounds.max_primitives + 1))
    x = bounds.map_size * float(rng.uniform(0.35, 0.65))
    y = bounds.map_size * float(rng.uniform(0.35, 0.65))
    heading = float(rng.uniform(-math.pi, math.pi))
    pts = [(x, y)]

    kinds = [rng.choice(["straight", "turn"]) for _ in range(n_prim)]
    if "turn" not in kinds:                      # every road has a turn
        kinds[int(rng.integers(0, n_prim))] = "turn"

    for kind in kinds:
        if kind == "straight":
            length = float(rng.uniform(*bounds.straight_range))
            step = length / max(1, int(math.ceil(length / 25.0)))
            d = step
            while d <= length + 1e-9:
                x = pts[-1][0] + step * math.cos(heading)
                y = pts[-1][1] + step * math.sin(heading)
                pts.append((x, y))
                d += step
        else:
            radius = float(rng.uniform(*bounds.radius_range))
            angle = math.radians(float(rng.uniform(*bounds.angle_range)))
            side = 1.0 if rng.random() < 0.5 else -1.0
            cx = pts[-1][0] - side * radius * math.sin(heading)
            cy = pts[-1][1] + side * radius * math.cos(heading)
            n_steps = max(2, int(math.ceil(math.degrees(angle) / 12.0)))
            phi0 = math.atan2(pts[-1][1] - cy, pts[-1][0] - cx)
            for k in range(1, n_steps + 1):
                phi = phi0 + side * angle * k / n_steps
                pts.append((cx + radius * math.cos(phi),
                            cy + radius * math.sin(phi)))
            heading = (heading + side * angle + math.pi) % (2.0 * math.pi) - math.pi
    return pts


def generate_road(rng_seed: int, bounds: GeneratorBounds | None = None,
                  geometry: GeometryConfig | None = None) -> RoadPoints:
    """Sample a valid random road: chained straight/arc primitives, rejected
    until in-map, non-self-intersecting, and inside the length bounds."""
    b = bounds or GeneratorBounds()
    geo = geometry or GeometryConfig()
    rng = np.random.default_rng(rng_seed)
    lo, hi = b.margin, b.map_size - b.margin

    for _ in range(b.max_attempts):
        pts = _candidate_points(rng, b)
        if len(pts) < 3:
            continue
        if not all(lo <= px <= hi and lo <= py <= hi for px, py in pts):
            continue
        road = RoadPoints(points=tuple(pts), lane_width=b.lane_width,
                          map_size=b.map_size)
        spine = interpolate_spine(road, geo)
        if not b.length_range[0] <= spine.total_length <= b.length_range[1]:
            continue
        if self_intersects(spine, b.lane_width):
            continue
        return road
    raise GenerationExhausted(
        f"no valid road after {b.max_attempts} attempts (seed {rng_seed})")


def build_dataset(n: int, cfg: DriverConfig, rng_seed: int,
                  bounds: GeneratorBounds | None = None,
                  geometry: GeometryConfig | None = None,
                  keep_traces: bool = True) -> list[TestCase]:
    """Generate, feature-extract, and label n tests. Deterministic in the
    seed; per-road seeds come from a spawned sequence so test i does not
    depend on n."""
    if n < 1:
        raise ValueError(f"dataset size must be >= 1, got {n}")
    geo = geometry or GeometryConfig()
    b = bounds or GeneratorBounds()
    seeds = np.random.SeedSequence(rng_seed).generate_state(2 * n)
    tests = []
    for i in range(n):
        road = generate_road(int(seeds[2 * i]), b, geo)
        spine = interpolate_spine(road, geo)
        segments = segment_spine(spine, geo)
        vec = features_from_segments(spine, segments)
        outcome = _simulate(spine, cfg)
        if not keep_traces:
            outcome = replace(outcome, trace=())
        tests.append(TestCase(id=f"test_{i:05d}", road=road,
                              features=vec, outcome=outcome))
    return tests


def unsafe_fraction(tests: list[TestCase]) -> float:
    labelled = [t for t in tests if t.outcome is not None]
    if not labelled:
        return 0.0
    return sum(1 for t in labelled if t.outcome.label == UNSAFE) / len(labelled)


def save_dataset(path: str | Path, tests: list[TestCase]) -> None:
    """Write the labelled-dataset JSON consumed by the CAN conversion step."""
    rows = []
    for tc in tests:
        if tc.features is None or tc.outcome is None:
            raise ValueError(f"test {tc.id} is not fully labelled")
        rows.append({
            "id": tc.id,
            "road_points": [[x, y] for x, y in tc.road.points],
            "lane_width": tc.road.lane_width,
            "map_size": tc.road.map_size,
            "features": {k: v for k, v in tc.features.as_dict().items()},
            "label": tc.outcome.label,
            "duration_s": tc.outcome.duration,
            "trace": [
                {"t": st.t, "x": st.x, "y": st.y, "heading": st.heading,
                 "speed": st.speed, "steering": st.steering,
                 "throttle": st.throttle, "brake": st.brake}
                for st in tc.outcome.trace
            ],
        })
    Path(path).write_text(json.dumps(rows, indent=1) + "\n")


def load_dataset(path: str | Path) -> list[TestCase]:
    rows = json.loads(Path(path).read_text())
    tests = []
    for row in rows:
        road = RoadPoints(
            points=tuple((p[0], p[1]) for p in row["road_points"]),
            lane_width=float(row["lane_width"]),
            map_size=float(row.get("map_size", 500.0)))
        trace = tuple(
            VehicleState(t=st["t"], x=st["x"], y=st["y"], heading=st["heading"],
                         speed=st["speed"], steering=st["steering"],
                         throttle=st["throttle"], brake=st["brake"],
                         lateral_offset=0.0)
            for st in row.get("trace", []))
        outcome = TestOutcome(
            label=row["label"], duration=float(row["duration_s"]),
            max_abs_lateral_offset=0.0, trace=trace)
        vec = FeatureVector(**row["features"])
        tests.append(TestCase(id=row["id"], road=road, features=vec,
                              outcome=outcome))
    return tests
