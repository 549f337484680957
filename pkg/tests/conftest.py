"""Shared road constructions and a small labelled dataset fixture."""

import math

import numpy as np
import pytest

from roadsift.geometry import RoadSpine, SpineSample
from roadsift.ml import ClassifierSpec, dataset_from_tests, fit, oversample_minority
from roadsift.oracle import DriverConfig, build_dataset


def straight_points(length=100.0, n=3, y=100.0, x0=100.0):
    xs = np.linspace(x0, x0 + length, n)
    return tuple((float(x), y) for x in xs)


def arc_between_straights(radius=30.0, arc_deg=90.0, arc_step_deg=5.0,
                          lead=60.0, side=1.0, origin=(50.0, 100.0)):
    """Lead-in straight along +x, a turn of the given radius/angle, exit
    straight; dense control points keep the spline close to the arc."""
    x0, y0 = origin
    pts = [(x0 + d, y0) for d in np.arange(0.0, lead + 1e-9, 10.0)]
    cx, cy = pts[-1][0], pts[-1][1] + side * radius
    n = max(2, int(round(arc_deg / arc_step_deg)))
    phi0 = math.atan2(pts[-1][1] - cy, pts[-1][0] - cx)
    for k in range(1, n + 1):
        phi = phi0 + side * math.radians(arc_deg) * k / n
        pts.append((cx + radius * math.cos(phi), cy + radius * math.sin(phi)))
    heading = math.radians(arc_deg) * side
    ex, ey = pts[-1]
    for d in np.arange(10.0, lead + 1e-9, 10.0):
        pts.append((ex + d * math.cos(heading), ey + d * math.sin(heading)))
    return tuple(pts)


def analytic_arc_spine(radius=10.0, arc_deg=180.0, step=1.0, lead=0.0):
    """Spine sampled directly from exact arc geometry (optionally with a
    straight lead-in), bypassing the spline. Curvature positive (left)."""
    samples = []
    s = 0.0
    if lead > 0.0:
        n_lead = int(math.ceil(lead / step))
        for i in range(n_lead):
            si = lead * i / n_lead
            samples.append(SpineSample(si, si, 0.0, 0.0, 0.0))
        s = lead
    arc_len = radius * math.radians(arc_deg)
    n_arc = int(math.ceil(arc_len / step))
    cx, cy = lead, radius
    for i in range(n_arc + 1):
        a = math.radians(arc_deg) * i / n_arc
        x = cx + radius * math.sin(a)
        y = cy - radius * math.cos(a)
        heading = a
        heading = (heading + math.pi) % (2.0 * math.pi) - math.pi
        samples.append(SpineSample(s + arc_len * i / n_arc, x, y, heading,
                                   1.0 / radius))
    return RoadSpine(samples=tuple(samples), total_length=s + arc_len)


@pytest.fixture(scope="session")
def moderate_tests():
    """500 labelled tests at the moderate risk factor, shared across tests."""
    return build_dataset(500, DriverConfig(), rng_seed=424, keep_traces=False)


@pytest.fixture(scope="session")
def moderate_model(moderate_tests):
    """Logistic model trained on the first 200 moderate tests (balanced)."""
    ds = dataset_from_tests(moderate_tests[:200])
    train = oversample_minority(ds, 7)
    model = fit(ClassifierSpec("logistic"), train.X, train.y,
                ds.feature_names, rng_seed=7)
    return model, {t.id for t in moderate_tests[:200]}
