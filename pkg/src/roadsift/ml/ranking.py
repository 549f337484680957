"""Feature ranking by information gain and by label correlation.

Information gain discretizes each feature into ten equal-frequency bins and
measures the base-2 entropy drop of the label; correlation is the absolute
Pearson coefficient against the 0/1 label. Each method keeps an
above-threshold subset (0.01 for gain, 0.1 for correlation).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .evaluate import LabeledDataset
from .models import SingleClassDataset

IG_THRESHOLD = 0.01
CORRELATION_THRESHOLD = 0.1
N_BINS = 10


def _entropy_bits(labels: np.ndarray) -> float:
    if len(labels) == 0:
        return 0.0
    p = np.bincount(labels, minlength=2) / len(labels)
    p = p[p > 0]
    return float(-(p * np.log2(p)).sum())


def _equal_frequency_bins(values: np.ndarray) -> np.ndarray:
    edges = np.quantile(values, np.linspace(0.0, 1.0, N_BINS + 1)[1:-1])
    return np.searchsorted(edges, values, side="left")


def information_gain(values: np.ndarray, labels: np.ndarray) -> float:
    bins = _equal_frequency_bins(values)
    h = _entropy_bits(labels)
    cond = 0.0
    for b in np.unique(bins):
        member = labels[bins == b]
        cond += len(member) / len(labels) * _entropy_bits(member)
    return h - cond


def label_correlation(values: np.ndarray, labels: np.ndarray) -> float:
    if np.std(values) < 1e-15 or np.std(labels) < 1e-15:
        return 0.0
    return float(abs(np.corrcoef(values, labels.astype(float))[0, 1]))


@dataclass(frozen=True)
class RankingResult:
    information_gain: tuple[tuple[str, float], ...]   # sorted descending
    correlation: tuple[tuple[str, float], ...]
    ig_selected: tuple[str, ...]                      # above 0.01
    correlation_selected: tuple[str, ...]             # above 0.1


def rank_features(ds: LabeledDataset) -> RankingResult:
    if len(np.unique(ds.y)) < 2:
        raise SingleClassDataset("feature ranking needs both classes")
    ig = []
    corr = []
    for j, name in enumerate(ds.feature_names):
        col = ds.X[:, j]
        ig.append((name, information_gain(col, ds.y)))
        corr.append((name, label_correlation(col, ds.y)))
    ig.sort(key=lambda kv: (-kv[1], kv[0]))
    corr.sort(key=lambda kv: (-kv[1], kv[0]))
    return RankingResult(
        information_gain=tuple(ig),
        correlation=tuple(corr),
        ig_selected=tuple(n for n, v in ig if v > IG_THRESHOLD),
        correlation_selected=tuple(n for n, v in corr if v > CORRELATION_THRESHOLD))
