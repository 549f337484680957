"""Dataset handling and evaluation: rebalancing, splits, K-fold, metrics.

Unsafe is the positive class. Training partitions are rebalanced by random
oversampling of the minority class; held-out data is never rebalanced, so
reported rates reflect the underlying distribution.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .models import (
    SAFE_CODE,
    UNSAFE_CODE,
    ClassifierSpec,
    SingleClassDataset,
    TrainedClassifier,
    fit,
)


class EmptySplit(ValueError):
    """A requested split would leave one side empty."""


class TooFewRows(ValueError):
    """Dataset too small for the requested fold count."""


@dataclass(frozen=True)
class LabeledDataset:
    X: np.ndarray                 # (n, d)
    y: np.ndarray                 # (n,), 0 safe / 1 unsafe
    feature_names: tuple[str, ...]
    ids: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "X", np.asarray(self.X, dtype=np.float64))
        object.__setattr__(self, "y", np.asarray(self.y, dtype=np.int64))
        if len(self.X) != len(self.y) or len(self.y) != len(self.ids):
            raise ValueError("X, y, ids must have equal length")

    def __len__(self) -> int:
        return len(self.y)

    def subset(self, idx) -> "LabeledDataset":
        idx = np.asarray(idx)
        return LabeledDataset(self.X[idx], self.y[idx], self.feature_names,
                              tuple(self.ids[i] for i in idx))

    def class_counts(self) -> tuple[int, int]:
        return int(np.sum(self.y == SAFE_CODE)), int(np.sum(self.y == UNSAFE_CODE))


def dataset_from_tests(tests) -> LabeledDataset:
    """Build the matrix view from fully labelled TestCase records."""
    from ..features import FEATURE_NAMES
    from ..oracle import UNSAFE

    rows, labels, ids = [], [], []
    for tc in tests:
        if tc.features is None or tc.outcome is None:
            raise ValueError(f"test {tc.id} lacks features or outcome")
        rows.append(tc.features.as_array())
        labels.append(UNSAFE_CODE if tc.outcome.label == UNSAFE else SAFE_CODE)
        ids.append(tc.id)
    return LabeledDataset(np.array(rows), np.array(labels), FEATURE_NAMES,
                          tuple(ids))


def oversample_minority(ds: LabeledDataset, rng_seed: int) -> LabeledDataset:
    """Duplicate uniformly-sampled minority rows until the classes balance.
    Majority rows are untouched; existing rows all stay."""
    n_safe, n_unsafe = ds.class_counts()
    if n_safe == 0 or n_unsafe == 0:
        raise SingleClassDataset("both classes required for oversampling")
    if n_safe == n_unsafe:
        return ds
    minority = UNSAFE_CODE if n_unsafe < n_safe else SAFE_CODE
    deficit = abs(n_safe - n_unsafe)
    pool = np.flatnonzero(ds.y == minority)
    rng = np.random.default_rng(rng_seed)
    extra = rng.choice(pool, size=deficit, replace=True)
    idx = np.concatenate([np.arange(len(ds)), extra])
    return ds.subset(idx)


def split(ds: LabeledDataset, train_fraction: float, rng_seed: int,
          oversample_train: bool = True) -> tuple[LabeledDataset, LabeledDataset]:
    """Stratified seeded train/test split; the train side is oversampled to
    balance, the test side keeps the raw distribution."""
    if not 0.0 < train_fraction < 1.0:
        raise ValueError(f"train_fraction must be in (0, 1), got {train_fraction}")
    rng = np.random.default_rng(rng_seed)
    train_idx, test_idx = [], []
    for cls in (SAFE_CODE, UNSAFE_CODE):
        idx = np.flatnonzero(ds.y == cls)
        idx = idx[rng.permutation(len(idx))]
        k = int(round(train_fraction * len(idx)))
        train_idx.extend(idx[:k])
        test_idx.extend(idx[k:])
    if not train_idx or not test_idx:
        raise EmptySplit("split leaves an empty side")
    train = ds.subset(np.sort(train_idx))
    test = ds.subset(np.sort(test_idx))
    if oversample_train:
        train = oversample_minority(train, rng_seed + 1)
    return train, test


def balanced_training_set(ds: LabeledDataset, train_fraction: float,
                          rng_seed: int) -> tuple[LabeledDataset, LabeledDataset]:
    """Balanced training set: train_fraction of the minority class per side,
    the majority under-sampled to match. Returns (train, holdout)."""
    n_safe, n_unsafe = ds.class_counts()
    per_class = int(train_fraction * min(n_safe, n_unsafe))
    if per_class < 1:
        raise EmptySplit("not enough rows for a balanced training set")
    rng = np.random.default_rng(rng_seed)
    train_idx = []
    for cls in (SAFE_CODE, UNSAFE_CODE):
        idx = np.flatnonzero(ds.y == cls)
        idx = idx[rng.permutation(len(idx))]
        train_idx.extend(idx[:per_class])
    train_mask = np.zeros(len(ds), dtype=bool)
    train_mask[train_idx] = True
    return ds.subset(np.flatnonzero(train_mask)), ds.subset(np.flatnonzero(~train_mask))


@dataclass(frozen=True)
class EvalReport:
    tp: int
    fp: int
    tn: int
    fn: int
    accuracy: float
    precision_unsafe: float
    recall_unsafe: float
    f1_unsafe: float
    precision_safe: float
    recall_safe: float
    f1_safe: float
    weighted_avg_f1: float

    def as_dict(self) -> dict:
        return {
            "confusion": {"tp": self.tp, "fp": self.fp, "tn": self.tn, "fn": self.fn},
            "accuracy": self.accuracy,
            "unsafe": {"precision": self.precision_unsafe,
                       "recall": self.recall_unsafe, "f1": self.f1_unsafe},
            "safe": {"precision": self.precision_safe,
                     "recall": self.recall_safe, "f1": self.f1_safe},
            "weighted_avg_f1": self.weighted_avg_f1,
        }


def _rate(num: float, den: float) -> float:
    return num / den if den > 0 else 0.0


def report_from_confusion(tp: int, fp: int, tn: int, fn: int) -> EvalReport:
    """All rates from the four counts; unsafe = positive class."""
    total = tp + fp + tn + fn
    precision_u = _rate(tp, tp + fp)
    recall_u = _rate(tp, tp + fn)
    f1_u = _rate(2 * precision_u * recall_u, precision_u + recall_u)
    precision_s = _rate(tn, tn + fn)
    recall_s = _rate(tn, tn + fp)
    f1_s = _rate(2 * precision_s * recall_s, precision_s + recall_s)
    support_u = tp + fn
    support_s = tn + fp
    weighted = _rate(support_u * f1_u + support_s * f1_s, support_u + support_s)
    return EvalReport(
        tp=tp, fp=fp, tn=tn, fn=fn,
        accuracy=_rate(tp + tn, total),
        precision_unsafe=precision_u, recall_unsafe=recall_u, f1_unsafe=f1_u,
        precision_safe=precision_s, recall_safe=recall_s, f1_safe=f1_s,
        weighted_avg_f1=weighted)


def confusion_from_predictions(y_true: np.ndarray, y_pred: np.ndarray) -> tuple[int, int, int, int]:
    y_true = np.asarray(y_true)
    y_pred = np.asarray(y_pred)
    tp = int(np.sum((y_pred == UNSAFE_CODE) & (y_true == UNSAFE_CODE)))
    fp = int(np.sum((y_pred == UNSAFE_CODE) & (y_true == SAFE_CODE)))
    tn = int(np.sum((y_pred == SAFE_CODE) & (y_true == SAFE_CODE)))
    fn = int(np.sum((y_pred == SAFE_CODE) & (y_true == UNSAFE_CODE)))
    return tp, fp, tn, fn


def stratified_folds(y: np.ndarray, k: int, rng_seed: int) -> list[np.ndarray]:
    """k disjoint, exhaustive, stratified folds with sizes differing by at
    most one."""
    rng = np.random.default_rng(rng_seed)
    buckets: list[list[int]] = [[] for _ in range(k)]
    offset = 0
    for cls in (SAFE_CODE, UNSAFE_CODE):
        idx = np.flatnonzero(y == cls)
        idx = idx[rng.permutation(len(idx))]
        # deal round-robin, continuing from where the previous class stopped
        # so fold sizes stay within one of each other overall
        for i, row in enumerate(idx):
            buckets[(offset + i) % k].append(int(row))
        offset += len(idx)
    return [np.sort(np.array(b, dtype=np.int64)) for b in buckets]


def kfold_evaluate(ds: LabeledDataset, spec: ClassifierSpec, k: int,
                   rng_seed: int) -> EvalReport:
    """Stratified K-fold: train folds oversampled, held-out fold raw;
    confusion summed across folds, rates derived once at the end."""
    if k < 2:
        raise ValueError(f"k must be >= 2, got {k}")
    if len(ds) < k:
        raise TooFewRows(f"dataset of {len(ds)} rows cannot make {k} folds")
    folds = stratified_folds(ds.y, k, rng_seed)
    tp = fp = tn = fn = 0
    mask = np.ones(len(ds), dtype=bool)
    for i, fold in enumerate(folds):
        if len(fold) == 0:
            continue
        mask[:] = True
        mask[fold] = False
        train = ds.subset(np.flatnonzero(mask))
        train = oversample_minority(train, rng_seed + 1000 + i)
        model = fit(spec, train.X, train.y, ds.feature_names,
                    rng_seed=rng_seed + 2000 + i)
        pred = model.predict_matrix(ds.X[fold])
        dtp, dfp, dtn, dfn = confusion_from_predictions(ds.y[fold], pred)
        tp += dtp
        fp += dfp
        tn += dtn
        fn += dfn
    return report_from_confusion(tp, fp, tn, fn)


def holdout_evaluate(model: TrainedClassifier, test: LabeledDataset) -> EvalReport:
    pred = model.predict_matrix(test.X)
    return report_from_confusion(*confusion_from_predictions(test.y, pred))
