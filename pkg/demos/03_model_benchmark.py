#!/usr/bin/env python3
"""Train the classifier families on oracle-labelled roads, compare them by
10-fold cross-validation, and rank the features by information gain and
correlation.

Unsafe is the positive class throughout. Training folds are rebalanced by
random oversampling; the held-out fold keeps the raw distribution.
"""

from roadsift.ml import (
    ClassifierSpec,
    dataset_from_tests,
    kfold_evaluate,
    rank_features,
)
from roadsift.oracle import DriverConfig, build_dataset, unsafe_fraction

print("building a 400-road labelled dataset (rf 1.5)...")
tests = build_dataset(400, DriverConfig(risk_factor=1.5), rng_seed=21,
                      keep_traces=False)
ds = dataset_from_tests(tests)
print(f"unsafe fraction: {unsafe_fraction(tests):.2f}\n")

print(f"{'family':20s} {'acc':>6s} {'P(unsafe)':>10s} {'R(unsafe)':>10s} {'wF1':>6s}")
for family in ("logistic", "naive_bayes", "decision_tree", "random_forest",
               "linear_svm", "gradient_boosting"):
    params = {"I": 10} if family == "random_forest" else {}
    report = kfold_evaluate(ds, ClassifierSpec(family, params), k=10, rng_seed=5)
    print(f"{family:20s} {report.accuracy:6.3f} {report.precision_unsafe:10.3f} "
          f"{report.recall_unsafe:10.3f} {report.weighted_avg_f1:6.3f}")

ranking = rank_features(ds)
print("\ntop features by information gain (threshold 0.01):")
for name, score in ranking.information_gain[:8]:
    marker = "*" if name in ranking.ig_selected else " "
    print(f" {marker} {name:22s} {score:.4f}")

print("\ntop features by |correlation| (threshold 0.1):")
for name, score in ranking.correlation[:8]:
    marker = "*" if name in ranking.correlation_selected else " "
    print(f" {marker} {name:22s} {score:.4f}")
