#!/usr/bin/env python3
"""Export benchmark datasets to CSV files the `convex-ensemble` CLI can read.

Small sets come from the scikit-learn loaders (iris, wine, digits,
breast_cancer and diabetes ship with the package; california_housing,
covtype and kddcup99 are downloaded by scikit-learn on first use).
The year-prediction MSD file is the UCI ML Repository "YearPredictionMSD"
text file; download it yourself and pass its path with --msd.

Every CSV has the feature columns followed by a `target` column. Class
labels are written as integers 0..m-1.
"""

import argparse
import csv
import sys
from pathlib import Path

REGRESSION = {"diabetes", "ca_housing", "msd"}

LOADERS = {
    "iris": "load_iris",
    "wine": "load_wine",
    "digits": "load_digits",
    "breast_cancer": "load_breast_cancer",
    "diabetes": "load_diabetes",
    "ca_housing": "fetch_california_housing",
    "covertype": "fetch_covtype",
    "kddcup99": "fetch_kddcup99",
}


def write(path, names, rows, targets):
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(list(names) + ["target"])
        for x, y in zip(rows, targets):
            w.writerow(list(x) + [y])


def from_sklearn(name):
    import numpy as np
    import sklearn.datasets as skd

    bunch = getattr(skd, LOADERS[name])()
    x, y = bunch.data, bunch.target
    names = getattr(bunch, "feature_names", None) or [f"x{i + 1}" for i in range(x.shape[1])]
    if name == "kddcup99":
        # drop the symbolic columns, encode the attack label
        keep = [j for j in range(x.shape[1]) if not isinstance(x[0, j], bytes)]
        x = x[:, keep].astype(float)
        names = [names[j] for j in keep]
    if name not in REGRESSION:
        _, y = np.unique(y, return_inverse=True)
    return names, x, y


def from_msd(path):
    # first column is the year, the remaining 90 are features
    rows, years = [], []
    with open(path) as f:
        for line in f:
            parts = line.strip().split(",")
            years.append(float(parts[0]))
            rows.append([float(v) for v in parts[1:]])
    return [f"x{i + 1}" for i in range(len(rows[0]))], rows, years


def main():
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("names", nargs="*", default=["iris", "wine", "digits", "breast_cancer", "diabetes"])
    p.add_argument("--out", type=Path, default=Path("data"))
    p.add_argument("--msd", type=Path, help="path to YearPredictionMSD.txt")
    args = p.parse_args()

    args.out.mkdir(parents=True, exist_ok=True)
    for name in args.names:
        if name == "msd":
            if args.msd is None:
                sys.exit("msd needs --msd <path to YearPredictionMSD.txt>")
            names, x, y = from_msd(args.msd)
        elif name in LOADERS:
            names, x, y = from_sklearn(name)
        else:
            sys.exit(f"unknown dataset {name}; choose from {sorted(LOADERS) + ['msd']}")
        path = args.out / f"{name}.csv"
        write(path, names, x, y)
        task = "reg" if name in REGRESSION else "cls"
        print(f"{path}: {len(y)} rows, --task {task} --target target")


if __name__ == "__main__":
    main()
