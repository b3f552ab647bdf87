"""Tabular ingestion: CSV loading, standardization, stratified splits.

Datasets are immutable after construction (arrays are marked read-only), so
they can be shared freely across threads.
"""

import csv
import json
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, ParseError


@dataclass(frozen=True)
class Dataset:
    X: np.ndarray
    y: np.ndarray
    feature_names: tuple = None
    # per-feature (mean, std) fitted on training rows, set by standardize()
    standardization: tuple = None
    dropped_rows: int = 0
    dropped_features: tuple = ()

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        y = np.asarray(self.y, dtype=float)
        if X.ndim != 2:
            raise DomainError("X must be a 2-d matrix")
        if y.shape != (X.shape[0],):
            raise DomainError("y length must match row count of X")
        if not np.all(np.isfinite(X)):
            raise DomainError("X contains non-finite values")
        if not np.all(np.isin(y, (-1.0, 1.0))):
            raise DomainError("labels must be exactly -1 or +1")
        X.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        if self.feature_names is not None:
            object.__setattr__(self, "feature_names", tuple(self.feature_names))

    @property
    def n(self):
        return self.X.shape[0]

    @property
    def d(self):
        return self.X.shape[1]

    def save(self, path):
        mean, std = self.standardization if self.standardization else (np.nan, np.nan)
        np.savez(
            path,
            X=self.X,
            y=self.y,
            feature_names=np.array(self.feature_names or [], dtype=object),
            mean=np.atleast_1d(mean),
            std=np.atleast_1d(std),
            has_stats=self.standardization is not None,
        )

    @classmethod
    def load(cls, path):
        with np.load(path, allow_pickle=True) as z:
            names = tuple(z["feature_names"]) or None
            stats = (z["mean"], z["std"]) if bool(z["has_stats"]) else None
            return cls(z["X"], z["y"], names, stats)


def load_csv(path, label_column, positive_label):
    """Parse an RFC-4180 style CSV with header; map labels to +/-1.

    Rows with missing (empty) feature cells are rejected and counted; a
    non-numeric non-empty cell is a hard parse error.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DomainError(f"{path}: empty file") from None
        except csv.Error as exc:
            raise ParseError(f"{path}: {exc}", line=1) from None
        if isinstance(label_column, int):
            if not 0 <= label_column < len(header):
                raise DomainError(f"label column index {label_column} out of range")
            label_idx = label_column
        else:
            try:
                label_idx = header.index(label_column)
            except ValueError:
                raise DomainError(f"label column {label_column!r} not in header") from None
        feat_names = [h for i, h in enumerate(header) if i != label_idx]

        rows, labels = [], []
        dropped = 0
        try:
            for lineno, rec in enumerate(reader, start=2):
                if not rec:
                    continue
                if len(rec) != len(header):
                    raise ParseError(
                        f"{path}: expected {len(header)} fields, got {len(rec)}", line=lineno
                    )
                label = rec[label_idx].strip()
                feats = [rec[i] for i in range(len(header)) if i != label_idx]
                if label == "" or any(f.strip() == "" for f in feats):
                    dropped += 1
                    continue
                vals = []
                for name, f in zip(feat_names, feats):
                    try:
                        vals.append(float(f))
                    except ValueError:
                        raise ParseError(
                            f"{path}: non-numeric feature value {f!r}",
                            line=lineno,
                            column=name,
                        ) from None
                rows.append(vals)
                labels.append(label)
        except csv.Error as exc:
            raise ParseError(f"{path}: {exc}", line=lineno) from None

    if not rows:
        raise DomainError(f"{path}: no usable data rows")
    classes = sorted(set(labels))
    if len(classes) != 2:
        raise DomainError(f"{path}: expected exactly 2 label classes, found {classes}")
    positive = str(positive_label)
    if positive not in classes:
        raise DomainError(f"positive label {positive!r} not among classes {classes}")
    y = np.array([1.0 if lab == positive else -1.0 for lab in labels])
    return Dataset(np.array(rows, dtype=float), y, tuple(feat_names), dropped_rows=dropped)


def standardize(train, test, eps=1e-12):
    """Z-score both sets with stats fitted on train; drop zero-variance features."""
    if train.n == 0:
        raise DomainError("cannot standardize an empty training set")
    if test.d != train.d:
        raise DomainError(f"feature mismatch: train d={train.d}, test d={test.d}")
    mean = train.X.mean(axis=0)
    std = train.X.std(axis=0)
    keep = std > eps
    dropped = tuple(int(i) for i in np.nonzero(~keep)[0])
    mean, std = mean[keep], std[keep]
    names = (
        tuple(n for n, k in zip(train.feature_names, keep) if k)
        if train.feature_names
        else None
    )

    def tx(ds):
        return (ds.X[:, keep] - mean) / std

    stats = (mean.copy(), std.copy())
    tr = Dataset(tx(train), train.y, names, stats, train.dropped_rows, dropped)
    te = Dataset(tx(test), test.y, names, stats, test.dropped_rows, dropped)
    return tr, te, stats


def split(data, test_fraction, seed):
    """Deterministic stratified split; each side's class ratio is within one
    sample of the global ratio."""
    if not 0.0 < test_fraction < 1.0:
        raise DomainError(f"test_fraction must be in (0,1), got {test_fraction}")
    if data.n < 2:
        raise DomainError("need at least 2 rows to split")
    if len(np.unique(data.y)) < 2:
        raise DomainError("stratified split needs both classes present")
    rng = np.random.default_rng(seed)
    test_idx = []
    train_idx = []
    for cls in (-1.0, 1.0):
        idx = np.nonzero(data.y == cls)[0]
        perm = rng.permutation(idx)
        k = int(round(test_fraction * idx.size))
        k = min(max(k, 0), idx.size)
        test_idx.append(perm[:k])
        train_idx.append(perm[k:])
    test_idx = np.sort(np.concatenate(test_idx))
    train_idx = np.sort(np.concatenate(train_idx))
    if train_idx.size == 0 or test_idx.size == 0:
        raise DomainError("split leaves one side empty; adjust test_fraction")

    def take(idx):
        return Dataset(
            data.X[idx],
            data.y[idx],
            data.feature_names,
            data.standardization,
            data.dropped_rows,
            data.dropped_features,
        )

    return take(train_idx), take(test_idx)


def stats_to_json(stats, path):
    mean, std = stats
    with open(path, "w") as fh:
        json.dump({"mean": np.asarray(mean).tolist(), "std": np.asarray(std).tolist()}, fh)
