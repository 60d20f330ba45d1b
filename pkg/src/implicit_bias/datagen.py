"""Cluster-grid synthetic data, projected interclass distances and test error.

The first two coordinates follow a mixture of ``k*k`` uniform disks of radius
``1/(3k-1)`` centred on a grid of step ``3/(3k-1)``; the remaining ``d-2``
coordinates are uniform on [-1/2, 1/2].  Each disk carries one class.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

_CLASS_STREAM = 0
_POINT_STREAM = 1


@dataclass(frozen=True)
class LabeledDataset:
    points: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        X = np.atleast_2d(np.array(self.points, dtype=float))
        y = np.array(self.labels, dtype=float).reshape(-1)
        if X.shape[0] < 1:
            raise ValueError("dataset is empty")
        if X.shape[0] != y.shape[0]:
            raise ValueError("one label per point required")
        if not np.all(np.isin(y, (-1.0, 1.0))):
            raise ValueError("labels must be -1 or +1")
        X.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "points", X)
        object.__setattr__(self, "labels", y)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def d(self) -> int:
        return self.points.shape[1]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow([f"x{j + 1}" for j in range(self.d)] + ["y"])
            for x, y in zip(self.points, self.labels):
                w.writerow([repr(float(v)) for v in x] + [int(y)])

    @classmethod
    def from_csv(cls, path) -> "LabeledDataset":
        data = np.loadtxt(Path(path), delimiter=",", skiprows=1, ndmin=2)
        return cls(data[:, :-1], data[:, -1])


@dataclass(frozen=True)
class ClusterGridSpec:
    k: int
    d: int
    seed: int = 0
    classes: tuple | None = None  # optional explicit signs, row-major over the grid

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.d < 2:
            raise ValueError("cluster-grid data needs d >= 2")
        if self.classes is not None:
            c = tuple(int(v) for v in self.classes)
            if len(c) != self.k ** 2 or any(v not in (-1, 1) for v in c):
                raise ValueError("classes must hold k*k signs")
            object.__setattr__(self, "classes", c)

    @property
    def radius(self) -> float:
        return 1.0 / (3 * self.k - 1)

    @property
    def step(self) -> float:
        return 3.0 / (3 * self.k - 1)

    def centers(self) -> np.ndarray:
        """Grid centres, row-major, shape ``(k*k, 2)``."""
        offs = (np.arange(self.k) - (self.k - 1) / 2.0) * self.step
        gx, gy = np.meshgrid(offs, offs, indexing="ij")
        return np.column_stack([gx.ravel(), gy.ravel()])

    def class_signs(self) -> np.ndarray:
        """Class of each cluster, drawn from a sub-stream that only depends on ``seed``.

        With more than one cluster, draws are repeated until both classes occur.
        """
        if self.classes is not None:
            return np.array(self.classes, dtype=float)
        rng = np.random.default_rng([self.seed, _CLASS_STREAM])
        while True:
            signs = rng.choice([-1.0, 1.0], size=self.k ** 2)
            if self.k == 1 or np.unique(signs).size == 2:
                return signs

    def population_delta2_lower_bound(self) -> float:
        return self.radius

    def to_dict(self) -> dict:
        return {"k": self.k, "d": self.d, "seed": self.seed,
                "classes": list(self.classes) if self.classes is not None else None}


def sample_cluster_grid(spec: ClusterGridSpec, n: int, sample_seed: int = 0) -> LabeledDataset:
    """Draw ``n`` labelled points; deterministic in ``(spec, n, sample_seed)``.

    Disk points come from rejection sampling in the bounding square.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng([spec.seed, _POINT_STREAM, sample_seed])
    centers = spec.centers()
    signs = spec.class_signs()
    cluster = rng.integers(0, spec.k ** 2, size=n)
    disk = np.empty((n, 2))
    filled = 0
    while filled < n:
        cand = rng.uniform(-1.0, 1.0, size=(2 * (n - filled) + 8, 2))
        cand = cand[np.sum(cand ** 2, axis=1) <= 1.0][: n - filled]
        disk[filled:filled + cand.shape[0]] = cand
        filled += cand.shape[0]
    X = np.empty((n, spec.d))
    X[:, :2] = centers[cluster] + spec.radius * disk
    X[:, 2:] = rng.uniform(-0.5, 0.5, size=(n, spec.d - 2))
    return LabeledDataset(X, signs[cluster])


# -- projected interclass distance -------------------------------------------


@dataclass(frozen=True)
class InterclassResult:
    value: float
    exact: bool
    basis: np.ndarray | None = None


def _split(dataset: LabeledDataset):
    pos = dataset.points[dataset.labels > 0]
    neg = dataset.points[dataset.labels < 0]
    if pos.shape[0] == 0 or neg.shape[0] == 0:
        raise ValueError("interclass distance needs both classes")
    return pos, neg


def _min_cross_distance(pos: np.ndarray, neg: np.ndarray) -> float:
    diff = pos[:, None, :] - neg[None, :, :]
    return float(np.sqrt(np.min(np.einsum("ijk,ijk->ij", diff, diff))))


def interclass_distance(dataset: LabeledDataset, r: int, strategy: str = "exact",
                        basis=None, trials: int = 1000, seed: int = 0) -> InterclassResult:
    """Best rank-``r`` projection's minimum distance between the two classes.

    ``strategy``:
      * ``"exact"``: requires ``r == d``; the identity projection is optimal.
      * ``"plane"``: evaluates the projection onto the columns of ``basis``
        (d x r, orthonormal); a lower bound.
      * ``"random"``: best of ``trials`` random orthonormal r-frames; a lower bound.
    """
    pos, neg = _split(dataset)
    d = dataset.d
    if not 1 <= r <= d:
        raise ValueError(f"rank r must be in [1, {d}]")
    if strategy == "exact":
        if r != d:
            raise ValueError("the exact strategy is only available at r = d")
        return InterclassResult(_min_cross_distance(pos, neg), True, np.eye(d))
    if strategy == "plane":
        B = np.asarray(basis, dtype=float)
        if B.shape != (d, r):
            raise ValueError(f"basis must have shape ({d}, {r})")
        if not np.allclose(B.T @ B, np.eye(r), atol=1e-10):
            raise ValueError("basis columns must be orthonormal")
        value = _min_cross_distance(pos @ B, neg @ B)
        return InterclassResult(value, r == d, B)
    if strategy == "random":
        rng = np.random.default_rng(seed)
        best, best_B = -np.inf, None
        for _ in range(trials):
            B, _r = np.linalg.qr(rng.standard_normal((d, r)))
            v = _min_cross_distance(pos @ B, neg @ B)
            if v > best:
                best, best_B = v, B
        return InterclassResult(best, False, best_B)
    raise ValueError(f"unknown strategy {strategy!r}")


# -- test error ---------------------------------------------------------------


def test_error(classifier: Callable[[np.ndarray], np.ndarray], spec: ClusterGridSpec,
               n_test: int, seed: int = 1) -> float:
    """Monte Carlo estimate of P[y f(x) < 0]; ties f(x) = 0 count as errors."""
    if n_test < 1:
        raise ValueError("n_test must be >= 1")
    data = sample_cluster_grid(spec, n_test, sample_seed=10_000 + seed)
    f = np.asarray(classifier(data.points), dtype=float).reshape(-1)
    return float(np.mean(data.labels * f <= 0.0))


test_error.__test__ = False  # keep pytest from collecting the name
