import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from implicit_bias.datagen import (
    ClusterGridSpec,
    LabeledDataset,
    interclass_distance,
    sample_cluster_grid,
    test_error as estimate_error,
)


def brute_inter(X, y):
    best = np.inf
    for i in range(len(y)):
        for j in range(len(y)):
            if y[i] != y[j]:
                best = min(best, float(np.linalg.norm(X[i] - X[j])))
    return best


class TestSampler:
    def test_single_disk(self):
        data = sample_cluster_grid(ClusterGridSpec(1, 3, seed=2), 500)
        assert np.all(np.linalg.norm(data.points[:, :2], axis=1) <= 0.5 + 1e-15)
        assert np.unique(data.labels).size == 1

    def test_k3_geometry(self):
        spec = ClusterGridSpec(3, 4, seed=1)
        assert spec.radius == 1 / 8 and spec.step == 3 / 8
        data = sample_cluster_grid(spec, 2000)
        c = spec.centers()
        dist = np.min(np.linalg.norm(data.points[:, None, :2] - c[None], axis=2), axis=1)
        assert np.all(dist <= 1 / 8 + 1e-15)

    def test_class_proportions(self):
        spec = ClusterGridSpec(3, 2, seed=5)
        data = sample_cluster_grid(spec, 100_000)
        expected = np.mean(spec.class_signs() > 0)
        assert abs(np.mean(data.labels > 0) - expected) <= 0.05

    def test_both_classes_when_k_gt_1(self):
        for seed in range(30):
            assert np.unique(ClusterGridSpec(2, 2, seed=seed).class_signs()).size == 2

    def test_determinism(self):
        spec = ClusterGridSpec(3, 5, seed=7)
        a, b = sample_cluster_grid(spec, 300), sample_cluster_grid(spec, 300)
        np.testing.assert_array_equal(a.points, b.points)
        np.testing.assert_array_equal(a.labels, b.labels)
        c = sample_cluster_grid(spec, 300, sample_seed=1)
        assert not np.array_equal(a.points, c.points)
        np.testing.assert_array_equal(spec.class_signs(), ClusterGridSpec(3, 5, seed=7).class_signs())

    @settings(max_examples=40, deadline=None)
    @given(k=st.integers(1, 5), d=st.integers(2, 8), seed=st.integers(0, 1000))
    def test_support_bound(self, k, d, seed):
        data = sample_cluster_grid(ClusterGridSpec(k, d, seed=seed), 200)
        assert np.max(np.abs(data.points)) <= 0.5 + 1e-15
        assert np.all(np.linalg.norm(data.points, axis=1) <= np.sqrt(d) / 2 + 1e-15)

    def test_bad_specs(self):
        with pytest.raises(ValueError):
            ClusterGridSpec(3, 1)
        with pytest.raises(ValueError):
            ClusterGridSpec(0, 2)
        with pytest.raises(ValueError):
            ClusterGridSpec(2, 2, classes=(1, 1, 1))
        with pytest.raises(ValueError):
            sample_cluster_grid(ClusterGridSpec(1, 2), 0)

    def test_csv_round_trip(self, tmp_path):
        data = sample_cluster_grid(ClusterGridSpec(2, 3, seed=1), 25)
        path = tmp_path / "d.csv"
        data.to_csv(path)
        assert path.read_text().splitlines()[0] == "x1,x2,x3,y"
        back = LabeledDataset.from_csv(path)
        np.testing.assert_array_equal(back.points, data.points)
        np.testing.assert_array_equal(back.labels, data.labels)

    def test_dataset_validation(self):
        with pytest.raises(ValueError):
            LabeledDataset([[0.0]], [0])
        with pytest.raises(ValueError):
            LabeledDataset([[0.0], [1.0]], [1])


class TestInterclass:
    def test_two_points(self):
        data = LabeledDataset([[0.0, 0.0], [1.0, 0.0]], [1, -1])
        assert interclass_distance(data, 2).value == pytest.approx(1.0)
        plane = interclass_distance(data, 1, "plane", basis=[[1.0], [0.0]])
        assert plane.value == pytest.approx(1.0) and not plane.exact
        assert interclass_distance(data, 1, "random", trials=2000).value == pytest.approx(1.0, abs=1e-3)

    def test_four_points(self):
        data = LabeledDataset([[0, 0], [0, 1], [1, 0], [1, 1]], [1, 1, -1, -1])
        # oracle: brute force over 10^4 projection angles
        ang = np.linspace(0, np.pi, 10_000, endpoint=False)
        pos, neg = data.points[:2], data.points[2:]
        best = max(np.min(np.abs((pos @ [np.cos(a), np.sin(a)])[:, None]
                                 - (neg @ [np.cos(a), np.sin(a)])[None])) for a in ang)
        assert best == pytest.approx(1.0, abs=1e-12)
        assert interclass_distance(data, 2).value == pytest.approx(1.0)
        assert interclass_distance(data, 1, "plane", basis=[[1.0], [0.0]]).value == pytest.approx(1.0)

    def test_exact_matches_brute_force(self):
        rng = np.random.default_rng(0)
        for _ in range(10):
            X = rng.uniform(-1, 1, (12, 3))
            y = rng.choice([-1.0, 1.0], 12)
            y[:2] = (1, -1)
            data = LabeledDataset(X, y)
            assert interclass_distance(data, 3).value == brute_inter(X, y)
            rnd = interclass_distance(data, 2, "random", trials=50, seed=1).value
            assert rnd <= interclass_distance(data, 3).value + 1e-12

    def test_cluster_plane_lower_bound(self):
        spec = ClusterGridSpec(3, 6, seed=4)
        data = sample_cluster_grid(spec, 400)
        B = np.zeros((6, 2))
        B[0, 0] = B[1, 1] = 1.0
        assert interclass_distance(data, 2, "plane", basis=B).value >= spec.population_delta2_lower_bound()

    def test_errors(self):
        one = LabeledDataset([[0.0, 0.0], [1.0, 1.0]], [1, 1])
        with pytest.raises(ValueError):
            interclass_distance(one, 2)
        two = LabeledDataset([[0.0, 0.0], [1.0, 1.0]], [1, -1])
        with pytest.raises(ValueError):
            interclass_distance(two, 1)  # exact needs r = d
        with pytest.raises(ValueError):
            interclass_distance(two, 3)
        with pytest.raises(ValueError):
            interclass_distance(two, 1, "plane", basis=[[2.0], [0.0]])


class TestTestError:
    def test_constant_on_positive_spec(self):
        spec = ClusterGridSpec(1, 2, classes=(1,))
        assert estimate_error(lambda X: np.ones(len(X)), spec, 1000) == 0.0

    def test_flipped_perfect(self):
        spec = ClusterGridSpec(3, 3, seed=2)
        centers, signs = spec.centers(), spec.class_signs()

        def perfect(X):
            k = np.argmin(np.linalg.norm(X[:, None, :2] - centers[None], axis=2), axis=1)
            return signs[k]

        assert estimate_error(perfect, spec, 2000) == 0.0
        assert estimate_error(lambda X: -perfect(X), spec, 2000) == 1.0

    def test_ties_are_errors(self):
        assert estimate_error(lambda X: np.zeros(len(X)), ClusterGridSpec(2, 2), 100) == 1.0

    def test_standard_error(self):
        spec = ClusterGridSpec(3, 3, seed=1)
        f = lambda X: X[:, 0]  # noqa: E731
        vals = np.array([estimate_error(f, spec, 10_000, seed=s) for s in range(10)])
        se = 1 / (2 * np.sqrt(10_000))
        assert np.all(np.abs(vals - vals.mean()) <= 3 * se)
