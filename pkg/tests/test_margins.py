import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from _oracles import grid_gamma1, linprog_gamma1, mc_gamma2_dual
from implicit_bias.datagen import LabeledDataset
from implicit_bias.features import FeatureModel, SphereMeasure
from implicit_bias.margins import (
    MarginCertificate,
    SolverError,
    certify,
    f1_margin,
    gamma1_lp,
    gamma1_reference,
    gamma2_dual,
    margin,
    project_simplex,
    reference_directions,
)
from implicit_bias.trainer import build_signed_features

RELU1 = FeatureModel("relu", 1)


def tiny_instance(rng):
    n, m = rng.integers(1, 5), rng.integers(1, 4)
    return rng.uniform(-1, 1, (n, m))


def test_margin_examples():
    assert margin([3.0, 1.0, 2.0]) == 1.0
    assert margin([0.7] * 4) == 0.7
    u = np.array([0.2, -1.3, 4.0])
    assert margin(u) == -np.max(-u)


class TestGamma1:
    def test_single_constraint(self):
        c = gamma1_lp([[1.0, 2.0]])
        assert c.value == pytest.approx(2.0, abs=1e-12)
        np.testing.assert_allclose(c.primal, [0.0, 1.0], atol=1e-12)

    def test_identity(self):
        c = gamma1_lp(np.eye(2))
        assert c.value == pytest.approx(0.5, abs=1e-12)
        np.testing.assert_allclose(c.primal, [0.5, 0.5], atol=1e-12)
        np.testing.assert_allclose(c.dual, [0.5, 0.5], atol=1e-12)

    def test_two_thirds(self):
        Z = [[2.0, 0.0], [0.0, 1.0]]
        oracle = grid_gamma1(Z, 1e-5)
        assert abs(oracle - 2 / 3) <= 2e-5  # frozen oracle output
        c = gamma1_lp(Z)
        assert c.value == pytest.approx(2 / 3, abs=1e-12)
        np.testing.assert_allclose(c.primal, [1 / 3, 2 / 3], atol=1e-12)
        assert certify(Z, c).passed

    def test_grid_oracle(self):
        rng = np.random.default_rng(0)
        for _ in range(30):
            Z = tiny_instance(rng)
            c = gamma1_lp(Z)
            assert abs(c.value - grid_gamma1(Z, 1e-3)) <= 2e-3
            assert c.gap <= 1e-9

    def test_linprog_agreement(self):
        rng = np.random.default_rng(1)
        for _ in range(20):
            Z = rng.uniform(-1, 1, (rng.integers(1, 30), rng.integers(1, 40)))
            assert gamma1_lp(Z).value == pytest.approx(linprog_gamma1(Z), abs=1e-8)

    def test_pivot_cap_raises_with_certificate(self):
        Z = np.random.default_rng(2).uniform(-1, 1, (20, 30))
        with pytest.raises(SolverError) as exc:
            gamma1_lp(Z, max_pivots=1)
        assert exc.value.certificate is None or exc.value.certificate.gap > 1e-9

    def test_weak_duality(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            Z = rng.uniform(-1, 1, (rng.integers(1, 15), rng.integers(1, 15)))
            c = gamma1_lp(Z)
            assert c.dual_value >= c.primal_value - 1e-12
            assert c.separable == (c.value > 0)


class TestGamma2:
    def test_ones(self):
        c = gamma2_dual([[1.0, 1.0]])
        assert c.value == pytest.approx(1.0, abs=1e-9)
        np.testing.assert_allclose(c.primal, [0.5, 0.5], atol=1e-9)

    def test_scalar(self):
        c = gamma2_dual([[1.0]])
        assert c.value == pytest.approx(1.0, abs=1e-12)
        np.testing.assert_allclose(c.primal, [1.0])

    def test_non_separable(self):
        c = gamma2_dual([[1.0, 0.0], [-1.0, 0.0]])
        assert c.value == 0.0
        assert not c.separable
        np.testing.assert_allclose(c.dual, [0.5, 0.5], atol=1e-9)

    def test_monte_carlo_bound(self):
        rng = np.random.default_rng(4)
        for _ in range(10):
            Z = tiny_instance(rng)
            c = gamma2_dual(Z)
            mc = mc_gamma2_dual(Z, 200_000, seed=5)
            assert c.dual_value <= mc + 1e-9
            assert mc - c.dual_value <= 1e-2
            assert c.gap <= 1e-8

    def test_primal_in_ball(self):
        rng = np.random.default_rng(6)
        for _ in range(30):
            Z = rng.uniform(-1, 1, (rng.integers(1, 20), rng.integers(1, 20)))
            c = gamma2_dual(Z)
            m = Z.shape[1]
            assert np.sqrt(m) * np.linalg.norm(c.primal) <= 1 + 1e-12
            assert certify(Z, c, tol=1e-6).passed


@pytest.mark.parametrize("solver", [gamma1_lp, gamma2_dual])
@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), c=st.floats(0.01, 100.0))
def test_scale_equivariance(solver, seed, c):
    rng = np.random.default_rng(seed)
    Z = rng.uniform(-1, 1, (rng.integers(1, 8), rng.integers(1, 8)))
    assert abs(solver(c * Z).value - c * solver(Z).value) <= 1e-9 * max(1.0, c)


@pytest.mark.parametrize("solver", [gamma1_lp, gamma2_dual])
@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_row_monotonicity(solver, seed):
    rng = np.random.default_rng(seed)
    Z = rng.uniform(-1, 1, (rng.integers(1, 8), rng.integers(1, 8)))
    bigger = np.vstack([Z, rng.uniform(-1, 1, (1, Z.shape[1]))])
    assert solver(bigger).value <= solver(Z).value + 1e-9


class TestCertify:
    def test_exact_passes(self):
        Z = np.eye(2)
        rep = certify(Z, gamma1_lp(Z))
        assert rep.passed
        assert max(rep.support_residual_primal, rep.support_residual_dual, abs(rep.gap)) < 1e-10

    def test_perturbed_fails(self):
        Z = np.eye(2)
        c = gamma1_lp(Z)
        c.primal = np.array([0.6, 0.4])
        rep = certify(Z, c)
        assert not rep.passed
        assert rep.gap == pytest.approx(0.1, abs=1e-12)

    def test_single_row_passes(self):
        rng = np.random.default_rng(7)
        for _ in range(20):
            Z = rng.uniform(-1, 1, (1, rng.integers(1, 6)))
            c = gamma1_lp(Z)
            np.testing.assert_allclose(c.dual, [1.0])
            assert certify(Z, c).passed

    def test_json_round_trip(self):
        c = gamma1_lp([[2.0, 0.0], [0.0, 1.0]])
        d = json.loads(c.to_json())
        assert set(d) >= {"value", "dual_value", "gap", "primal", "dual", "residuals", "separable"}
        back = MarginCertificate.from_dict(d)
        assert back.value == c.value and back.gap == c.gap
        np.testing.assert_array_equal(back.primal, c.primal)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-10, 10), min_size=1, max_size=20))
def test_project_simplex(v):
    p = project_simplex(np.array(v))
    assert abs(p.sum() - 1) <= 1e-12 and p.min() >= 0
    # optimality: p is the closest simplex point, so (v - p) . (q - p) <= 0 for vertices q
    r = np.array(v) - p
    assert np.all(r - r @ p <= 1e-9)


class TestF1Margin:
    def test_single_atom_single_point(self):
        theta = np.array([0.6, 0.0, 0.8])
        data = LabeledDataset([[2.0]], [-1])
        mu = SphereMeasure([theta], [3.0], RELU1)
        assert f1_margin(mu, data, RELU1) == pytest.approx(-0.8 * 1.2)

    def test_mass_rescaling(self):
        rng = np.random.default_rng(8)
        dirs = reference_directions(RELU1, 5, seed=1)
        masses = rng.uniform(0, 1, 10)
        data = LabeledDataset(rng.uniform(-1, 1, (6, 1)), [1, -1, 1, -1, 1, 1])
        a = f1_margin(SphereMeasure(dirs, masses, RELU1), data, RELU1)
        b = f1_margin(SphereMeasure(dirs, 7.5 * masses, RELU1), data, RELU1)
        assert a == pytest.approx(b, abs=1e-14)

    def test_zero_mass_errors(self):
        data = LabeledDataset([[0.0]], [1])
        with pytest.raises(ValueError):
            f1_margin(SphereMeasure([[1.0, 0.0, 0.0]], [0.0], RELU1), data, RELU1)

    def test_lp_optimum_measure(self):
        rng = np.random.default_rng(9)
        model = FeatureModel("relu", 2)
        data = LabeledDataset(rng.uniform(-1, 1, (12, 2)), rng.choice([-1, 1], 12))
        dirs = reference_directions(model, 50, seed=3)
        cert = gamma1_lp(build_signed_features(data, dirs, model).Z)
        mu = SphereMeasure(dirs, cert.primal, model)
        assert f1_margin(mu, data, model) == pytest.approx(cert.value, abs=1e-9)


class TestGamma1Reference:
    def test_single_pair(self):
        rng = np.random.default_rng(10)
        model = FeatureModel("relu", 2)
        for _ in range(10):
            data = LabeledDataset(rng.uniform(-1, 1, (5, 2)), rng.choice([-1, 1], 5))
            z = build_signed_features(data, reference_directions(model, 1, seed=4)[:1], model).Z[:, 0]
            expected = max(z.min(), -z.max(), 0.0)
            assert gamma1_reference(data, model, 1, seed=4) == pytest.approx(expected, abs=1e-12)

    def test_nested_monotone(self):
        rng = np.random.default_rng(11)
        model = FeatureModel("relu", 2)
        data = LabeledDataset(rng.uniform(-1, 1, (20, 2)), rng.choice([-1, 1], 20))
        for seed in range(5):
            vals = [gamma1_reference(data, model, M, seed=seed) for M in (100, 400, 1600)]
            assert vals[0] <= vals[1] + 1e-12 and vals[1] <= vals[2] + 1e-12

    def test_nested_directions(self):
        small = reference_directions(RELU1, 16, seed=2)
        big = reference_directions(RELU1, 64, seed=2)
        np.testing.assert_array_equal(small, big[:32])

    def test_two_point_toy(self):
        data = LabeledDataset([[1.0], [-1.0]], [1, -1])
        # oracle: LP over 10^4 evenly spaced hidden angles, each with its balanced image
        ang = np.linspace(0, 2 * np.pi, 10_000, endpoint=False)
        pos = np.column_stack([np.cos(ang), np.sin(ang), np.ones_like(ang)]) / np.sqrt(2)
        dirs = np.vstack([pos, RELU1.balance(pos)])
        Z = build_signed_features(data, dirs, RELU1).Z
        oracle = linprog_gamma1(Z)
        pair = max(max(Z[:, j].min(), -Z[:, j].max(), 0.0) for j in range(ang.size))
        ref = gamma1_reference(data, RELU1, 1000, seed=0)
        assert pair - 1e-12 <= ref <= oracle + 1e-9
        assert oracle - ref <= 1e-3
