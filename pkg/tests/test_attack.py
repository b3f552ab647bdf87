import json

import numpy as np
import pytest

from cvxrobust.attack import (
    AttackReport,
    empirical_worst_case,
    fgsm,
    robust_accuracy,
)
from cvxrobust.attack import _gradient, _gradient_batch
from cvxrobust.data import Dataset
from cvxrobust.errors import DomainError
from cvxrobust.polynet import (
    QuadraticClassifier,
    TwoLayerNetwork,
    default_coeffs,
    evaluate,
)
from cvxrobust.quadball import worst_case_margin


def linear_clf(g, h=0.0):
    return QuadraticClassifier(np.zeros((len(g), len(g))), np.asarray(g, float), h)


def random_quadratic(seed, d=3):
    rng = np.random.default_rng(seed)
    Q = rng.standard_normal((d, d))
    return QuadraticClassifier(Q + Q.T, rng.standard_normal(d), rng.standard_normal())


def relu_net(seed, d=3, m=5):
    rng = np.random.default_rng(seed)
    return TwoLayerNetwork(
        [(rng.standard_normal(d), rng.standard_normal()) for _ in range(m)],
        activation="relu",
    )


class TestGradients:
    @pytest.mark.parametrize("seed", range(3))
    def test_quadratic_gradient_finite_differences(self, seed):
        # [DERIVED] central differences on the polynomial-activation margin
        clf = random_quadratic(seed)
        rng = np.random.default_rng(100 + seed)
        x = rng.standard_normal(3)
        g = _gradient(clf, x)
        h = 1e-6
        for j in range(3):
            e = np.zeros(3)
            e[j] = h
            fd = (evaluate(clf, x + e) - evaluate(clf, x - e)) / (2 * h)
            assert g[j] == pytest.approx(fd, abs=1e-5)

    @pytest.mark.parametrize("seed", range(3))
    def test_relu_gradient_finite_differences(self, seed):
        net = relu_net(seed)
        rng = np.random.default_rng(200 + seed)
        x = rng.standard_normal(3)  # generic point: no zero preactivation
        g = _gradient(net, x)
        h = 1e-6
        for j in range(3):
            e = np.zeros(3)
            e[j] = h
            fd = (net.forward(x + e) - net.forward(x - e)) / (2 * h)
            assert g[j] == pytest.approx(fd, abs=1e-5)

    def test_batch_matches_single(self):
        rng = np.random.default_rng(5)
        X = rng.standard_normal((7, 3))
        for model in (random_quadratic(1), relu_net(2)):
            G = _gradient_batch(model, X)
            for i in range(7):
                np.testing.assert_allclose(G[i], _gradient(model, X[i]), atol=1e-12)

    def test_unsupported_model(self):
        with pytest.raises(DomainError):
            _gradient(object(), np.zeros(2))


class TestFgsm:
    def test_linear_margin_drop_is_exact(self):
        # [DERIVED] for f = b g'x + c h the FGSM step reduces the margin by
        # exactly eps * b * ||g||_1
        co = default_coeffs()
        g = np.array([2.0, -1.0, 0.5])
        clf = linear_clf(g, h=0.3)
        x = np.array([0.4, 1.0, -0.2])
        for y in (1.0, -1.0):
            for eps in (0.1, 0.7):
                adv = fgsm(clf, x, y, eps)
                drop = y * evaluate(clf, x) - y * evaluate(clf, adv)
                assert drop == pytest.approx(eps * co.b * np.abs(g).sum(), abs=1e-12)

    def test_eps_zero_returns_copy(self):
        clf = random_quadratic(3)
        x = np.array([1.0, 2.0, 3.0])
        adv = fgsm(clf, x, 1.0, 0.0)
        np.testing.assert_array_equal(adv, x)
        assert adv is not x

    def test_perturbation_in_linf_ball(self):
        clf = random_quadratic(4)
        x = np.zeros(3)
        adv = fgsm(clf, x, 1.0, 0.25)
        assert np.abs(adv - x).max() <= 0.25 + 1e-15

    def test_negative_eps_rejected(self):
        with pytest.raises(DomainError):
            fgsm(random_quadratic(0), np.zeros(3), 1.0, -0.1)

    def test_bad_label_rejected(self):
        with pytest.raises(DomainError):
            fgsm(random_quadratic(0), np.zeros(3), 0.5, 0.1)


class TestRobustAccuracy:
    def test_eps_zero_is_clean_accuracy(self):
        clf = random_quadratic(6)
        rng = np.random.default_rng(7)
        X = rng.standard_normal((40, 3))
        y = np.sign(evaluate(clf, X))
        y[y == 0] = 1.0
        # flip some labels so clean accuracy is interesting
        y[:10] *= -1
        rep = robust_accuracy(clf, Dataset(X, y), [0.0, 0.5])
        assert rep.accuracies[0] == pytest.approx(0.75)

    def test_linear_flip_thresholds(self):
        # [DERIVED] for a linear model each example survives iff
        # margin > eps * b * ||g||_1; accuracies follow exactly
        co = default_coeffs()
        g = np.array([1.0, 1.0])
        clf = linear_clf(g)
        # margins y*f = b * (g'x): choose x so margins are 0.25, 0.75, 1.25
        X = np.array([[0.25, 0.25], [0.75, 0.75], [1.25, 1.25]])
        y = np.ones(3)
        denom = co.b * np.abs(g).sum()  # margin loss per unit eps
        margins = co.b * X.sum(axis=1)
        eps_grid = [0.0, margins[0] / denom + 1e-9, margins[1] / denom + 1e-9]
        rep = robust_accuracy(clf, Dataset(X, y), eps_grid)
        assert rep.accuracies == (1.0, pytest.approx(2.0 / 3.0), pytest.approx(1.0 / 3.0))

    def test_monotone_for_linear_model(self):
        clf = linear_clf(np.array([1.0, -2.0]))
        rng = np.random.default_rng(8)
        X = rng.standard_normal((30, 2))
        y = np.sign(evaluate(clf, X))
        y[y == 0] = 1.0
        rep = robust_accuracy(clf, Dataset(X, y), [0.0, 0.2, 0.4, 0.8, 1.6])
        accs = rep.accuracies
        assert all(a >= b for a, b in zip(accs, accs[1:]))

    def test_negative_eps_rejected(self):
        clf = random_quadratic(0)
        with pytest.raises(DomainError):
            robust_accuracy(clf, Dataset(np.zeros((1, 3)), np.ones(1)), [-0.5])


class TestAttackReport:
    def test_validation(self):
        with pytest.raises(DomainError):
            AttackReport((0.0, 1.0), (0.5,))
        with pytest.raises(DomainError):
            AttackReport((-1.0,), (0.5,))
        with pytest.raises(DomainError):
            AttackReport((1.0,), (1.5,))

    def test_csv_byte_deterministic(self, tmp_path):
        rep = AttackReport((0.0, 0.5), (1.0, 0.625), model_id="m")
        p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
        rep.save_csv(p1)
        rep.save_csv(p2)
        assert p1.read_bytes() == p2.read_bytes()
        lines = p1.read_text().strip().splitlines()
        assert lines[0] == "epsilon,accuracy"
        assert lines[1] == "0.0,1.0"

    def test_json_roundtrip(self, tmp_path):
        rep = AttackReport((0.0, 1.0), (1.0, 0.5), model_id="st", metadata={"k": 1})
        path = tmp_path / "r.json"
        rep.save_json(path)
        obj = json.loads(path.read_text())
        assert obj["eps_grid"] == [0.0, 1.0]
        assert obj["accuracies"] == [1.0, 0.5]
        assert obj["model_id"] == "st"
        assert obj["metadata"] == {"k": 1}


class TestEmpiricalWorstCase:
    def test_zero_radius_is_clean_margin(self):
        clf = random_quadratic(9)
        x = np.array([0.3, -0.2, 0.9])
        got = empirical_worst_case(clf, x, 1.0, 0.0, 2, 50, seed=0)
        assert got == pytest.approx(evaluate(clf, x))

    def test_never_exceeds_clean_margin(self):
        for model in (random_quadratic(10), relu_net(11)):
            rng = np.random.default_rng(12)
            for _ in range(5):
                x = rng.standard_normal(3)
                y = 1.0
                wc = empirical_worst_case(model, x, y, 0.5, 2, 100, seed=3)
                assert wc <= y * float(
                    evaluate(model, x)
                    if isinstance(model, QuadraticClassifier)
                    else model.forward(x)
                ) + 1e-12

    @pytest.mark.parametrize("seed", range(4))
    def test_upper_bounds_exact_quadratic_worst_case(self, seed):
        # [DERIVED] the sampled search can never beat the exact trust-region
        # worst case over the l2 ball, and approaches it in low dimension
        clf = random_quadratic(20 + seed)
        rng = np.random.default_rng(30 + seed)
        x = rng.standard_normal(3)
        y = 1.0 if seed % 2 == 0 else -1.0
        r = 0.8
        exact = worst_case_margin(clf, x, y, r)
        sampled = empirical_worst_case(clf, x, y, r, 2, 4000, seed=seed)
        assert sampled >= exact - 1e-9
        assert sampled <= exact + 0.3 * (1.0 + abs(exact))

    def test_monotone_in_n_samples(self):
        # [DERIVED] same seed, longer stream: the minimum can only decrease
        clf = random_quadratic(40)
        x = np.array([0.1, 0.7, -0.4])
        vals = [
            empirical_worst_case(clf, x, 1.0, 0.6, 2, n, seed=5)
            for n in (10, 100, 1000)
        ]
        assert vals[0] >= vals[1] >= vals[2]

    def test_deterministic(self):
        net = relu_net(41)
        x = np.array([0.5, -0.5, 0.2])
        a = empirical_worst_case(net, x, -1.0, 0.5, np.inf, 500, seed=7)
        b = empirical_worst_case(net, x, -1.0, 0.5, np.inf, 500, seed=7)
        assert a == b

    @pytest.mark.parametrize("p", [1, 2, np.inf])
    def test_all_norms_supported(self, p):
        clf = random_quadratic(42)
        got = empirical_worst_case(clf, np.zeros(3), 1.0, 0.5, p, 50, seed=1)
        assert np.isfinite(got)

    def test_invalid_args(self):
        clf = random_quadratic(0)
        with pytest.raises(DomainError):
            empirical_worst_case(clf, np.zeros(3), 1.0, 0.5, 2, 0, seed=0)
        with pytest.raises(DomainError):
            empirical_worst_case(clf, np.zeros(3), 1.0, -0.5, 2, 10, seed=0)
        with pytest.raises(DomainError):
            empirical_worst_case(clf, np.zeros(3), 1.0, 0.5, 0.5, 10, seed=0)
