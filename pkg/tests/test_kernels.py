"""Kernel evaluation, Gram invariants, chunking, and serialization."""

import math

import numpy as np
import pytest

import shiftweigh.kernels as kernels_mod
from shiftweigh import InputError, KernelSpec, cross_apply, pair_sum


def random_spec(rng):
    family = rng.choice(["gaussian", "linear", "polynomial",
                         "inverse_multiquadric"])
    if family == "gaussian":
        return KernelSpec.gaussian(float(rng.uniform(0.2, 2.0)))
    if family == "linear":
        return KernelSpec.linear(domain_radius=3.0)
    if family == "polynomial":
        return KernelSpec.polynomial(int(rng.integers(1, 4)),
                                     offset=float(rng.uniform(0.0, 1.0)),
                                     domain_radius=3.0)
    return KernelSpec.inverse_multiquadric(float(rng.uniform(0.3, 2.0)),
                                           float(rng.uniform(0.3, 2.0)))


class TestPointEvaluation:
    def test_gaussian_direct_formula(self):
        spec = KernelSpec.gaussian(0.3)
        # exp(-d^2 / sigma^2), no factor of 2 in the denominator
        assert spec.eval([0.2], [0.7]) == pytest.approx(
            math.exp(-0.25 / 0.09), rel=1e-15)
        assert spec.eval([0.0, 0.0], [0.3, 0.4]) == pytest.approx(
            math.exp(-0.25 / 0.09), rel=1e-15)
        assert KernelSpec.gaussian(1.0).eval([0.0], [1.0]) == pytest.approx(
            math.exp(-1.0), rel=1e-15)

    def test_linear_direct_formula(self):
        spec = KernelSpec.linear()
        assert spec.eval([1.0, 2.0], [3.0, -1.0]) == 1.0
        assert spec.eval([0.5], [0.5]) == 0.25

    def test_polynomial_direct_formula(self):
        spec = KernelSpec.polynomial(3, offset=1.0)
        assert spec.eval([1.0, 1.0], [0.5, 0.5]) == pytest.approx(
            2.0 ** 3, rel=1e-15)

    def test_inverse_multiquadric_direct_formula(self):
        spec = KernelSpec.inverse_multiquadric(0.5, 1.5)
        want = (0.25 + 0.16) ** -1.5
        assert spec.eval([0.0], [0.4]) == pytest.approx(want, rel=1e-15)

    def test_near_duplicate_points_no_cancellation(self):
        # direct differencing keeps tiny distances exact
        spec = KernelSpec.gaussian(1.0)
        x = 1234.5678
        assert spec.eval([x], [x]) == 1.0
        h = 1e-8
        assert spec.eval([x], [x + h]) == pytest.approx(
            math.exp(-((x + h) - x) ** 2), rel=1e-12)

    def test_eval_validation(self):
        spec = KernelSpec.gaussian(1.0)
        with pytest.raises(InputError, match="dimension mismatch"):
            spec.eval([1.0, 2.0], [1.0])
        with pytest.raises(InputError, match="non-finite"):
            spec.eval([np.nan], [1.0])


class TestGramInvariants:
    def test_symmetry_is_exact(self):
        rng = np.random.default_rng(5)
        for _ in range(10):
            spec = random_spec(rng)
            X = rng.normal(size=(int(rng.integers(2, 40)),
                                 int(rng.integers(1, 4))))
            K = spec.gram(X, X)
            assert np.array_equal(K, K.T)

    def test_gaussian_unit_diagonal(self):
        rng = np.random.default_rng(6)
        X = rng.normal(size=(25, 2))
        K = KernelSpec.gaussian(0.7).gram(X, X)
        assert np.array_equal(np.diag(K), np.ones(25))

    def test_psd_within_floor(self):
        rng = np.random.default_rng(7)
        for _ in range(12):
            spec = random_spec(rng)
            n = int(rng.integers(5, 60))
            X = rng.uniform(-1.5, 1.5, size=(n, int(rng.integers(1, 4))))
            w = np.linalg.eigvalsh(spec.gram(X, X))
            assert w.min() >= -1e-8 * n

    def test_values_bounded_by_sup_constant(self):
        rng = np.random.default_rng(8)
        for _ in range(10):
            spec = random_spec(rng)
            r = spec.domain_radius if spec.domain_radius is not None else 3.0
            X = rng.uniform(-r / 2, r / 2, size=(20, 2))  # ||x|| <= r
            C = spec.sup_bound()
            K = spec.gram(X, X)
            assert np.all(np.abs(K) <= C * C + 1e-12)
            assert np.all(np.diag(K) <= C * C + 1e-12)

    def test_one_dimensional_input_promoted(self):
        spec = KernelSpec.gaussian(0.5)
        x = np.array([0.1, 0.4, 0.9])
        assert np.array_equal(spec.gram(x, x), spec.gram(x[:, None], x[:, None]))

    def test_dimension_mismatch_rejected(self):
        spec = KernelSpec.gaussian(0.5)
        with pytest.raises(InputError, match="feature-dimension mismatch"):
            spec.gram(np.ones((3, 2)), np.ones((3, 1)))
        with pytest.raises(InputError, match="empty"):
            spec.gram(np.ones((0, 1)), np.ones((3, 1)))
        with pytest.raises(InputError, match="non-finite"):
            spec.gram(np.array([[np.inf]]), np.ones((3, 1)))


class TestChunkedHelpers:
    def test_cross_apply_matches_gram(self):
        rng = np.random.default_rng(9)
        for _ in range(8):
            spec = random_spec(rng)
            X = rng.normal(size=(int(rng.integers(2, 30)), 2))
            X2 = rng.normal(size=(int(rng.integers(2, 30)), 2))
            K = spec.gram(X, X2)
            assert cross_apply(spec, X, X2) == pytest.approx(K.sum(axis=1))
            w = rng.uniform(0.0, 2.0, size=X2.shape[0])
            assert cross_apply(spec, X, X2, weights=w) == pytest.approx(K @ w)

    def test_pair_sum_matches_gram(self):
        rng = np.random.default_rng(10)
        for _ in range(8):
            spec = random_spec(rng)
            X = rng.normal(size=(int(rng.integers(2, 30)), 2))
            assert pair_sum(spec, X) == pytest.approx(
                spec.gram(X, X).sum(), rel=1e-12)

    def test_chunking_does_not_change_results(self, monkeypatch):
        rng = np.random.default_rng(11)
        spec = KernelSpec.gaussian(0.4)
        X = rng.normal(size=(37, 2))
        X2 = rng.normal(size=(23, 2))
        whole_gram = spec.gram(X, X2)
        whole_cross = cross_apply(spec, X, X2)
        whole_pair = pair_sum(spec, X)
        monkeypatch.setattr(kernels_mod, "_CHUNK_ELEMS", 40)
        assert np.array_equal(spec.gram(X, X2), whole_gram)
        assert np.array_equal(cross_apply(spec, X, X2), whole_cross)
        assert pair_sum(spec, X) == pytest.approx(whole_pair, rel=1e-12)

    def test_cross_apply_weight_length_checked(self):
        spec = KernelSpec.gaussian(0.4)
        with pytest.raises(InputError, match="weights length"):
            cross_apply(spec, np.ones((3, 1)), np.ones((4, 1)), weights=[1.0])


class TestSupBound:
    def test_bounded_families_need_no_radius(self):
        assert KernelSpec.gaussian(0.5).sup_bound() == 1.0
        assert KernelSpec.inverse_multiquadric(0.5, 2.0).sup_bound() == \
            pytest.approx(0.5 ** -2.0)

    def test_unbounded_families_require_radius(self):
        with pytest.raises(InputError, match="domain_radius is required"):
            KernelSpec.linear().sup_bound()
        with pytest.raises(InputError, match="domain_radius is required"):
            KernelSpec.polynomial(2, offset=1.0).sup_bound()
        assert KernelSpec.linear(domain_radius=2.0).sup_bound() == 2.0
        assert KernelSpec.polynomial(2, offset=1.0, domain_radius=2.0
                                     ).sup_bound() == pytest.approx(5.0)


class TestSpecValidation:
    def test_bad_parameters_rejected(self):
        with pytest.raises(InputError, match="unknown kernel family"):
            KernelSpec(family="laplace", sigma=1.0)
        with pytest.raises(InputError, match="sigma > 0"):
            KernelSpec.gaussian(0.0)
        with pytest.raises(InputError, match="degree >= 1"):
            KernelSpec.polynomial(0, offset=1.0)
        with pytest.raises(InputError, match="offset >= 0"):
            KernelSpec.polynomial(2, offset=-0.5)
        with pytest.raises(InputError, match="c > 0"):
            KernelSpec.inverse_multiquadric(0.0, 1.0)
        with pytest.raises(InputError, match="alpha > 0"):
            KernelSpec.inverse_multiquadric(1.0, 0.0)
        with pytest.raises(InputError, match="domain_radius"):
            KernelSpec.gaussian(1.0, domain_radius=-1.0)

    def test_json_round_trip(self):
        rng = np.random.default_rng(12)
        for _ in range(8):
            spec = random_spec(rng)
            assert KernelSpec.from_json(spec.to_json()) == spec

    def test_from_dict_rejects_unknown_keys(self):
        with pytest.raises(InputError, match="unknown kernel fields"):
            KernelSpec.from_dict({"family": "gaussian", "sigma": 1.0,
                                  "bandwidth": 2.0})
        with pytest.raises(InputError, match="'family'"):
            KernelSpec.from_dict({"sigma": 1.0})

    def test_from_json_rejects_malformed_text(self):
        with pytest.raises(InputError, match="does not parse"):
            KernelSpec.from_json("{not json")
        with pytest.raises(InputError, match="must be an object"):
            KernelSpec.from_json("[1, 2]")
