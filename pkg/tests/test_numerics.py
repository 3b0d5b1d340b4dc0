import numpy as np
import pytest

from modkit.errors import (AsymmetricMatrixError, DegenerateScoresError,
                           EigenConvergenceError, ProbabilityVectorError,
                           TemperatureBracketError, ValidationError)
from modkit.numerics import (RandomSource, categorical_sample, discrete_entropy,
                             leading_eigenvector, softmax, solve_temperature,
                             validate_symmetric)
from oracles import softmax_entropy_direct


class TestRandomSource:
    def test_same_seed_same_draws(self):
        a = RandomSource(42)
        b = RandomSource(42)
        assert np.array_equal(a.uniform(size=10), b.uniform(size=10))
        assert np.array_equal(a.normal(size=10), b.normal(size=10))
        assert np.array_equal(a.integers(0, 100, size=10),
                              b.integers(0, 100, size=10))
        assert np.array_equal(a.permutation(20), b.permutation(20))

    def test_derive_is_pure(self):
        root = RandomSource(7)
        first = root.derive("x", 3).seed
        root.uniform(size=100)
        assert root.derive("x", 3).seed == first

    def test_derive_separates_streams(self):
        root = RandomSource(7)
        seeds = {root.derive("a").seed, root.derive("b").seed,
                 root.derive("a", 0).seed, root.derive("a", 1).seed}
        assert len(seeds) == 4

    def test_validation(self):
        with pytest.raises(ValidationError):
            RandomSource(1.5)
        with pytest.raises(ValidationError):
            RandomSource(3).derive()


class TestSoftmax:
    def test_uniform_over_equal_scores(self):
        assert np.allclose(softmax([0.0, 0.0, 0.0]), [1/3, 1/3, 1/3],
                           atol=1e-15)

    def test_matches_direct_oracle(self):
        rng = RandomSource(1)
        v = rng.normal(size=10)
        direct = np.exp(v) / np.exp(v).sum()
        assert np.max(np.abs(softmax(v) - direct)) < 1e-12

    def test_large_scores_stable(self):
        p = softmax([1000.0, 0.0])
        assert np.all(np.isfinite(p))
        assert p[0] > 1.0 - 1e-12 and abs(p.sum() - 1.0) < 1e-12

    def test_validation(self):
        with pytest.raises(ValidationError):
            softmax([])
        with pytest.raises(ValidationError):
            softmax([1.0, np.nan])


class TestDiscreteEntropy:
    def test_degenerate_is_zero(self):
        assert discrete_entropy([1.0, 0.0, 0.0, 0.0]) == 0.0

    def test_uniform_is_log_k(self):
        assert abs(discrete_entropy([0.25] * 4) - np.log(4)) < 1e-12

    def test_mixed_example(self):
        assert abs(discrete_entropy([0.5, 0.25, 0.25]) - 1.0397207708399179) < 1e-12

    def test_matches_direct_sum(self):
        rng = RandomSource(2)
        p = rng.uniform(size=8)
        p /= p.sum()
        direct = -sum(v * np.log(v) for v in p)
        assert abs(discrete_entropy(p) - direct) < 1e-12

    def test_permutation_invariant(self):
        p = np.array([0.1, 0.2, 0.3, 0.4])
        assert discrete_entropy(p) == pytest.approx(discrete_entropy(p[::-1]),
                                                    abs=1e-15)

    def test_validation(self):
        with pytest.raises(ProbabilityVectorError):
            discrete_entropy([0.5, 0.6])
        with pytest.raises(ProbabilityVectorError):
            discrete_entropy([1.5, -0.5])
        with pytest.raises(ProbabilityVectorError):
            discrete_entropy([np.nan, 1.0])


class TestSolveTemperature:
    def test_hits_target_entropy(self):
        rng = RandomSource(3)
        scores = rng.normal(size=6)
        tau = solve_temperature(scores, 0.15)
        assert tau > 0.0
        assert abs(softmax_entropy_direct(scores, tau) - 0.15) <= 2e-6

    def test_two_scores_example(self):
        # entropy 0.15 over (1, 0) puts the losing option near p = 0.0355
        tau = solve_temperature(np.array([1.0, 0.0]), 0.15)
        p = softmax(np.array([1.0, 0.0]) / tau)
        assert abs(p[1] - 0.0355) < 2e-3

    def test_target_log_k_is_capped(self):
        scores = np.array([1.0, 0.0])
        tau = solve_temperature(scores, np.log(2.0))
        h = softmax_entropy_direct(scores, tau)
        assert abs(h - (np.log(2.0) - 1e-6)) <= 2e-6

    def test_scale_invariance(self):
        scores = np.array([2.0, 0.5, -1.0])
        tau1 = solve_temperature(scores, 0.15)
        tau10 = solve_temperature(scores * 10.0, 0.15)
        assert tau10 == pytest.approx(10.0 * tau1, rel=1e-2)
        p1 = softmax(scores / tau1)
        p10 = softmax(scores * 10.0 / tau10)
        assert np.max(np.abs(p1 - p10)) < 1e-4

    def test_degenerate_scores(self):
        with pytest.raises(DegenerateScoresError):
            solve_temperature([1.0, 1.0, 1.0], 0.15)

    def test_tied_top_scores_floor(self):
        # two tied argmaxes force entropy >= log 2 > 0.15 at any temperature
        with pytest.raises(TemperatureBracketError) as err:
            solve_temperature([5.0, 5.0, 0.0], 0.15)
        floor = err.value.achievable[0]
        assert abs(floor - np.log(2.0)) < 1e-6
        assert err.value.bracket == (1e-12, 1e12)

    def test_entropy_monotone_in_tau(self):
        scores = RandomSource(4).normal(size=5)
        taus = np.logspace(-3, 3, 25)
        hs = [softmax_entropy_direct(scores, t) for t in taus]
        assert all(a <= b + 1e-12 for a, b in zip(hs, hs[1:]))

    def test_validation(self):
        with pytest.raises(ValidationError):
            solve_temperature([], 0.15)
        with pytest.raises(ValidationError):
            solve_temperature([1.0, 2.0], 0.15, bracket=(1.0, 0.5))


class TestCategoricalSample:
    def test_point_masses(self):
        rng = RandomSource(5)
        assert all(categorical_sample([1.0, 0.0], rng) == 0 for _ in range(50))
        assert all(categorical_sample([0.0, 1.0], rng) == 1 for _ in range(50))

    def test_frequencies_within_binomial_bounds(self):
        rng = RandomSource(6)
        p = np.array([0.3, 0.7])
        n = 100_000
        hits = sum(categorical_sample(p, rng) == 0 for _ in range(n))
        sigma = np.sqrt(0.3 * 0.7 / n)
        assert abs(hits / n - 0.3) < 3 * sigma

    def test_validation(self):
        rng = RandomSource(7)
        with pytest.raises(ProbabilityVectorError):
            categorical_sample([0.5, 0.6], rng)
        with pytest.raises(ProbabilityVectorError):
            categorical_sample([], rng)


class TestValidateSymmetric:
    def test_accepts_symmetric(self):
        m = RandomSource(8).normal(size=(5, 5))
        validate_symmetric(m + m.T)

    def test_rejects_asymmetric(self):
        m = np.eye(3)
        m[0, 1] = 1e-5
        with pytest.raises(AsymmetricMatrixError):
            validate_symmetric(m)

    def test_tolerance_scales_with_magnitude(self):
        m = 1e6 * np.ones((2, 2))
        m[0, 1] += 1e-5
        validate_symmetric(m)

    def test_rejects_non_square(self):
        with pytest.raises(ValidationError):
            validate_symmetric(np.zeros((2, 3)))


class TestLeadingEigenvector:
    def test_diagonal_matrix(self):
        lam, v = leading_eigenvector(np.diag([3.0, 1.0]))
        assert lam == pytest.approx(3.0, abs=1e-10)
        assert np.allclose(np.abs(v), [1.0, 0.0], atol=1e-8)

    def test_swap_matrix(self):
        lam, v = leading_eigenvector(np.array([[0.0, 1.0], [1.0, 0.0]]))
        assert lam == pytest.approx(1.0, abs=1e-10)
        assert np.allclose(v, [1, 1] / np.sqrt(2), atol=1e-8)

    def test_matches_dense_eigensolver(self):
        for seed in range(20):
            m = RandomSource(100 + seed).normal(size=(6, 6))
            m = (m + m.T) / 2.0
            lam, v = leading_eigenvector(m)
            evals, evecs = np.linalg.eigh(m)
            assert lam == pytest.approx(evals[-1], abs=1e-8)
            assert abs(abs(v @ evecs[:, -1]) - 1.0) < 1e-8

    def test_most_positive_not_largest_magnitude(self):
        lam, v = leading_eigenvector(np.diag([-10.0, 1.0]))
        assert lam == pytest.approx(1.0, abs=1e-9)
        assert np.allclose(np.abs(v), [0.0, 1.0], atol=1e-8)

    def test_sign_canonicalization(self):
        m = RandomSource(9).normal(size=(4, 4))
        _, v = leading_eigenvector(m + m.T)
        nz = np.nonzero(v)[0]
        assert v[nz[0]] > 0.0

    def test_single_unit(self):
        lam, v = leading_eigenvector(np.array([[2.5]]))
        assert lam == 2.5 and np.array_equal(v, [1.0])

    def test_residual_is_checked(self):
        lam, v = leading_eigenvector(np.array([[0.0, 1.0], [1.0, 0.0]]),
                                     tol=1e-12)
        m = np.array([[0.0, 1.0], [1.0, 0.0]])
        assert np.linalg.norm(m @ v - lam * v) <= 1e-12 * max(1.0, 1.0)

    def test_non_convergence_raises(self):
        m = RandomSource(10).normal(size=(8, 8))
        m = (m + m.T) / 2.0
        with pytest.raises(EigenConvergenceError) as err:
            leading_eigenvector(m, tol=1e-14, max_iter=1)
        assert err.value.iterations == 1
        assert err.value.residual > 0.0

    def test_validation(self):
        with pytest.raises(ValidationError):
            leading_eigenvector(np.zeros((0, 0)))
        with pytest.raises(AsymmetricMatrixError):
            leading_eigenvector(np.array([[0.0, 1.0], [0.0, 0.0]]))
